#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "lsgd/algorithms.hpp"
#include "lsgd/fixedpoint.hpp"

using namespace lsgd;

namespace {

LocalSGDConfig local_config(const Instance& inst, double eta, double beta, std::size_t K, std::size_t R) {
    LocalSGDConfig c;
    c.inner_step = eta;
    c.outer_step = beta;
    c.schedule = {inst.size(), K, R};
    c.init = Vec::Zero(static_cast<Eigen::Index>(inst.dim()));
    return c;
}

CELSGDConfig ce_config(const Instance& inst, double eta, double beta, std::size_t P, std::size_t R) {
    CELSGDConfig c;
    c.step = eta;
    c.momentum = beta;
    c.local_steps = P;
    c.schedule = {inst.size(), P, R};
    c.init = Vec::Zero(static_cast<Eigen::Index>(inst.dim()));
    return c;
}

Instance scalar_instance(double a, double x_star, double sigma = 0.0) {
    std::vector<QuadraticMachine> ms;
    ms.push_back(QuadraticMachine::with_optimum(SymMatrix::diagonal(vec_of({a})), vec_of({x_star}), sigma));
    return build_instance(std::move(ms));
}

Instance isotropic(double H, const Vec& x_star, std::size_t M = 1, double sigma = 0.0) {
    std::vector<QuadraticMachine> ms(M, QuadraticMachine::with_optimum(SymMatrix::identity(x_star.size()) * H, x_star, sigma));
    return build_instance(std::move(ms));
}

RunOptions keep_iterates() {
    RunOptions o;
    o.keep_machine_iterates = true;
    return o;
}

}  // namespace

TEST(LocalSGD, SharedOptimumPairOneRound) {
    const Instance inst = make_shared_optimum_pair(1.0, vec_of({1.0, 1.0}));
    const RunTrace tr = run_local_sgd(inst, local_config(inst, 1.0, 1.0, 2, 1), 0, keep_iterates());
    EXPECT_LT((tr.rounds[1] - vec_of({0.5, 0.5})).norm(), 1e-15);
    // after one local step machine 1 sits at (1,0) and machine 2 at (0,1)
    ASSERT_EQ(tr.machine_iterates.size(), 3u);
    EXPECT_EQ(tr.machine_iterates[1][0], vec_of({1.0, 0.0}));
    EXPECT_EQ(tr.machine_iterates[1][1], vec_of({0.0, 1.0}));
}

TEST(LocalSGD, ZeroStepStaysPut) {
    const Instance inst = make_shared_optimum_pair(1.0, vec_of({1.0, 1.0})).with_noise(0.5);
    LocalSGDConfig c = local_config(inst, 0.0, 1.0, 3, 4);
    c.init = vec_of({0.3, -0.2});
    const RunTrace tr = run_local_sgd(inst, c, 9);
    for (const auto& x : tr.rounds) EXPECT_EQ(x, c.init);
}

TEST(LocalSGD, ExactStepOnIsotropic) {
    const Vec xs = vec_of({1.0, -2.0, 0.5});
    const Instance inst = isotropic(4.0, xs);
    const RunTrace tr = run_local_sgd(inst, local_config(inst, 0.25, 1.0, 1, 1), 0);
    EXPECT_LT((tr.output - xs).norm(), 1e-15);
}

TEST(LocalSGD, MatchesClosedFormOnSharedOptimumPair) {
    const double H = 1.0;
    const Vec xs = vec_of({1.0, 1.0});
    const Instance inst = make_shared_optimum_pair(H, xs);
    for (double eta : {0.2, 0.4, 0.6, 0.8, 1.0}) {
        for (double beta : {0.4, 0.8, 1.2, 1.6, 2.0}) {
            for (std::size_t K : {1u, 2u, 5u, 20u}) {
                const std::size_t R = 12;
                const RunTrace tr = run_local_sgd(inst, local_config(inst, eta, beta, K, R), 0, RunOptions::silent());
                for (std::size_t r = 0; r <= R; ++r) {
                    const Vec cf = closed_form_shared_optimum_iterate(H, eta, beta, K, r, xs);
                    EXPECT_LE((tr.rounds[r] - cf).norm(), 1e-12) << eta << ' ' << beta << ' ' << K << ' ' << r;
                }
            }
        }
    }
}

TEST(ClosedForm, Examples) {
    const Vec xs = vec_of({2.0, -1.0});
    for (unsigned K : {1u, 3u, 7u}) {
        EXPECT_LT((closed_form_shared_optimum_iterate(1.0, 1.0, 1.0, K, 3, xs) - 0.875 * xs).norm(), 1e-15);
        EXPECT_LT((closed_form_shared_optimum_iterate(2.0, 0.5, 2.0, K, 1, xs) - xs).norm(), 1e-15);
    }
    EXPECT_EQ(closed_form_shared_optimum_iterate(1.0, 0.3, 1.0, 4, 0, xs).norm(), 0.0);
}

TEST(LocalSGD, DeterministicGivenSeed) {
    Stream rng(3);
    RandomQuadraticSpec spec;
    spec.machines = 3;
    spec.sigma2 = 0.5;
    const Instance inst = make_random_quadratic_instance(spec, rng);
    const auto c = local_config(inst, 0.1, 1.0, 4, 5);
    const RunTrace a = run_local_sgd(inst, c, 42);
    const RunTrace b = run_local_sgd(inst, c, 42);
    const RunTrace other = run_local_sgd(inst, c, 43);
    ASSERT_EQ(a.rounds.size(), b.rounds.size());
    for (std::size_t r = 0; r < a.rounds.size(); ++r) EXPECT_EQ(a.rounds[r], b.rounds[r]);
    EXPECT_EQ(trace_csv(a), trace_csv(b));
    EXPECT_NE(a.output, other.output);
}

TEST(LocalSGD, RecordsMatchSchedule) {
    Stream rng(4);
    RandomQuadraticSpec spec;
    spec.machines = 4;
    spec.sigma2 = 1.0;
    const Instance inst = make_random_quadratic_instance(spec, rng);
    const std::size_t K = 3, R = 4;
    const RunTrace tr = run_local_sgd(inst, local_config(inst, 0.1, 1.0, K, R), 1);
    ASSERT_EQ(tr.records.size(), K * R + 1);
    for (const auto& rec : tr.records) {
        EXPECT_EQ(rec.delta_t, rec.t - rec.t % K);
        if (rec.is_comm_round) {
            EXPECT_EQ(rec.consensus_sq, 0.0);
            EXPECT_EQ(rec.consensus_4th, 0.0);
        } else {
            EXPECT_GT(rec.consensus_sq, 0.0);
        }
        EXPECT_GE(rec.consensus_sq, rec.consensus_to_mean_sq * (1.0 - 1e-12));
        ASSERT_TRUE(rec.func_subopt);
        EXPECT_GE(*rec.func_subopt, -1e-10);
    }
}

TEST(LocalSGD, OutputModes) {
    const Instance inst = isotropic(1.0, vec_of({1.0}));
    LocalSGDConfig c = local_config(inst, 0.5, 1.0, 1, 2);  // x_1 = 0.5, x_2 = 0.75
    c.output_mode = OutputMode::UniformAverage;
    EXPECT_DOUBLE_EQ(run_local_sgd(inst, c, 0).output(0), 0.625);
    c.output_mode = OutputMode::WeightedAverage;
    c.weights = {1.0, 3.0};
    EXPECT_DOUBLE_EQ(run_local_sgd(inst, c, 0).output(0), (0.5 + 3 * 0.75) / 4);
    c.weights = {1.0};
    EXPECT_THROW(run_local_sgd(inst, c, 0), ConfigError);
}

TEST(LocalSGD, DivergenceIsFlagged) {
    const Instance inst = isotropic(1.0, vec_of({1.0, 1.0}));
    const RunTrace tr = run_local_sgd(inst, local_config(inst, 3.0, 1.0, 10, 100), 0, RunOptions::silent());
    EXPECT_TRUE(tr.diverged);
    ASSERT_TRUE(tr.diverged_round);
    EXPECT_LT(*tr.diverged_round, 100u);
}

TEST(LocalSGD, ConvergesToFixedPointAtLinearRate) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Stream rng(seed, {tag(StreamTag::Test), 20});
        RandomQuadraticSpec spec;
        spec.dim = 3;
        spec.machines = 3;
        spec.mu = 0.2;
        spec.H = 1.0;
        const Instance inst = make_random_quadratic_instance(spec, rng);
        const double eta = 0.5, mu = 0.2;
        const std::size_t K = 3, R = 10;
        const FixedPointResult fp = compute_fixed_point(inst, eta, K);
        const RunTrace tr = run_local_sgd(inst, local_config(inst, eta, 1.0, K, R), 0, RunOptions::silent());
        const double bound = std::pow(1.0 - eta * mu, K * R) * fp.fixed_point.norm() + 1e-10;
        EXPECT_LE((tr.output - fp.fixed_point).norm(), bound);
    }
}

namespace {

std::vector<double> comm_round_gaps(const RunTrace& tr) {
    std::vector<double> gaps;
    for (const auto& rec : tr.records)
        if (rec.is_comm_round) gaps.push_back(*rec.func_subopt);
    return gaps;
}

bool non_increasing(const std::vector<double>& v) {
    for (std::size_t i = 1; i < v.size(); ++i)
        if (v[i] > v[i - 1] * (1.0 + 1e-12) + 1e-15) return false;
    return true;
}

}  // namespace

// With K = 1 Local SGD is gradient descent on F, and with identical machines
// every local step is one. Both descend monotonically for eta < 1/H.
TEST(LocalSGD, FunctionGapNonIncreasingWhenProvable) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Stream rng(seed, {tag(StreamTag::Test), 21});
        RandomQuadraticSpec spec;
        spec.machines = 3;
        spec.mu = 0.1;
        const Instance inst = make_random_quadratic_instance(spec, rng);
        EXPECT_TRUE(non_increasing(comm_round_gaps(run_local_sgd(inst, local_config(inst, 0.5, 1.0, 1, 30), 0))));

        const QuadraticMachine& q = inst.quadratic(0);
        const Instance homog = build_instance({q, q, q});
        EXPECT_TRUE(non_increasing(comm_round_gaps(run_local_sgd(homog, local_config(homog, 0.5, 1.0, 4, 30), 0))));
    }
}

// Under heterogeneity the limit x_inf differs from x* and the gap can approach
// F(x_inf) - F* from below, so the gap is not monotone in general.
TEST(LocalSGD, FunctionGapCanIncreaseUnderHeterogeneity) {
    bool found = false;
    for (std::uint64_t seed = 0; seed < 10 && !found; ++seed) {
        Stream rng(seed, {tag(StreamTag::Test), 21});
        RandomQuadraticSpec spec;
        spec.machines = 3;
        spec.mu = 0.1;
        const Instance inst = make_random_quadratic_instance(spec, rng);
        found = !non_increasing(comm_round_gaps(run_local_sgd(inst, local_config(inst, 0.5, 1.0, 4, 30), 0)));
    }
    EXPECT_TRUE(found);
}

TEST(MinibatchSGD, Examples) {
    const Vec xs = vec_of({1.0, 1.0});
    const Instance inst = isotropic(1.0, xs);
    EXPECT_LT((run_minibatch_sgd(inst, local_config(inst, 123.0, 0.25, 2, 1), 0).output - vec_of({0.5, 0.5})).norm(), 1e-15);
    LocalSGDConfig still = local_config(inst, 0.1, 0.0, 2, 3);
    still.init = vec_of({3.0, 4.0});
    EXPECT_EQ(run_minibatch_sgd(inst.with_noise(1.0), still, 1).output, still.init);
    const Instance h = isotropic(4.0, xs, 3);
    EXPECT_LT((run_minibatch_sgd(h, local_config(h, 0.1, 0.125, 2, 1), 0).output - xs).norm(), 1e-15);
}

TEST(MinibatchSGD, CoincidesWithLocalSGDWhenKIsOne) {
    Stream rng(5);
    RandomQuadraticSpec spec;
    spec.machines = 4;
    spec.sigma2 = 0.7;
    const Instance inst = make_random_quadratic_instance(spec, rng);
    const double eta = 0.15;
    const RunTrace local = run_local_sgd(inst, local_config(inst, eta, 1.0, 1, 20), 77);
    const RunTrace mb = run_minibatch_sgd(inst, local_config(inst, 0.0, eta, 1, 20), 77);
    for (std::size_t r = 0; r <= 20; ++r) EXPECT_LE((local.rounds[r] - mb.rounds[r]).norm(), 1e-12);
}

TEST(SerialSGD, MonotoneOnConvexQuadratic) {
    const Instance inst = make_shared_optimum_pair(2.0, vec_of({1.0, 1.0}));
    const RunTrace tr = run_serial_sgd(0, inst, 0.3, 20, 0, Vec::Zero(2));
    double prev = std::numeric_limits<double>::infinity();
    for (const auto& x : tr.rounds) {
        const double f = inst.quadratic(0).value(x);
        EXPECT_LE(f, prev);
        prev = f;
    }
}

TEST(SerialSGD, SingleMachineCannotReachAverageOptimum) {
    const double H = 1.0;
    const Vec xs = vec_of({1.0, 1.0});
    const Instance inst = make_shared_optimum_pair(H, xs);
    const RunTrace tr = run_serial_sgd(0, inst, 0.5, 50, 0, Vec::Zero(2));
    for (const auto& rec : tr.records) EXPECT_GE(*rec.func_subopt, H * xs(1) * xs(1) / 4.0 - 1e-15);
}

TEST(SerialSGD, ZeroStepsReturnsInit) {
    const Instance inst = isotropic(1.0, vec_of({1.0}));
    EXPECT_EQ(run_serial_sgd(0, inst, 0.5, 0, 0, vec_of({0.25})).output, vec_of({0.25}));
    EXPECT_THROW(run_serial_sgd(3, inst, 0.5, 1, 0, vec_of({0.0})), ConfigError);
}

TEST(CELSGD, HandTracedFirstRound) {
    const Instance inst = scalar_instance(1.0, 1.0);
    CELSGDConfig c = ce_config(inst, 0.5, 1.0, 1, 1);
    const RunTrace tr = run_ce_lsgd(inst, c, 0);
    ASSERT_EQ(tr.rounds.size(), 2u);
    EXPECT_DOUBLE_EQ(tr.rounds[1](0), 0.5);
    ASSERT_EQ(tr.candidates.size(), 1u);
    EXPECT_EQ(tr.candidates[0](0), 0.0);
}

TEST(CELSGD, HandTracedLocalSteps) {
    // A = 1, x* = 1, eta = 0.5, P = 2, beta = 1, noiseless.
    // round 0: v = -1, x1 = 0.5. round 1: v = -0.5, w2 = 0.75, v_{1,2} = -0.25, x2 = 0.875.
    const Instance inst = scalar_instance(1.0, 1.0);
    const RunTrace tr = run_ce_lsgd(inst, ce_config(inst, 0.5, 1.0, 2, 2), 0);
    EXPECT_DOUBLE_EQ(tr.rounds[2](0), 0.875);
    ASSERT_EQ(tr.candidates.size(), 3u);
    EXPECT_DOUBLE_EQ(tr.candidates[1](0), 0.5);
    EXPECT_DOUBLE_EQ(tr.candidates[2](0), 0.75);
}

TEST(CELSGD, ExactOracleGivesExactServerGradient) {
    const Instance inst = make_tau_decoupled_pair(1.0, 0.5, vec_of({1.0, -1.0, 2.0}));
    std::vector<Vec> seen;
    const CELSGDConfig c = ce_config(inst, 0.3, 1.0, 3, 6);
    // The first local step from x_r uses v_r unchanged: x_r - w_2 = eta grad F(x_r).
    const RunTrace tr = run_ce_lsgd(inst, c, 11);
    for (std::size_t r = 1; r < 6; ++r) {
        const Vec& x = tr.rounds[r];
        const Vec& w2 = tr.candidates[1 + (r - 1) * 3 + 1];
        EXPECT_LT((x - w2 - 0.3 * inst.gradient(x)).norm(), 1e-14);
    }
}

TEST(CELSGD, ReducesToStormWithOneLocalStep) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        Stream rng(seed, {tag(StreamTag::Test), 22});
        RandomQuadraticSpec spec;
        spec.machines = 3;
        spec.sigma2 = 0.5;
        const Instance inst = make_random_quadratic_instance(spec, rng);
        CELSGDConfig c = ce_config(inst, 0.2, 0.3, 1, 15);
        c.warm_batch = 4;
        const RunTrace a = run_ce_lsgd(inst, c, seed);
        const RunTrace b = run_mb_storm(inst, c, seed);
        ASSERT_EQ(a.rounds.size(), b.rounds.size());
        for (std::size_t r = 0; r < a.rounds.size(); ++r) EXPECT_TRUE(a.rounds[r] == b.rounds[r]);
        EXPECT_TRUE(a.output == b.output);
    }
}

TEST(MBStorm, ExactOracleIsGradientDescent) {
    const Instance inst = isotropic(2.0, vec_of({1.0, 2.0}), 2);
    const RunTrace tr = run_mb_storm(inst, ce_config(inst, 0.1, 1.0, 1, 7), 0);
    EXPECT_EQ(tr.rounds.size(), 8u);
    EXPECT_EQ(tr.candidates.size(), 7u);
    Vec x = Vec::Zero(2);
    for (std::size_t r = 1; r <= 7; ++r) {
        x = x - 0.1 * inst.gradient(x);
        EXPECT_LT((tr.rounds[r] - x).norm(), 1e-14);
    }
}

TEST(CELSGD, MomentumValidation) {
    const Instance inst = scalar_instance(1.0, 1.0);
    CELSGDConfig c = ce_config(inst, 0.5, 0.0, 1, 1);
    EXPECT_THROW(run_ce_lsgd(inst, c, 0), ConfigError);
    c.momentum = 1.5;
    EXPECT_THROW(run_ce_lsgd(inst, c, 0), ConfigError);
}

TEST(CELSGD, StationarityImprovesWithRounds) {
    const Instance inst = make_tau_decoupled_pair(1.0, 0.3, vec_of({1.0, -1.0, 2.0}));
    auto best = [&](std::size_t R) {
        const RunTrace tr = run_ce_lsgd(inst, ce_config(inst, 0.5, 1.0, 5, R), 3);
        double b = std::numeric_limits<double>::infinity();
        for (const auto& w : tr.candidates) b = std::min(b, inst.gradient(w).squaredNorm());
        return b;
    };
    const double b4 = best(4), b8 = best(8), b16 = best(16);
    EXPECT_LT(b8, b4);
    EXPECT_LT(b16, b8);
}

TEST(TuneStepSize, SingleElementGrid) {
    const std::vector<double> grid{0.3};
    const TuneResult res = tune_step_size(grid, 2, [](double eta, std::size_t) { return eta; });
    ASSERT_TRUE(res.stable());
    EXPECT_EQ(*res.best_eta, 0.3);
}

TEST(TuneStepSize, IsotropicGradientDescent) {
    const double H = 2.0;
    const Instance inst = isotropic(H, vec_of({1.0, -1.0}));
    const Vec xs = vec_of({1.0, -1.0});
    const std::vector<double> grid{0.1 / H, 0.25 / H, 1.0 / H, 3.5 / H};
    const TuneResult res = tune_step_size(grid, 1, [&](double eta, std::size_t) {
        const RunTrace tr = run_local_sgd(inst, local_config(inst, eta, 1.0, 1, 40), 0, RunOptions::silent());
        return final_error(tr, [&](const Vec& x) { return (x - xs).norm(); });
    });
    ASSERT_TRUE(res.stable());
    EXPECT_EQ(*res.best_eta, 1.0 / H);
    EXPECT_TRUE(std::isinf(res.table[3].mean_metric));
}

TEST(TuneStepSize, TiesPreferSmallerStepAndAllDivergedIsReported) {
    const std::vector<double> grid{0.5, 0.2, 0.9};
    const TuneResult tie = tune_step_size(grid, 1, [](double, std::size_t) { return 1.0; });
    EXPECT_EQ(*tie.best_eta, 0.2);
    const TuneResult none =
        tune_step_size(grid, 1, [](double, std::size_t) { return std::numeric_limits<double>::infinity(); });
    EXPECT_FALSE(none.stable());
}

TEST(TuneStepSize, UnreachableTargetIsCensored) {
    const Instance inst = isotropic(1.0, vec_of({1.0}));
    const RunTrace tr = run_local_sgd(inst, local_config(inst, 0.01, 1.0, 1, 100), 0, RunOptions::silent());
    const auto err = [](const Vec& x) { return std::abs(x(0) - 1.0); };
    EXPECT_EQ(rounds_to_target(tr, err, 1e-12, 100), 101.0);
    // error after r rounds is 0.99^r, first below 0.5 at r = 69
    EXPECT_EQ(rounds_to_target(tr, err, 0.5, 100), 69.0);
}

TEST(TraceExport, CsvHeaderAndSidecar) {
    const Instance inst = isotropic(1.0, vec_of({1.0}));
    const RunTrace tr = run_local_sgd(inst, local_config(inst, 0.5, 1.0, 2, 2), 5);
    const std::string csv = trace_csv(tr);
    EXPECT_EQ(csv.substr(0, csv.find('\n')),
              "t,r,is_comm_round,iterate_error_sq,consensus_error_sq,func_subopt,grad_norm_sq,output_mode");
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 6);
    const json side = trace_sidecar(tr);
    EXPECT_EQ(side["seed"], 5);
    EXPECT_EQ(side["config"]["schedule"]["K"], 2);
}

namespace {

double best_gd_gap(double H, unsigned R, double B) {
    const Instance inst = make_condition_number_instance(H, R, B);
    double best = std::numeric_limits<double>::infinity();
    for (int j = -10; j <= 3; ++j) {
        const double eta = std::ldexp(1.0, j) / H;
        const RunTrace tr = run_serial_sgd(0, inst, eta, R, 0, Vec::Zero(2), RunOptions::silent());
        const double gap = tr.diverged ? std::numeric_limits<double>::infinity()
                                       : objective_stats(inst, tr.output).E.value();
        best = std::min(best, gap);
    }
    return best;
}

}  // namespace

// (B^2/4) (1 - 3/kappa)^{2R} H/kappa with kappa = 12R is at least H B^2 / (96 R).
TEST(Algorithms, ConditionNumberInstanceGapDecaysLikeOneOverR) {
    const double H = 1.0, B = 1.0;
    for (unsigned R : {5u, 10u, 20u, 40u})
        EXPECT_GE(best_gd_gap(H, R, B), H * B * B / (96.0 * R)) << R;
    EXPECT_NEAR(best_gd_gap(H, 40, B) / best_gd_gap(H, 20, B), 0.5, 0.05);
}

// No kappa = 12R quadratic reaches H B^2 / (8R): at eta = 1/H the gap is at most H B^2 / (24 R).
TEST(Algorithms, ConditionNumberInstanceEighthConstantIsUnreachable) {
    const double H = 1.0, B = 1.0;
    for (unsigned R : {5u, 10u, 20u})
        EXPECT_LT(best_gd_gap(H, R, B), H * B * B / (24.0 * R)) << R;
}
