#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "lsgd/algorithms.hpp"
#include "lsgd/diagnostics.hpp"
#include "lsgd/experiments.hpp"

using namespace lsgd;

TEST(ConsensusErrors, Examples) {
    const std::vector<Vec> same(3, vec_of({1.0, 2.0}));
    EXPECT_EQ(consensus_errors(same).C, 0.0);
    EXPECT_EQ(consensus_errors(same).D, 0.0);
    const std::vector<Vec> pair{vec_of({0.0, 0.0}), vec_of({2.0, 0.0})};
    EXPECT_DOUBLE_EQ(consensus_errors(pair).C, 2.0);
    EXPECT_DOUBLE_EQ(consensus_errors(pair).D, 8.0);
    // distance to the mean is the Jensen-smaller variant
    EXPECT_DOUBLE_EQ(consensus_errors(pair).to_mean, 1.0);
    const std::vector<Vec> one{vec_of({5.0})};
    EXPECT_EQ(consensus_errors(one).C, 0.0);
    EXPECT_EQ(consensus_errors(one).D, 0.0);
}

TEST(ConsensusErrors, MatchesFullDoubleSum) {
    Stream rng(1, {tag(StreamTag::Test), 1});
    std::vector<Vec> xs;
    for (int m = 0; m < 5; ++m) xs.push_back(rng.normal_vec(3));
    double c = 0.0, d = 0.0;
    for (const auto& a : xs) {
        for (const auto& b : xs) {
            c += (a - b).squaredNorm();
            d += std::pow((a - b).squaredNorm(), 2);
        }
    }
    const ConsensusErrors ce = consensus_errors(xs);
    EXPECT_NEAR(ce.C, c / 25.0, 1e-12);
    EXPECT_NEAR(ce.D, d / 25.0, 1e-12);
    EXPECT_LE(ce.to_mean, ce.C);
}

TEST(IterateErrors, Examples) {
    EXPECT_EQ(iterate_errors(vec_of({1.0, 1.0}), vec_of({1.0, 1.0})).A, 0.0);
    const IterateErrors e = iterate_errors(vec_of({2.0, 0.0}), vec_of({0.0, 0.0}));
    EXPECT_EQ(e.A, 4.0);
    EXPECT_EQ(e.B, 16.0);
    EXPECT_EQ(e.B, e.A * e.A);
}

TEST(ObjectiveStats, Examples) {
    const Instance one = build_instance(
        {QuadraticMachine::with_optimum(SymMatrix(Mat::Constant(1, 1, 2.0)), vec_of({0.0}), 0.0)});
    const ObjectiveStats s = objective_stats(one, vec_of({1.0}));
    EXPECT_DOUBLE_EQ(*s.E, 1.0);
    EXPECT_DOUBLE_EQ(s.grad_norm_sq, 4.0);
    const ObjectiveStats at = objective_stats(one, vec_of({0.0}));
    EXPECT_EQ(*at.E, 0.0);
    EXPECT_EQ(at.grad_norm_sq, 0.0);

    const Instance pair = make_shared_optimum_pair(1.0, vec_of({1.0, 1.0}));
    EXPECT_NEAR(*objective_stats(pair, vec_of({0.0, 0.0})).E, 0.5, 1e-15);
}

TEST(ObjectiveStats, NoOptimumLeavesGapAbsent) {
    const Instance flat = build_instance(
        {QuadraticMachine::with_affine(SymMatrix::diagonal(vec_of({1.0, 0.0})), vec_of({0.0, 0.0}), 0.0),
         QuadraticMachine::with_affine(SymMatrix::diagonal(vec_of({1.0, 0.0})), vec_of({1.0, 0.0}), 0.0)});
    const ObjectiveStats s = objective_stats(flat, vec_of({1.0, 3.0}));
    EXPECT_FALSE(s.E);
    EXPECT_DOUBLE_EQ(s.grad_norm_sq, 2.25);
}

TEST(ConsensusBounds, Arithmetic) {
    EXPECT_EQ(consensus_bound_second(0.0, 2, 1.0, 1.0, 1.0), 0.0);
    EXPECT_NEAR(consensus_bound_second(0.1, 2, 1.0, 1.0, 0.0), 0.12, 1e-15);
    EXPECT_NEAR(consensus_bound_second(0.1, 2, 0.0, 7.0, 1.0), 0.12, 1e-15);
    EXPECT_EQ(consensus_bound_fourth(0.0, 2, 1.0, 1.0, 1.0, 1.0), 0.0);
    EXPECT_NEAR(consensus_bound_fourth(0.1, 2, 1.0, 0.0, 0.0, 1.0), 0.064, 1e-15);
    EXPECT_THROW(consensus_bound_second(0.1, 1, 1.0, 1.0, 1.0), BoundDomainError);
    EXPECT_THROW(consensus_bound_fourth(0.1, 1, 1.0, 1.0, 1.0, 1.0), BoundDomainError);
    EXPECT_THROW(consensus_bound_second(0.6, 2, 1.0, 1.0, 1.0), BoundDomainError);
}

TEST(UniformZetaBound, ZeroCases) {
    const Instance homog = make_shared_optimum_pair(1.0, vec_of({1.0, -1.0}));
    const QuadraticMachine q = homog.quadratic(0);
    EXPECT_EQ(uniform_zeta_bound(heterogeneity_report(build_instance({q, q, q})), 10.0).cwiseAbs().maxCoeff(), 0.0);
    // shared optimum, tau = 0 when the Hessians coincide too
    const Instance same = build_instance({q, q});
    EXPECT_EQ(uniform_zeta_bound(heterogeneity_report(same), 1.0).cwiseAbs().maxCoeff(), 0.0);
}

TEST(UniformZetaBound, DominatesSampledGradientGap) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Stream rng(seed, {tag(StreamTag::Test), 2});
        RandomQuadraticSpec spec;
        spec.dim = 5;
        spec.machines = 4;
        const Instance inst = make_random_quadratic_instance(spec, rng);
        const HeterogeneityReport rep = heterogeneity_report(inst);
        for (double D : {1.0, 10.0}) {
            const Mat bound = uniform_zeta_bound(rep, D);
            for (std::size_t m = 0; m < 4; ++m) {
                for (std::size_t n = 0; n < 4; ++n) {
                    if (m == n) continue;
                    const double sup = sampled_gradient_gap(inst, m, n, D, 1000, rng);
                    EXPECT_LE(sup, bound(m, n) * (1 + 1e-12)) << seed << " " << m << " " << n;
                }
            }
        }
    }
}

TEST(Trace, ConsensusVanishesAtCommunicationSteps) {
    Stream rng(3, {tag(StreamTag::Test), 3});
    RandomQuadraticSpec spec;
    spec.sigma2 = 0.5;
    const Instance inst = make_random_quadratic_instance(spec, rng);
    LocalSGDConfig cfg;
    cfg.inner_step = 0.3;
    cfg.schedule = {inst.size(), 4, 6};
    cfg.init = Vec::Zero(4);
    const RunTrace tr = run_local_sgd(inst, cfg, 11);
    std::size_t comm = 0;
    for (const auto& rec : tr.records) {
        EXPECT_GE(rec.consensus_sq, 0.0);
        EXPECT_GE(*rec.func_subopt, -1e-10);
        EXPECT_EQ(rec.delta_t, rec.t - rec.t % 4);
        if (rec.is_comm_round) {
            ++comm;
            EXPECT_EQ(rec.consensus_sq, 0.0);
            EXPECT_EQ(rec.consensus_4th, 0.0);
        } else if (rec.t > 0) {
            EXPECT_GT(rec.consensus_sq, 0.0);
        }
    }
    EXPECT_EQ(comm, 7u);

    CELSGDConfig ce;
    ce.step = 0.1;
    ce.momentum = 0.5;
    ce.warm_batch = 2;
    ce.local_batch = 2;
    ce.local_steps = 3;
    ce.schedule = {inst.size(), 3, 4};
    ce.init = Vec::Zero(4);
    for (const auto& rec : run_ce_lsgd(inst, ce, 5).records) {
        if (rec.is_comm_round) {
            EXPECT_EQ(rec.consensus_sq, 0.0);
        }
    }
}

TEST(ConsensusBounds, DominateTrialAveragesOnEqualHessianInstances) {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        Stream rng(seed, {tag(StreamTag::Test), 4});
        RandomQuadraticSpec spec;
        spec.dim = 5;
        spec.machines = 4;
        spec.sigma2 = 0.5;
        const Instance inst = make_equal_hessian_instance(spec, rng);
        for (unsigned K : {2u, 4u, 8u}) {
            const ConsensusCheck chk = consensus_check(inst, 0.5, K, 4, 200, seed);
            EXPECT_TRUE(chk.second_ok()) << seed << " K=" << K;
            EXPECT_TRUE(chk.fourth_ok()) << seed << " K=" << K;
        }
    }
}

TEST(ConsensusBounds, NoiseDoublingQuadruplesConsensus) {
    Stream rng(7, {tag(StreamTag::Test), 5});
    RandomQuadraticSpec spec;
    spec.dim = 5;
    spec.machines = 4;
    const Instance base = make_equal_hessian_instance(spec, rng);
    const Vec xs = global_optimum(base);
    std::vector<QuadraticMachine> ms;
    for (std::size_t m = 0; m < base.size(); ++m)
        ms.push_back(QuadraticMachine::with_optimum(base.quadratic(m).hessian, xs, 0.0));
    const Instance homog = build_instance(ms);
    const double c1 = consensus_check(homog.with_noise(0.5), 0.25, 4, 5, 200, 1).time_averaged_C();
    const double c2 = consensus_check(homog.with_noise(1.0), 0.25, 4, 5, 200, 1).time_averaged_C();
    EXPECT_NEAR(c2 / c1, 4.0, 1.0);
}

TEST(Aggregate, SeriesMeansAndErrors) {
    const SeriesStats s = aggregate_series({{1.0, 2.0}, {3.0, 2.0}});
    EXPECT_EQ(s.trials, 2u);
    EXPECT_DOUBLE_EQ(s.mean[0], 2.0);
    EXPECT_DOUBLE_EQ(s.se[0], 1.0);
    EXPECT_EQ(s.se[1], 0.0);
    EXPECT_THROW(aggregate_series({{1.0}, {1.0, 2.0}}), std::invalid_argument);
}
