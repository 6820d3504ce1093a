#ifndef LSGD_EXPERIMENTS_HPP
#define LSGD_EXPERIMENTS_HPP

// Trial-averaged experiment drivers shared by the CLI and the acceptance checks.

#include <algorithm>
#include <cmath>
#include <limits>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "lsgd/algorithms.hpp"
#include "lsgd/diagnostics.hpp"
#include "lsgd/online.hpp"
#include "lsgd/parallel.hpp"
#include "lsgd/problems.hpp"
#include "lsgd/stats.hpp"

namespace lsgd {

inline std::uint64_t trial_seed(std::uint64_t seed, std::size_t trial) {
    return mix_keys(seed, {tag(StreamTag::Trial), trial});
}

inline double max_noise_second(const Instance& inst) {
    double s = 0.0;
    for (const auto& q : inst.quadratics()) s = std::max(s, q.noise_second);
    return s;
}

inline double max_noise_fourth(const Instance& inst) {
    double s = 0.0;
    for (const auto& q : inst.quadratics()) s = std::max(s, q.noise_fourth);
    return s;
}

struct ConsensusPoint {
    std::size_t t = 0;
    MeanSE C;
    MeanSE D;
    double bound_second = 0.0;
    double bound_fourth = 0.0;
};

struct ConsensusCheck {
    double eta = 0.0;
    unsigned K = 0;
    double zeta = 0.0;
    std::vector<ConsensusPoint> series;

    /// mean + 3 SE under the bound at every step.
    bool second_ok() const {
        return std::all_of(series.begin(), series.end(),
                           [](const ConsensusPoint& p) { return p.C.mean + 3.0 * p.C.se <= p.bound_second; });
    }
    bool fourth_ok() const {
        return std::all_of(series.begin(), series.end(),
                           [](const ConsensusPoint& p) { return p.D.mean + 3.0 * p.D.se <= p.bound_fourth; });
    }
    double time_averaged_C() const {
        std::vector<double> c;
        for (const auto& p : series) c.push_back(p.C.mean);
        return mean_of(c);
    }
};

/// Local SGD (beta = 1, x_0 = 0) on an equal-Hessian quadratic instance,
/// C(t) and D(t) averaged over trials and compared with the uniform-zeta bounds.
inline ConsensusCheck consensus_check(const Instance& inst, double eta, unsigned K, std::size_t R, std::size_t trials,
                                      std::uint64_t seed, std::size_t workers = 1) {
    LocalSGDConfig cfg;
    cfg.inner_step = eta;
    cfg.outer_step = 1.0;
    cfg.schedule = {inst.size(), K, R};
    cfg.init = Vec::Zero(static_cast<Eigen::Index>(inst.dim()));
    const auto runs = parallel_map(trials, workers, [&](std::size_t i) {
        const RunTrace tr = run_local_sgd(inst, cfg, trial_seed(seed, i));
        std::vector<std::pair<double, double>> cd;
        for (const auto& rec : tr.records) cd.emplace_back(rec.consensus_sq, rec.consensus_4th);
        return cd;
    });
    ConsensusCheck out;
    out.eta = eta;
    out.K = K;
    const auto zeta = uniform_zeta(inst);
    if (!zeta) throw ProblemError("consensus_check: machines must share one Hessian");
    out.zeta = *zeta;
    const double H = heterogeneity_report(inst).smoothness_H;
    const double s2 = max_noise_second(inst), s4 = max_noise_fourth(inst);
    const double b2 = consensus_bound_second(eta, K, H, out.zeta, s2);
    const double b4 = consensus_bound_fourth(eta, K, H, out.zeta, s2, s4);
    const std::size_t len = runs.front().size();
    std::vector<double> c(trials), d(trials);
    for (std::size_t t = 0; t < len; ++t) {
        for (std::size_t i = 0; i < trials; ++i) {
            c[i] = runs[i].at(t).first;
            d[i] = runs[i].at(t).second;
        }
        out.series.push_back({t, mean_se(c), mean_se(d), b2, b4});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Distributed linear regression under covariate and concept shift

struct RegressionStudy {
    CohortParams cohort;  // tau_knob and zeta_star are overridden per cell
    std::size_t local_steps = 10;
    std::size_t rounds = 5;
    std::vector<double> etas = log_grid(1e-3, 1e-1, 7);
    std::size_t trials = 20;
    std::uint64_t seed = 0;

    void validate() const {
        if (etas.empty()) throw ConfigError("regression study: empty step-size grid");
        for (double e : etas)
            if (!(e > 0.0) || !std::isfinite(e)) throw ConfigError("regression study: step sizes must be positive");
        if (trials == 0 || local_steps == 0 || rounds == 0) throw ConfigError("regression study: K, R and trials must be positive");
    }
};

/// Common random numbers across cells: one central direction, one truth
/// stream and one mean stream per trial, one oracle seed per trial. Caps of
/// different widths then move every sample monotonically.
struct CohortDraw {
    Instance instance;
    Vec mean_truth;
    std::uint64_t run_seed = 0;
};

inline CohortDraw draw_cohort(const RegressionStudy& st, double tau, double zeta, std::size_t trial) {
    CohortParams p = st.cohort;
    p.tau_knob = tau;
    p.zeta_star = zeta;
    Stream centre_rng(st.seed, {tag(StreamTag::Center)});
    const Vec v0 = sample_unit_sphere(p.dim, centre_rng);
    const auto truths = sample_cohort_truths(p, v0, mix_keys(st.seed, {tag(StreamTag::Truth)}));
    const std::uint64_t ts = trial_seed(st.seed, trial);
    const auto means = sample_cohort_means(p, v0, mix_keys(ts, {tag(StreamTag::Mean)}));
    CohortDraw d{assemble_cohort(p, truths, means), Vec::Zero(static_cast<Eigen::Index>(p.dim)), ts};
    for (const auto& t : truths) d.mean_truth += t;
    d.mean_truth /= static_cast<double>(p.machines);
    return d;
}

inline LocalSGDConfig study_config(const RegressionStudy& st, const Instance& inst, double eta, std::size_t rounds) {
    LocalSGDConfig cfg;
    cfg.inner_step = eta;
    cfg.outer_step = 1.0;
    cfg.schedule = {inst.size(), st.local_steps, rounds};
    cfg.init = Vec::Zero(static_cast<Eigen::Index>(inst.dim()));
    return cfg;
}

struct TrialBest {
    double metric = std::numeric_limits<double>::infinity();
    double eta = std::numeric_limits<double>::quiet_NaN();
    double secondary = std::numeric_limits<double>::infinity();
};

/// Per-trial grid search of the final error ||x^R - x_bar*||; `secondary` is
/// the distance to the global optimum at the chosen step.
inline TrialBest best_final_error(const RegressionStudy& st, double tau, double zeta, std::size_t trial) {
    const CohortDraw dr = draw_cohort(st, tau, zeta, trial);
    const Vec x_opt = global_optimum(dr.instance);
    TrialBest best;
    for (double eta : st.etas) {
        const RunTrace tr = run_local_sgd(dr.instance, study_config(st, dr.instance, eta, st.rounds), dr.run_seed,
                                          RunOptions::silent());
        const double e = final_error(tr, [&](const Vec& x) { return (x - dr.mean_truth).norm(); });
        if (e < best.metric) {
            best.metric = e;
            best.eta = eta;
            best.secondary = (tr.output - x_opt).norm();
        }
    }
    return best;
}

/// Per-trial grid search of the first round with ||x^r - x_bar*|| <= target;
/// R_max + 1 when no step size reaches it.
inline TrialBest best_rounds_to_target(const RegressionStudy& st, double tau, double zeta, double target,
                                       std::size_t r_max, std::size_t trial) {
    const CohortDraw dr = draw_cohort(st, tau, zeta, trial);
    TrialBest best;
    best.metric = static_cast<double>(r_max + 1);
    for (double eta : st.etas) {
        const RunTrace tr = run_local_sgd(dr.instance, study_config(st, dr.instance, eta, r_max), dr.run_seed,
                                          RunOptions::silent());
        const double r = rounds_to_target(tr, [&](const Vec& x) { return (x - dr.mean_truth).norm(); }, target, r_max);
        if (r < best.metric) {
            best.metric = r;
            best.eta = eta;
        }
    }
    return best;
}

/// Most frequent value; ties go to the smallest.
inline double mode_of(std::vector<double> xs) {
    std::sort(xs.begin(), xs.end());
    double best = std::numeric_limits<double>::quiet_NaN();
    std::size_t best_n = 0;
    for (std::size_t i = 0; i < xs.size();) {
        std::size_t j = i;
        while (j < xs.size() && xs[j] == xs[i]) ++j;
        if (j - i > best_n) {
            best_n = j - i;
            best = xs[i];
        }
        i = j;
    }
    return best;
}

struct HeatmapCell {
    double tau = 0.0;
    double zeta_star = 0.0;
    MeanSE error;         // to the mean of the ground truths
    MeanSE error_global;  // to the global optimum
    double best_eta_mode = 0.0;
};

inline std::vector<HeatmapCell> heatmap(const RegressionStudy& st, const std::vector<double>& taus,
                                        const std::vector<double>& zetas, std::size_t workers = 1) {
    st.validate();
    if (taus.empty() || zetas.empty()) throw ConfigError("heatmap: empty tau or zeta grid");
    const std::size_t cells = taus.size() * zetas.size();
    const auto runs = parallel_map(cells * st.trials, workers, [&](std::size_t job) {
        const std::size_t cell = job / st.trials, trial = job % st.trials;
        return best_final_error(st, taus[cell % taus.size()], zetas[cell / taus.size()], trial);
    });
    std::vector<HeatmapCell> out;
    for (std::size_t cell = 0; cell < cells; ++cell) {
        std::vector<double> e, g, eta;
        for (std::size_t i = 0; i < st.trials; ++i) {
            const TrialBest& b = runs[cell * st.trials + i];
            e.push_back(b.metric);
            g.push_back(b.secondary);
            eta.push_back(b.eta);
        }
        out.push_back({taus[cell % taus.size()], zetas[cell / taus.size()], mean_se(e), mean_se(g), mode_of(eta)});
    }
    return out;
}

struct CommCell {
    double tau = 0.0;
    MeanSE rounds;
    double frac_censored = 0.0;
};

inline std::vector<CommCell> comm_complexity(const RegressionStudy& st, const std::vector<double>& taus, double zeta,
                                             double target, std::size_t r_max, std::size_t workers = 1) {
    st.validate();
    if (taus.empty()) throw ConfigError("comm-complexity: empty tau grid");
    const auto runs = parallel_map(taus.size() * st.trials, workers, [&](std::size_t job) {
        return best_rounds_to_target(st, taus[job / st.trials], zeta, target, r_max, job % st.trials);
    });
    std::vector<CommCell> out;
    for (std::size_t c = 0; c < taus.size(); ++c) {
        std::vector<double> r;
        std::size_t censored = 0;
        for (std::size_t i = 0; i < st.trials; ++i) {
            r.push_back(runs[c * st.trials + i].metric);
            censored += r.back() > static_cast<double>(r_max);
        }
        out.push_back({taus[c], mean_se(r), static_cast<double>(censored) / static_cast<double>(st.trials)});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Online regret

struct RegretPoint {
    std::size_t T = 0;
    MeanSE regret;
};

enum class OnlineAlgorithm { NcOgd, FedPosgd, FedOsgd };

inline std::string to_string(OnlineAlgorithm a) {
    switch (a) {
        case OnlineAlgorithm::NcOgd: return "nc-ogd";
        case OnlineAlgorithm::FedPosgd: return "fed-posgd";
        case OnlineAlgorithm::FedOsgd: return "fed-osgd";
    }
    return "?";
}

inline OnlineAlgorithm online_algorithm_from_string(const std::string& s) {
    if (s == "nc-ogd") return OnlineAlgorithm::NcOgd;
    if (s == "fed-posgd") return OnlineAlgorithm::FedPosgd;
    if (s == "fed-osgd") return OnlineAlgorithm::FedOsgd;
    throw ConfigError("unknown online algorithm '" + s + "'");
}

/// Step and smoothing from each algorithm's tuning rule for horizon T = K R.
inline OnlineConfig tuned_online_config(OnlineAlgorithm a, double G, double B, std::size_t M, std::size_t d,
                                        std::size_t K, std::size_t R, double zeta_hat) {
    OnlineConfig cfg;
    cfg.local_steps = K;
    cfg.rounds = R;
    cfg.ball_radius = B;
    switch (a) {
        case OnlineAlgorithm::NcOgd: cfg.step = nc_ogd_step(G, B, K * R); break;
        case OnlineAlgorithm::FedPosgd:
            cfg.step = fed_posgd_step(G, B, M, d, K, R, zeta_hat);
            cfg.smoothing = fed_posgd_smoothing(B);
            break;
        case OnlineAlgorithm::FedOsgd:
            cfg.step = fed_osgd_step(G, B, M, d, K, R);
            cfg.smoothing = fed_osgd_smoothing(B, M, d, K, R);
            break;
    }
    return cfg;
}

inline RegretTrace run_online(OnlineAlgorithm a, const Environment& env, const OnlineConfig& cfg, std::uint64_t seed) {
    switch (a) {
        case OnlineAlgorithm::NcOgd: return run_nc_ogd(env, cfg, seed);
        case OnlineAlgorithm::FedPosgd: return run_fed_posgd(env, cfg, seed);
        case OnlineAlgorithm::FedOsgd: return run_fed_osgd(env, cfg, seed);
    }
    throw ConfigError("unknown online algorithm");
}

struct RegretSweep {
    OnlineAlgorithm algorithm = OnlineAlgorithm::FedOsgd;
    AdversaryKind adversary = AdversaryKind::StochasticIID;
    std::size_t local_steps = 8;
    std::size_t machines = 4;
    std::size_t dim = 5;
    double G = 1.0;
    double B = 1.0;
    double zeta_hat = 0.0;
    std::vector<std::size_t> rounds{8, 32, 128};
    std::size_t trials = 10;
    std::uint64_t seed = 0;
};

/// Mean average regret per horizon; trial i uses seed trial_seed(seed, i) for
/// both the adversary and the algorithm.
inline std::vector<RegretPoint> regret_curve(const RegretSweep& sw, std::size_t workers = 1) {
    if (sw.rounds.empty() || sw.trials == 0) throw ConfigError("online regret: empty horizon grid or zero trials");
    std::vector<RegretPoint> out;
    for (std::size_t R : sw.rounds) {
        const OnlineConfig cfg =
            tuned_online_config(sw.algorithm, sw.G, sw.B, sw.machines, sw.dim, sw.local_steps, R, sw.zeta_hat);
        const auto regrets = parallel_map(sw.trials, workers, [&](std::size_t i) {
            const std::uint64_t s = trial_seed(sw.seed, i);
            const LinearAdversary adv(sw.adversary, sw.G, sw.dim, sw.machines, sw.zeta_hat, s);
            return run_online(sw.algorithm, adv, cfg, s).avg_regret;
        });
        out.push_back({sw.local_steps * R, mean_se(regrets)});
    }
    return out;
}

/// Average FedOSGD regret against a stochastic linear adversary over horizons
/// T = K R, with the tuned step and smoothing for each horizon.
inline std::vector<RegretPoint> fed_osgd_regret_curve(const std::vector<std::size_t>& rounds, std::size_t K,
                                                      std::size_t M, std::size_t d, double G, double B,
                                                      std::size_t trials, std::uint64_t seed,
                                                      std::size_t workers = 1) {
    RegretSweep sw;
    sw.local_steps = K;
    sw.machines = M;
    sw.dim = d;
    sw.G = G;
    sw.B = B;
    sw.rounds = rounds;
    sw.trials = trials;
    sw.seed = seed;
    return regret_curve(sw, workers);
}

}  // namespace lsgd

#endif
