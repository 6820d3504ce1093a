#ifndef LSGD_VALIDATION_HPP
#define LSGD_VALIDATION_HPP

// Invariant suites behind `lsgd validate`. Each invariant reduces to a
// nonnegative violation measure compared against a tolerance; a fault can be
// injected by name, which replaces that tolerance with -1 so the check fails.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <set>
#include <string>
#include <vector>

#include "lsgd/algorithms.hpp"
#include "lsgd/experiments.hpp"
#include "lsgd/fixedpoint.hpp"
#include "lsgd/online.hpp"
#include "lsgd/problems.hpp"
#include "lsgd/serialization.hpp"
#include "lsgd/stats.hpp"

namespace lsgd {

struct InvariantResult {
    std::string suite;
    std::string name;
    double value = 0.0;
    double tolerance = 0.0;
    bool passed() const { return value <= tolerance; }
};

inline json to_json(const InvariantResult& r) {
    return {{"suite", r.suite}, {"invariant", r.name}, {"value", r.value}, {"tolerance", r.tolerance},
            {"passed", r.passed()}};
}

inline const std::vector<std::string>& validation_suites() {
    static const std::vector<std::string> s{"fixedpoint", "consensus", "estimators", "hard-instances"};
    return s;
}

namespace detail {

inline RandomQuadraticSpec validation_spec(std::size_t dim, std::size_t machines, double mu) {
    RandomQuadraticSpec spec;
    spec.dim = dim;
    spec.machines = machines;
    spec.mu = mu;
    spec.H = 1.0;
    return spec;
}

inline std::vector<InvariantResult> fixedpoint_suite(std::uint64_t seed) {
    std::vector<InvariantResult> out;
    double k1 = 0.0, homog = 0.0, sim = 0.0, bound_gap = 0.0;
    for (std::size_t i = 0; i < 20; ++i) {
        Stream rng(seed, {tag(StreamTag::Test), 100, i});
        const Instance inst = make_random_quadratic_instance(validation_spec(2 + i % 5, 1 + i % 4, 0.2), rng);
        k1 = std::max(k1, (compute_fixed_point(inst, 0.5, 1).fixed_point - global_optimum(inst)).norm());
        const FixedPointResult fp = compute_fixed_point(inst, 0.9, 5);
        // relative excess; the norm bound is attained when M = 1
        const double db = fp.bounds->discrepancy_bound, nb = fp.bounds->norm_bound;
        bound_gap = std::max(bound_gap, (*fp.discrepancy - db) / std::max(1.0, db));
        bound_gap = std::max(bound_gap, (fp.fixed_point.norm() - nb) / std::max(1.0, nb));
        std::vector<QuadraticMachine> same(3, inst.quadratic(0));
        homog = std::max(homog, *compute_fixed_point(build_instance(std::move(same)), 0.5, 7).discrepancy);
    }
    for (std::size_t i = 0; i < 5; ++i) {
        Stream rng(seed, {tag(StreamTag::Test), 101, i});
        const Instance inst = make_random_quadratic_instance(validation_spec(4, 3, 0.2), rng);
        LocalSGDConfig cfg;
        cfg.inner_step = 0.5;
        cfg.outer_step = 1.0;
        cfg.schedule = {inst.size(), 5, 2000};
        cfg.init = Vec::Zero(4);
        const RunTrace tr = run_local_sgd(inst, cfg, 0, RunOptions::silent());
        sim = std::max(sim, (tr.output - compute_fixed_point(inst, 0.5, 5).fixed_point).norm());
    }
    double closed = 0.0;
    const Vec xs = vec_of({1.0, -2.0});
    const Instance pair = make_shared_optimum_pair(1.0, xs);
    for (double eta : {0.3, 0.7, 1.0}) {
        for (double beta : {0.5, 1.0, 2.0}) {
            LocalSGDConfig cfg;
            cfg.inner_step = eta;
            cfg.outer_step = beta;
            cfg.schedule = {2, 3, 8};
            cfg.init = Vec::Zero(2);
            const RunTrace tr = run_local_sgd(pair, cfg, 0, RunOptions::silent());
            for (std::size_t r = 0; r <= 8; ++r)
                closed = std::max(closed, (tr.rounds[r] - closed_form_shared_optimum_iterate(1.0, eta, beta, 3, r, xs)).norm());
        }
    }
    out.push_back({"fixedpoint", "k1-fixed-point-is-optimum", k1, 1e-10});
    out.push_back({"fixedpoint", "homogeneous-discrepancy", homog, 1e-10});
    out.push_back({"fixedpoint", "simulation-matches-fixed-point", sim, 1e-8});
    out.push_back({"fixedpoint", "closed-form-iterates", closed, 1e-12});
    out.push_back({"fixedpoint", "bounds-dominate", std::max(bound_gap, 0.0), 1e-12});
    return out;
}

inline std::vector<InvariantResult> consensus_suite(std::uint64_t seed) {
    Stream rng(seed, {tag(StreamTag::Test), 102});
    RandomQuadraticSpec spec = validation_spec(4, 4, 0.2);
    spec.sigma2 = 0.5;
    const Instance inst = make_equal_hessian_instance(spec, rng);
    double second = -std::numeric_limits<double>::infinity(), fourth = second, at_comm = 0.0;
    for (unsigned K : {2u, 4u}) {
        const ConsensusCheck chk = consensus_check(inst, 0.5, K, 4, 100, seed);
        for (const auto& p : chk.series) {
            second = std::max(second, p.C.mean + 3.0 * p.C.se - p.bound_second);
            fourth = std::max(fourth, p.D.mean + 3.0 * p.D.se - p.bound_fourth);
            if (p.t % K == 0) at_comm = std::max(at_comm, p.C.mean);
        }
    }
    return {{"consensus", "second-moment-bound", std::max(second, 0.0), 0.0},
            {"consensus", "fourth-moment-bound", std::max(fourth, 0.0), 0.0},
            {"consensus", "zero-at-communication", at_comm, 0.0}};
}

inline std::vector<InvariantResult> estimators_suite(std::uint64_t seed) {
    const std::size_t d = 4, n = 20000;
    Stream rng(seed, {tag(StreamTag::Test), 103});
    const Vec beta = vec_of({0.5, -1.0, 0.25, 2.0});
    const Vec w = vec_of({0.3, 0.1, -0.4, 0.2});
    const double delta = 0.7;
    const Mat a = (Mat(4, 4) << 2, 0.5, 0, 0, 0.5, 1, 0.2, 0, 0, 0.2, 3, 0, 0, 0, 0, 0.5).finished();
    auto f = [&](const Vec& x) { return std::log(x.array().exp().sum()) + 0.5 * x.dot(a * x); };
    auto grad = [&](const Vec& x) { return Vec(x.array().exp() / x.array().exp().sum() + (a * x).array()); };
    auto dist = [](const Vec& x) { return x.norm(); };  // 1-Lipschitz
    std::vector<std::vector<double>> one(d), two(d), orc(d);
    double unit = 0.0, second = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const Vec u = sample_unit_sphere(d, rng);
        unit = std::max(unit, std::abs(u.norm() - 1.0));
        const Vec g1 = one_point_estimator(beta.dot(w + delta * u), u, delta, d);
        const Vec g2 = two_point_estimator(f(w + delta * u), f(w - delta * u), u, delta, d);
        const Vec v = sample_unit_sphere(d, rng) * std::pow(rng.uniform(), 1.0 / static_cast<double>(d));
        const Vec h = grad(w + delta * v);
        for (std::size_t j = 0; j < d; ++j) {
            const auto k = static_cast<Eigen::Index>(j);
            one[j].push_back(g1(k));
            two[j].push_back(g2(k));
            orc[j].push_back(h(k));
        }
        second += two_point_estimator(dist(w + delta * u), dist(w - delta * u), u, delta, d).squaredNorm() /
                  static_cast<double>(n);
    }
    double z1 = 0.0, z2 = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
        const MeanSE m1 = mean_se(one[j]), m2 = mean_se(two[j]), mo = mean_se(orc[j]);
        z1 = std::max(z1, std::abs(m1.mean - beta(static_cast<Eigen::Index>(j))) / m1.se);
        z2 = std::max(z2, std::abs(m2.mean - mo.mean) / std::hypot(m2.se, mo.se));
    }
    return {{"estimators", "sphere-unit-norm", unit, 1e-12},
            {"estimators", "one-point-unbiased-z", z1, 4.0},
            {"estimators", "two-point-unbiased-z", z2, 4.0},
            {"estimators", "two-point-second-moment-ratio", second / static_cast<double>(d), 1.0}};
}

inline std::vector<InvariantResult> hard_instances_suite() {
    double global = 0.0, machine = 0.0;
    for (std::size_t M : {2u, 4u, 8u}) {
        const double B = 1.3;
        const Instance inst = make_offset_highdim_instance(M, B);
        global = std::max(global, std::abs(global_optimum(inst).norm() - std::sqrt(static_cast<double>(M)) * B / 3.0));
        for (const auto& q : inst.quadratics()) machine = std::max(machine, std::abs(q.optimum->norm() - B));
    }
    double ratio = 0.0, cn_norm = 0.0;
    for (unsigned R : {5u, 10u, 20u}) {
        const Instance inst = make_condition_number_instance(2.0, R, 1.5);
        const EigenExtremes e = eigen_extremes(inst.quadratic(0).hessian);
        ratio = std::max(ratio, std::abs(e.lambda_max / e.lambda_min / (12.0 * R) - 1.0));
        cn_norm = std::max(cn_norm, std::abs(inst.quadratic(0).optimum->norm() - 1.5));
    }
    const Vec xs2 = vec_of({0.7, -1.1});
    const double shared = (global_optimum(make_shared_optimum_pair(3.0, xs2)) - xs2).norm();
    const double tau = std::abs(heterogeneity_report(make_tau_decoupled_pair(4.0, 0.25, vec_of({1.0, 2.0, 3.0}))).tau - 0.25);
    return {{"hard-instances", "offset-global-optimum-norm", global, 1e-10},
            {"hard-instances", "offset-machine-optimum-norm", machine, 1e-12},
            {"hard-instances", "condition-number-ratio", ratio, 1e-12},
            {"hard-instances", "condition-number-optimum-norm", cn_norm, 1e-12},
            {"hard-instances", "shared-optimum-pair", shared, 1e-12},
            {"hard-instances", "tau-decoupled-heterogeneity", tau, 1e-12}};
}

}  // namespace detail

/// Runs `suite` ("all" for every suite). Unknown suite or fault names throw ConfigError.
inline std::vector<InvariantResult> run_validation(const std::string& suite, std::uint64_t seed,
                                                   const std::vector<std::string>& faults = {}) {
    const auto& all = validation_suites();
    if (suite != "all" && std::find(all.begin(), all.end(), suite) == all.end())
        throw ConfigError("unknown validation suite '" + suite + "'");
    std::vector<InvariantResult> out;
    auto want = [&](const char* s) { return suite == "all" || suite == s; };
    auto add = [&](std::vector<InvariantResult> rs) { out.insert(out.end(), rs.begin(), rs.end()); };
    if (want("fixedpoint")) add(detail::fixedpoint_suite(seed));
    if (want("consensus")) add(detail::consensus_suite(seed));
    if (want("estimators")) add(detail::estimators_suite(seed));
    if (want("hard-instances")) add(detail::hard_instances_suite());
    std::set<std::string> pending(faults.begin(), faults.end());
    for (auto& r : out) {
        if (pending.erase(r.name)) r.tolerance = -1.0;
    }
    if (!pending.empty()) throw ConfigError("fault names no invariant in this suite: " + *pending.begin());
    return out;
}

}  // namespace lsgd

#endif
