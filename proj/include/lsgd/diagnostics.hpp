#ifndef LSGD_DIAGNOSTICS_HPP
#define LSGD_DIAGNOSTICS_HPP

// Per-step trace quantities (iterate error, consensus error, suboptimality)
// and the uniform consensus bounds they are compared with.

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "lsgd/numerics.hpp"
#include "lsgd/problems.hpp"
#include "lsgd/stats.hpp"

namespace lsgd {

struct TraceRecord {
    std::size_t t = 0;
    std::size_t delta_t = 0;  // last communication step, t - (t mod K)
    std::size_t round = 0;
    bool is_comm_round = false;
    std::optional<double> iterate_error_sq;   // A
    std::optional<double> iterate_error_4th;  // B
    double consensus_sq = 0.0;                // C, ordered pairs incl. m == n
    double consensus_4th = 0.0;               // D
    double consensus_to_mean_sq = 0.0;        // (1/M) sum_m ||x_bar - x^m||^2
    std::optional<double> func_subopt;        // E
    double grad_norm_sq = 0.0;
};

struct ConsensusErrors {
    double C = 0.0;
    double D = 0.0;
    double to_mean = 0.0;
};

inline ConsensusErrors consensus_errors(std::span<const Vec> iterates) {
    if (iterates.empty()) throw std::invalid_argument("consensus_errors: need at least one iterate");
    const std::size_t M = iterates.size();
    ConsensusErrors out;
    if (M == 1) return out;
    double c = 0.0, d = 0.0;
    for (std::size_t m = 0; m < M; ++m) {
        for (std::size_t n = m + 1; n < M; ++n) {
            const double s = (iterates[m] - iterates[n]).squaredNorm();
            c += s;
            d += s * s;
        }
    }
    const double M2 = static_cast<double>(M) * static_cast<double>(M);
    out.C = 2.0 * c / M2;
    out.D = 2.0 * d / M2;
    Vec mean = Vec::Zero(iterates.front().size());
    for (const auto& x : iterates) mean += x;
    mean /= static_cast<double>(M);
    double t = 0.0;
    for (const auto& x : iterates) t += (x - mean).squaredNorm();
    out.to_mean = t / static_cast<double>(M);
    return out;
}

struct IterateErrors {
    double A = 0.0;
    double B = 0.0;
};

inline IterateErrors iterate_errors(const Vec& x_bar, const Vec& x_star) {
    const double a = (x_bar - x_star).squaredNorm();
    return {a, a * a};
}

/// Global optimum and optimal value, computed once per instance.
struct ObjectiveReference {
    std::optional<Vec> x_star;
    std::optional<double> f_star;

    static ObjectiveReference of(const Instance& inst) {
        ObjectiveReference ref;
        ref.x_star = try_global_optimum(inst);
        if (ref.x_star) ref.f_star = inst.value(*ref.x_star);
        return ref;
    }
};

struct ObjectiveStats {
    std::optional<double> E;
    double grad_norm_sq = 0.0;
};

inline ObjectiveStats objective_stats(const Instance& inst, const ObjectiveReference& ref, const Vec& x) {
    ObjectiveStats s;
    s.grad_norm_sq = inst.gradient(x).squaredNorm();
    if (ref.f_star) {
        // 1/2 (x - x*)^T A (x - x*) is the exact gap for a quadratic.
        const Vec dx = x - *ref.x_star;
        s.E = 0.5 * inst.average_hessian().quadratic_form(dx);
    }
    return s;
}

inline ObjectiveStats objective_stats(const Instance& inst, const Vec& x) {
    return objective_stats(inst, ObjectiveReference::of(inst), x);
}

/// Builds one record from the machines' current iterates.
inline TraceRecord make_record(const Instance& inst, const ObjectiveReference& ref, std::size_t t, std::size_t K,
                               const Vec& x_bar, std::span<const Vec> machines) {
    TraceRecord rec;
    rec.t = t;
    rec.delta_t = t - t % K;
    rec.round = t / K;
    rec.is_comm_round = t % K == 0;
    if (ref.x_star) {
        const IterateErrors ie = iterate_errors(x_bar, *ref.x_star);
        rec.iterate_error_sq = ie.A;
        rec.iterate_error_4th = ie.B;
    }
    if (!machines.empty()) {
        const ConsensusErrors ce = consensus_errors(machines);
        rec.consensus_sq = ce.C;
        rec.consensus_4th = ce.D;
        rec.consensus_to_mean_sq = ce.to_mean;
    }
    const ObjectiveStats os = objective_stats(inst, ref, x_bar);
    rec.func_subopt = os.E;
    rec.grad_norm_sq = os.grad_norm_sq;
    return rec;
}

class BoundDomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

namespace detail {

inline void check_consensus_domain(double eta, unsigned K, double H) {
    if (K < 2) throw BoundDomainError("consensus bound needs K >= 2");
    if (eta < 0.0 || (H > 0.0 && eta > 1.0 / (2.0 * H) * (1.0 + 1e-12))) {
        throw BoundDomainError("consensus bound needs 0 <= eta <= 1/(2H)");
    }
}

}  // namespace detail

/// C(t) <= 3 K^2 eta^2 H^2 zeta^2 + 6 K sigma2^2 eta^2.
inline double consensus_bound_second(double eta, unsigned K, double H, double zeta, double sigma2) {
    detail::check_consensus_domain(eta, K, H);
    const double k = K;
    return 3.0 * k * k * eta * eta * H * H * zeta * zeta + 6.0 * k * sigma2 * sigma2 * eta * eta;
}

/// D(t) <= 2620 eta^4 K^4 H^4 zeta^4 + 5000 eta^4 K^2 sigma2^4 + 320 eta^4 sigma4^4 K.
inline double consensus_bound_fourth(double eta, unsigned K, double H, double zeta, double sigma2, double sigma4) {
    detail::check_consensus_domain(eta, K, H);
    const double k = K;
    const double e4 = std::pow(eta, 4);
    return 2620.0 * e4 * std::pow(k * H * zeta, 4) + 5000.0 * e4 * k * k * std::pow(sigma2, 4) +
           320.0 * e4 * std::pow(sigma4, 4) * k;
}

/// Pairwise H (zeta_m + zeta_n) + tau (D + B_bar) over the ball of radius D.
inline Mat uniform_zeta_bound(const HeterogeneityReport& rep, double D) {
    if (rep.zeta_star_per_machine.empty() || !rep.B_bar) {
        throw std::invalid_argument("uniform_zeta_bound: report lacks first-order heterogeneity");
    }
    const auto M = static_cast<Eigen::Index>(rep.zeta_star_per_machine.size());
    Mat out(M, M);
    for (Eigen::Index m = 0; m < M; ++m) {
        for (Eigen::Index n = 0; n < M; ++n) {
            out(m, n) = rep.smoothness_H * (rep.zeta_star_per_machine[m] + rep.zeta_star_per_machine[n]) +
                        rep.tau * (D + *rep.B_bar);
        }
    }
    return out;
}

/// Per-index mean and standard error across trials; values are summed in
/// trial order with pairwise summation.
struct SeriesStats {
    std::vector<double> mean;
    std::vector<double> se;
    std::size_t trials = 0;
};

inline SeriesStats aggregate_series(const std::vector<std::vector<double>>& per_trial) {
    if (per_trial.empty()) throw std::invalid_argument("aggregate_series: no trials");
    const std::size_t len = per_trial.front().size();
    for (const auto& s : per_trial) {
        if (s.size() != len) throw std::invalid_argument("aggregate_series: ragged trials");
    }
    SeriesStats out;
    out.trials = per_trial.size();
    std::vector<double> col(per_trial.size());
    for (std::size_t i = 0; i < len; ++i) {
        for (std::size_t k = 0; k < per_trial.size(); ++k) col[k] = per_trial[k][i];
        const MeanSE ms = mean_se(col);
        out.mean.push_back(ms.mean);
        out.se.push_back(ms.se);
    }
    return out;
}

}  // namespace lsgd

#endif
