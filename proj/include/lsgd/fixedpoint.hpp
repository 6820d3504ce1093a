#ifndef LSGD_FIXEDPOINT_HPP
#define LSGD_FIXEDPOINT_HPP

// Fixed points of noiseless Local SGD on quadratics. One round maps
// x -> x + (beta/M) sum_m (P_m x + c_m - x) with P_m = (I - eta A_m)^K, so
// every fixed point solves C x = c with C_m = I - P_m, C = mean C_m and
// c = mean c_m, c_m = -eta sum_{j<K} (I - eta A_m)^j b_m = C_m x_m* when
// machine m has a minimizer.

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "lsgd/numerics.hpp"
#include "lsgd/problems.hpp"
#include "lsgd/serialization.hpp"

namespace lsgd {

class FixedPointError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

enum class FixedPointStatus { Converged, Divergent, StationaryAtOrigin };

inline const char* to_string(FixedPointStatus s) {
    switch (s) {
        case FixedPointStatus::Converged: return "converged";
        case FixedPointStatus::Divergent: return "divergent";
        case FixedPointStatus::StationaryAtOrigin: return "stationary-at-origin";
    }
    return "?";
}

struct BoundValues {
    double norm_bound = 0.0;         // bound on ||x_inf||
    double discrepancy_bound = 0.0;  // bound on ||x* - x_inf||
    double discrepancy_branch_small_step = 0.0;
    double discrepancy_branch_large_step = 0.0;
};

struct FixedPointResult {
    double eta = 0.0;
    unsigned long long K = 1;
    std::vector<SymMatrix> per_machine_C;
    SymMatrix aggregate_C;
    Vec rhs;  // mean c_m
    FixedPointStatus status = FixedPointStatus::Converged;
    Vec fixed_point;                 // converged: x_inf; stationary: 0
    std::optional<Vec> limit_of_Cx;  // divergent: lim C x_R (projection of c onto image C)
    std::optional<Vec> kernel_residual;
    std::optional<double> discrepancy;  // ||x* - x_inf||
    std::optional<BoundValues> bounds;
};

/// min{ eta tau K kappa zeta + B_bar, kappa B_bar } with kappa = H / mu.
inline double fixed_point_norm_bound(double mu, double H, double tau, double zeta_star, double B_bar, double eta,
                                     unsigned long long K) {
    if (!(mu > 0.0)) throw FixedPointError("fixed_point_norm_bound: needs mu > 0");
    const double kappa = H / mu;
    return std::min(eta * tau * static_cast<double>(K) * kappa * zeta_star + B_bar, kappa * B_bar);
}

struct DiscrepancyBranches {
    double small_step = 0.0;
    double large_step = 0.0;
    double value = 0.0;
};

/// (zeta tau / mu) min{ [(1-eta H)^K - 1 + eta H K + eta mu K (1 - (1-eta H)^{K-1})] / [1 - (1-eta mu)^K],
///                      1 + eta mu K (1-eta mu)^{K-1} / [1 - (1-eta mu)^K] }
inline DiscrepancyBranches discrepancy_bound_branches(double mu, double H, double tau, double zeta_star, double eta,
                                                      unsigned long long K) {
    if (!(mu > 0.0)) throw FixedPointError("discrepancy_bound: needs mu > 0");
    if (!(eta > 0.0) || !(eta * H < 1.0)) throw FixedPointError("discrepancy_bound: needs 0 < eta < 1/H");
    DiscrepancyBranches out;
    if (tau == 0.0 || zeta_star == 0.0 || K == 1) return out;
    const double k = static_cast<double>(K);
    const double a = 1.0 - eta * H;
    const double c = 1.0 - eta * mu;
    const double denom = 1.0 - std::pow(c, k);
    const double lead = zeta_star * tau / mu;
    out.small_step = lead * (std::pow(a, k) - 1.0 + eta * H * k + eta * mu * k * (1.0 - std::pow(a, k - 1.0))) / denom;
    out.large_step = lead * (1.0 + eta * mu * k * std::pow(c, k - 1.0) / denom);
    out.value = std::min(out.small_step, out.large_step);
    return out;
}

inline double discrepancy_bound(double mu, double H, double tau, double zeta_star, double eta, unsigned long long K) {
    return discrepancy_bound_branches(mu, H, tau, zeta_star, eta, K).value;
}

namespace detail {

inline double max_smoothness(const Instance& inst) {
    double H = 0.0;
    for (const auto& q : inst.quadratics()) H = std::max(H, eigen_extremes(q.hessian).operator_norm());
    return H;
}

inline void check_step(const Instance& inst, double eta) {
    const double H = max_smoothness(inst);
    if (!(eta > 0.0) || !(eta * H < 1.0)) throw FixedPointError("fixed point: needs 0 < eta < 1/H");
}

/// sum_{j<K} T^j b by Horner's rule.
inline Vec geometric_sum(const SymMatrix& T, const Vec& b, unsigned long long K) {
    Vec s = Vec::Zero(b.size());
    for (unsigned long long j = 0; j < K; ++j) s = b + T * s;
    return s;
}

inline void fill_C(const Instance& inst, double eta, unsigned long long K, FixedPointResult& out) {
    out.eta = eta;
    out.K = K;
    const std::size_t d = inst.dim();
    Mat sum = Mat::Zero(d, d);
    for (const auto& q : inst.quadratics()) {
        SymMatrix c = SymMatrix::identity(d) - contraction_power(q.hessian, eta, K);
        sum += c.mat();
        out.per_machine_C.push_back(std::move(c));
    }
    out.aggregate_C = SymMatrix(Mat(sum / static_cast<double>(inst.size())));
}

inline void attach_bounds(const Instance& inst, FixedPointResult& out) {
    const HeterogeneityReport rep = heterogeneity_report(inst);
    if (!(rep.strong_convexity_mu > 0.0) || !rep.zeta_star || !rep.B_bar) return;
    BoundValues b;
    b.norm_bound = fixed_point_norm_bound(rep.strong_convexity_mu, rep.smoothness_H, rep.tau, *rep.zeta_star,
                                          *rep.B_bar, out.eta, out.K);
    const DiscrepancyBranches db =
        discrepancy_bound_branches(rep.strong_convexity_mu, rep.smoothness_H, rep.tau, *rep.zeta_star, out.eta, out.K);
    b.discrepancy_bound = db.value;
    b.discrepancy_branch_small_step = db.small_step;
    b.discrepancy_branch_large_step = db.large_step;
    out.bounds = b;
}

}  // namespace detail

/// x_inf = C^{-1} mean(C_m x_m*) for strongly convex machines with minimizers.
/// Independent of the outer step size.
inline FixedPointResult compute_fixed_point(const Instance& inst, double eta, unsigned long long K) {
    if (K < 1) throw FixedPointError("fixed point: K must be >= 1");
    if (!inst.all_minimizers()) throw FixedPointError("fixed point: every machine needs a minimizer; use convex_fixed_point");
    for (const auto& q : inst.quadratics()) {
        const EigenExtremes e = eigen_extremes(q.hessian);
        if (!(e.lambda_min > kKernelTolerance * e.lambda_max)) {
            throw FixedPointError("fixed point: instance is not strongly convex (mu = 0); use convex_fixed_point");
        }
    }
    detail::check_step(inst, eta);
    FixedPointResult out;
    detail::fill_C(inst, eta, K, out);
    Vec rhs = Vec::Zero(static_cast<Eigen::Index>(inst.dim()));
    for (std::size_t m = 0; m < inst.size(); ++m) rhs += out.per_machine_C[m] * *inst.quadratic(m).optimum;
    out.rhs = rhs / static_cast<double>(inst.size());
    out.fixed_point = solve_spd(out.aggregate_C, out.rhs);
    out.status = FixedPointStatus::Converged;
    out.discrepancy = (global_optimum(inst) - out.fixed_point).norm();
    detail::attach_bounds(inst, out);
    return out;
}

/// Fixed point for convex (possibly singular or minimizer-free) machines:
/// the minimum-norm solution of C x = c, started from the origin.
inline FixedPointResult convex_fixed_point(const Instance& inst, double eta, unsigned long long K) {
    if (K < 1) throw FixedPointError("fixed point: K must be >= 1");
    detail::check_step(inst, eta);
    FixedPointResult out;
    detail::fill_C(inst, eta, K, out);
    const auto d = static_cast<Eigen::Index>(inst.dim());
    Vec rhs = Vec::Zero(d);
    double scale = 0.0;
    for (const auto& q : inst.quadratics()) {
        const SymMatrix T = SymMatrix::identity(inst.dim()) - q.hessian * eta;
        rhs += -eta * detail::geometric_sum(T, q.affine, K);
        scale += q.affine.norm();
    }
    out.rhs = rhs / static_cast<double>(inst.size());
    if (out.rhs.norm() <= 1e-15 * scale || scale == 0.0) {
        out.status = FixedPointStatus::StationaryAtOrigin;
        out.fixed_point = Vec::Zero(d);
    } else {
        auto sol = min_norm_solve(out.aggregate_C, out.rhs);
        if (auto* x = std::get_if<Vec>(&sol)) {
            out.status = FixedPointStatus::Converged;
            out.fixed_point = *x;
        } else {
            out.status = FixedPointStatus::Divergent;
            out.kernel_residual = std::get<NotInImage>(sol).residual;
            out.limit_of_Cx = Vec(image_projector(out.aggregate_C) * out.rhs);
            out.fixed_point = Vec::Zero(d);
        }
    }
    if (out.status != FixedPointStatus::Divergent) {
        if (auto xs = try_global_optimum(inst)) out.discrepancy = (*xs - out.fixed_point).norm();
    }
    if (inst.all_minimizers()) detail::attach_bounds(inst, out);
    return out;
}

/// True iff the machines' Hessian kernels intersect only in 0, i.e. the
/// average Hessian is positive definite.
inline bool kernel_intersection_trivial(const Instance& inst) {
    const EigenExtremes e = eigen_extremes(inst.average_hessian());
    return e.lambda_max > 0.0 && e.lambda_min > kKernelTolerance * e.lambda_max;
}

struct GeometryRow {
    unsigned long long K = 1;
    Vec fixed_point;
    double discrepancy = 0.0;
    std::vector<Vec> normalized_spectra;  // eigenvalues of C_m / tr(C_m), ascending
};

inline std::vector<GeometryRow> geometry_comparison(const Instance& inst, double eta,
                                                    const std::vector<unsigned long long>& K_list) {
    std::vector<GeometryRow> rows;
    for (unsigned long long K : K_list) {
        const FixedPointResult fp = compute_fixed_point(inst, eta, K);
        GeometryRow row;
        row.K = K;
        row.fixed_point = fp.fixed_point;
        row.discrepancy = *fp.discrepancy;
        for (const auto& c : fp.per_machine_C) {
            const double tr = c.mat().trace();
            row.normalized_spectra.push_back(eigen_decompose(c).values / tr);
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

inline json to_json(const FixedPointResult& r) {
    json j;
    j["eta"] = r.eta;
    j["K"] = r.K;
    j["status"] = to_string(r.status);
    j["fixed_point"] = to_json(r.fixed_point);
    j["discrepancy"] = r.discrepancy ? json(*r.discrepancy) : json(nullptr);
    if (r.limit_of_Cx) j["limit_of_Cx"] = to_json(*r.limit_of_Cx);
    if (r.bounds) {
        j["bounds"] = {{"norm", r.bounds->norm_bound},
                       {"discrepancy", r.bounds->discrepancy_bound},
                       {"discrepancy_small_step_branch", r.bounds->discrepancy_branch_small_step},
                       {"discrepancy_large_step_branch", r.bounds->discrepancy_branch_large_step}};
    }
    return j;
}

inline json to_json(const std::vector<GeometryRow>& rows) {
    json a = json::array();
    for (const auto& r : rows) {
        json sp = json::array();
        for (const auto& s : r.normalized_spectra) sp.push_back(to_json(s));
        a.push_back({{"K", r.K}, {"fixed_point", to_json(r.fixed_point)}, {"discrepancy", r.discrepancy},
                     {"normalized_spectra", sp}});
    }
    return a;
}

}  // namespace lsgd

#endif
