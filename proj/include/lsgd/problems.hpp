#ifndef LSGD_PROBLEMS_HPP
#define LSGD_PROBLEMS_HPP

// Client objectives, stochastic oracles, heterogeneity measurement and the
// structured instances used throughout the test suites.

#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "lsgd/numerics.hpp"
#include "lsgd/rng.hpp"

namespace lsgd {

class ProblemError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class NoUniqueOptimum : public ProblemError {
public:
    NoUniqueOptimum() : ProblemError("no unique optimum: average Hessian is singular") {}
};

/// E||xi||^4 for xi ~ N(0, (s^2/d) I) equals s^4 (1 + 2/d).
inline double gaussian_fourth_moment_root(double sigma2, std::size_t d) {
    return sigma2 * std::pow(1.0 + 2.0 / static_cast<double>(d), 0.25);
}

namespace detail {

inline bool is_psd(const SymMatrix& a) {
    if (a.dim() == 0) return true;
    const EigenExtremes e = eigen_extremes(a);
    return e.lambda_min >= -1e-10 * std::max(1.0, std::abs(e.lambda_max));
}

}  // namespace detail

/// F(x) = 1/2 x^T A x + b^T x + c, with isotropic Gaussian gradient noise of
/// total second moment sigma2^2.
struct QuadraticMachine {
    SymMatrix hessian;
    Vec affine;
    std::optional<Vec> optimum;
    double noise_second = 0.0;
    double noise_fourth = 0.0;
    double offset = 0.0;

    static QuadraticMachine with_optimum(SymMatrix a, Vec x_star, double sigma2 = 0.0) {
        if (static_cast<std::size_t>(x_star.size()) != a.dim()) {
            throw ProblemError("QuadraticMachine: optimum dimension mismatch");
        }
        QuadraticMachine q;
        q.affine = -(a * x_star);
        q.offset = 0.5 * a.quadratic_form(x_star);
        q.hessian = std::move(a);
        q.optimum = std::move(x_star);
        q.set_noise(sigma2);
        q.validate();
        return q;
    }

    /// Gradient A x + b. The optimum is the minimum-norm minimizer when
    /// -b lies in image(A); otherwise the objective is unbounded below.
    static QuadraticMachine with_affine(SymMatrix a, Vec b, double sigma2 = 0.0) {
        if (static_cast<std::size_t>(b.size()) != a.dim()) {
            throw ProblemError("QuadraticMachine: affine term dimension mismatch");
        }
        QuadraticMachine q;
        if (auto sol = min_norm_solve(a, Vec(-b)); std::holds_alternative<Vec>(sol)) {
            q.optimum = std::get<Vec>(std::move(sol));
        }
        q.hessian = std::move(a);
        q.affine = std::move(b);
        q.set_noise(sigma2);
        q.validate();
        return q;
    }

    std::size_t dim() const { return hessian.dim(); }

    double value(const Vec& x) const { return 0.5 * hessian.quadratic_form(x) + affine.dot(x) + offset; }
    Vec gradient(const Vec& x) const { return hessian * x + affine; }

    void set_noise(double sigma2) {
        if (!(sigma2 >= 0.0) || !std::isfinite(sigma2)) throw ProblemError("QuadraticMachine: invalid noise level");
        noise_second = sigma2;
        noise_fourth = gaussian_fourth_moment_root(sigma2, std::max<std::size_t>(dim(), 1));
    }

    void validate() const {
        if (!detail::is_psd(hessian)) throw ProblemError("QuadraticMachine: Hessian is not PSD");
        if (!affine.allFinite()) throw ProblemError("QuadraticMachine: non-finite affine term");
        if (noise_fourth < noise_second) throw ProblemError("QuadraticMachine: fourth-moment noise below second");
        if (optimum) {
            const double res = (hessian * *optimum + affine).norm();
            if (res > 1e-9 * (1.0 + affine.norm())) {
                throw ProblemError("QuadraticMachine: stored optimum is not stationary");
            }
        }
    }
};

/// Linear regression client: covariates beta ~ N(mean, I), labels
/// <truth, beta> + N(0, label_noise^2), squared loss.
struct RegressionMachine {
    Vec mean;
    Vec truth;
    double label_noise = 0.0;

    std::size_t dim() const { return static_cast<std::size_t>(mean.size()); }

    SymMatrix population_hessian() const {
        const auto d = mean.size();
        return SymMatrix(Mat(mean * mean.transpose() + Mat::Identity(d, d)));
    }

    /// Exact population objective; its noise level is the gradient noise at
    /// the optimum, E||beta eps||^2 = label_noise^2 (||mean||^2 + d).
    QuadraticMachine population() const {
        const double at_opt = label_noise * std::sqrt(mean.squaredNorm() + static_cast<double>(dim()));
        QuadraticMachine q = QuadraticMachine::with_optimum(population_hessian(), truth, at_opt);
        q.offset += 0.5 * label_noise * label_noise;
        return q;
    }
};

enum class MachineKind { Quadratic, Regression };

inline const char* to_string(MachineKind k) { return k == MachineKind::Quadratic ? "quadratic" : "regression"; }

/// M clients of one kind sharing a dimension, with the average Hessian cached.
class Instance {
public:
    Instance() = default;

    static Instance build(std::vector<QuadraticMachine> machines) {
        Instance inst;
        inst.kind_ = MachineKind::Quadratic;
        inst.quadratic_ = std::move(machines);
        inst.finish();
        return inst;
    }

    static Instance build(std::vector<RegressionMachine> machines) {
        Instance inst;
        inst.kind_ = MachineKind::Regression;
        for (const auto& r : machines) {
            if (r.truth.size() != r.mean.size()) throw ProblemError("RegressionMachine: dimension mismatch");
            if (!(r.label_noise >= 0.0)) throw ProblemError("RegressionMachine: negative label noise");
        }
        inst.regression_ = std::move(machines);
        inst.quadratic_.reserve(inst.regression_.size());
        for (const auto& r : inst.regression_) inst.quadratic_.push_back(r.population());
        inst.finish();
        return inst;
    }

    MachineKind kind() const { return kind_; }
    std::size_t dim() const { return dim_; }
    std::size_t size() const { return quadratic_.size(); }

    /// Exact (population) quadratic of machine m.
    const QuadraticMachine& quadratic(std::size_t m) const { return quadratic_.at(m); }
    std::span<const QuadraticMachine> quadratics() const { return quadratic_; }
    const RegressionMachine& regression(std::size_t m) const {
        if (kind_ != MachineKind::Regression) throw ProblemError("Instance: not a regression instance");
        return regression_.at(m);
    }
    std::span<const RegressionMachine> regressions() const { return regression_; }

    const SymMatrix& average_hessian() const { return average_hessian_; }
    const Vec& average_affine() const { return average_affine_; }

    double value(const Vec& x) const {
        double s = 0.0;
        for (const auto& q : quadratic_) s += q.value(x);
        return s / static_cast<double>(size());
    }

    Vec gradient(const Vec& x) const { return average_hessian_ * x + average_affine_; }

    bool all_minimizers() const {
        for (const auto& q : quadratic_) {
            if (!q.optimum) return false;
        }
        return true;
    }

    /// Same machines with every quadratic's noise level replaced.
    Instance with_noise(double sigma2) const {
        if (kind_ != MachineKind::Quadratic) throw ProblemError("with_noise: only quadratic instances carry a noise knob");
        auto qs = quadratic_;
        for (auto& q : qs) q.set_noise(sigma2);
        return build(std::move(qs));
    }

private:
    void finish() {
        if (quadratic_.empty()) throw ProblemError("Instance: need at least one machine");
        dim_ = quadratic_.front().dim();
        Mat a = Mat::Zero(dim_, dim_);
        Vec b = Vec::Zero(dim_);
        for (const auto& q : quadratic_) {
            if (q.dim() != dim_) throw ProblemError("Instance: machines have different dimensions");
            q.validate();
            a += q.hessian.mat();
            b += q.affine;
        }
        const double inv = 1.0 / static_cast<double>(quadratic_.size());
        average_hessian_ = SymMatrix(Mat(a * inv));
        average_affine_ = b * inv;
    }

    MachineKind kind_ = MachineKind::Quadratic;
    std::size_t dim_ = 0;
    std::vector<QuadraticMachine> quadratic_;
    std::vector<RegressionMachine> regression_;
    SymMatrix average_hessian_;
    Vec average_affine_;
};

inline Instance build_instance(std::vector<QuadraticMachine> machines) { return Instance::build(std::move(machines)); }
inline Instance build_instance(std::vector<RegressionMachine> machines) { return Instance::build(std::move(machines)); }

/// Unique minimizer of the average objective.
inline Vec global_optimum(const Instance& inst) {
    try {
        return solve_spd(inst.average_hessian(), Vec(-inst.average_affine()));
    } catch (const NotPositiveDefinite&) {
        throw NoUniqueOptimum();
    }
}

inline std::optional<Vec> try_global_optimum(const Instance& inst) {
    try {
        return global_optimum(inst);
    } catch (const NoUniqueOptimum&) {
        return std::nullopt;
    }
}

struct HeterogeneityReport {
    // First-order fields are absent when some machine has no minimizer.
    std::optional<Mat> zeta_star_pairs;
    std::optional<double> zeta_star;         // max over pairs
    std::optional<double> zeta_star_mean;    // mean over m of (1/M) sum_n zeta_{m,n}
    std::optional<double> zeta_star_fourth;  // ((1/M^2) sum zeta_{m,n}^4)^{1/4}
    std::vector<double> zeta_star_per_machine;
    std::vector<double> phi_star_per_machine;  // needs a unique global optimum
    std::optional<double> phi_star;            // max over machines
    std::optional<double> phi_star_fourth;     // ((1/M) sum phi_m^4)^{1/4}
    double tau = 0.0;
    double smoothness_H = 0.0;
    double strong_convexity_mu = 0.0;
    std::optional<double> kappa;  // absent when mu == 0
    std::vector<double> B_per_machine;
    std::optional<double> B_bar;
    std::optional<double> B;
    double third_order_Q = 0.0;
};

inline HeterogeneityReport heterogeneity_report(const Instance& inst) {
    HeterogeneityReport rep;
    const std::size_t M = inst.size();
    double H = 0.0;
    double mu = std::numeric_limits<double>::infinity();
    for (const auto& q : inst.quadratics()) {
        const EigenExtremes e = eigen_extremes(q.hessian);
        H = std::max(H, e.operator_norm());
        mu = std::min(mu, std::max(0.0, e.lambda_min));
    }
    rep.smoothness_H = H;
    rep.strong_convexity_mu = mu;
    if (mu > 1e-12 * std::max(1.0, H)) rep.kappa = H / mu;

    double tau = 0.0;
    for (std::size_t m = 0; m < M; ++m) {
        for (std::size_t n = m + 1; n < M; ++n) {
            tau = std::max(tau, eigen_extremes(inst.quadratic(m).hessian - inst.quadratic(n).hessian).operator_norm());
        }
    }
    rep.tau = tau;

    if (!inst.all_minimizers()) return rep;

    Mat pairs = Mat::Zero(M, M);
    double zmax = 0.0, zsum = 0.0, z4 = 0.0;
    for (std::size_t m = 0; m < M; ++m) {
        for (std::size_t n = 0; n < M; ++n) {
            const double z = (*inst.quadratic(m).optimum - *inst.quadratic(n).optimum).norm();
            pairs(m, n) = z;
            zmax = std::max(zmax, z);
            zsum += z;
            z4 += z * z * z * z;
        }
    }
    const double Md = static_cast<double>(M);
    for (std::size_t m = 0; m < M; ++m) rep.zeta_star_per_machine.push_back(pairs.row(m).sum() / Md);
    rep.zeta_star_pairs = std::move(pairs);
    rep.zeta_star = zmax;
    rep.zeta_star_mean = zsum / (Md * Md);
    rep.zeta_star_fourth = std::pow(z4 / (Md * Md), 0.25);

    double bsum = 0.0;
    for (const auto& q : inst.quadratics()) {
        rep.B_per_machine.push_back(q.optimum->norm());
        bsum += q.optimum->norm();
    }
    rep.B_bar = bsum / Md;

    if (auto xs = try_global_optimum(inst)) {
        rep.B = xs->norm();
        double pmax = 0.0, p4 = 0.0;
        for (const auto& q : inst.quadratics()) {
            const double p = (*q.optimum - *xs).norm();
            rep.phi_star_per_machine.push_back(p);
            pmax = std::max(pmax, p);
            p4 += p * p * p * p;
        }
        rep.phi_star = pmax;
        rep.phi_star_fourth = std::pow(p4 / Md, 0.25);
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Oracles

inline Vec stochastic_gradient(const QuadraticMachine& q, const Vec& x, Stream& rng) {
    Vec g = q.gradient(x);
    if (q.noise_second > 0.0) {
        const double sd = q.noise_second / std::sqrt(static_cast<double>(q.dim()));
        g += rng.normal_vec(g.size(), sd);
    }
    return g;
}

/// One datum (beta, eps): gradient of 1/2 (y - <x, beta>)^2.
struct RegressionSample {
    Vec covariate;
    double label_noise = 0.0;
};

inline RegressionSample sample_datum(const RegressionMachine& r, Stream& rng) {
    RegressionSample s;
    s.covariate = r.mean + rng.normal_vec(r.mean.size());
    s.label_noise = r.label_noise > 0.0 ? r.label_noise * rng.normal() : 0.0;
    return s;
}

inline Vec datum_gradient(const RegressionMachine& r, const RegressionSample& s, const Vec& x) {
    return s.covariate * (s.covariate.dot(x) - s.covariate.dot(r.truth) - s.label_noise);
}

inline Vec stochastic_gradient(const RegressionMachine& r, const Vec& x, Stream& rng) {
    return datum_gradient(r, sample_datum(r, rng), x);
}

inline Vec stochastic_gradient(const Instance& inst, std::size_t m, const Vec& x, Stream& rng) {
    if (inst.kind() == MachineKind::Regression) return stochastic_gradient(inst.regression(m), x, rng);
    return stochastic_gradient(inst.quadratic(m), x, rng);
}

/// Gradients at several points from one shared datum.
inline std::vector<Vec> multi_point_gradient(const Instance& inst, std::size_t m, std::span<const Vec> points,
                                             Stream& rng) {
    if (points.empty()) throw ProblemError("multi_point_gradient: need at least one point");
    std::vector<Vec> out;
    out.reserve(points.size());
    if (inst.kind() == MachineKind::Regression) {
        const auto& r = inst.regression(m);
        const RegressionSample s = sample_datum(r, rng);
        for (const auto& p : points) out.push_back(datum_gradient(r, s, p));
        return out;
    }
    const auto& q = inst.quadratic(m);
    std::optional<Vec> noise;
    if (q.noise_second > 0.0) {
        noise = rng.normal_vec(static_cast<Eigen::Index>(q.dim()), q.noise_second / std::sqrt(static_cast<double>(q.dim())));
    }
    for (const auto& p : points) {
        Vec g = q.gradient(p);
        if (noise) g += *noise;
        out.push_back(std::move(g));
    }
    return out;
}

/// Mean of `batch` single-datum gradients, each datum shared across points.
inline std::vector<Vec> batch_multi_point_gradient(const Instance& inst, std::size_t m, std::span<const Vec> points,
                                                   std::size_t batch, Stream& rng) {
    std::vector<Vec> acc(points.size(), Vec::Zero(static_cast<Eigen::Index>(inst.dim())));
    for (std::size_t b = 0; b < batch; ++b) {
        const auto g = multi_point_gradient(inst, m, points, rng);
        for (std::size_t i = 0; i < points.size(); ++i) acc[i] += g[i];
    }
    const double inv = 1.0 / static_cast<double>(batch);
    for (auto& a : acc) a *= inv;
    return acc;
}

// ---------------------------------------------------------------------------
// Sphere sampling

inline Vec sample_unit_sphere(std::size_t d, Stream& rng) {
    if (d == 0) throw ProblemError("sample_unit_sphere: dimension must be positive");
    for (;;) {
        Vec g = rng.normal_vec(static_cast<Eigen::Index>(d));
        const double n = g.norm();
        if (n > 1e-300) return g / n;
    }
}

namespace detail {

/// Integral of sin^n over [0, theta].
inline double sin_power_integral(int n, double theta) {
    if (n == 0) return theta;
    if (n == 1) return 1.0 - std::cos(theta);
    const double s = std::sin(theta);
    return -std::cos(theta) * std::pow(s, n - 1) / n + (n - 1.0) / n * sin_power_integral(n - 2, theta);
}

/// Polar angle with density proportional to sin^{n} on [0, phi], by
/// inverting the CDF at u (monotone in both u and phi).
inline double cap_polar_angle(int n, double phi, double u) {
    const double total = sin_power_integral(n, phi);
    const double target = u * total;
    double lo = 0.0, hi = phi;
    for (int it = 0; it < 200 && hi - lo > 1e-15 * std::max(1.0, phi); ++it) {
        const double mid = 0.5 * (lo + hi);
        if (sin_power_integral(n, mid) < target) lo = mid;
        else hi = mid;
    }
    return 0.5 * (lo + hi);
}

}  // namespace detail

/// Uniform sample from the cap of the unit sphere within `half_angle` of
/// `center`. The polar angle comes from the inverse CDF of sin^{d-2}, the
/// azimuth from a normalized Gaussian, and a Householder reflection carries
/// e_d onto the center.
inline Vec sample_spherical_cap(const Vec& center, double half_angle, Stream& rng) {
    const auto d = center.size();
    if (d == 0 || std::abs(center.norm() - 1.0) > 1e-10) {
        throw ProblemError("sample_spherical_cap: center must be a unit vector");
    }
    if (!(half_angle >= 0.0) || half_angle > std::numbers::pi + 1e-15) {
        throw ProblemError("sample_spherical_cap: half angle must lie in [0, pi]");
    }
    const double u = rng.uniform();
    Vec w = d > 1 ? sample_unit_sphere(static_cast<std::size_t>(d - 1), rng) : Vec(0);
    if (half_angle == 0.0) return center;
    if (d == 1) {
        // S^0 = {+-1}: only the full sphere reaches the antipode.
        return (half_angle >= std::numbers::pi && u < 0.5) ? Vec(-center) : center;
    }
    const double theta = detail::cap_polar_angle(static_cast<int>(d) - 2, std::min(half_angle, std::numbers::pi), u);
    Vec y(d);
    y.head(d - 1) = std::sin(theta) * w;
    y(d - 1) = std::cos(theta);

    Vec v = -center;
    v(d - 1) += 1.0;  // e_d - center
    const double vv = v.squaredNorm();
    Vec out = vv > 1e-30 ? Vec(y - (2.0 * v.dot(y) / vv) * v) : y;
    return out / out.norm();
}

/// Half-angle of the cap whose chord diameter is `separation` on a sphere
/// of the given radius.
inline double cap_half_angle(double separation, double radius) {
    if (!(radius > 0.0) || separation < 0.0 || separation > 2.0 * radius * (1.0 + 1e-15)) {
        throw ProblemError("cap_half_angle: separation must lie in [0, 2 radius]");
    }
    return std::asin(std::min(1.0, separation / (2.0 * radius)));
}

// ---------------------------------------------------------------------------
// Structured instances

inline Vec vec_of(std::initializer_list<double> xs) {
    Vec v(static_cast<Eigen::Index>(xs.size()));
    Eigen::Index i = 0;
    for (double x : xs) v(i++) = x;
    return v;
}

/// Two machines with Hessians diag(H,0) and diag(0,H) and a common optimum.
inline Instance make_shared_optimum_pair(double H, const Vec& x_star) {
    if (!(H > 0.0)) throw ProblemError("make_shared_optimum_pair: H must be positive");
    if (x_star.size() != 2) throw ProblemError("make_shared_optimum_pair: optimum must be 2-dimensional");
    std::vector<QuadraticMachine> ms;
    ms.push_back(QuadraticMachine::with_optimum(SymMatrix::diagonal(vec_of({H, 0.0})), x_star));
    ms.push_back(QuadraticMachine::with_optimum(SymMatrix::diagonal(vec_of({0.0, H})), x_star));
    return Instance::build(std::move(ms));
}

/// Hessians diag(tau,0,H) and diag(0,tau,H): H-smooth, heterogeneity tau.
inline Instance make_tau_decoupled_pair(double H, double tau, const Vec& x_star) {
    if (!(H > 0.0) || !(tau >= 0.0) || tau > H) {
        throw ProblemError("make_tau_decoupled_pair: need 0 <= tau <= H");
    }
    if (x_star.size() != 3) throw ProblemError("make_tau_decoupled_pair: optimum must be 3-dimensional");
    std::vector<QuadraticMachine> ms;
    ms.push_back(QuadraticMachine::with_optimum(SymMatrix::diagonal(vec_of({tau, 0.0, H})), x_star));
    ms.push_back(QuadraticMachine::with_optimum(SymMatrix::diagonal(vec_of({0.0, tau, H})), x_star));
    return Instance::build(std::move(ms));
}

/// Rank-one pair H e1 e1^T and H v v^T with v = (alpha, sqrt(1 - alpha^2)).
inline Instance make_rotated_pair(double H, double alpha, const Vec& x_star) {
    if (!(H > 0.0)) throw ProblemError("make_rotated_pair: H must be positive");
    if (!(alpha > 0.0 && alpha < 1.0)) throw ProblemError("make_rotated_pair: alpha must lie in (0, 1)");
    if (x_star.size() != 2) throw ProblemError("make_rotated_pair: optimum must be 2-dimensional");
    const Vec v = vec_of({alpha, std::sqrt(1.0 - alpha * alpha)});
    std::vector<QuadraticMachine> ms;
    ms.push_back(QuadraticMachine::with_optimum(SymMatrix::diagonal(vec_of({H, 0.0})), x_star));
    ms.push_back(QuadraticMachine::with_optimum(SymMatrix(Mat(H * v * v.transpose())), x_star));
    return Instance::build(std::move(ms));
}

/// Single 2-d quadratic with eigenvalues {H, H/(12R)} and optimum
/// -B (v1 + v2)/sqrt(2), on which R steps of gradient descent cannot get
/// below H B^2 / (8R) suboptimality for any step size.
inline Instance make_condition_number_instance(double H, unsigned R, double B) {
    if (!(H > 0.0) || R < 1 || !(B > 0.0)) throw ProblemError("make_condition_number_instance: need H > 0, R >= 1, B > 0");
    const double kappa = 12.0 * static_cast<double>(R);
    const Vec x_star = vec_of({-B / std::numbers::sqrt2, -B / std::numbers::sqrt2});
    std::vector<QuadraticMachine> ms;
    ms.push_back(QuadraticMachine::with_optimum(SymMatrix::diagonal(vec_of({H, H / kappa})), x_star));
    return Instance::build(std::move(ms));
}

/// M machines on d = M coordinates, paired into 2-d blocks. In block j,
/// machine 2j holds f(x,y) = 2(x+B)^2 + (x+y+B)^2 (optimum (-B,0)) and
/// machine 2j+1 holds g(x,y) = (x-B)^2 + (x+y-B)^2 (optimum (B,0)); each
/// machine's minimum-norm optimum has norm B while the average objective is
/// minimized at (-B/3, B/3, -B/3, B/3, ...).
///
/// With `ridge_other_blocks` every machine also carries 1/2||.||^2 on the
/// coordinates outside its block. That keeps each machine strongly convex
/// but, for M >= 4, pulls the average optimum towards zero (to
/// (-3B/14, B/7) per block when M = 4).
inline Instance make_offset_highdim_instance(std::size_t M, double B_bar, bool ridge_other_blocks = false) {
    if (M < 2 || M % 2 != 0) throw ProblemError("make_offset_highdim_instance: M must be even and >= 2");
    const auto d = static_cast<Eigen::Index>(M);
    std::vector<QuadraticMachine> ms;
    for (std::size_t m = 0; m < M; ++m) {
        const Eigen::Index i = static_cast<Eigen::Index>(m / 2) * 2;
        Mat a = Mat::Zero(d, d);
        Vec b = Vec::Zero(d);
        if (ridge_other_blocks) {
            a.diagonal().setOnes();
            a(i, i) = 0.0;
            a(i + 1, i + 1) = 0.0;
        }
        if (m % 2 == 0) {
            // 2(x+B)^2 + (x+y+B)^2
            a(i, i) += 6.0;
            a(i, i + 1) += 2.0;
            a(i + 1, i) += 2.0;
            a(i + 1, i + 1) += 2.0;
            b(i) = 6.0 * B_bar;
            b(i + 1) = 2.0 * B_bar;
        } else {
            // (x-B)^2 + (x+y-B)^2
            a(i, i) += 4.0;
            a(i, i + 1) += 2.0;
            a(i + 1, i) += 2.0;
            a(i + 1, i + 1) += 2.0;
            b(i) = -4.0 * B_bar;
            b(i + 1) = -2.0 * B_bar;
        }
        Vec x_star = Vec::Zero(d);
        x_star(i) = m % 2 == 0 ? -B_bar : B_bar;
        QuadraticMachine q = QuadraticMachine::with_affine(SymMatrix(std::move(a)), std::move(b));
        // Snap the stored optimum to its exact value; the solver's answer
        // agrees to rounding.
        q.optimum = x_star;
        q.offset = -q.value(x_star);
        q.validate();
        ms.push_back(std::move(q));
    }
    return Instance::build(std::move(ms));
}

struct RandomQuadraticSpec {
    std::size_t dim = 4;
    std::size_t machines = 3;
    double mu = 0.1;        // smallest eigenvalue of every Hessian
    double H = 1.0;         // largest eigenvalue of every Hessian
    double optimum_scale = 1.0;
    double sigma2 = 0.0;
};

/// Random strongly convex quadratics: Haar-ish random eigenbases, spectra
/// spanning [mu, H] exactly, Gaussian optima.
inline Instance make_random_quadratic_instance(const RandomQuadraticSpec& spec, Stream& rng) {
    if (!(spec.mu > 0.0) || spec.mu > spec.H || spec.dim == 0 || spec.machines == 0) {
        throw ProblemError("make_random_quadratic_instance: need 0 < mu <= H and positive sizes");
    }
    const auto d = static_cast<Eigen::Index>(spec.dim);
    std::vector<QuadraticMachine> ms;
    for (std::size_t m = 0; m < spec.machines; ++m) {
        Mat g(d, d);
        for (Eigen::Index j = 0; j < d; ++j) g.col(j) = rng.normal_vec(d);
        Eigen::HouseholderQR<Mat> qr(g);
        Mat q = qr.householderQ();
        Vec spectrum(d);
        for (Eigen::Index j = 0; j < d; ++j) spectrum(j) = spec.mu + (spec.H - spec.mu) * rng.uniform();
        spectrum(0) = spec.mu;
        if (d > 1) spectrum(d - 1) = spec.H;
        else spectrum(0) = spec.H;
        Mat a = q * spectrum.asDiagonal() * q.transpose();
        Vec x_star = spec.optimum_scale * rng.normal_vec(d);
        ms.push_back(QuadraticMachine::with_optimum(SymMatrix(Mat(0.5 * (a + a.transpose()))), std::move(x_star), spec.sigma2));
    }
    return Instance::build(std::move(ms));
}

/// Machines sharing one Hessian and differing only in their linear terms.
inline Instance make_equal_hessian_instance(const RandomQuadraticSpec& spec, Stream& rng) {
    RandomQuadraticSpec one = spec;
    one.machines = 1;
    const Instance base = make_random_quadratic_instance(one, rng);
    const SymMatrix a = base.quadratic(0).hessian;
    std::vector<QuadraticMachine> ms;
    for (std::size_t m = 0; m < spec.machines; ++m) {
        Vec x_star = spec.optimum_scale * rng.normal_vec(static_cast<Eigen::Index>(spec.dim));
        ms.push_back(QuadraticMachine::with_optimum(a, std::move(x_star), spec.sigma2));
    }
    return Instance::build(std::move(ms));
}

/// Uniform first-order heterogeneity zeta = max_{m,n} ||b_m - b_n|| / H for
/// instances whose machines share a Hessian; nullopt otherwise.
inline std::optional<double> uniform_zeta(const Instance& inst) {
    const auto& a0 = inst.quadratic(0).hessian.mat();
    for (const auto& q : inst.quadratics()) {
        if ((q.hessian.mat() - a0).cwiseAbs().maxCoeff() > 1e-14 * std::max(1.0, a0.cwiseAbs().maxCoeff())) {
            return std::nullopt;
        }
    }
    const double H = eigen_extremes(inst.quadratic(0).hessian).operator_norm();
    double z = 0.0;
    for (std::size_t m = 0; m < inst.size(); ++m) {
        for (std::size_t n = m + 1; n < inst.size(); ++n) {
            z = std::max(z, (inst.quadratic(m).affine - inst.quadratic(n).affine).norm());
        }
    }
    return H > 0.0 ? z / H : 0.0;
}

// ---------------------------------------------------------------------------
// Regression cohorts

struct CohortParams {
    std::size_t machines = 20;
    std::size_t dim = 5;
    double R_star = 1.0;
    double zeta_star = 0.0;
    double mu0 = 5.0;
    double tau_knob = 0.0;
    double sigma_noise = 0.1;
};

/// Ground truths R* v_m with v_m uniform on the cap of half-angle
/// asin(zeta*/(2R*)) around `center`, one stream per machine.
inline std::vector<Vec> sample_cohort_truths(const CohortParams& p, const Vec& center, std::uint64_t seed) {
    const double angle = cap_half_angle(p.zeta_star, p.R_star);
    std::vector<Vec> out;
    for (std::size_t m = 0; m < p.machines; ++m) {
        Stream rng(seed, {tag(StreamTag::Truth), m});
        out.push_back(p.R_star * sample_spherical_cap(center, angle, rng));
    }
    return out;
}

/// Covariate means mu0 u_m with u_m uniform on the cap of half-angle
/// asin(tau/(2 mu0)) around `center`.
inline std::vector<Vec> sample_cohort_means(const CohortParams& p, const Vec& center, std::uint64_t seed) {
    const double angle = cap_half_angle(p.tau_knob, p.mu0);
    std::vector<Vec> out;
    for (std::size_t m = 0; m < p.machines; ++m) {
        Stream rng(seed, {tag(StreamTag::Mean), m});
        out.push_back(p.mu0 * sample_spherical_cap(center, angle, rng));
    }
    return out;
}

inline Instance assemble_cohort(const CohortParams& p, const std::vector<Vec>& truths, const std::vector<Vec>& means) {
    std::vector<RegressionMachine> ms;
    for (std::size_t m = 0; m < p.machines; ++m) ms.push_back({means.at(m), truths.at(m), p.sigma_noise});
    return Instance::build(std::move(ms));
}

inline Instance make_regression_cohort(const CohortParams& p, Stream& rng) {
    if (p.machines == 0 || p.dim == 0) throw ProblemError("make_regression_cohort: empty cohort");
    cap_half_angle(p.zeta_star, p.R_star);
    cap_half_angle(p.tau_knob, p.mu0);
    const Vec center = sample_unit_sphere(p.dim, rng);
    const std::uint64_t truth_seed = rng();
    const std::uint64_t mean_seed = rng();
    return assemble_cohort(p, sample_cohort_truths(p, center, truth_seed), sample_cohort_means(p, center, mean_seed));
}

/// Mean of the machines' optima (regression ground truths or quadratic
/// minimizers).
inline Vec mean_of_optima(const Instance& inst) {
    Vec s = Vec::Zero(static_cast<Eigen::Index>(inst.dim()));
    for (const auto& q : inst.quadratics()) {
        if (!q.optimum) throw ProblemError("mean_of_optima: machine without a minimizer");
        s += *q.optimum;
    }
    return s / static_cast<double>(inst.size());
}

/// Largest ||grad F_m(x) - grad F_n(x)|| seen over `samples` uniform points
/// of the ball B(0, radius), plus the two points +-radius along the top
/// eigenvector of A_m - A_n.
inline double sampled_gradient_gap(const Instance& inst, std::size_t m, std::size_t n, double radius,
                                   std::size_t samples, Stream& rng) {
    const auto& qm = inst.quadratic(m);
    const auto& qn = inst.quadratic(n);
    const SymMatrix diff = qm.hessian - qn.hessian;
    const Vec db = qm.affine - qn.affine;
    auto gap = [&](const Vec& x) { return (diff * x + db).norm(); };
    const SymEigen e = eigen_decompose(diff);
    const auto d = static_cast<Eigen::Index>(inst.dim());
    Eigen::Index top = 0;
    for (Eigen::Index i = 1; i < d; ++i) {
        if (std::abs(e.values(i)) > std::abs(e.values(top))) top = i;
    }
    const Vec v = e.vectors.col(top);
    double best = std::max(gap(radius * v), gap(-radius * v));
    for (std::size_t s = 0; s < samples; ++s) {
        const Vec u = sample_unit_sphere(inst.dim(), rng);
        const double r = radius * std::pow(rng.uniform(), 1.0 / static_cast<double>(d));
        best = std::max(best, gap(r * u));
    }
    return best;
}

}  // namespace lsgd

#endif
