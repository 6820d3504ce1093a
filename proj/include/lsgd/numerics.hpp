#ifndef LSGD_NUMERICS_HPP
#define LSGD_NUMERICS_HPP

// Small dense symmetric linear algebra used by every other header.
// Dimensions stay in the low hundreds, so everything is O(d^3) dense work
// on top of Eigen's self-adjoint eigensolver.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace lsgd {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

class NumericsError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class NotPositiveDefinite : public NumericsError {
public:
    NotPositiveDefinite() : NumericsError("matrix is not positive definite") {}
};

/// Relative cut below which an eigenvalue counts as part of the kernel.
inline constexpr double kKernelTolerance = 1e-10;

inline bool all_finite(const Eigen::Ref<const Mat>& m) { return m.allFinite(); }

/// Dense symmetric matrix. Construction checks symmetry to 1e-12 relative
/// and finiteness, then stores the exactly symmetrized average.
class SymMatrix {
public:
    SymMatrix() = default;

    explicit SymMatrix(Mat m) {
        if (m.rows() != m.cols()) {
            throw NumericsError("SymMatrix: matrix is not square");
        }
        if (!m.allFinite()) {
            throw NumericsError("SymMatrix: non-finite entry");
        }
        const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
        if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
            throw NumericsError("SymMatrix: matrix is not symmetric");
        }
        m_ = 0.5 * (m + m.transpose());
    }

    static SymMatrix zero(std::size_t d) { return SymMatrix(Mat::Zero(d, d), Trusted{}); }
    static SymMatrix identity(std::size_t d) { return SymMatrix(Mat::Identity(d, d), Trusted{}); }
    static SymMatrix diagonal(const Vec& diag) { return SymMatrix(Mat(diag.asDiagonal()), Trusted{}); }

    std::size_t dim() const { return static_cast<std::size_t>(m_.rows()); }
    const Mat& mat() const { return m_; }
    double operator()(Eigen::Index i, Eigen::Index j) const { return m_(i, j); }

    Vec operator*(const Vec& x) const { return m_ * x; }
    SymMatrix operator+(const SymMatrix& o) const { return SymMatrix(m_ + o.m_, Trusted{}); }
    SymMatrix operator-(const SymMatrix& o) const { return SymMatrix(m_ - o.m_, Trusted{}); }
    SymMatrix operator*(double s) const { return SymMatrix(m_ * s, Trusted{}); }
    friend SymMatrix operator*(double s, const SymMatrix& a) { return a * s; }

    double quadratic_form(const Vec& x) const { return x.dot(m_ * x); }

private:
    struct Trusted {};
    SymMatrix(Mat m, Trusted) : m_(std::move(m)) {}

    Mat m_;
};

struct SymEigen {
    Vec values;   // ascending
    Mat vectors;  // columns are orthonormal eigenvectors
};

inline SymEigen eigen_decompose(const SymMatrix& a) {
    if (a.dim() == 0) return {Vec(0), Mat(0, 0)};
    Eigen::SelfAdjointEigenSolver<Mat> solver(a.mat());
    if (solver.info() != Eigen::Success) {
        throw NumericsError("eigen_decompose: eigensolver did not converge");
    }
    return {solver.eigenvalues(), solver.eigenvectors()};
}

struct EigenExtremes {
    double lambda_min = 0.0;
    double lambda_max = 0.0;

    double operator_norm() const { return std::max(std::abs(lambda_min), std::abs(lambda_max)); }
};

inline EigenExtremes eigen_extremes(const SymMatrix& a) {
    const SymEigen e = eigen_decompose(a);
    if (e.values.size() == 0) return {};
    return {e.values(0), e.values(e.values.size() - 1)};
}

/// Sum of lambda_i v_i v_i^T over an orthonormal basis.
inline SymMatrix psd_from_spectrum(std::span<const double> eigenvalues, std::span<const Vec> basis) {
    if (eigenvalues.size() != basis.size() || basis.empty()) {
        throw NumericsError("psd_from_spectrum: need one basis vector per eigenvalue");
    }
    const auto d = basis.front().size();
    if (static_cast<std::size_t>(d) != basis.size()) {
        throw NumericsError("psd_from_spectrum: basis must span the space");
    }
    for (std::size_t i = 0; i < basis.size(); ++i) {
        if (basis[i].size() != d) throw NumericsError("psd_from_spectrum: basis dimension mismatch");
        if (!(eigenvalues[i] >= 0.0) || !std::isfinite(eigenvalues[i])) {
            throw NumericsError("psd_from_spectrum: negative eigenvalue");
        }
        for (std::size_t j = 0; j <= i; ++j) {
            const double target = i == j ? 1.0 : 0.0;
            if (std::abs(basis[i].dot(basis[j]) - target) > 1e-10) {
                throw NumericsError("psd_from_spectrum: basis is not orthonormal");
            }
        }
    }
    Mat out = Mat::Zero(d, d);
    for (std::size_t i = 0; i < basis.size(); ++i) {
        out.noalias() += eigenvalues[i] * basis[i] * basis[i].transpose();
    }
    return SymMatrix(0.5 * (out + out.transpose()));
}

/// (I - eta*A)^K by repeated squaring.
inline SymMatrix contraction_power(const SymMatrix& a, double eta, unsigned long long k) {
    const auto d = static_cast<Eigen::Index>(a.dim());
    Mat base = Mat::Identity(d, d) - eta * a.mat();
    Mat result = Mat::Identity(d, d);
    while (k > 0) {
        if (k & 1ULL) result = result * base;
        k >>= 1ULL;
        if (k > 0) base = base * base;
    }
    return SymMatrix(0.5 * (result + result.transpose()));
}

/// Solves C x = b for symmetric positive definite C.
inline Vec solve_spd(const SymMatrix& c, const Vec& b) {
    if (static_cast<std::size_t>(b.size()) != c.dim()) {
        throw NumericsError("solve_spd: dimension mismatch");
    }
    const EigenExtremes ext = eigen_extremes(c);
    if (!(ext.lambda_max > 0.0) || ext.lambda_min <= kKernelTolerance * ext.lambda_max) {
        throw NotPositiveDefinite();
    }
    Eigen::LLT<Mat> llt(c.mat());
    if (llt.info() != Eigen::Success) throw NotPositiveDefinite();
    Vec x = llt.solve(b);
    // one step of iterative refinement
    x += llt.solve(Vec(b - c.mat() * x));
    return x;
}

struct NotInImage {
    Vec residual;  // component of the right-hand side on ker(C)
};

using MinNormSolution = std::variant<Vec, NotInImage>;

/// Minimum-norm solution of C x = c for PSD C, or the kernel component of c
/// when c does not lie in image(C).
inline MinNormSolution min_norm_solve(const SymMatrix& c, const Vec& rhs) {
    if (static_cast<std::size_t>(rhs.size()) != c.dim()) {
        throw NumericsError("min_norm_solve: dimension mismatch");
    }
    const SymEigen e = eigen_decompose(c);
    const auto d = rhs.size();
    const double lmax = d > 0 ? std::max(0.0, e.values(d - 1)) : 0.0;
    const double cut = kKernelTolerance * lmax;
    Vec x = Vec::Zero(d);
    Vec kernel_part = Vec::Zero(d);
    for (Eigen::Index i = 0; i < d; ++i) {
        const auto v = e.vectors.col(i);
        const double coef = v.dot(rhs);
        if (e.values(i) > cut && lmax > 0.0) {
            x += (coef / e.values(i)) * v;
        } else {
            kernel_part += coef * v;
        }
    }
    if (kernel_part.norm() > 1e-9 * rhs.norm()) return NotInImage{kernel_part};
    return x;
}

/// Orthogonal projector onto image(C) using the kernel tolerance.
inline Mat image_projector(const SymMatrix& c) {
    const SymEigen e = eigen_decompose(c);
    const auto d = static_cast<Eigen::Index>(c.dim());
    Mat p = Mat::Zero(d, d);
    if (d == 0) return p;
    const double lmax = std::max(0.0, e.values(d - 1));
    for (Eigen::Index i = 0; i < d; ++i) {
        if (lmax > 0.0 && e.values(i) > kKernelTolerance * lmax) {
            p.noalias() += e.vectors.col(i) * e.vectors.col(i).transpose();
        }
    }
    return p;
}

/// Pairwise (cascade) summation; result does not depend on how the inputs
/// were produced, only on their order.
inline double pairwise_sum(std::span<const double> xs) {
    if (xs.size() <= 8) {
        double s = 0.0;
        for (double x : xs) s += x;
        return s;
    }
    const std::size_t half = xs.size() / 2;
    return pairwise_sum(xs.first(half)) + pairwise_sum(xs.subspan(half));
}

}  // namespace lsgd

#endif
