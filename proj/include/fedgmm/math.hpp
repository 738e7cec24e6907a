#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <string>

#include "fedgmm/errors.hpp"

// Numerically stable primitives shared by every other header: log-sum-exp
// reductions, multivariate Gaussian log-densities via Cholesky factorization,
// and positive-semidefinite covariance repair. Densities never leave the log
// domain; a d=32 Gaussian exponent underflows linear-domain doubles long
// before it stops carrying information.

namespace fedgmm {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline constexpr double kLog2Pi = 1.8378770664093454836;
inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Element-wise exp through the scalar libm path. Eigen's vectorized exp maps
// -inf to a denormal instead of zero; log-domain weights that are exactly
// -inf must come back as exactly 0.
template <typename Derived>
Matrix exp_exact(const Eigen::MatrixBase<Derived>& m) {
    return m.unaryExpr([](double v) { return std::exp(v); });
}

inline double log_sum_exp(const Eigen::Ref<const Vector>& v) {
    if (v.size() == 0) throw std::invalid_argument("log_sum_exp: empty input");
    const double m = v.maxCoeff();
    if (m == kNegInf) throw numeric_error("log_sum_exp: all entries are -inf");
    if (std::isnan(m)) throw std::invalid_argument("log_sum_exp: NaN input");
    if (std::isinf(m)) return m;  // +inf dominates
    double s = 0.0;
    for (Eigen::Index i = 0; i < v.size(); ++i) s += std::exp(v[i] - m);
    return m + std::log(s);
}

inline double log_sum_exp(std::initializer_list<double> v) {
    return log_sum_exp(Eigen::Map<const Vector>(v.begin(), static_cast<Eigen::Index>(v.size())));
}

// Row-wise log-sum-exp; rows with every entry -inf are reported through
// `bad_row` (first offending row) instead of throwing, so callers can name
// the sample in their own error.
inline Vector rowwise_log_sum_exp(const Matrix& m, Eigen::Index* bad_row = nullptr) {
    Vector out(m.rows());
    if (bad_row) *bad_row = -1;
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        const double mx = m.row(i).maxCoeff();
        if (mx == kNegInf) {
            if (bad_row && *bad_row < 0) *bad_row = i;
            out[i] = kNegInf;
            continue;
        }
        double s = 0.0;
        for (Eigen::Index j = 0; j < m.cols(); ++j) s += std::exp(m(i, j) - mx);
        out[i] = mx + std::log(s);
    }
    return out;
}

// Symmetrize, then floor the eigenvalues at `floor`. Returns the symmetrized
// input unchanged when it already clears the floor, which keeps well-formed
// covariances (identity in particular) bit-exact and makes the repair
// idempotent after the first pass.
inline Matrix repair_psd(const Matrix& sigma, double floor) {
    if (sigma.rows() != sigma.cols())
        throw std::invalid_argument("repair_psd: matrix is not square");
    if (!sigma.allFinite())
        throw std::invalid_argument("repair_psd: non-finite entries");
    Matrix sym = 0.5 * (sigma + sigma.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> es(sym);
    if (es.info() != Eigen::Success)
        throw numeric_error("repair_psd: eigendecomposition failed");
    if (es.eigenvalues().minCoeff() >= floor) return sym;
    Vector ev = es.eigenvalues().cwiseMax(floor);
    Matrix out = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
    return 0.5 * (out + out.transpose());
}

// Cached Cholesky evaluator for one Gaussian component: factor once, then
// each log-density costs one triangular solve. `label` names the component in
// factorization errors.
class GaussianDensity {
  public:
    GaussianDensity(const Vector& mu, const Matrix& sigma, const std::string& label = "")
        : mu_(mu) {
        if (sigma.rows() != sigma.cols() || sigma.rows() != mu.size())
            throw std::invalid_argument("gaussian_log_density: dimension mismatch" + where(label));
        if (!mu.allFinite() || !sigma.allFinite())
            throw std::invalid_argument("gaussian_log_density: non-finite parameters" + where(label));
        llt_.compute(sigma);
        if (llt_.info() != Eigen::Success)
            throw numeric_error("gaussian_log_density: Cholesky factorization failed" + where(label));
        const auto& l = llt_.matrixLLT();
        double log_det = 0.0;
        for (Eigen::Index i = 0; i < l.rows(); ++i) log_det += 2.0 * std::log(l(i, i));
        const double d = static_cast<double>(mu.size());
        log_norm_ = -0.5 * (d * kLog2Pi + log_det);
    }

    double operator()(const Vector& x) const {
        if (!x.allFinite())
            throw std::invalid_argument("gaussian_log_density: non-finite input");
        Vector v = x - mu_;
        llt_.matrixL().solveInPlace(v);
        return log_norm_ - 0.5 * v.squaredNorm();
    }

    // Batch evaluation over the rows of `xs` (n x d).
    Vector operator()(const Matrix& xs) const {
        if (!xs.allFinite())
            throw std::invalid_argument("gaussian_log_density: non-finite input");
        Matrix diff = (xs.rowwise() - mu_.transpose()).transpose();
        llt_.matrixL().solveInPlace(diff);
        Vector out = (-0.5 * diff.colwise().squaredNorm().transpose().array() + log_norm_).matrix();
        return out;
    }

    const Vector& mu() const { return mu_; }

  private:
    static std::string where(const std::string& label) {
        return label.empty() ? std::string() : " (" + label + ")";
    }

    Vector mu_;
    Eigen::LLT<Matrix> llt_;
    double log_norm_ = 0.0;
};

inline double gaussian_log_density(const Vector& x, const Vector& mu, const Matrix& sigma) {
    return GaussianDensity(mu, sigma)(x);
}

}  // namespace fedgmm
