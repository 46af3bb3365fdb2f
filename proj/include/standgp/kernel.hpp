#pragma once

#include "standgp/types.hpp"

#include <cmath>

namespace standgp {

/// Matern 3/2 kernel parameters. The smoothness order is fixed at 3/2 and the
/// signal deviation at 1; the output scale enters the multi-output kernel
/// through the attribute covariance instead.
struct KernelParams {
    double length_scale = 10.0;
    double signal_sigma = 1.0;

    void validate() const {
        if (!(length_scale > 0.0) || !std::isfinite(length_scale))
            throw InputError("KernelParams: length_scale must be positive");
        if (!(signal_sigma > 0.0) || !std::isfinite(signal_sigma))
            throw InputError("KernelParams: signal_sigma must be positive");
    }
};

/// k(d) = sigma^2 (1 + sqrt(3) d / l) exp(-sqrt(3) d / l)
inline double matern32(double d, const KernelParams& params = {}) {
    if (!std::isfinite(d) || d < 0.0)
        throw InputError("matern32: distance must be finite and non-negative");
    const double s = std::sqrt(3.0) * d / params.length_scale;
    return params.signal_sigma * params.signal_sigma * (1.0 + s) * std::exp(-s);
}

inline double euclidean_distance(const Vector& x, const Vector& x2) {
    if (x.size() != x2.size())
        throw InputError("euclidean_distance: dimension mismatch (" + std::to_string(x.size()) +
                         " vs " + std::to_string(x2.size()) + ")");
    return (x - x2).norm();
}

namespace detail {

/// Squared pairwise distances between the rows of A and the rows of B,
/// clamped at zero against cancellation.
inline Matrix squared_distances(const Matrix& a, const Matrix& b) {
    const Vector ra = a.rowwise().squaredNorm();
    const Vector rb = b.rowwise().squaredNorm();
    Matrix d2 = (-2.0 * a * b.transpose());
    d2.colwise() += ra;
    d2.rowwise() += rb.transpose();
    return d2.cwiseMax(0.0);
}

}  // namespace detail

/// Univariate Gram matrix: entries[i][j] = matern32(|x_a_i - x_b_j|).
/// Rows of X_a and X_b are predictor vectors.
inline Matrix gram(const Matrix& x_a, const Matrix& x_b, const KernelParams& params = {}) {
    params.validate();
    if (x_a.rows() == 0 || x_b.rows() == 0) throw InputError("gram: empty input set");
    if (x_a.cols() != x_b.cols()) throw InputError("gram: predictor dimension mismatch");
    Matrix k = detail::squared_distances(x_a, x_b);
    const double c = std::sqrt(3.0) / params.length_scale;
    const double s2 = params.signal_sigma * params.signal_sigma;
    for (Eigen::Index j = 0; j < k.cols(); ++j) {
        for (Eigen::Index i = 0; i < k.rows(); ++i) {
            const double s = c * std::sqrt(k(i, j));
            k(i, j) = s2 * (1.0 + s) * std::exp(-s);
        }
    }
    return k;
}

/// Symmetric Gram matrix of one predictor set, with exact unit diagonal.
inline Matrix gram(const Matrix& x, const KernelParams& params = {}) {
    Matrix k = gram(x, x, params);
    k = 0.5 * (k + k.transpose()).eval();
    k.diagonal().setConstant(params.signal_sigma * params.signal_sigma);
    return k;
}

/// Kronecker product gamma_y (x) k_uni under attribute-major ordering:
/// block (a, b) of the result equals gamma_y(a, b) * k_uni.
inline Matrix separable_kernel(const Matrix& gamma_y, const Matrix& k_uni) {
    if (gamma_y.rows() != gamma_y.cols())
        throw InputError("separable_kernel: attribute covariance must be square");
    const double scale = gamma_y.cwiseAbs().maxCoeff();
    if ((gamma_y - gamma_y.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(scale, 1.0))
        throw InputError("separable_kernel: attribute covariance must be symmetric");
    const Eigen::Index ny = gamma_y.rows();
    const Eigen::Index na = k_uni.rows();
    const Eigen::Index nb = k_uni.cols();
    Matrix out(ny * na, ny * nb);
    for (Eigen::Index a = 0; a < ny; ++a)
        for (Eigen::Index b = 0; b < ny; ++b)
            out.block(a * na, b * nb, na, nb) = gamma_y(a, b) * k_uni;
    return out;
}

}  // namespace standgp
