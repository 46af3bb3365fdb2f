#pragma once

#include "standgp/dataset.hpp"
#include "standgp/kernel.hpp"
#include "standgp/types.hpp"

#include <cmath>
#include <optional>
#include <string>
#include <vector>

namespace standgp {

struct TrainingSet {
    Matrix x;  // n_t x n_x
    Matrix y;  // n_t x n_y, non-negative
    std::vector<std::string> attribute_names;
    std::vector<std::string> predictor_names;

    Eigen::Index n_train() const { return y.rows(); }
    Eigen::Index n_attributes() const { return y.cols(); }
    Eigen::Index n_predictors() const { return x.cols(); }

    void validate() const {
        if (x.rows() != y.rows()) throw InputError("TrainingSet: row count mismatch");
        if (y.rows() < 2) throw InputError("TrainingSet: need at least 2 training plots");
        if (x.cols() < 1 || y.cols() < 1) throw InputError("TrainingSet: empty matrix");
        if (!x.allFinite() || !y.allFinite())
            throw InputError("TrainingSet: non-finite entries");
        if ((y.array() < 0.0).any()) throw InputError("TrainingSet: negative attribute values");
    }

    static TrainingSet from_dataset(const Dataset& ds) {
        TrainingSet ts;
        ts.x = ds.x;
        ts.y = ds.y;
        const auto names = standgp::attribute_names();
        ts.attribute_names.assign(names.begin(), names.end());
        ts.predictor_names = ds.predictor_names;
        return ts;
    }
};

struct GprConfig {
    KernelParams kernel;
    double error_scale = 0.1;
    /// Center targets by their training mean before solving and add the mean
    /// back to the predictive mean. Off = literal zero-mean convention.
    bool center_targets = true;
    /// Fixed attribute covariance instead of the sample covariance. Used by
    /// calibration experiments and the linearity tests.
    std::optional<Matrix> gamma_override;
};

struct PredictiveDistribution {
    Vector mean;        // n_y
    Matrix covariance;  // n_y x n_y, symmetric
};

/// Immutable trained state. The system matrix
///   K + E = (diag(sd) (x) I) (C (x) K_uni + error_scale I) (diag(sd) (x) I)
/// with C the attribute correlation matrix, is held as the eigendecompositions
/// of C and K_uni; every solve with (K+E)^{-1} goes through them. Vectorized
/// quantities are attribute-major: block a holds all n_t plots of attribute a.
struct TrainedGprModel {
    StandardizeStats x_stats;
    Vector attribute_means;   // zeros when centering is off
    Matrix gamma_y;           // sample covariance after jitter, n_y x n_y
    Vector d;                 // diag(gamma_y)
    double error_scale = 0.1;
    KernelParams kernel;
    bool centered = true;
    Matrix x_train;           // standardized predictors, n_t x n_x
    Matrix centered_targets;  // n_t x n_y

    Matrix k_eigvecs;  // V
    Vector k_eigvals;
    Matrix c_eigvecs;  // U
    Vector c_eigvals;
    Vector sd;         // sqrt of d
    Matrix alpha;      // n_t x n_y, matrix form of (K+E)^{-1} vec(centered_targets)
    Matrix p_factor;   // gamma_y diag(1/sd) U; predictive covariance reduction factor

    double gamma_jitter = 0.0;
    std::vector<std::string> warnings;
    std::vector<std::string> attribute_names;
    std::vector<std::string> predictor_names;

    Eigen::Index n_train() const { return x_train.rows(); }
    Eigen::Index n_attributes() const { return gamma_y.rows(); }
    Eigen::Index n_predictors() const { return x_train.cols(); }
};

namespace detail {

/// Sample covariance with n-1 denominator.
inline Matrix sample_covariance(const Matrix& y) {
    const Vector mean = y.colwise().mean();
    Matrix dev = y.rowwise() - mean.transpose();
    return dev.transpose() * dev / static_cast<double>(y.rows() - 1);
}

/// Escalating relative jitter until the Cholesky factorization succeeds.
/// Returns the jittered matrix and the relative jitter used.
inline std::pair<Matrix, double> jitter_to_spd(const Matrix& m) {
    const double mean_diag = m.diagonal().mean();
    double lambda = 0.0;
    while (true) {
        Matrix trial = m;
        if (lambda > 0.0) trial.diagonal().array() += lambda * mean_diag;
        Eigen::LLT<Matrix> llt(trial);
        if (llt.info() == Eigen::Success) return {std::move(trial), lambda};
        if (lambda == 0.0)
            lambda = 1e-10;
        else if (lambda < 1e-6)
            lambda *= 10.0;
        else
            throw TrainingError("attribute covariance not positive definite after jitter");
        if (!(mean_diag > 0.0))
            throw TrainingError("attribute covariance has non-positive scale");
    }
}

}  // namespace detail

/// Applies (K+E)^{-1} to an attribute-major vectorized quantity given in
/// matrix form z (n_t x n_y).
inline Matrix solve_system(const TrainedGprModel& m, const Matrix& z) {
    const Vector inv_sd = m.sd.cwiseInverse();
    Matrix t = z * inv_sd.asDiagonal();
    t = m.k_eigvecs.transpose() * t * m.c_eigvecs;
    for (Eigen::Index a = 0; a < t.cols(); ++a)
        for (Eigen::Index i = 0; i < t.rows(); ++i)
            t(i, a) /= m.c_eigvals(a) * m.k_eigvals(i) + m.error_scale;
    t = m.k_eigvecs * t * m.c_eigvecs.transpose();
    return t * inv_sd.asDiagonal();
}

inline TrainedGprModel train(const TrainingSet& ts, const GprConfig& config = {}) {
    ts.validate();
    config.kernel.validate();
    if (!(config.error_scale > 0.0)) throw InputError("GprConfig: error_scale must be positive");

    TrainedGprModel m;
    m.kernel = config.kernel;
    m.error_scale = config.error_scale;
    m.centered = config.center_targets;
    m.attribute_names = ts.attribute_names;
    m.predictor_names = ts.predictor_names;

    auto [x_std, stats] = standardize(ts.x);
    m.x_train = std::move(x_std);
    m.x_stats = std::move(stats);
    for (const Eigen::Index c : m.x_stats.zero_variance_cols) {
        const std::string name = c < static_cast<Eigen::Index>(ts.predictor_names.size())
                                     ? ts.predictor_names[static_cast<std::size_t>(c)]
                                     : std::to_string(c);
        m.warnings.push_back("constant predictor dropped: " + name);
    }

    m.attribute_means = config.center_targets ? Vector(ts.y.colwise().mean())
                                              : Vector(Vector::Zero(ts.n_attributes()));
    m.centered_targets = ts.y.rowwise() - m.attribute_means.transpose();

    const Matrix gamma_raw =
        config.gamma_override ? *config.gamma_override : detail::sample_covariance(ts.y);
    if (gamma_raw.rows() != ts.n_attributes() || gamma_raw.cols() != ts.n_attributes())
        throw InputError("gamma_override has wrong dimensions");
    auto [gamma, jitter] = detail::jitter_to_spd(gamma_raw);
    m.gamma_y = std::move(gamma);
    m.gamma_jitter = jitter;
    if (jitter > 0.0)
        m.warnings.push_back("attribute covariance jittered, relative lambda = " +
                             std::to_string(jitter));
    m.d = m.gamma_y.diagonal();
    if ((m.d.array() <= 0.0).any())
        throw TrainingError("attribute variances must be positive after jitter");
    m.sd = m.d.cwiseSqrt();

    const Vector inv_sd = m.sd.cwiseInverse();
    const Matrix corr = inv_sd.asDiagonal() * m.gamma_y * inv_sd.asDiagonal();
    Eigen::SelfAdjointEigenSolver<Matrix> c_eig(corr);
    if (c_eig.info() != Eigen::Success)
        throw TrainingError("eigendecomposition of attribute correlation failed");
    m.c_eigvecs = c_eig.eigenvectors();
    m.c_eigvals = c_eig.eigenvalues();

    Eigen::SelfAdjointEigenSolver<Matrix> k_eig(gram(m.x_train, m.kernel));
    if (k_eig.info() != Eigen::Success)
        throw TrainingError("eigendecomposition of the Gram matrix failed");
    m.k_eigvecs = k_eig.eigenvectors();
    m.k_eigvals = k_eig.eigenvalues();

    for (Eigen::Index a = 0; a < m.c_eigvals.size(); ++a)
        for (Eigen::Index i : {Eigen::Index(0), m.k_eigvals.size() - 1})
            if (!(m.c_eigvals(a) * m.k_eigvals(i) + m.error_scale > 0.0))
                throw TrainingError("system matrix K+E is not positive definite");

    m.alpha = solve_system(m, m.centered_targets);
    m.p_factor = m.gamma_y * inv_sd.asDiagonal() * m.c_eigvecs;
    return m;
}

/// Kernel vector between one standardized query and the training inputs.
inline Vector kernel_vector(const TrainedGprModel& m, const Vector& x_std) {
    Vector k(m.n_train());
    const double c = std::sqrt(3.0) / m.kernel.length_scale;
    const double s2 = m.kernel.signal_sigma * m.kernel.signal_sigma;
    for (Eigen::Index i = 0; i < m.n_train(); ++i) {
        const double s = c * (m.x_train.row(i).transpose() - x_std).norm();
        k(i) = s2 * (1.0 + s) * std::exp(-s);
    }
    return k;
}

inline PredictiveDistribution predict(const TrainedGprModel& m, const Vector& x_star) {
    if (x_star.size() != m.n_predictors())
        throw InputError("predict: expected " + std::to_string(m.n_predictors()) +
                         " predictors, got " + std::to_string(x_star.size()));
    if (!x_star.allFinite()) throw InputError("predict: non-finite predictor values");

    const Matrix x_std = standardize(x_star.transpose(), m.x_stats);
    const Vector k_star = kernel_vector(m, x_std.row(0).transpose());

    PredictiveDistribution out;
    out.mean = m.attribute_means + m.gamma_y * (m.alpha.transpose() * k_star);

    const Vector v = m.k_eigvecs.transpose() * k_star;
    const Vector v2 = v.array().square();
    Vector w2(m.n_attributes());
    for (Eigen::Index a = 0; a < m.n_attributes(); ++a) {
        double acc = 0.0;
        for (Eigen::Index i = 0; i < v2.size(); ++i)
            acc += v2(i) / (m.c_eigvals(a) * m.k_eigvals(i) + m.error_scale);
        w2(a) = acc;
    }
    Matrix cov = m.gamma_y - m.p_factor * w2.asDiagonal() * m.p_factor.transpose();
    cov.diagonal() += m.error_scale * m.d;
    out.covariance = 0.5 * (cov + cov.transpose());
    return out;
}

/// Elementwise predict over the rows of x_stars; order preserved. Errors are
/// annotated with the failing row index.
inline std::vector<PredictiveDistribution> predict_batch(const TrainedGprModel& m,
                                                         const Matrix& x_stars) {
    std::vector<PredictiveDistribution> out;
    out.reserve(static_cast<std::size_t>(x_stars.rows()));
    for (Eigen::Index i = 0; i < x_stars.rows(); ++i) {
        try {
            out.push_back(predict(m, x_stars.row(i).transpose()));
        } catch (const Error& e) {
            throw PredictionError("row " + std::to_string(i) + ": " + e.what());
        }
    }
    return out;
}

}  // namespace standgp
