#pragma once

#include "standgp/gpr.hpp"
#include "standgp/normal.hpp"
#include "standgp/types.hpp"

#include <cmath>
#include <vector>

namespace standgp {

/// Non-negativity corrected prediction: MAP point under the truncated
/// predictive density plus marginally corrected 95% intervals.
struct CorrectedPrediction {
    Vector point;                       // >= 0 elementwise
    Vector lower;                       // >= 0
    Vector upper;
    std::vector<bool> corrected_flags;  // true where the original lower bound was < 0
    std::vector<std::string> warnings;
};

namespace detail {

/// Lawson-Hanson non-negative least squares on the normal-equations form:
/// minimize (y - mu)^T P (y - mu) subject to y >= 0, where P = gamma^{-1}.
/// Dimension is at most the attribute count, so dense subproblem solves are fine.
inline Vector nnls_map(const Matrix& precision, const Vector& mu) {
    const Eigen::Index n = mu.size();
    Vector y = Vector::Zero(n);
    std::vector<bool> passive(static_cast<std::size_t>(n), false);
    const Vector q = precision * mu;
    const double tol = 1e-12 * (q.cwiseAbs().maxCoeff() + 1.0);

    for (int outer = 0; outer < 100 * static_cast<int>(n) + 100; ++outer) {
        // dual w = P (mu - y); pick the most violated inactive constraint
        const Vector w = q - precision * y;
        Eigen::Index best = -1;
        double best_w = tol;
        for (Eigen::Index i = 0; i < n; ++i) {
            if (!passive[static_cast<std::size_t>(i)] && w(i) > best_w) {
                best_w = w(i);
                best = i;
            }
        }
        if (best < 0) return y;  // KKT point
        passive[static_cast<std::size_t>(best)] = true;

        for (int inner = 0; inner < 100 * static_cast<int>(n) + 100; ++inner) {
            std::vector<Eigen::Index> idx;
            for (Eigen::Index i = 0; i < n; ++i)
                if (passive[static_cast<std::size_t>(i)]) idx.push_back(i);
            const Eigen::Index p = static_cast<Eigen::Index>(idx.size());
            Matrix sub(p, p);
            Vector rhs(p);
            for (Eigen::Index a = 0; a < p; ++a) {
                rhs(a) = q(idx[static_cast<std::size_t>(a)]);
                for (Eigen::Index b = 0; b < p; ++b)
                    sub(a, b) = precision(idx[static_cast<std::size_t>(a)],
                                          idx[static_cast<std::size_t>(b)]);
            }
            const Vector z = Eigen::LDLT<Matrix>(sub).solve(rhs);

            if ((z.array() > 0.0).all()) {
                y.setZero();
                for (Eigen::Index a = 0; a < p; ++a) y(idx[static_cast<std::size_t>(a)]) = z(a);
                break;
            }
            // step toward z until the first passive coordinate hits zero
            double step = 1.0;
            for (Eigen::Index a = 0; a < p; ++a) {
                if (z(a) <= 0.0) {
                    const double yi = y(idx[static_cast<std::size_t>(a)]);
                    const double denom = yi - z(a);
                    if (denom > 0.0) step = std::min(step, yi / denom);
                }
            }
            for (Eigen::Index a = 0; a < p; ++a) {
                const Eigen::Index i = idx[static_cast<std::size_t>(a)];
                y(i) += step * (z(a) - y(i));
                if (z(a) <= 0.0 && y(i) <= 1e-14 * (std::abs(mu(i)) + 1.0)) {
                    y(i) = 0.0;
                    passive[static_cast<std::size_t>(i)] = false;
                }
            }
        }
    }
    throw NumericalError("map_nonneg: active-set iteration did not converge");
}

}  // namespace detail

/// MAP point of the zero-truncated predictive Gaussian: the minimizer of
/// (y - mu)^T Gamma^{-1} (y - mu) over y >= 0. Equals mu when mu >= 0.
inline Vector map_nonneg(const PredictiveDistribution& dist,
                         std::vector<std::string>* warnings = nullptr) {
    const Vector& mu = dist.mean;
    if ((mu.array() >= 0.0).all()) return mu;
    try {
        auto [gamma, jitter] = detail::jitter_to_spd(dist.covariance);
        (void)jitter;
        const Matrix precision =
            Eigen::LLT<Matrix>(gamma).solve(Matrix::Identity(gamma.rows(), gamma.cols()));
        return detail::nnls_map(precision, mu);
    } catch (const Error&) {
        if (warnings)
            warnings->push_back("map_nonneg: singular covariance, fell back to clamping");
        return mu.cwiseMax(0.0);
    }
}

/// Equal-tail interval of N(mu, sigma^2), truncated at zero when the lower
/// bound is negative. In the corrected case the upper bound solves
///   Phi(b; mu, sigma) = level + (1 - level) Phi(0; mu, sigma)
/// so that [0, b] holds `level` of the zero-truncated mass.
inline std::pair<double, double> correct_interval(double mu, double sigma, double level = 0.95) {
    if (!(sigma > 0.0) || !std::isfinite(sigma) || !std::isfinite(mu))
        throw InputError("correct_interval: sigma must be positive and finite");
    if (!(level > 0.0 && level < 1.0)) throw InputError("correct_interval: level must be in (0,1)");
    const double z = norm_quantile(0.5 * (1.0 + level));
    const double a = mu - z * sigma;
    const double b = mu + z * sigma;
    if (a >= 0.0) return {a, b};

    const double target = level + (1.0 - level) * norm_cdf(0.0, mu, sigma);
    double lo = 0.0;
    double hi = std::max(mu, 0.0) + 10.0 * sigma;
    for (int grow = 0; norm_cdf(hi, mu, sigma) < target; ++grow) {
        if (grow > 60) throw NumericalError("correct_interval: cannot bracket upper bound");
        hi *= 2.0;
    }
    double mid = hi;
    for (int it = 0; it < 200; ++it) {
        mid = 0.5 * (lo + hi);
        const double f = norm_cdf(mid, mu, sigma) - target;
        if (std::abs(f) <= 1e-10) return {0.0, mid};
        if (f < 0.0)
            lo = mid;
        else
            hi = mid;
    }
    if (std::abs(norm_cdf(mid, mu, sigma) - target) > 1e-9)
        throw NumericalError("correct_interval: bisection did not converge");
    return {0.0, mid};
}

/// Applies the MAP point correction and the marginal interval correction to a
/// predictive distribution.
inline CorrectedPrediction correct_prediction(const PredictiveDistribution& dist,
                                              double level = 0.95) {
    const Eigen::Index n = dist.mean.size();
    if (dist.covariance.rows() != n || dist.covariance.cols() != n)
        throw InputError("correct_prediction: dimension mismatch");
    CorrectedPrediction out;
    out.point = map_nonneg(dist, &out.warnings);
    out.lower.resize(n);
    out.upper.resize(n);
    out.corrected_flags.assign(static_cast<std::size_t>(n), false);
    const double z = norm_quantile(0.5 * (1.0 + level));
    for (Eigen::Index i = 0; i < n; ++i) {
        const double sigma = std::sqrt(std::max(dist.covariance(i, i), 0.0));
        if (!(sigma > 0.0))
            throw InputError("correct_prediction: non-positive marginal variance");
        out.corrected_flags[static_cast<std::size_t>(i)] = dist.mean(i) - z * sigma < 0.0;
        const auto [lo, hi] = correct_interval(dist.mean(i), sigma, level);
        out.lower(i) = lo;
        out.upper(i) = hi;
    }
    return out;
}

}  // namespace standgp
