#pragma once

#include "standgp/gpr.hpp"
#include "standgp/rng.hpp"
#include "standgp/types.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <vector>

namespace standgp {

struct McmcSettings {
    int n_iterations = 50000;
    int burn_in = 10000;
    double initial_proposal_scale = 0.3;  // relative to the prior marginal sd
    double target_acceptance = 0.3;
    std::uint64_t seed = 0;

    void validate() const {
        if (n_iterations < 1 || burn_in < 0 || burn_in >= n_iterations)
            throw InputError("mcmc: burn-in must be shorter than the chain");
        if (!(initial_proposal_scale > 0.0) ||
            !(target_acceptance > 0.0 && target_acceptance < 1.0))
            throw InputError("mcmc: invalid proposal settings");
    }
};

/// Linear observation model x = A [1; y] + e with Gaussian residuals,
/// combined with a Gaussian prior on y estimated from the training targets.
/// The posterior over y >= 0 is explored by random-walk Metropolis.
struct BayesLinearModel {
    Matrix a_hat;          // n_x x (n_y + 1), first column is the intercept
    Vector residual_mean;  // n_x
    Matrix residual_cov;   // n_x x n_x
    Vector prior_mean;     // n_y
    Matrix prior_cov;      // n_y x n_y
    Matrix residual_chol;  // lower Cholesky factor of residual_cov
    Matrix prior_chol;     // lower Cholesky factor of prior_cov
    double basis_ridge = 0.0;
    double residual_jitter = 0.0;
    double prior_jitter = 0.0;
    McmcSettings mcmc;
    std::vector<std::string> attribute_names;
    std::vector<std::string> predictor_names;

    Eigen::Index n_attributes() const { return prior_mean.size(); }
};

struct BayesPrediction {
    Vector point;   // posterior mean over the retained draws
    Vector lower;   // 2.5% quantile per attribute
    Vector upper;   // 97.5% quantile per attribute
    double acceptance_rate = 0.0;  // over the post burn-in phase
    std::vector<std::string> warnings;
};

inline BayesLinearModel bayes_linear_fit(const TrainingSet& ts, const McmcSettings& mcmc = {}) {
    ts.validate();
    mcmc.validate();
    const Eigen::Index n = ts.x.rows();
    const Eigen::Index n_y = ts.y.cols();
    if (n <= n_y + 1)
        throw TrainingError("bayes_linear_fit: need more plots than attributes plus one");

    Matrix phi(n, n_y + 1);
    phi.col(0).setOnes();
    phi.rightCols(n_y) = ts.y;

    BayesLinearModel m;
    m.mcmc = mcmc;
    m.attribute_names = ts.attribute_names;
    m.predictor_names = ts.predictor_names;

    // least squares for A; the Gram matrix picks up a ridge when the targets
    // are collinear (for example an attribute that is identically zero)
    Matrix gram = phi.transpose() * phi;
    auto [gram_spd, ridge] = detail::jitter_to_spd(gram);
    m.basis_ridge = ridge;
    m.a_hat = Eigen::LLT<Matrix>(gram_spd).solve(phi.transpose() * ts.x).transpose();

    const Matrix resid = ts.x - phi * m.a_hat.transpose();
    m.residual_mean = resid.colwise().mean();
    auto [rcov, rjit] = detail::jitter_to_spd(detail::sample_covariance(resid));
    m.residual_cov = std::move(rcov);
    m.residual_jitter = rjit;
    m.residual_chol = Eigen::LLT<Matrix>(m.residual_cov).matrixL();

    m.prior_mean = ts.y.colwise().mean();
    auto [pcov, pjit] = detail::jitter_to_spd(detail::sample_covariance(ts.y));
    m.prior_cov = std::move(pcov);
    m.prior_jitter = pjit;
    m.prior_chol = Eigen::LLT<Matrix>(m.prior_cov).matrixL();
    return m;
}

namespace detail {

/// Unnormalized log posterior; -inf for any negative component.
inline double bayes_log_density(const BayesLinearModel& m, const Vector& x_star,
                                const Vector& y) {
    if ((y.array() < 0.0).any()) return -std::numeric_limits<double>::infinity();
    Vector aug(y.size() + 1);
    aug(0) = 1.0;
    aug.tail(y.size()) = y;
    Vector r = x_star - m.a_hat * aug - m.residual_mean;
    m.residual_chol.triangularView<Eigen::Lower>().solveInPlace(r);
    Vector q = y - m.prior_mean;
    m.prior_chol.triangularView<Eigen::Lower>().solveInPlace(q);
    return -0.5 * (r.squaredNorm() + q.squaredNorm());
}

inline double sorted_quantile(std::vector<double>& values, double q) {
    std::sort(values.begin(), values.end());
    const double pos = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return values[lo] * (1.0 - frac) + values[hi] * frac;
}

}  // namespace detail

/// Posterior mean and 95% equal-tail interval per attribute for one plot.
/// The proposal is an independent Gaussian step per component, scaled by the
/// prior marginal sd and adapted toward the target acceptance during burn-in.
inline BayesPrediction bayes_linear_predict(const BayesLinearModel& m, const Vector& x_star,
                                            std::uint64_t seed) {
    if (x_star.size() != m.a_hat.rows())
        throw PredictionError("bayes_linear_predict: predictor dimension mismatch");
    if (!x_star.allFinite())
        throw PredictionError("bayes_linear_predict: non-finite predictor value");
    const Eigen::Index n_y = m.n_attributes();
    const Vector prior_sd = m.prior_cov.diagonal().cwiseMax(0.0).cwiseSqrt();

    RngStream rng(seed);
    Vector y = m.prior_mean.cwiseMax(0.0);
    double logp = detail::bayes_log_density(m, x_star, y);
    if (!std::isfinite(logp))
        throw PredictionError("bayes_linear_predict: invalid chain start");

    double scale = m.mcmc.initial_proposal_scale;
    const int n_keep = m.mcmc.n_iterations - m.mcmc.burn_in;
    Matrix draws(n_keep, n_y);
    int accepted_after_burn_in = 0;
    int window_accepted = 0;
    constexpr int kAdaptWindow = 100;

    for (int it = 0; it < m.mcmc.n_iterations; ++it) {
        Vector prop(n_y);
        for (Eigen::Index a = 0; a < n_y; ++a)
            prop(a) = y(a) + scale * prior_sd(a) * rng.normal();
        const double logp_prop = detail::bayes_log_density(m, x_star, prop);
        if (std::isnan(logp_prop))
            throw PredictionError("bayes_linear_predict: log density is NaN");
        const double log_u = std::log(rng.uniform_open());
        if (logp_prop - logp > log_u) {
            y = prop;
            logp = logp_prop;
            ++window_accepted;
            if (it >= m.mcmc.burn_in) ++accepted_after_burn_in;
        }
        if (it < m.mcmc.burn_in && (it + 1) % kAdaptWindow == 0) {
            const double rate =
                static_cast<double>(window_accepted) / static_cast<double>(kAdaptWindow);
            scale *= std::exp(rate - m.mcmc.target_acceptance);
            scale = std::clamp(scale, 1e-4, 10.0);
            window_accepted = 0;
        }
        if (it >= m.mcmc.burn_in) draws.row(it - m.mcmc.burn_in) = y.transpose();
    }

    BayesPrediction out;
    out.point = draws.colwise().mean();
    out.lower.resize(n_y);
    out.upper.resize(n_y);
    std::vector<double> column(static_cast<std::size_t>(n_keep));
    for (Eigen::Index a = 0; a < n_y; ++a) {
        for (int i = 0; i < n_keep; ++i) column[static_cast<std::size_t>(i)] = draws(i, a);
        out.lower(a) = detail::sorted_quantile(column, 0.025);
        out.upper(a) = detail::sorted_quantile(column, 0.975);
    }
    out.acceptance_rate =
        static_cast<double>(accepted_after_burn_in) / static_cast<double>(n_keep);
    if (out.acceptance_rate < 0.05 || out.acceptance_rate > 0.7)
        out.warnings.push_back("mcmc acceptance rate " + std::to_string(out.acceptance_rate) +
                               " outside [0.05, 0.7]");
    return out;
}

}  // namespace standgp
