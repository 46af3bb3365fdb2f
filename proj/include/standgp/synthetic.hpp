#pragma once

#include "standgp/dataset.hpp"
#include "standgp/kernel.hpp"
#include "standgp/rng.hpp"
#include "standgp/types.hpp"

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <string>

namespace standgp {

enum class SynthMode { surface, gp };

/// Synthetic plot generator. Surface mode drives species attributes through
/// smooth nonlinear functions of a small latent state; gp mode draws the
/// attribute matrix from a separable Gaussian prior over the generated
/// predictors, which is the regime where interval calibration can be checked
/// against a known truth.
struct SynthConfig {
    Eigen::Index n_plots = 493;
    Eigen::Index n_predictors = 77;
    std::uint64_t seed = 0;
    double noise_scale = 1.0;
    std::array<double, kNumSpecies> zero_inflation = {0.05, 0.10, 0.20};
    double latent_smoothness = 1.0;
    SynthMode mode = SynthMode::surface;

    void validate() const {
        if (n_plots < 2) throw InputError("synth: need at least 2 plots");
        if (n_predictors < 1) throw InputError("synth: need at least 1 predictor");
        if (!(noise_scale >= 0.0) || !std::isfinite(noise_scale))
            throw InputError("synth: noise_scale must be non-negative");
        if (!(latent_smoothness > 0.0)) throw InputError("synth: latent_smoothness must be positive");
        for (double p : zero_inflation)
            if (!(p >= 0.0 && p <= 1.0)) throw InputError("synth: zero_inflation outside [0, 1]");
    }
};

namespace detail {

constexpr int kNumLatents = 5;

struct PredictorGen {
    std::array<double, kNumLatents> weights;
    int transform = 0;
    double freq = 1.0;
    double scale = 1.0;
    double shift = 0.0;

    double eval(const std::array<double, kNumLatents>& z, double noise) const {
        double u = 0.0, norm2 = 0.0;
        for (int l = 0; l < kNumLatents; ++l) {
            u += weights[static_cast<std::size_t>(l)] * z[static_cast<std::size_t>(l)];
            norm2 += weights[static_cast<std::size_t>(l)] * weights[static_cast<std::size_t>(l)];
        }
        u *= freq / std::sqrt(std::max(norm2, 1e-300));
        double g = 0.0;
        switch (transform) {
            case 0: g = std::tanh(u); break;
            case 1: g = std::sin(u); break;
            case 2: g = u + 0.3 * u * u; break;
            case 3: g = std::exp(-std::abs(u)); break;
            default: g = u; break;
        }
        return scale * (g + noise) + shift;
    }
};

inline double sigmoid(double t) { return 1.0 / (1.0 + std::exp(-t)); }

/// One plot's 15 attributes from the latent state, before noise.
inline std::array<double, kNumAttributes> surface_attributes(
    const std::array<double, kNumLatents>& z) {
    const double u_fert = sigmoid(z[0]);
    const double u_age = sigmoid(z[1]);
    const double u_dens = sigmoid(z[2]);

    const double lp = 0.8 * z[3] + 0.2;
    const double ls = -0.8 * z[3] + 0.2 * z[0];
    const double ld = -0.9 + 0.7 * z[4];
    const double zmax = std::max({lp, ls, ld});
    const double ep = std::exp(lp - zmax), es = std::exp(ls - zmax), ed = std::exp(ld - zmax);
    const double esum = ep + es + ed;
    const std::array<double, kNumSpecies> share = {ep / esum, es / esum, ed / esum};

    const double height = 8.0 + 20.0 * u_age * (0.6 + 0.4 * u_fert);
    const double basal = 36.0 * u_dens * (0.3 + 0.7 * u_age) * (0.5 + 0.5 * u_fert);

    const std::array<double, kNumSpecies> height_factor = {1.0, 0.95, 0.85};
    const std::array<double, kNumSpecies> height_offset = {0.3, 0.0, -0.3};

    std::array<double, kNumAttributes> y{};
    for (int s = 0; s < kNumSpecies; ++s) {
        const double g_s = basal * share[static_cast<std::size_t>(s)];
        const double h_s = height * height_factor[static_cast<std::size_t>(s)] *
                           (0.9 + 0.2 * sigmoid(0.5 * z[0] + height_offset[static_cast<std::size_t>(s)]));
        const double d_s = 1.2 * h_s * (0.8 + 0.5 * u_age) + 1.5;
        const double n_s = 40000.0 * g_s / (M_PI * d_s * d_s);
        const double v_s = 0.45 * g_s * h_s;
        y[static_cast<std::size_t>(attribute_index(s, 0))] = h_s;
        y[static_cast<std::size_t>(attribute_index(s, 1))] = d_s;
        y[static_cast<std::size_t>(attribute_index(s, 2))] = n_s;
        y[static_cast<std::size_t>(attribute_index(s, 3))] = g_s;
        y[static_cast<std::size_t>(attribute_index(s, 4))] = v_s;
    }
    return y;
}

/// Attribute means used by gp mode, one entry per canonical attribute.
inline Vector gp_mode_means() {
    Vector m(kNumAttributes);
    const std::array<std::array<double, kAttributesPerSpecies>, kNumSpecies> table = {{
        {16.0, 20.0, 900.0, 16.0, 140.0},
        {14.0, 17.0, 700.0, 10.0, 80.0},
        {12.0, 14.0, 500.0, 5.0, 35.0},
    }};
    for (int s = 0; s < kNumSpecies; ++s)
        for (int k = 0; k < kAttributesPerSpecies; ++k)
            m(attribute_index(s, k)) = table[static_cast<std::size_t>(s)][static_cast<std::size_t>(k)];
    return m;
}

/// Attribute correlation for gp mode: a flat floor plus within-species and
/// same-kind blocks. Each term is positive semidefinite and the remaining
/// 0.25 goes on the diagonal, so the matrix is positive definite outright.
inline Matrix gp_mode_correlation() {
    Matrix r = Matrix::Constant(kNumAttributes, kNumAttributes, 0.10);
    for (int a = 0; a < kNumAttributes; ++a) {
        for (int b = 0; b < kNumAttributes; ++b) {
            if (a / kAttributesPerSpecies == b / kAttributesPerSpecies) r(a, b) += 0.45;
            if (a % kAttributesPerSpecies == b % kAttributesPerSpecies) r(a, b) += 0.20;
        }
        r(a, a) = 1.0;
    }
    return r;
}

}  // namespace detail

inline Dataset generate_synthetic(const SynthConfig& cfg) {
    cfg.validate();
    RngStream rng(cfg.seed);
    const Eigen::Index n = cfg.n_plots;
    const Eigen::Index n_x = cfg.n_predictors;

    std::vector<detail::PredictorGen> gens(static_cast<std::size_t>(n_x));
    for (auto& g : gens) {
        for (auto& w : g.weights) w = rng.normal();
        g.transform = static_cast<int>(rng.uniform_int(5));
        g.freq = rng.uniform(0.6, 1.6) / cfg.latent_smoothness;
        g.scale = std::exp(0.8 * rng.normal());
        g.shift = 2.0 * rng.normal() * g.scale;
    }

    std::vector<std::array<double, detail::kNumLatents>> latents(static_cast<std::size_t>(n));
    for (auto& z : latents)
        for (auto& v : z) v = rng.normal();

    Dataset ds;
    ds.x.resize(n, n_x);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n_x; ++j)
            ds.x(i, j) = gens[static_cast<std::size_t>(j)].eval(
                latents[static_cast<std::size_t>(i)], 0.1 * cfg.noise_scale * rng.normal());

    ds.y.resize(n, kNumAttributes);
    if (cfg.mode == SynthMode::surface) {
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto base = detail::surface_attributes(latents[static_cast<std::size_t>(i)]);
            for (int a = 0; a < kNumAttributes; ++a)
                ds.y(i, a) = base[static_cast<std::size_t>(a)] *
                             std::exp(0.10 * cfg.noise_scale * rng.normal());
        }
    } else {
        const Matrix x_std = standardize(ds.x).first;
        Eigen::SelfAdjointEigenSolver<Matrix> k_eig(gram(x_std, KernelParams{}));
        if (k_eig.info() != Eigen::Success)
            throw NumericalError("synth: eigendecomposition of the Gram matrix failed");
        const Matrix corr = detail::gp_mode_correlation();
        Eigen::SelfAdjointEigenSolver<Matrix> c_eig(corr);
        if (c_eig.info() != Eigen::Success)
            throw NumericalError("synth: eigendecomposition of the attribute correlation failed");

        Matrix zn(n, kNumAttributes);
        for (Eigen::Index i = 0; i < n; ++i)
            for (int a = 0; a < kNumAttributes; ++a) zn(i, a) = rng.normal();

        constexpr double kErrorScale = 0.1;
        for (Eigen::Index i = 0; i < n; ++i)
            for (int a = 0; a < kNumAttributes; ++a)
                zn(i, a) *= std::sqrt(std::max(
                    k_eig.eigenvalues()(i) * c_eig.eigenvalues()(a) + kErrorScale, 0.0));
        const Matrix w = k_eig.eigenvectors() * zn * c_eig.eigenvectors().transpose();

        const Vector means = detail::gp_mode_means();
        const Vector sds = means / 8.0;
        for (Eigen::Index i = 0; i < n; ++i)
            for (int a = 0; a < kNumAttributes; ++a)
                ds.y(i, a) = std::max(means(a) + sds(a) * w(i, a), 0.0);
    }

    for (Eigen::Index i = 0; i < n; ++i) {
        for (int s = 0; s < kNumSpecies; ++s) {
            const bool zero = rng.uniform01() < cfg.zero_inflation[static_cast<std::size_t>(s)];
            if (zero)
                for (int k = 0; k < kAttributesPerSpecies; ++k) ds.y(i, attribute_index(s, k)) = 0.0;
        }
    }

    int id_width = 1;
    for (Eigen::Index v = n; v >= 10; v /= 10) ++id_width;
    ds.plot_ids.reserve(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        std::string num = std::to_string(i + 1);
        ds.plot_ids.push_back("p" + std::string(static_cast<std::size_t>(id_width) - num.size(), '0') + num);
    }
    int px_width = 2;
    for (Eigen::Index v = n_x; v >= 10; v /= 10) ++px_width;
    for (Eigen::Index j = 0; j < n_x; ++j) {
        std::string num = std::to_string(j + 1);
        ds.predictor_names.push_back("m" + std::string(static_cast<std::size_t>(px_width) - num.size(), '0') + num);
    }
    return ds;
}

}  // namespace standgp
