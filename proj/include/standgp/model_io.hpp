#pragma once

#include "standgp/bayes_linear.hpp"
#include "standgp/gpr.hpp"
#include "standgp/msn_knn.hpp"
#include "standgp/types.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <variant>
#include <vector>

namespace standgp {

/// A trained model of any method plus enough metadata to reproduce
/// predictions bit for bit.
struct ModelFile {
    Method method = Method::gpr;
    std::variant<TrainedGprModel, MsnKnnModel, BayesLinearModel> model;
};

namespace detail {

constexpr char kModelMagic[4] = {'S', 'G', 'P', 'M'};
constexpr std::uint32_t kModelVersion = 1;

struct BinWriter {
    std::ofstream out;

    explicit BinWriter(const std::string& path) : out(path, std::ios::binary) {
        if (!out) throw InputError("cannot write model file: " + path);
    }
    void raw(const void* p, std::size_t len) { out.write(static_cast<const char*>(p), static_cast<std::streamsize>(len)); }
    void u8(std::uint8_t v) { raw(&v, 1); }
    void u32(std::uint32_t v) { raw(&v, 4); }
    void u64(std::uint64_t v) { raw(&v, 8); }
    void f64(double v) { raw(&v, 8); }
    void str(const std::string& s) {
        u64(s.size());
        raw(s.data(), s.size());
    }
    void strs(const std::vector<std::string>& v) {
        u64(v.size());
        for (const auto& s : v) str(s);
    }
    void vec(const Vector& v) {
        u64(static_cast<std::uint64_t>(v.size()));
        for (Eigen::Index i = 0; i < v.size(); ++i) f64(v(i));
    }
    void mat(const Matrix& m) {
        u64(static_cast<std::uint64_t>(m.rows()));
        u64(static_cast<std::uint64_t>(m.cols()));
        for (Eigen::Index c = 0; c < m.cols(); ++c)
            for (Eigen::Index r = 0; r < m.rows(); ++r) f64(m(r, c));
    }
    void indices(const std::vector<Eigen::Index>& v) {
        u64(v.size());
        for (Eigen::Index i : v) u64(static_cast<std::uint64_t>(i));
    }
};

struct BinReader {
    std::ifstream in;
    std::string path;

    explicit BinReader(const std::string& p) : in(p, std::ios::binary), path(p) {
        if (!in) throw InputError("cannot open model file: " + p);
    }
    void raw(void* p, std::size_t len) {
        in.read(static_cast<char*>(p), static_cast<std::streamsize>(len));
        if (in.gcount() != static_cast<std::streamsize>(len))
            throw InputError("truncated model file: " + path);
    }
    std::uint8_t u8() { std::uint8_t v; raw(&v, 1); return v; }
    std::uint32_t u32() { std::uint32_t v; raw(&v, 4); return v; }
    std::uint64_t u64() { std::uint64_t v; raw(&v, 8); return v; }
    double f64() { double v; raw(&v, 8); return v; }
    std::uint64_t count() {
        const std::uint64_t n = u64();
        if (n > (1ull << 32)) throw InputError("corrupt model file: " + path);
        return n;
    }
    std::string str() {
        std::string s(count(), '\0');
        raw(s.data(), s.size());
        return s;
    }
    std::vector<std::string> strs() {
        std::vector<std::string> v(count());
        for (auto& s : v) s = str();
        return v;
    }
    Vector vec() {
        Vector v(static_cast<Eigen::Index>(count()));
        for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = f64();
        return v;
    }
    Matrix mat() {
        const auto rows = static_cast<Eigen::Index>(count());
        const auto cols = static_cast<Eigen::Index>(count());
        Matrix m(rows, cols);
        for (Eigen::Index c = 0; c < cols; ++c)
            for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = f64();
        return m;
    }
    std::vector<Eigen::Index> indices() {
        std::vector<Eigen::Index> v(count());
        for (auto& i : v) i = static_cast<Eigen::Index>(u64());
        return v;
    }
};

inline void write_stats(BinWriter& w, const StandardizeStats& s) {
    w.vec(s.mean);
    w.vec(s.sd);
    w.indices(s.zero_variance_cols);
}

inline StandardizeStats read_stats(BinReader& r) {
    StandardizeStats s;
    s.mean = r.vec();
    s.sd = r.vec();
    s.zero_variance_cols = r.indices();
    return s;
}

inline void write_gpr(BinWriter& w, const TrainedGprModel& m) {
    write_stats(w, m.x_stats);
    w.vec(m.attribute_means);
    w.mat(m.gamma_y);
    w.vec(m.d);
    w.f64(m.error_scale);
    w.f64(m.kernel.length_scale);
    w.f64(m.kernel.signal_sigma);
    w.u8(m.centered ? 1 : 0);
    w.mat(m.x_train);
    w.mat(m.centered_targets);
    w.mat(m.k_eigvecs);
    w.vec(m.k_eigvals);
    w.mat(m.c_eigvecs);
    w.vec(m.c_eigvals);
    w.vec(m.sd);
    w.mat(m.alpha);
    w.mat(m.p_factor);
    w.f64(m.gamma_jitter);
    w.strs(m.warnings);
    w.strs(m.attribute_names);
    w.strs(m.predictor_names);
}

inline TrainedGprModel read_gpr(BinReader& r) {
    TrainedGprModel m;
    m.x_stats = read_stats(r);
    m.attribute_means = r.vec();
    m.gamma_y = r.mat();
    m.d = r.vec();
    m.error_scale = r.f64();
    m.kernel.length_scale = r.f64();
    m.kernel.signal_sigma = r.f64();
    m.centered = r.u8() != 0;
    m.x_train = r.mat();
    m.centered_targets = r.mat();
    m.k_eigvecs = r.mat();
    m.k_eigvals = r.vec();
    m.c_eigvecs = r.mat();
    m.c_eigvals = r.vec();
    m.sd = r.vec();
    m.alpha = r.mat();
    m.p_factor = r.mat();
    m.gamma_jitter = r.f64();
    m.warnings = r.strs();
    m.attribute_names = r.strs();
    m.predictor_names = r.strs();
    return m;
}

inline void write_knn(BinWriter& w, const MsnKnnModel& m) {
    w.indices(m.proj.subset);
    write_stats(w, m.proj.x_stats);
    w.mat(m.proj.coefficients);
    w.vec(m.proj.canonical_correlations);
    w.f64(m.proj.x_jitter);
    w.f64(m.proj.y_jitter);
    w.mat(m.train_coords);
    w.mat(m.y_train);
    w.u32(static_cast<std::uint32_t>(m.k));
    w.u8(m.distance_weighted ? 1 : 0);
    w.strs(m.attribute_names);
    w.strs(m.predictor_names);
}

inline MsnKnnModel read_knn(BinReader& r) {
    MsnKnnModel m;
    m.proj.subset = r.indices();
    m.proj.x_stats = read_stats(r);
    m.proj.coefficients = r.mat();
    m.proj.canonical_correlations = r.vec();
    m.proj.x_jitter = r.f64();
    m.proj.y_jitter = r.f64();
    m.train_coords = r.mat();
    m.y_train = r.mat();
    m.k = static_cast<int>(r.u32());
    m.distance_weighted = r.u8() != 0;
    m.attribute_names = r.strs();
    m.predictor_names = r.strs();
    return m;
}

inline void write_bayes(BinWriter& w, const BayesLinearModel& m) {
    w.mat(m.a_hat);
    w.vec(m.residual_mean);
    w.mat(m.residual_cov);
    w.vec(m.prior_mean);
    w.mat(m.prior_cov);
    w.mat(m.residual_chol);
    w.mat(m.prior_chol);
    w.f64(m.basis_ridge);
    w.f64(m.residual_jitter);
    w.f64(m.prior_jitter);
    w.u32(static_cast<std::uint32_t>(m.mcmc.n_iterations));
    w.u32(static_cast<std::uint32_t>(m.mcmc.burn_in));
    w.f64(m.mcmc.initial_proposal_scale);
    w.f64(m.mcmc.target_acceptance);
    w.u64(m.mcmc.seed);
    w.strs(m.attribute_names);
    w.strs(m.predictor_names);
}

inline BayesLinearModel read_bayes(BinReader& r) {
    BayesLinearModel m;
    m.a_hat = r.mat();
    m.residual_mean = r.vec();
    m.residual_cov = r.mat();
    m.prior_mean = r.vec();
    m.prior_cov = r.mat();
    m.residual_chol = r.mat();
    m.prior_chol = r.mat();
    m.basis_ridge = r.f64();
    m.residual_jitter = r.f64();
    m.prior_jitter = r.f64();
    m.mcmc.n_iterations = static_cast<int>(r.u32());
    m.mcmc.burn_in = static_cast<int>(r.u32());
    m.mcmc.initial_proposal_scale = r.f64();
    m.mcmc.target_acceptance = r.f64();
    m.mcmc.seed = r.u64();
    m.attribute_names = r.strs();
    m.predictor_names = r.strs();
    return m;
}

}  // namespace detail

inline void save_model(const ModelFile& mf, const std::string& path) {
    detail::BinWriter w(path);
    w.raw(detail::kModelMagic, 4);
    w.u32(detail::kModelVersion);
    w.u8(static_cast<std::uint8_t>(mf.method));
    switch (mf.method) {
        case Method::gpr: detail::write_gpr(w, std::get<TrainedGprModel>(mf.model)); break;
        case Method::knn: detail::write_knn(w, std::get<MsnKnnModel>(mf.model)); break;
        case Method::bayes: detail::write_bayes(w, std::get<BayesLinearModel>(mf.model)); break;
    }
    w.out.flush();
    if (!w.out) throw InputError("write failed: " + path);
}

inline ModelFile load_model(const std::string& path) {
    detail::BinReader r(path);
    char magic[4];
    r.raw(magic, 4);
    if (std::memcmp(magic, detail::kModelMagic, 4) != 0)
        throw InputError("not a model file: " + path);
    const std::uint32_t version = r.u32();
    if (version != detail::kModelVersion)
        throw InputError("unsupported model file version " + std::to_string(version));
    const std::uint8_t method = r.u8();
    ModelFile mf;
    switch (method) {
        case 0:
            mf.method = Method::gpr;
            mf.model = detail::read_gpr(r);
            break;
        case 1:
            mf.method = Method::knn;
            mf.model = detail::read_knn(r);
            break;
        case 2:
            mf.method = Method::bayes;
            mf.model = detail::read_bayes(r);
            break;
        default:
            throw InputError("corrupt model file: " + path);
    }
    return mf;
}

}  // namespace standgp
