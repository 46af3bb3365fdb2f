#pragma once

#include "standgp/dataset.hpp"
#include "standgp/gpr.hpp"
#include "standgp/rng.hpp"
#include "standgp/types.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <utility>
#include <vector>

namespace standgp {

/// Canonical correlation projection between a predictor subset and the
/// attributes. The induced most-similar-neighbour distance is
///   d^2(u, v) = (u - v)^T W diag(rho^2) W^T (u - v)
/// on standardized predictor vectors, with W the canonical coefficients.
struct MsnProjection {
    std::vector<Eigen::Index> subset;  // indices into the full predictor list, ascending
    StandardizeStats x_stats;          // for the selected predictors, subset order
    Matrix coefficients;               // |subset| x m canonical coefficient matrix
    Vector canonical_correlations;     // m, clamped to [0, 1]
    double x_jitter = 0.0;             // regularization applied to singular covariances
    double y_jitter = 0.0;
};

/// kNN regressor in the MSN projection space.
struct MsnKnnModel {
    MsnProjection proj;
    Matrix train_coords;  // n_t x m, projected standardized training predictors
    Matrix y_train;       // n_t x n_y
    int k = 5;
    bool distance_weighted = false;
    std::vector<std::string> attribute_names;
    std::vector<std::string> predictor_names;  // full list the subset indexes into
};

inline MsnProjection msn_fit(const TrainingSet& ts, const std::vector<Eigen::Index>& subset) {
    ts.validate();
    if (subset.empty()) throw InputError("msn_fit: empty predictor subset");
    for (Eigen::Index j : subset)
        if (j < 0 || j >= ts.x.cols()) throw InputError("msn_fit: predictor index out of range");
    std::vector<Eigen::Index> sorted = subset;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
        throw InputError("msn_fit: duplicate predictor index");
    const Eigen::Index p = static_cast<Eigen::Index>(sorted.size());
    if (ts.x.rows() <= p)
        throw TrainingError("msn_fit: need more training plots than selected predictors");

    Matrix xs(ts.x.rows(), p);
    for (Eigen::Index a = 0; a < p; ++a) xs.col(a) = ts.x.col(sorted[static_cast<std::size_t>(a)]);

    MsnProjection proj;
    proj.subset = std::move(sorted);
    auto [x_std, x_stats] = standardize(xs);
    proj.x_stats = std::move(x_stats);
    const Matrix y_std = standardize(ts.y).first;

    const Matrix s_xx = detail::sample_covariance(x_std);
    const Matrix s_yy = detail::sample_covariance(y_std);
    const Matrix s_xy = x_std.transpose() * y_std / static_cast<double>(ts.x.rows() - 1);

    auto [s_xx_spd, jx] = detail::jitter_to_spd(s_xx);
    auto [s_yy_spd, jy] = detail::jitter_to_spd(s_yy);
    proj.x_jitter = jx;
    proj.y_jitter = jy;
    const Matrix lx = Eigen::LLT<Matrix>(s_xx_spd).matrixL();
    const Matrix ly = Eigen::LLT<Matrix>(s_yy_spd).matrixL();

    // whitened cross-covariance; its singular values are the canonical correlations
    Matrix b = lx.triangularView<Eigen::Lower>().solve(s_xy);
    b = ly.triangularView<Eigen::Lower>().solve(b.transpose()).transpose();
    Eigen::JacobiSVD<Matrix> svd(b, Eigen::ComputeThinU | Eigen::ComputeThinV);

    proj.coefficients =
        lx.transpose().triangularView<Eigen::Upper>().solve(Matrix(svd.matrixU()));
    proj.canonical_correlations =
        svd.singularValues().cwiseMin(1.0).cwiseMax(0.0);
    return proj;
}

namespace detail {

inline Vector project_msn(const MsnProjection& proj, const Vector& x_subset_std) {
    return proj.canonical_correlations.asDiagonal() *
           (proj.coefficients.transpose() * x_subset_std);
}

inline Vector standardize_subset(const MsnProjection& proj, const Vector& x_full) {
    const Eigen::Index p = static_cast<Eigen::Index>(proj.subset.size());
    Vector out(p);
    for (Eigen::Index a = 0; a < p; ++a) {
        const Eigen::Index j = proj.subset[static_cast<std::size_t>(a)];
        if (j >= x_full.size()) throw InputError("knn_predict: predictor vector too short");
        out(a) = (x_full(j) - proj.x_stats.mean(a)) / proj.x_stats.sd(a);
    }
    return out;
}

/// k smallest by squared distance, ties broken by ascending training index.
inline std::vector<Eigen::Index> nearest_indices(const Matrix& coords, const Vector& query,
                                                 int k, std::optional<Eigen::Index> exclude) {
    std::vector<std::pair<double, Eigen::Index>> order;
    order.reserve(static_cast<std::size_t>(coords.rows()));
    for (Eigen::Index i = 0; i < coords.rows(); ++i) {
        if (exclude && *exclude == i) continue;
        order.emplace_back((coords.row(i).transpose() - query).squaredNorm(), i);
    }
    if (static_cast<std::size_t>(k) > order.size())
        throw InputError("knn_predict: k exceeds available training plots");
    std::partial_sort(order.begin(), order.begin() + k, order.end());
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(k));
    for (int a = 0; a < k; ++a) idx[static_cast<std::size_t>(a)] = order[static_cast<std::size_t>(a)].second;
    return idx;
}

inline Vector knn_mean(const MsnKnnModel& m, const Vector& query_coords,
                       std::optional<Eigen::Index> exclude) {
    const auto idx = nearest_indices(m.train_coords, query_coords, m.k, exclude);
    Vector out = Vector::Zero(m.y_train.cols());
    if (!m.distance_weighted) {
        for (Eigen::Index i : idx) out += m.y_train.row(i).transpose();
        return out / static_cast<double>(idx.size());
    }
    double total = 0.0;
    for (Eigen::Index i : idx) {
        const double d = (m.train_coords.row(i).transpose() - query_coords).norm();
        const double w = 1.0 / std::max(d, 1e-12);
        out += w * m.y_train.row(i).transpose();
        total += w;
    }
    return out / total;
}

}  // namespace detail

inline MsnKnnModel msn_knn_fit(const TrainingSet& ts, const std::vector<Eigen::Index>& subset,
                               int k = 5, bool distance_weighted = false) {
    if (k < 1) throw InputError("msn_knn_fit: k must be at least 1");
    MsnKnnModel m;
    m.proj = msn_fit(ts, subset);
    if (k > static_cast<int>(ts.x.rows()))
        throw InputError("msn_knn_fit: k exceeds the number of training plots");
    m.k = k;
    m.distance_weighted = distance_weighted;
    m.y_train = ts.y;
    m.attribute_names = ts.attribute_names;
    m.predictor_names = ts.predictor_names;
    const Eigen::Index p = static_cast<Eigen::Index>(m.proj.subset.size());
    Matrix xs(ts.x.rows(), p);
    for (Eigen::Index a = 0; a < p; ++a) xs.col(a) = ts.x.col(m.proj.subset[static_cast<std::size_t>(a)]);
    const Matrix xs_std = standardize(xs, m.proj.x_stats);
    m.train_coords.resize(ts.x.rows(), m.proj.canonical_correlations.size());
    for (Eigen::Index i = 0; i < ts.x.rows(); ++i)
        m.train_coords.row(i) = detail::project_msn(m.proj, xs_std.row(i).transpose()).transpose();
    return m;
}

inline Vector knn_predict(const MsnKnnModel& m, const Vector& x_star,
                          std::optional<Eigen::Index> exclude = std::nullopt) {
    if (!x_star.allFinite()) throw PredictionError("knn_predict: non-finite predictor value");
    const Vector q = detail::project_msn(m.proj, detail::standardize_subset(m.proj, x_star));
    return detail::knn_mean(m, q, exclude);
}

/// Convenience form that carries the projection without a prebuilt model.
inline Vector knn_predict(const TrainingSet& ts, const MsnProjection& proj, const Vector& x_star,
                          int k = 5) {
    MsnKnnModel m;
    m.proj = proj;
    m.k = k;
    m.y_train = ts.y;
    const Eigen::Index p = static_cast<Eigen::Index>(proj.subset.size());
    Matrix xs(ts.x.rows(), p);
    for (Eigen::Index a = 0; a < p; ++a) xs.col(a) = ts.x.col(proj.subset[static_cast<std::size_t>(a)]);
    const Matrix xs_std = standardize(xs, proj.x_stats);
    m.train_coords.resize(ts.x.rows(), proj.canonical_correlations.size());
    for (Eigen::Index i = 0; i < ts.x.rows(); ++i)
        m.train_coords.row(i) = detail::project_msn(proj, xs_std.row(i).transpose()).transpose();
    return knn_predict(m, x_star);
}

/// Annealing schedule for predictor subset selection.
struct SaSchedule {
    int init_samples = 50;        // random subsets used to set the initial temperature
    int proposals_per_temp = 200;
    int max_temps = 50;
    int max_unimproved_temps = 10;
    double cooling = 0.95;
    int k = 5;  // neighbours inside the selection objective
};

struct SaSelection {
    std::vector<Eigen::Index> subset;  // ascending
    double objective = 0.0;            // mean leave-one-out RMSE% over valid attributes
    std::vector<double> best_trace;    // best objective after each temperature
};

namespace detail {

/// Leave-one-out kNN RMSE%, averaged over attributes with a positive observed
/// mean. The projection is fit once on the full training set; leave-one-out
/// only excludes the query plot from the neighbour search.
inline double loo_knn_objective(const TrainingSet& ts, const std::vector<Eigen::Index>& subset,
                                int k) {
    const MsnKnnModel m = msn_knn_fit(ts, subset, k);
    const Eigen::Index n = ts.x.rows();
    const Eigen::Index n_y = ts.y.cols();
    Vector sq_err = Vector::Zero(n_y);
    for (Eigen::Index i = 0; i < n; ++i) {
        const Vector pred = knn_mean(m, m.train_coords.row(i).transpose(), i);
        sq_err += (pred - ts.y.row(i).transpose()).array().square().matrix();
    }
    const Vector mean_y = ts.y.colwise().mean();
    double total = 0.0;
    int valid = 0;
    for (Eigen::Index a = 0; a < n_y; ++a) {
        if (mean_y(a) <= 0.0) continue;
        total += 100.0 * std::sqrt(sq_err(a) / static_cast<double>(n)) / mean_y(a);
        ++valid;
    }
    if (valid == 0) throw EvaluationError("predictor selection: no attribute has a positive mean");
    return total / static_cast<double>(valid);
}

inline std::vector<Eigen::Index> random_subset(Eigen::Index n_total, Eigen::Index n_select,
                                               RngStream& rng) {
    std::vector<Eigen::Index> pool(static_cast<std::size_t>(n_total));
    std::iota(pool.begin(), pool.end(), Eigen::Index{0});
    for (Eigen::Index i = 0; i < n_select; ++i) {
        const auto j = i + static_cast<Eigen::Index>(rng.uniform_int(static_cast<std::uint64_t>(n_total - i)));
        std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
    }
    std::vector<Eigen::Index> out(pool.begin(), pool.begin() + n_select);
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace detail

/// Selects a predictor subset by simulated annealing on the leave-one-out kNN
/// objective. Moves swap one selected predictor for an unselected one; the
/// initial temperature is the standard deviation of the objective over random
/// subsets, cooled geometrically.
inline SaSelection sa_select_predictors(const TrainingSet& ts, Eigen::Index n_select,
                                        const SaSchedule& schedule = {},
                                        std::uint64_t seed = 0) {
    ts.validate();
    const Eigen::Index n_x = ts.x.cols();
    if (n_select < 1 || n_select > n_x)
        throw InputError("sa_select_predictors: subset size out of range");
    if (schedule.init_samples < 2 || schedule.proposals_per_temp < 1 || schedule.max_temps < 1 ||
        !(schedule.cooling > 0.0 && schedule.cooling < 1.0))
        throw InputError("sa_select_predictors: invalid schedule");

    SaSelection sel;
    if (n_select == n_x) {
        sel.subset.resize(static_cast<std::size_t>(n_x));
        std::iota(sel.subset.begin(), sel.subset.end(), Eigen::Index{0});
        sel.objective = detail::loo_knn_objective(ts, sel.subset, schedule.k);
        sel.best_trace.push_back(sel.objective);
        return sel;
    }

    RngStream rng(seed);
    std::vector<std::vector<Eigen::Index>> initial;
    Vector init_obj(schedule.init_samples);
    for (int s = 0; s < schedule.init_samples; ++s) {
        initial.push_back(detail::random_subset(n_x, n_select, rng));
        init_obj(s) = detail::loo_knn_objective(ts, initial.back(), schedule.k);
    }
    const double mean0 = init_obj.mean();
    double temp = std::sqrt((init_obj.array() - mean0).square().sum() /
                            static_cast<double>(schedule.init_samples - 1));
    if (!(temp > 0.0)) temp = std::max(1e-8 * std::abs(mean0), 1e-12);

    Eigen::Index best0 = 0;
    init_obj.minCoeff(&best0);
    std::vector<Eigen::Index> current = initial[static_cast<std::size_t>(best0)];
    double current_obj = init_obj(best0);
    sel.subset = current;
    sel.objective = current_obj;

    std::vector<bool> selected(static_cast<std::size_t>(n_x), false);
    for (Eigen::Index j : current) selected[static_cast<std::size_t>(j)] = true;

    int unimproved = 0;
    for (int t = 0; t < schedule.max_temps && unimproved < schedule.max_unimproved_temps; ++t) {
        bool improved = false;
        for (int prop = 0; prop < schedule.proposals_per_temp; ++prop) {
            const auto out_pos = static_cast<std::size_t>(rng.uniform_int(static_cast<std::uint64_t>(n_select)));
            // draw an unselected predictor by rejection; acceptance is at
            // least (n_x - n_select) / n_x per draw
            Eigen::Index in_idx;
            do {
                in_idx = static_cast<Eigen::Index>(rng.uniform_int(static_cast<std::uint64_t>(n_x)));
            } while (selected[static_cast<std::size_t>(in_idx)]);

            std::vector<Eigen::Index> proposal = current;
            const Eigen::Index out_idx = proposal[out_pos];
            proposal[out_pos] = in_idx;
            std::sort(proposal.begin(), proposal.end());
            const double obj = detail::loo_knn_objective(ts, proposal, schedule.k);
            const double delta = obj - current_obj;
            if (delta <= 0.0 || rng.uniform01() < std::exp(-delta / temp)) {
                current = std::move(proposal);
                current_obj = obj;
                selected[static_cast<std::size_t>(out_idx)] = false;
                selected[static_cast<std::size_t>(in_idx)] = true;
                if (current_obj < sel.objective) {
                    sel.objective = current_obj;
                    sel.subset = current;
                    improved = true;
                }
            }
        }
        sel.best_trace.push_back(sel.objective);
        unimproved = improved ? 0 : unimproved + 1;
        temp *= schedule.cooling;
    }
    return sel;
}

}  // namespace standgp
