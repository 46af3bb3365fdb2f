#pragma once

#include "standgp/bayes_linear.hpp"
#include "standgp/dataset.hpp"
#include "standgp/gpr.hpp"
#include "standgp/msn_knn.hpp"
#include "standgp/rng.hpp"
#include "standgp/thread_pool.hpp"
#include "standgp/truncation.hpp"
#include "standgp/types.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

namespace standgp {

/// Attribute kinds that are summed over species into stand totals.
inline const std::array<int, 3> kTotalKindIndices = {2, 3, 4};  // n, ba, v

/// One predicted plot. Interval vectors are empty for methods that do not
/// produce them; observed is empty when the truth is unknown.
struct PredictionRecord {
    std::string plot_id;
    std::string method;
    int size = -1;  // training-set size for size-experiment rows
    int rep = -1;   // replicate index for size-experiment rows
    Vector observed;
    Vector point;
    Vector lower;
    Vector upper;
    Vector total_observed;
    Vector total_point;
    Vector total_lower;
    Vector total_upper;
    std::vector<std::string> warnings;
};

struct TotalsResult {
    Vector point;  // sums of the corrected species points, order n, ba, v
    Vector lower;
    Vector upper;
    Vector sd;  // from the summed Gaussian
};

/// Species sums of N, BA, and V with intervals from the summed predictive
/// Gaussian. The point estimate sums the corrected species points, so it is
/// reported independently of the interval construction.
inline TotalsResult aggregate_totals(const PredictiveDistribution& dist,
                                     const Vector& corrected_point) {
    if (dist.mean.size() != kNumAttributes || corrected_point.size() != kNumAttributes)
        throw InputError("aggregate_totals: expected the canonical attribute layout");
    TotalsResult out;
    const auto n_tot = static_cast<Eigen::Index>(kTotalKindIndices.size());
    out.point.resize(n_tot);
    out.lower.resize(n_tot);
    out.upper.resize(n_tot);
    out.sd.resize(n_tot);
    for (Eigen::Index t = 0; t < n_tot; ++t) {
        const int kind = kTotalKindIndices[static_cast<std::size_t>(t)];
        double point = 0.0, mean = 0.0, var = 0.0;
        for (int s = 0; s < kNumSpecies; ++s) {
            const int a = attribute_index(s, kind);
            point += corrected_point(a);
            mean += dist.mean(a);
            for (int s2 = 0; s2 < kNumSpecies; ++s2)
                var += dist.covariance(a, attribute_index(s2, kind));
        }
        out.point(t) = point;
        out.sd(t) = std::sqrt(std::max(var, 0.0));
        if (out.sd(t) > 0.0) {
            const auto [lo, hi] = correct_interval(mean, out.sd(t));
            out.lower(t) = lo;
            out.upper(t) = hi;
        } else {
            out.lower(t) = out.upper(t) = std::max(mean, 0.0);
        }
    }
    return out;
}

/// Species sums of the point estimate only, for methods without a predictive
/// covariance.
inline Vector total_points(const Vector& point) {
    if (point.size() != kNumAttributes)
        throw InputError("total_points: expected the canonical attribute layout");
    Vector out(static_cast<Eigen::Index>(kTotalKindIndices.size()));
    for (Eigen::Index t = 0; t < out.size(); ++t) {
        double acc = 0.0;
        for (int s = 0; s < kNumSpecies; ++s)
            acc += point(attribute_index(s, kTotalKindIndices[static_cast<std::size_t>(t)]));
        out(t) = acc;
    }
    return out;
}

struct MetricsRow {
    std::string method;
    int size = -1;
    std::string species;    // species name, "total", or "all"
    std::string attribute;  // attribute kind, "mean", "min", or "max"
    double rmse_pct = std::numeric_limits<double>::quiet_NaN();
    double bias_pct = std::numeric_limits<double>::quiet_NaN();
    double ci_pct = std::numeric_limits<double>::quiet_NaN();
    long n = 0;
};

struct MetricsTable {
    std::vector<MetricsRow> rows;

    const MetricsRow* find(const std::string& method, const std::string& species,
                           const std::string& attribute, int size = -1) const {
        for (const auto& r : rows)
            if (r.method == method && r.species == species && r.attribute == attribute &&
                r.size == size)
                return &r;
        return nullptr;
    }
};

namespace detail {

struct ErrorAccumulator {
    double sq_err = 0.0;
    double err = 0.0;
    double obs_sum = 0.0;
    long n = 0;
    long covered = 0;
    long with_interval = 0;

    void add(double obs, double pred) {
        const double e = pred - obs;
        sq_err += e * e;
        err += e;
        obs_sum += obs;
        ++n;
    }
    void add_interval(double obs, double lo, double hi) {
        ++with_interval;
        if (obs >= lo && obs <= hi) ++covered;
    }

    /// Percent errors are relative to the mean observed value; a zero mean
    /// leaves the metric undefined.
    MetricsRow finish() const {
        MetricsRow row;
        row.n = n;
        if (n > 0) {
            const double mean_obs = obs_sum / static_cast<double>(n);
            if (mean_obs > 0.0) {
                row.rmse_pct = 100.0 * std::sqrt(sq_err / static_cast<double>(n)) / mean_obs;
                row.bias_pct = 100.0 * (err / static_cast<double>(n)) / mean_obs;
            }
        }
        if (with_interval > 0)
            row.ci_pct = 100.0 * static_cast<double>(covered) / static_cast<double>(with_interval);
        return row;
    }
};

inline double mean_ignoring_nan(const std::vector<double>& v, int* count = nullptr) {
    double acc = 0.0;
    int k = 0;
    for (double x : v)
        if (!std::isnan(x)) {
            acc += x;
            ++k;
        }
    if (count) *count = k;
    return k > 0 ? acc / k : std::numeric_limits<double>::quiet_NaN();
}

}  // namespace detail

/// Per-attribute, per-species, totals, and overall summary metrics, grouped
/// by method and training size. Bias is predicted minus observed, so a
/// positive bias means overestimation.
inline MetricsTable metrics(const std::vector<PredictionRecord>& records) {
    const auto names = attribute_names();
    std::map<std::pair<std::string, int>, std::vector<const PredictionRecord*>> groups;
    for (const auto& r : records) groups[{r.method, r.size}].push_back(&r);

    MetricsTable table;
    for (const auto& [key, recs] : groups) {
        const auto& [method, size] = key;
        std::vector<MetricsRow> attr_rows(kNumAttributes);
        for (int a = 0; a < kNumAttributes; ++a) {
            detail::ErrorAccumulator acc;
            for (const auto* r : recs) {
                if (r->observed.size() != kNumAttributes || r->point.size() != kNumAttributes)
                    continue;
                acc.add(r->observed(a), r->point(a));
                if (r->lower.size() == kNumAttributes)
                    acc.add_interval(r->observed(a), r->lower(a), r->upper(a));
            }
            MetricsRow row = acc.finish();
            row.method = method;
            row.size = size;
            row.species = kSpeciesNames[static_cast<std::size_t>(a / kAttributesPerSpecies)];
            row.attribute = kAttributeKinds[static_cast<std::size_t>(a % kAttributesPerSpecies)];
            attr_rows[static_cast<std::size_t>(a)] = row;
            table.rows.push_back(row);
        }
        for (int s = 0; s < kNumSpecies; ++s) {
            std::vector<double> rmse, bias, ci;
            long n = 0;
            for (int k = 0; k < kAttributesPerSpecies; ++k) {
                const auto& row = attr_rows[static_cast<std::size_t>(attribute_index(s, k))];
                rmse.push_back(row.rmse_pct);
                bias.push_back(row.bias_pct);
                ci.push_back(row.ci_pct);
                n = std::max(n, row.n);
            }
            MetricsRow row;
            row.method = method;
            row.size = size;
            row.species = kSpeciesNames[static_cast<std::size_t>(s)];
            row.attribute = "mean";
            row.rmse_pct = detail::mean_ignoring_nan(rmse);
            row.bias_pct = detail::mean_ignoring_nan(bias);
            row.ci_pct = detail::mean_ignoring_nan(ci);
            row.n = n;
            table.rows.push_back(row);
        }
        for (std::size_t t = 0; t < kTotalKindIndices.size(); ++t) {
            detail::ErrorAccumulator acc;
            for (const auto* r : recs) {
                if (r->total_observed.size() != 3 || r->total_point.size() != 3) continue;
                acc.add(r->total_observed(static_cast<Eigen::Index>(t)),
                        r->total_point(static_cast<Eigen::Index>(t)));
                if (r->total_lower.size() == 3)
                    acc.add_interval(r->total_observed(static_cast<Eigen::Index>(t)),
                                     r->total_lower(static_cast<Eigen::Index>(t)),
                                     r->total_upper(static_cast<Eigen::Index>(t)));
            }
            MetricsRow row = acc.finish();
            row.method = method;
            row.size = size;
            row.species = "total";
            row.attribute = kAttributeKinds[static_cast<std::size_t>(
                kTotalKindIndices[t] % kAttributesPerSpecies)];
            table.rows.push_back(row);
        }
        {
            std::vector<double> rmse, bias, ci;
            long n = 0;
            for (const auto& row : attr_rows) {
                rmse.push_back(row.rmse_pct);
                bias.push_back(row.bias_pct);
                ci.push_back(row.ci_pct);
                n = std::max(n, row.n);
            }
            MetricsRow mean_row;
            mean_row.method = method;
            mean_row.size = size;
            mean_row.species = "all";
            mean_row.attribute = "mean";
            mean_row.rmse_pct = detail::mean_ignoring_nan(rmse);
            mean_row.bias_pct = detail::mean_ignoring_nan(bias);
            mean_row.ci_pct = detail::mean_ignoring_nan(ci);
            mean_row.n = n;
            table.rows.push_back(mean_row);

            double lo = std::numeric_limits<double>::quiet_NaN();
            double hi = std::numeric_limits<double>::quiet_NaN();
            for (double v : rmse) {
                if (std::isnan(v)) continue;
                if (std::isnan(lo) || v < lo) lo = v;
                if (std::isnan(hi) || v > hi) hi = v;
            }
            MetricsRow min_row = mean_row;
            min_row.attribute = "min";
            min_row.rmse_pct = lo;
            min_row.bias_pct = min_row.ci_pct = std::numeric_limits<double>::quiet_NaN();
            table.rows.push_back(min_row);
            MetricsRow max_row = mean_row;
            max_row.attribute = "max";
            max_row.rmse_pct = hi;
            max_row.bias_pct = max_row.ci_pct = std::numeric_limits<double>::quiet_NaN();
            table.rows.push_back(max_row);
        }
    }
    return table;
}

struct EvalConfig {
    GprConfig gpr;
    int knn_k = 5;
    bool knn_weighted = false;
    Eigen::Index n_select = 10;
    SaSchedule sa;
    McmcSettings mcmc;
    std::uint64_t seed = 0;
    int jobs = 1;
};

struct LoocvResult {
    std::vector<PredictionRecord> records;
    MetricsTable metrics;
    std::vector<std::string> failures;          // "plot_id: message"
    std::vector<Eigen::Index> selected_subset;  // kNN predictor selection, empty otherwise
};

namespace detail {

inline PredictionRecord predict_one(Method method, const TrainingSet& ts, const EvalConfig& cfg,
                                    const std::vector<Eigen::Index>& knn_subset,
                                    const Vector& x_star, std::uint64_t chain_seed) {
    PredictionRecord rec;
    rec.method = method_name(method);
    switch (method) {
        case Method::gpr: {
            const TrainedGprModel model = train(ts, cfg.gpr);
            const PredictiveDistribution dist = predict(model, x_star);
            const CorrectedPrediction corr = correct_prediction(dist);
            rec.point = corr.point;
            rec.lower = corr.lower;
            rec.upper = corr.upper;
            rec.warnings = corr.warnings;
            const TotalsResult totals = aggregate_totals(dist, corr.point);
            rec.total_point = totals.point;
            rec.total_lower = totals.lower;
            rec.total_upper = totals.upper;
            break;
        }
        case Method::knn: {
            const MsnKnnModel model = msn_knn_fit(ts, knn_subset, cfg.knn_k, cfg.knn_weighted);
            rec.point = knn_predict(model, x_star);
            rec.total_point = total_points(rec.point);
            break;
        }
        case Method::bayes: {
            const BayesLinearModel model = bayes_linear_fit(ts, cfg.mcmc);
            const BayesPrediction bp = bayes_linear_predict(model, x_star, chain_seed);
            rec.point = bp.point;
            rec.lower = bp.lower;
            rec.upper = bp.upper;
            rec.total_point = total_points(rec.point);
            rec.warnings = bp.warnings;
            break;
        }
    }
    return rec;
}

}  // namespace detail

/// Leave-one-out cross validation over the whole dataset. For kNN the
/// predictor subset is selected once on the full dataset; the projection and
/// neighbour set are refit per fold on the remaining plots.
inline LoocvResult loocv(const Dataset& ds, Method method, const EvalConfig& cfg) {
    const Eigen::Index n = ds.n_plots();
    if (n < 3) throw EvaluationError("loocv: need at least 3 plots");

    LoocvResult result;
    if (method == Method::knn) {
        const TrainingSet full = TrainingSet::from_dataset(ds);
        const Eigen::Index n_select = std::min<Eigen::Index>(cfg.n_select, ds.x.cols());
        result.selected_subset = sa_select_predictors(full, n_select, cfg.sa, cfg.seed).subset;
    }

    std::vector<std::optional<PredictionRecord>> slots(static_cast<std::size_t>(n));
    std::vector<std::string> fold_errors(static_cast<std::size_t>(n));
    parallel_for(n, cfg.jobs, [&](long i) {
        std::vector<Eigen::Index> rows;
        rows.reserve(static_cast<std::size_t>(n - 1));
        for (Eigen::Index r = 0; r < n; ++r)
            if (r != i) rows.push_back(r);
        try {
            const TrainingSet ts = TrainingSet::from_dataset(ds.subset(rows));
            PredictionRecord rec =
                detail::predict_one(method, ts, cfg, result.selected_subset,
                                    ds.x.row(i).transpose(),
                                    cfg.seed ^ static_cast<std::uint64_t>(i));
            rec.plot_id = ds.plot_ids[static_cast<std::size_t>(i)];
            rec.observed = ds.y.row(i).transpose();
            rec.total_observed = total_points(rec.observed);
            slots[static_cast<std::size_t>(i)] = std::move(rec);
        } catch (const Error& e) {
            fold_errors[static_cast<std::size_t>(i)] =
                ds.plot_ids[static_cast<std::size_t>(i)] + ": " + e.what();
        }
    });

    for (Eigen::Index i = 0; i < n; ++i) {
        if (slots[static_cast<std::size_t>(i)])
            result.records.push_back(std::move(*slots[static_cast<std::size_t>(i)]));
        else
            result.failures.push_back(fold_errors[static_cast<std::size_t>(i)]);
    }
    if (result.records.empty()) throw EvaluationError("loocv: every fold failed");
    result.metrics = metrics(result.records);
    return result;
}

struct SizeExperimentResult {
    std::vector<PredictionRecord> records;
    MetricsTable metrics;
    std::vector<std::string> failures;
    std::vector<Eigen::Index> selected_subset;
};

/// For each training size and replicate, samples a training subset and one
/// held-out plot (without replacement) and predicts it with each method.
/// Replicate r uses its own stream seeded with base seed + r, so the sampled
/// plots for a given replicate are shared across sizes and methods.
inline SizeExperimentResult size_experiment(const Dataset& ds, const std::vector<int>& sizes,
                                            int reps, const std::vector<Method>& methods,
                                            const EvalConfig& cfg) {
    const Eigen::Index n = ds.n_plots();
    if (sizes.empty() || methods.empty())
        throw EvaluationError("size_experiment: nothing to do");
    for (int s : sizes)
        if (s < 2 || s >= n)
            throw EvaluationError("size_experiment: size " + std::to_string(s) +
                                  " not in [2, n_plots - 1]");
    if (reps < 1) throw EvaluationError("size_experiment: reps must be positive");

    SizeExperimentResult result;
    const bool wants_knn =
        std::find(methods.begin(), methods.end(), Method::knn) != methods.end();
    Eigen::Index n_select = 0;
    if (wants_knn) {
        const TrainingSet full = TrainingSet::from_dataset(ds);
        n_select = std::min<Eigen::Index>(cfg.n_select, ds.x.cols());
        result.selected_subset = sa_select_predictors(full, n_select, cfg.sa, cfg.seed).subset;
    }

    const auto n_methods = static_cast<long>(methods.size());
    for (int size : sizes) {
        std::vector<std::optional<PredictionRecord>> slots(
            static_cast<std::size_t>(reps) * static_cast<std::size_t>(n_methods));
        std::vector<std::string> rep_errors(slots.size());
        parallel_for(reps, cfg.jobs, [&](long r) {
            RngStream rng(cfg.seed + static_cast<std::uint64_t>(r));
            std::vector<Eigen::Index> pool(static_cast<std::size_t>(n));
            std::iota(pool.begin(), pool.end(), Eigen::Index{0});
            for (int i = 0; i < size; ++i) {
                const auto j =
                    i + static_cast<Eigen::Index>(rng.uniform_int(static_cast<std::uint64_t>(n - i)));
                std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
            }
            const auto test_pos =
                size + static_cast<Eigen::Index>(rng.uniform_int(static_cast<std::uint64_t>(n - size)));
            const Eigen::Index test = pool[static_cast<std::size_t>(test_pos)];
            std::vector<Eigen::Index> train_rows(pool.begin(), pool.begin() + size);

            for (long mi = 0; mi < n_methods; ++mi) {
                const auto slot = static_cast<std::size_t>(r * n_methods + mi);
                const Method method = methods[static_cast<std::size_t>(mi)];
                try {
                    const TrainingSet ts = TrainingSet::from_dataset(ds.subset(train_rows));
                    // a small subset can have fewer usable plots than selected
                    // predictors; CCA rejects that case and it is recorded
                    PredictionRecord rec = detail::predict_one(
                        method, ts, cfg, result.selected_subset, ds.x.row(test).transpose(),
                        (cfg.seed + static_cast<std::uint64_t>(r)) ^
                            static_cast<std::uint64_t>(test));
                    rec.plot_id = ds.plot_ids[static_cast<std::size_t>(test)];
                    rec.size = size;
                    rec.rep = static_cast<int>(r);
                    rec.observed = ds.y.row(test).transpose();
                    rec.total_observed = total_points(rec.observed);
                    slots[slot] = std::move(rec);
                } catch (const Error& e) {
                    rep_errors[slot] = "size=" + std::to_string(size) +
                                       " rep=" + std::to_string(r) + " method=" +
                                       method_name(method) + ": " + e.what();
                }
            }
        });
        for (std::size_t i = 0; i < slots.size(); ++i) {
            if (slots[i])
                result.records.push_back(std::move(*slots[i]));
            else
                result.failures.push_back(rep_errors[i]);
        }
    }
    if (result.records.empty()) throw EvaluationError("size_experiment: every replicate failed");
    result.metrics = metrics(result.records);
    return result;
}

namespace detail {

inline std::string csv_value(double v) {
    return std::isnan(v) ? std::string("na") : format_double(v);
}

inline void write_comments(std::ofstream& out, const std::vector<std::string>& comments) {
    for (const auto& c : comments) out << "# " << c << "\n";
}

}  // namespace detail

/// One row per attribute (and per totals kind) per record.
inline void write_records_csv(const std::string& path,
                              const std::vector<PredictionRecord>& records,
                              const std::vector<std::string>& comments = {}) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write records file: " + path);
    detail::write_comments(out, comments);
    out << "method,plot_id,size,rep,species,attribute,observed,predicted,lower,upper\n";
    auto cell = [](double v) { return detail::format_double(v); };
    for (const auto& r : records) {
        const std::string prefix = r.method + "," + r.plot_id + "," +
                                   (r.size >= 0 ? std::to_string(r.size) : "") + "," +
                                   (r.rep >= 0 ? std::to_string(r.rep) : "") + ",";
        for (int a = 0; a < kNumAttributes; ++a) {
            out << prefix << kSpeciesNames[static_cast<std::size_t>(a / kAttributesPerSpecies)]
                << "," << kAttributeKinds[static_cast<std::size_t>(a % kAttributesPerSpecies)]
                << ",";
            if (r.observed.size() == kNumAttributes) out << cell(r.observed(a));
            out << "," << cell(r.point(a)) << ",";
            if (r.lower.size() == kNumAttributes)
                out << cell(r.lower(a)) << "," << cell(r.upper(a));
            else
                out << ",";
            out << "\n";
        }
        if (r.total_point.size() == 3) {
            for (std::size_t t = 0; t < kTotalKindIndices.size(); ++t) {
                const auto ti = static_cast<Eigen::Index>(t);
                out << prefix << "total,"
                    << kAttributeKinds[static_cast<std::size_t>(kTotalKindIndices[t])] << ",";
                if (r.total_observed.size() == 3) out << cell(r.total_observed(ti));
                out << "," << cell(r.total_point(ti)) << ",";
                if (r.total_lower.size() == 3)
                    out << cell(r.total_lower(ti)) << "," << cell(r.total_upper(ti));
                else
                    out << ",";
                out << "\n";
            }
        }
    }
    if (!out) throw InputError("write failed: " + path);
}

inline void write_metrics_csv(const std::string& path, const MetricsTable& table,
                              const std::vector<std::string>& comments = {}) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write metrics file: " + path);
    detail::write_comments(out, comments);
    out << "method,size,species,attribute,rmse_pct,bias_pct,ci_pct,n\n";
    for (const auto& r : table.rows) {
        out << r.method << "," << (r.size >= 0 ? std::to_string(r.size) : "") << "," << r.species
            << "," << r.attribute << "," << detail::csv_value(r.rmse_pct) << ","
            << detail::csv_value(r.bias_pct) << "," << detail::csv_value(r.ci_pct) << "," << r.n
            << "\n";
    }
    if (!out) throw InputError("write failed: " + path);
}

}  // namespace standgp
