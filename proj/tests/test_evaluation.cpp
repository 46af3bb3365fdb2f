#include "standgp/evaluation.hpp"
#include "standgp/synthetic.hpp"
#include "standgp/truncation.hpp"

#include "tmpfiles.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

using namespace standgp;

namespace {

PredictionRecord flat_record(const std::string& method, const std::string& id, double obs,
                             double pred, double lo, double hi) {
    PredictionRecord r;
    r.method = method;
    r.plot_id = id;
    r.observed = Vector::Constant(kNumAttributes, 5.0);
    r.point = Vector::Constant(kNumAttributes, 5.0);
    r.lower = Vector::Constant(kNumAttributes, 0.0);
    r.upper = Vector::Constant(kNumAttributes, 100.0);
    r.observed(0) = obs;
    r.point(0) = pred;
    r.lower(0) = lo;
    r.upper(0) = hi;
    r.total_observed = total_points(r.observed);
    r.total_point = total_points(r.point);
    return r;
}

std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream in(path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
    return lines;
}

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.push_back("");
    return out;
}

}  // namespace

TEST_CASE("error metrics match a hand calculation") {
    // observations 10 and 20 predicted as 12 and 16: rmse = sqrt(10) against a
    // mean of 15, bias = -1 against 15
    std::vector<PredictionRecord> records;
    records.push_back(flat_record("gpr", "a", 10.0, 12.0, 0.0, 100.0));
    records.push_back(flat_record("gpr", "b", 20.0, 16.0, 0.0, 1.0));

    const MetricsTable table = metrics(records);
    const MetricsRow* row = table.find("gpr", "pine", "hgm");
    REQUIRE(row != nullptr);
    CHECK(row->n == 2);
    CHECK_THAT(row->rmse_pct, Catch::Matchers::WithinAbs(21.0818510677892, 1e-9));
    CHECK_THAT(row->bias_pct, Catch::Matchers::WithinAbs(-6.66666666666667, 1e-9));
    CHECK_THAT(row->ci_pct, Catch::Matchers::WithinAbs(50.0, 1e-12));  // second interval misses

    // perfect predictions elsewhere
    const MetricsRow* clean = table.find("gpr", "spruce", "dgm");
    REQUIRE(clean != nullptr);
    CHECK_THAT(clean->rmse_pct, Catch::Matchers::WithinAbs(0.0, 1e-12));
    CHECK_THAT(clean->bias_pct, Catch::Matchers::WithinAbs(0.0, 1e-12));

    // species mean over hgm..v for pine: only hgm has error
    const MetricsRow* pine_mean = table.find("gpr", "pine", "mean");
    REQUIRE(pine_mean != nullptr);
    CHECK_THAT(pine_mean->rmse_pct, Catch::Matchers::WithinAbs(21.0818510677892 / 5.0, 1e-9));

    const MetricsRow* all_max = table.find("gpr", "all", "max");
    REQUIRE(all_max != nullptr);
    CHECK_THAT(all_max->rmse_pct, Catch::Matchers::WithinAbs(21.0818510677892, 1e-9));
    const MetricsRow* all_min = table.find("gpr", "all", "min");
    REQUIRE(all_min != nullptr);
    CHECK_THAT(all_min->rmse_pct, Catch::Matchers::WithinAbs(0.0, 1e-12));
    const MetricsRow* all_mean = table.find("gpr", "all", "mean");
    REQUIRE(all_mean != nullptr);
    CHECK_THAT(all_mean->rmse_pct, Catch::Matchers::WithinAbs(21.0818510677892 / 15.0, 1e-9));
}

TEST_CASE("zero observed mean leaves percent metrics undefined") {
    std::vector<PredictionRecord> records;
    auto rec = flat_record("knn", "a", 10.0, 12.0, 0.0, 100.0);
    rec.observed(5) = 0.0;  // spruce hgm never observed
    rec.point(5) = 1.0;
    records.push_back(rec);

    const MetricsTable table = metrics(records);
    const MetricsRow* row = table.find("knn", "spruce", "hgm");
    REQUIRE(row != nullptr);
    CHECK(row->n == 1);
    CHECK(std::isnan(row->rmse_pct));
    CHECK(std::isnan(row->bias_pct));

    // the species mean skips the undefined attribute instead of poisoning it
    const MetricsRow* mean_row = table.find("knn", "spruce", "mean");
    REQUIRE(mean_row != nullptr);
    CHECK_FALSE(std::isnan(mean_row->rmse_pct));

    const auto dir = testutil::fresh_dir("metrics");
    const auto path = (dir / "metrics.csv").string();
    write_metrics_csv(path, table);
    bool found_na = false;
    for (const auto& line : read_lines(path))
        if (line.find("knn,,spruce,hgm,na,na,") == 0) found_na = true;
    CHECK(found_na);
}

TEST_CASE("metrics are grouped by method and training size") {
    std::vector<PredictionRecord> records;
    auto a = flat_record("gpr", "a", 10.0, 12.0, 0.0, 100.0);
    auto b = flat_record("gpr", "b", 10.0, 18.0, 0.0, 100.0);
    a.size = 20;
    b.size = 40;
    records.push_back(a);
    records.push_back(b);

    const MetricsTable table = metrics(records);
    const MetricsRow* row20 = table.find("gpr", "pine", "hgm", 20);
    const MetricsRow* row40 = table.find("gpr", "pine", "hgm", 40);
    REQUIRE(row20 != nullptr);
    REQUIRE(row40 != nullptr);
    CHECK_THAT(row20->rmse_pct, Catch::Matchers::WithinAbs(20.0, 1e-9));
    CHECK_THAT(row40->rmse_pct, Catch::Matchers::WithinAbs(80.0, 1e-9));
    CHECK(table.find("gpr", "pine", "hgm") == nullptr);  // no ungrouped row
}

TEST_CASE("totals sum species and carry the summed covariance") {
    RngStream rng(7);
    Matrix a(kNumAttributes, 3);
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j) a(i, j) = rng.normal();
    PredictiveDistribution dist;
    dist.covariance = a * a.transpose() + Matrix::Identity(kNumAttributes, kNumAttributes);
    dist.mean = Vector(kNumAttributes);
    for (Eigen::Index i = 0; i < kNumAttributes; ++i) dist.mean(i) = rng.uniform(-2.0, 8.0);

    const Vector corrected = map_nonneg(dist);
    const TotalsResult totals = aggregate_totals(dist, corrected);

    for (std::size_t t = 0; t < kTotalKindIndices.size(); ++t) {
        const int kind = kTotalKindIndices[t];
        const auto ti = static_cast<Eigen::Index>(t);

        double point = 0.0, mean = 0.0, var = 0.0;
        for (int s = 0; s < kNumSpecies; ++s) {
            point += corrected(attribute_index(s, kind));
            mean += dist.mean(attribute_index(s, kind));
            for (int s2 = 0; s2 < kNumSpecies; ++s2)
                var += dist.covariance(attribute_index(s, kind), attribute_index(s2, kind));
        }
        CHECK_THAT(totals.point(ti), Catch::Matchers::WithinAbs(point, 1e-12));
        CHECK_THAT(totals.sd(ti), Catch::Matchers::WithinAbs(std::sqrt(var), 1e-12));
        const auto [lo, hi] = correct_interval(mean, std::sqrt(var));
        CHECK(totals.lower(ti) == lo);
        CHECK(totals.upper(ti) == hi);
    }

    // degenerate covariance collapses the interval to the clamped mean
    PredictiveDistribution flat;
    flat.mean = Vector::Constant(kNumAttributes, -1.0);
    flat.covariance = Matrix::Zero(kNumAttributes, kNumAttributes);
    const TotalsResult degen = aggregate_totals(flat, Vector::Zero(kNumAttributes));
    CHECK(degen.lower(0) == 0.0);
    CHECK(degen.upper(0) == 0.0);

    CHECK_THROWS_AS(aggregate_totals(PredictiveDistribution{Vector::Zero(3), Matrix::Zero(3, 3)},
                                     Vector::Zero(3)),
                    InputError);
}

TEST_CASE("total_points sums n, ba, v across species") {
    Vector point(kNumAttributes);
    for (Eigen::Index i = 0; i < kNumAttributes; ++i) point(i) = static_cast<double>(i);
    const Vector totals = total_points(point);
    REQUIRE(totals.size() == 3);
    CHECK(totals(0) == 2.0 + 7.0 + 12.0);   // n
    CHECK(totals(1) == 3.0 + 8.0 + 13.0);   // ba
    CHECK(totals(2) == 4.0 + 9.0 + 14.0);   // v
    CHECK_THROWS_AS(total_points(Vector::Zero(5)), InputError);
}

TEST_CASE("synthetic generation is deterministic and well formed") {
    SynthConfig cfg;
    cfg.n_plots = 40;
    cfg.n_predictors = 8;
    cfg.seed = 5;
    const Dataset a = generate_synthetic(cfg);
    const Dataset b = generate_synthetic(cfg);
    CHECK(a.plot_ids == b.plot_ids);
    CHECK(a.y.cwiseEqual(b.y).all());
    CHECK(a.x.cwiseEqual(b.x).all());

    cfg.seed = 6;
    const Dataset c = generate_synthetic(cfg);
    CHECK_FALSE(a.y.cwiseEqual(c.y).all());

    REQUIRE(a.n_plots() == 40);
    REQUIRE(a.n_predictors() == 8);
    CHECK(a.y.allFinite());
    CHECK(a.x.allFinite());
    CHECK((a.y.array() >= 0.0).all());
    CHECK(a.plot_ids.front() == "p01");
    CHECK(a.plot_ids.back() == "p40");
    CHECK(std::is_sorted(a.predictor_names.begin(), a.predictor_names.end()));
    CHECK(a.predictor_names.front() == "m01");
}

TEST_CASE("noise-free surface attributes satisfy the stand identities") {
    SynthConfig cfg;
    cfg.n_plots = 30;
    cfg.n_predictors = 5;
    cfg.seed = 11;
    cfg.noise_scale = 0.0;
    cfg.zero_inflation = {0.0, 0.0, 0.0};
    const Dataset ds = generate_synthetic(cfg);
    for (Eigen::Index i = 0; i < ds.n_plots(); ++i) {
        for (int s = 0; s < kNumSpecies; ++s) {
            const double h = ds.y(i, attribute_index(s, 0));
            const double d = ds.y(i, attribute_index(s, 1));
            const double n = ds.y(i, attribute_index(s, 2));
            const double g = ds.y(i, attribute_index(s, 3));
            const double v = ds.y(i, attribute_index(s, 4));
            CHECK(h > 0.0);
            CHECK(d > h);  // diameter in cm exceeds height in m on this surface
            CHECK_THAT(v, Catch::Matchers::WithinRel(0.45 * g * h, 1e-12));
            CHECK_THAT(n, Catch::Matchers::WithinRel(40000.0 * g / (M_PI * d * d), 1e-12));
        }
    }
}

TEST_CASE("zero inflation empties whole species blocks") {
    SynthConfig cfg;
    cfg.n_plots = 50;
    cfg.n_predictors = 4;
    cfg.seed = 13;
    cfg.zero_inflation = {1.0, 0.0, 0.3};
    const Dataset ds = generate_synthetic(cfg);
    for (Eigen::Index i = 0; i < ds.n_plots(); ++i) {
        for (int k = 0; k < kAttributesPerSpecies; ++k)
            CHECK(ds.y(i, attribute_index(0, k)) == 0.0);  // pine always zeroed
        CHECK(ds.y(i, attribute_index(1, 0)) > 0.0);  // spruce never zeroed
    }
    // decid zeroed on some plots but not all
    int zeros = 0;
    for (Eigen::Index i = 0; i < ds.n_plots(); ++i)
        if (ds.y(i, attribute_index(2, 0)) == 0.0) ++zeros;
    CHECK(zeros > 0);
    CHECK(zeros < 50);
}

TEST_CASE("gp mode attributes track the configured means") {
    SynthConfig cfg;
    cfg.n_plots = 200;
    cfg.n_predictors = 10;
    cfg.seed = 17;
    cfg.mode = SynthMode::gp;
    cfg.zero_inflation = {0.0, 0.0, 0.0};
    const Dataset ds = generate_synthetic(cfg);
    const Vector means = detail::gp_mode_means();
    for (Eigen::Index a = 0; a < kNumAttributes; ++a) {
        const double sample_mean = ds.y.col(a).mean();
        // plots share the smooth component, so the sample mean wanders more
        // than an iid estimate would
        CHECK(sample_mean > 0.5 * means(a));
        CHECK(sample_mean < 1.5 * means(a));
    }
    CHECK((ds.y.array() >= 0.0).all());
}

TEST_CASE("synthetic configuration is validated") {
    SynthConfig cfg;
    cfg.n_plots = 1;
    CHECK_THROWS_AS(generate_synthetic(cfg), InputError);
    cfg = {};
    cfg.n_predictors = 0;
    CHECK_THROWS_AS(generate_synthetic(cfg), InputError);
    cfg = {};
    cfg.noise_scale = -1.0;
    CHECK_THROWS_AS(generate_synthetic(cfg), InputError);
    cfg = {};
    cfg.zero_inflation = {0.0, 1.5, 0.0};
    CHECK_THROWS_AS(generate_synthetic(cfg), InputError);
}

namespace {

Dataset small_synth(Eigen::Index n, Eigen::Index p, std::uint64_t seed) {
    SynthConfig cfg;
    cfg.n_plots = n;
    cfg.n_predictors = p;
    cfg.seed = seed;
    cfg.zero_inflation = {0.0, 0.0, 0.0};
    return generate_synthetic(cfg);
}

EvalConfig quick_eval_config() {
    EvalConfig cfg;
    cfg.seed = 3;
    cfg.n_select = 3;
    cfg.sa.init_samples = 4;
    cfg.sa.proposals_per_temp = 10;
    cfg.sa.max_temps = 4;
    cfg.sa.max_unimproved_temps = 2;
    cfg.sa.k = 3;
    cfg.knn_k = 3;
    cfg.mcmc.n_iterations = 1500;
    cfg.mcmc.burn_in = 300;
    return cfg;
}

}  // namespace

TEST_CASE("loocv predicts every plot once") {
    const Dataset ds = small_synth(25, 6, 19);
    const EvalConfig cfg = quick_eval_config();

    const LoocvResult res = loocv(ds, Method::gpr, cfg);
    CHECK(res.failures.empty());
    REQUIRE(res.records.size() == 25);
    CHECK(res.selected_subset.empty());
    std::set<std::string> ids;
    for (const auto& r : res.records) {
        ids.insert(r.plot_id);
        CHECK(r.method == "gpr");
        CHECK(r.size == -1);
        REQUIRE(r.observed.size() == kNumAttributes);
        REQUIRE(r.point.size() == kNumAttributes);
        REQUIRE(r.lower.size() == kNumAttributes);
        CHECK((r.point.array() >= 0.0).all());
        CHECK((r.lower.array() >= 0.0).all());
        CHECK((r.upper.array() >= r.lower.array()).all());
        REQUIRE(r.total_point.size() == 3);
        REQUIRE(r.total_lower.size() == 3);
    }
    CHECK(ids.size() == 25);
    const MetricsRow* row = res.metrics.find("gpr", "all", "mean");
    REQUIRE(row != nullptr);
    CHECK(row->n == 25);
    CHECK(row->rmse_pct > 0.0);
    CHECK(row->ci_pct >= 0.0);
}

TEST_CASE("loocv with knn selects a subset and skips intervals") {
    const Dataset ds = small_synth(20, 6, 23);
    const EvalConfig cfg = quick_eval_config();
    const LoocvResult res = loocv(ds, Method::knn, cfg);
    CHECK(res.failures.empty());
    REQUIRE(res.records.size() == 20);
    CHECK(res.selected_subset.size() == 3);
    for (const auto& r : res.records) {
        CHECK(r.method == "knn");
        CHECK(r.lower.size() == 0);
        REQUIRE(r.total_point.size() == 3);
        CHECK(r.total_lower.size() == 0);
    }
    const MetricsRow* row = res.metrics.find("knn", "all", "mean");
    REQUIRE(row != nullptr);
    CHECK(std::isnan(row->ci_pct));
}

TEST_CASE("loocv with the linear chain produces intervals") {
    const Dataset ds = small_synth(20, 5, 29);
    const EvalConfig cfg = quick_eval_config();
    const LoocvResult res = loocv(ds, Method::bayes, cfg);
    CHECK(res.failures.empty());
    REQUIRE(res.records.size() == 20);
    for (const auto& r : res.records) {
        CHECK(r.method == "bayes");
        REQUIRE(r.lower.size() == kNumAttributes);
        CHECK((r.point.array() >= 0.0).all());
        CHECK((r.lower.array() <= r.point.array() + 1e-12).all());
        CHECK((r.upper.array() >= r.point.array() - 1e-12).all());
    }
}

TEST_CASE("loocv is reproducible and independent of the job count") {
    // 20 plots so each 19-plot fold still exceeds the 16 rows the linear
    // chain needs
    const Dataset ds = small_synth(20, 5, 31);
    EvalConfig cfg = quick_eval_config();

    for (Method method : {Method::gpr, Method::bayes}) {
        cfg.jobs = 1;
        const LoocvResult a = loocv(ds, method, cfg);
        const LoocvResult b = loocv(ds, method, cfg);
        cfg.jobs = 3;
        const LoocvResult c = loocv(ds, method, cfg);
        REQUIRE(a.records.size() == b.records.size());
        REQUIRE(a.records.size() == c.records.size());
        for (std::size_t i = 0; i < a.records.size(); ++i) {
            CHECK(a.records[i].plot_id == b.records[i].plot_id);
            CHECK(a.records[i].point.cwiseEqual(b.records[i].point).all());
            CHECK(a.records[i].point.cwiseEqual(c.records[i].point).all());
            if (a.records[i].lower.size() > 0) {
                CHECK(a.records[i].lower.cwiseEqual(c.records[i].lower).all());
                CHECK(a.records[i].upper.cwiseEqual(c.records[i].upper).all());
            }
        }
    }
}

TEST_CASE("loocv needs at least 3 plots") {
    const Dataset ds = small_synth(5, 4, 37).subset({0, 1});
    CHECK_THROWS_AS(loocv(ds, Method::gpr, quick_eval_config()), EvaluationError);
}

TEST_CASE("size experiment sweeps training sizes") {
    const Dataset ds = small_synth(30, 5, 41);
    const EvalConfig cfg = quick_eval_config();
    const std::vector<int> sizes = {5, 20};
    const SizeExperimentResult res =
        size_experiment(ds, sizes, 4, {Method::gpr, Method::knn}, cfg);

    CHECK(res.failures.empty());
    REQUIRE(res.records.size() == 2 * 4 * 2);
    CHECK(res.selected_subset.size() == 3);
    for (const auto& r : res.records) {
        CHECK((r.size == 5 || r.size == 20));
        CHECK(r.rep >= 0);
        CHECK(r.rep < 4);
    }
    // per-size metric rows exist and are distinct
    const MetricsRow* g5 = res.metrics.find("gpr", "all", "mean", 5);
    const MetricsRow* g20 = res.metrics.find("gpr", "all", "mean", 20);
    REQUIRE(g5 != nullptr);
    REQUIRE(g20 != nullptr);
    CHECK(g5->n == 4);
    CHECK(g20->n == 4);
    REQUIRE(res.metrics.find("knn", "all", "mean", 5) != nullptr);

    // replicate r draws the same held-out plot at a given size for every method
    for (int rep = 0; rep < 4; ++rep) {
        std::set<std::string> per_method;
        for (const auto& r : res.records)
            if (r.rep == rep && r.size == 5) per_method.insert(r.plot_id);
        CHECK(per_method.size() == 1);
    }
}

TEST_CASE("size experiment is reproducible across job counts") {
    const Dataset ds = small_synth(20, 4, 43);
    EvalConfig cfg = quick_eval_config();
    cfg.jobs = 1;
    const SizeExperimentResult a = size_experiment(ds, {6}, 5, {Method::gpr}, cfg);
    cfg.jobs = 4;
    const SizeExperimentResult b = size_experiment(ds, {6}, 5, {Method::gpr}, cfg);
    REQUIRE(a.records.size() == b.records.size());
    for (std::size_t i = 0; i < a.records.size(); ++i) {
        CHECK(a.records[i].plot_id == b.records[i].plot_id);
        CHECK(a.records[i].rep == b.records[i].rep);
        CHECK(a.records[i].point.cwiseEqual(b.records[i].point).all());
    }
}

TEST_CASE("size experiment validates sizes and reps") {
    const Dataset ds = small_synth(10, 4, 47);
    const EvalConfig cfg = quick_eval_config();
    CHECK_THROWS_AS(size_experiment(ds, {1}, 2, {Method::gpr}, cfg), EvaluationError);
    CHECK_THROWS_AS(size_experiment(ds, {10}, 2, {Method::gpr}, cfg), EvaluationError);
    CHECK_THROWS_AS(size_experiment(ds, {}, 2, {Method::gpr}, cfg), EvaluationError);
    CHECK_THROWS_AS(size_experiment(ds, {5}, 0, {Method::gpr}, cfg), EvaluationError);
    CHECK_THROWS_AS(size_experiment(ds, {5}, 2, {}, cfg), EvaluationError);
}

TEST_CASE("records csv has one row per attribute plus totals") {
    const auto dir = testutil::fresh_dir("records");
    const Dataset ds = small_synth(8, 4, 53);
    EvalConfig cfg = quick_eval_config();
    const LoocvResult res = loocv(ds, Method::gpr, cfg);

    const auto path = (dir / "records.csv").string();
    write_records_csv(path, res.records, {"first comment", "second comment"});
    const auto lines = read_lines(path);
    REQUIRE(lines.size() == 2 + 1 + 8 * (kNumAttributes + 3));
    CHECK(lines[0] == "# first comment");
    CHECK(lines[2] == "method,plot_id,size,rep,species,attribute,observed,predicted,lower,upper");

    // attribute row: all ten fields populated, empty size and rep
    const auto attr_fields = split(lines[3]);
    REQUIRE(attr_fields.size() == 10);
    CHECK(attr_fields[0] == "gpr");
    CHECK(attr_fields[2] == "");
    CHECK(attr_fields[3] == "");
    CHECK(attr_fields[4] == "pine");
    CHECK(attr_fields[5] == "hgm");
    CHECK_FALSE(attr_fields[6].empty());
    CHECK_FALSE(attr_fields[9].empty());

    // totals come after the 15 attribute rows
    const auto total_fields = split(lines[3 + kNumAttributes]);
    REQUIRE(total_fields.size() == 10);
    CHECK(total_fields[4] == "total");
    CHECK(total_fields[5] == "n");

    // interval-free methods leave the interval cells empty
    const LoocvResult knn_res = loocv(ds, Method::knn, cfg);
    const auto knn_path = (dir / "knn_records.csv").string();
    write_records_csv(knn_path, knn_res.records);
    const auto knn_lines = read_lines(knn_path);
    const auto knn_fields = split(knn_lines[1]);
    REQUIRE(knn_fields.size() == 10);
    CHECK(knn_fields[8] == "");
    CHECK(knn_fields[9] == "");
}

TEST_CASE("metrics csv layout") {
    const auto dir = testutil::fresh_dir("metricscsv");
    std::vector<PredictionRecord> records;
    records.push_back(flat_record("gpr", "a", 10.0, 12.0, 0.0, 100.0));
    const auto path = (dir / "metrics.csv").string();
    write_metrics_csv(path, metrics(records), {"note"});
    const auto lines = read_lines(path);
    REQUIRE(lines.size() >= 2 + 15 + 3 + 3 + 3);
    CHECK(lines[0] == "# note");
    CHECK(lines[1] == "method,size,species,attribute,rmse_pct,bias_pct,ci_pct,n");
    const auto fields = split(lines[2]);
    REQUIRE(fields.size() == 8);
    CHECK(fields[0] == "gpr");
    CHECK(fields[1] == "");  // ungrouped size stays empty
    CHECK(fields[2] == "pine");
    CHECK(fields[3] == "hgm");
    CHECK(fields[7] == "1");
}
