#include "standgp/standgp.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace {

using nlohmann::json;
using namespace standgp;

// exit codes: 0 ok, 2 bad input, 3 training failed, 4 prediction failed,
// 5 evaluation failed
enum ExitCode { kOk = 0, kInputError = 2, kTrainingError = 3, kPredictionError = 4, kEvaluationError = 5 };

struct CommonArgs {
    std::string data;
    std::string model;
    std::string out;
    std::string config;
    std::string method;
    std::uint64_t seed = 0;
    bool seed_set = false;
    int jobs = 0;
};

RunConfig make_config(const CommonArgs& args) {
    RunConfig cfg;
    if (!args.config.empty()) cfg = RunConfig::load(args.config);
    if (!args.method.empty()) cfg.method = parse_method(args.method);
    if (args.seed_set) cfg.seed = args.seed;
    if (args.jobs > 0) cfg.jobs = args.jobs;
    cfg.mcmc.seed = cfg.seed;
    cfg.synth.seed = cfg.seed;
    return cfg;
}

std::vector<std::string> csv_comments(const RunConfig& cfg, const std::string& command) {
    return {
        std::string("standgp ") + kVersion,
        "command=" + command,
        "config_hash=" + cfg.hash_hex(),
        "seed=" + std::to_string(cfg.seed),
        "bias_pct=100*(predicted-observed)/mean(observed); positive means overestimation",
    };
}

// timing is printed to stdout only, so metadata files are identical across
// reruns with the same config and seed
void write_metadata(const std::string& path, json meta) {
    meta["version"] = kVersion;
    std::ofstream out(path);
    if (!out) throw InputError("cannot write metadata file: " + path);
    out << meta.dump(2) << "\n";
    if (!out) throw InputError("write failed: " + path);
}

class Timer {
public:
    double ms() const {
        return std::chrono::duration<double, std::milli>(
                   std::chrono::steady_clock::now() - start_)
            .count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

int cmd_validate(const CommonArgs& args) {
    const Dataset ds = load_dataset(args.data);
    std::printf("plots: %ld\n", static_cast<long>(ds.n_plots()));
    std::printf("predictors: %ld\n", static_cast<long>(ds.n_predictors()));

    const auto stats = standardize(ds.x).second;
    if (stats.zero_variance_cols.empty()) {
        std::printf("zero-variance predictors: none\n");
    } else {
        std::printf("zero-variance predictors:");
        for (Eigen::Index c : stats.zero_variance_cols)
            std::printf(" %s", ds.predictor_names[static_cast<std::size_t>(c)].c_str());
        std::printf("\n");
    }
    std::printf("species zero fraction:");
    for (int s = 0; s < kNumSpecies; ++s) {
        long zero = 0;
        for (Eigen::Index i = 0; i < ds.n_plots(); ++i) {
            bool all_zero = true;
            for (int k = 0; k < kAttributesPerSpecies; ++k)
                all_zero = all_zero && ds.y(i, attribute_index(s, k)) == 0.0;
            if (all_zero) ++zero;
        }
        std::printf(" %s %.3f", kSpeciesNames[static_cast<std::size_t>(s)].c_str(),
                    static_cast<double>(zero) / static_cast<double>(ds.n_plots()));
    }
    std::printf("\nok\n");
    return kOk;
}

int cmd_train(const CommonArgs& args) {
    const Timer timer;
    const RunConfig cfg = make_config(args);
    const Dataset ds = load_dataset(args.data);
    const TrainingSet ts = TrainingSet::from_dataset(ds);

    ModelFile mf;
    mf.method = cfg.method;
    json meta;
    meta["command"] = "train";
    meta["method"] = method_name(cfg.method);
    meta["data"] = args.data;
    meta["config_hash"] = cfg.hash_hex();
    meta["seed"] = cfg.seed;
    meta["n_plots"] = static_cast<long>(ds.n_plots());
    meta["n_predictors"] = static_cast<long>(ds.n_predictors());

    switch (cfg.method) {
        case Method::gpr: {
            TrainedGprModel model = train(ts, cfg.gpr);
            meta["gamma_jitter"] = model.gamma_jitter;
            meta["warnings"] = model.warnings;
            mf.model = std::move(model);
            break;
        }
        case Method::knn: {
            const Eigen::Index n_select = std::min<Eigen::Index>(cfg.n_select, ds.x.cols());
            const SaSelection sel = sa_select_predictors(ts, n_select, cfg.sa, cfg.seed);
            std::vector<std::string> selected;
            for (Eigen::Index j : sel.subset)
                selected.push_back(ds.predictor_names[static_cast<std::size_t>(j)]);
            meta["selected_predictors"] = selected;
            meta["selection_objective"] = sel.objective;
            mf.model = msn_knn_fit(ts, sel.subset, cfg.knn_k, cfg.knn_weighted);
            break;
        }
        case Method::bayes: {
            mf.model = bayes_linear_fit(ts, cfg.mcmc);
            break;
        }
    }
    save_model(mf, args.out);
    write_metadata(args.out + ".json", std::move(meta));
    std::printf("trained %s model on %ld plots in %.1f ms -> %s\n", method_name(cfg.method).c_str(),
                static_cast<long>(ds.n_plots()), timer.ms(), args.out.c_str());
    return kOk;
}

int cmd_predict(const CommonArgs& args) {
    const Timer timer;
    RunConfig cfg = make_config(args);
    const ModelFile mf = load_model(args.model);
    cfg.method = mf.method;
    const Dataset ds = load_dataset(args.data);

    const std::vector<std::string>* model_predictors = nullptr;
    switch (mf.method) {
        case Method::gpr: model_predictors = &std::get<TrainedGprModel>(mf.model).predictor_names; break;
        case Method::knn: model_predictors = &std::get<MsnKnnModel>(mf.model).predictor_names; break;
        case Method::bayes: model_predictors = &std::get<BayesLinearModel>(mf.model).predictor_names; break;
    }
    if (*model_predictors != ds.predictor_names)
        throw InputError("predict: dataset predictors do not match the model");

    std::vector<PredictionRecord> records(static_cast<std::size_t>(ds.n_plots()));
    parallel_for(ds.n_plots(), cfg.jobs, [&](long i) {
        PredictionRecord rec;
        rec.plot_id = ds.plot_ids[static_cast<std::size_t>(i)];
        rec.method = method_name(mf.method);
        rec.observed = ds.y.row(i).transpose();
        rec.total_observed = total_points(rec.observed);
        const Vector x_star = ds.x.row(i).transpose();
        switch (mf.method) {
            case Method::gpr: {
                const auto& model = std::get<TrainedGprModel>(mf.model);
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
                rec.point = knn_predict(std::get<MsnKnnModel>(mf.model), x_star);
                rec.total_point = total_points(rec.point);
                break;
            }
            case Method::bayes: {
                const auto& model = std::get<BayesLinearModel>(mf.model);
                const BayesPrediction bp = bayes_linear_predict(
                    model, x_star, model.mcmc.seed ^ static_cast<std::uint64_t>(i));
                rec.point = bp.point;
                rec.lower = bp.lower;
                rec.upper = bp.upper;
                rec.total_point = total_points(rec.point);
                rec.warnings = bp.warnings;
                break;
            }
        }
        records[static_cast<std::size_t>(i)] = std::move(rec);
    });

    write_records_csv(args.out, records, csv_comments(cfg, "predict"));
    json meta;
    meta["command"] = "predict";
    meta["method"] = method_name(mf.method);
    meta["data"] = args.data;
    meta["model"] = args.model;
    meta["config_hash"] = cfg.hash_hex();
    meta["n_plots"] = static_cast<long>(ds.n_plots());
    write_metadata(args.out + ".json", std::move(meta));
    std::printf("predicted %ld plots in %.1f ms -> %s\n", static_cast<long>(ds.n_plots()),
                timer.ms(), args.out.c_str());
    return kOk;
}

int cmd_loocv(const CommonArgs& args) {
    const Timer timer;
    const RunConfig cfg = make_config(args);
    const Dataset ds = load_dataset(args.data);
    std::filesystem::create_directories(args.out);

    const LoocvResult result = loocv(ds, cfg.method, cfg.eval_config());
    const auto comments = csv_comments(cfg, "loocv");
    write_records_csv((std::filesystem::path(args.out) / "records.csv").string(),
                      result.records, comments);
    write_metrics_csv((std::filesystem::path(args.out) / "metrics.csv").string(),
                      result.metrics, comments);

    json meta;
    meta["command"] = "loocv";
    meta["method"] = method_name(cfg.method);
    meta["data"] = args.data;
    meta["config_hash"] = cfg.hash_hex();
    meta["seed"] = cfg.seed;
    meta["n_plots"] = static_cast<long>(ds.n_plots());
    meta["n_failures"] = result.failures.size();
    meta["failures"] = result.failures;
    if (!result.selected_subset.empty()) {
        std::vector<std::string> selected;
        for (Eigen::Index j : result.selected_subset)
            selected.push_back(ds.predictor_names[static_cast<std::size_t>(j)]);
        meta["selected_predictors"] = selected;
    }
    write_metadata((std::filesystem::path(args.out) / "metadata.json").string(), std::move(meta));

    std::printf("loocv finished in %.1f ms\n", timer.ms());
    if (const MetricsRow* row = result.metrics.find(method_name(cfg.method), "all", "mean"))
        std::printf("loocv %s: mean rmse %.2f%%, mean bias %.2f%%\n",
                    method_name(cfg.method).c_str(), row->rmse_pct, row->bias_pct);
    return kOk;
}

int cmd_size_experiment(const CommonArgs& args) {
    const Timer timer;
    // --method holds a comma-separated list here, parsed below rather than
    // by make_config
    CommonArgs base = args;
    base.method.clear();
    const RunConfig cfg = make_config(base);
    const Dataset ds = load_dataset(args.data);
    std::filesystem::create_directories(args.out);

    std::vector<Method> methods;
    if (args.method.empty()) {
        methods.push_back(cfg.method);
    } else {
        std::istringstream ss(args.method);
        std::string tok;
        while (std::getline(ss, tok, ',')) methods.push_back(parse_method(tok));
    }

    const SizeExperimentResult result =
        size_experiment(ds, cfg.sizes, cfg.reps, methods, cfg.eval_config());
    const auto comments = csv_comments(cfg, "size-experiment");
    write_records_csv((std::filesystem::path(args.out) / "records.csv").string(),
                      result.records, comments);
    write_metrics_csv((std::filesystem::path(args.out) / "metrics.csv").string(),
                      result.metrics, comments);

    json meta;
    meta["command"] = "size-experiment";
    meta["data"] = args.data;
    meta["config_hash"] = cfg.hash_hex();
    meta["seed"] = cfg.seed;
    meta["reps"] = cfg.reps;
    meta["sizes"] = cfg.sizes;
    meta["n_failures"] = result.failures.size();
    write_metadata((std::filesystem::path(args.out) / "metadata.json").string(), std::move(meta));
    std::printf("size experiment: %zu records, %zu failures in %.1f ms -> %s\n",
                result.records.size(), result.failures.size(), timer.ms(), args.out.c_str());
    return kOk;
}

int cmd_synth(const CommonArgs& args) {
    const Timer timer;
    const RunConfig cfg = make_config(args);
    const Dataset ds = generate_synthetic(cfg.synth);
    save_dataset(ds, args.out, csv_comments(cfg, "synth"));
    json meta;
    meta["command"] = "synth";
    meta["config_hash"] = cfg.hash_hex();
    meta["seed"] = cfg.synth.seed;
    meta["n_plots"] = static_cast<long>(ds.n_plots());
    meta["n_predictors"] = static_cast<long>(ds.n_predictors());
    meta["mode"] = cfg.synth.mode == SynthMode::surface ? "surface" : "gp";
    write_metadata(args.out + ".json", std::move(meta));
    std::printf("wrote %ld synthetic plots in %.1f ms -> %s\n", static_cast<long>(ds.n_plots()),
                timer.ms(), args.out.c_str());
    return kOk;
}

int run_guarded(const std::function<int()>& body, ExitCode numerical_default) {
    try {
        return body();
    } catch (const InputError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kInputError;
    } catch (const TrainingError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kTrainingError;
    } catch (const PredictionError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kPredictionError;
    } catch (const EvaluationError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kEvaluationError;
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return numerical_default;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return numerical_default;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Species-specific stand attribute estimation from plot metrics"};
    app.require_subcommand(1);

    CommonArgs args;
    auto add_common = [&](CLI::App* cmd, bool with_config = true) {
        if (with_config) cmd->add_option("--config", args.config, "run configuration file");
        cmd->add_option("--seed", args.seed, "random seed")->each([&](const std::string&) {
            args.seed_set = true;
        });
        cmd->add_option("--jobs", args.jobs, "worker threads");
    };

    CLI::App* validate = app.add_subcommand("validate", "check a dataset file");
    validate->add_option("--data", args.data, "dataset csv")->required();

    CLI::App* train = app.add_subcommand("train", "fit a model and save it");
    train->add_option("--data", args.data, "training dataset csv")->required();
    train->add_option("--out", args.out, "model file to write")->required();
    train->add_option("--method", args.method, "gpr, knn, or bayes");
    add_common(train);

    CLI::App* predict = app.add_subcommand("predict", "predict plots with a saved model");
    predict->add_option("--model", args.model, "model file")->required();
    predict->add_option("--data", args.data, "dataset csv to predict")->required();
    predict->add_option("--out", args.out, "predictions csv to write")->required();
    add_common(predict);

    CLI::App* cv = app.add_subcommand("loocv", "leave-one-out cross validation");
    cv->add_option("--data", args.data, "dataset csv")->required();
    cv->add_option("--out", args.out, "output directory")->required();
    cv->add_option("--method", args.method, "gpr, knn, or bayes");
    add_common(cv);

    CLI::App* sizeexp = app.add_subcommand("size-experiment",
                                           "accuracy as a function of training set size");
    sizeexp->add_option("--data", args.data, "dataset csv")->required();
    sizeexp->add_option("--out", args.out, "output directory")->required();
    sizeexp->add_option("--method", args.method, "comma-separated methods");
    add_common(sizeexp);

    CLI::App* synth = app.add_subcommand("synth", "generate a synthetic dataset");
    synth->add_option("--out", args.out, "dataset csv to write")->required();
    add_common(synth);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kInputError;
    }

    if (validate->parsed()) return run_guarded([&] { return cmd_validate(args); }, kInputError);
    if (train->parsed()) return run_guarded([&] { return cmd_train(args); }, kTrainingError);
    if (predict->parsed()) return run_guarded([&] { return cmd_predict(args); }, kPredictionError);
    if (cv->parsed()) return run_guarded([&] { return cmd_loocv(args); }, kEvaluationError);
    if (sizeexp->parsed())
        return run_guarded([&] { return cmd_size_experiment(args); }, kEvaluationError);
    if (synth->parsed()) return run_guarded([&] { return cmd_synth(args); }, kInputError);
    return kInputError;
}
