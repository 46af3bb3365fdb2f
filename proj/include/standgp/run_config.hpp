#pragma once

#include "standgp/dataset.hpp"
#include "standgp/evaluation.hpp"
#include "standgp/synthetic.hpp"
#include "standgp/types.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace standgp {

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

inline double config_double(const std::string& v, const std::string& key) {
    try {
        return parse_cell(v, 0, key);
    } catch (const Error&) {
        throw InputError("config: invalid number for " + key + ": '" + v + "'");
    }
}

inline long config_long(const std::string& v, const std::string& key) {
    long out = 0;
    auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc() || res.ptr != v.data() + v.size())
        throw InputError("config: invalid integer for " + key + ": '" + v + "'");
    return out;
}

inline std::uint64_t config_u64(const std::string& v, const std::string& key) {
    std::uint64_t out = 0;
    auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc() || res.ptr != v.data() + v.size())
        throw InputError("config: invalid unsigned integer for " + key + ": '" + v + "'");
    return out;
}

inline bool config_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw InputError("config: invalid boolean for " + key + ": '" + v + "'");
}

/// "20:400:20" (inclusive range) or a comma-separated list.
inline std::vector<int> parse_sizes(const std::string& v) {
    std::vector<int> sizes;
    if (v.find(':') != std::string::npos) {
        std::istringstream ss(v);
        std::string a, b, c;
        if (!std::getline(ss, a, ':') || !std::getline(ss, b, ':') || !std::getline(ss, c))
            throw InputError("config: sizes range must be first:last:step");
        const long first = config_long(trim(a), "sizes");
        const long last = config_long(trim(b), "sizes");
        const long step = config_long(trim(c), "sizes");
        if (step <= 0 || last < first) throw InputError("config: invalid sizes range");
        for (long s = first; s <= last; s += step) sizes.push_back(static_cast<int>(s));
    } else {
        std::istringstream ss(v);
        std::string tok;
        while (std::getline(ss, tok, ','))
            sizes.push_back(static_cast<int>(config_long(trim(tok), "sizes")));
    }
    if (sizes.empty()) throw InputError("config: empty sizes list");
    return sizes;
}

}  // namespace detail

/// Everything a run needs beyond the dataset itself. Loaded from an INI-style
/// file with strict key checking; the canonical serialization below feeds the
/// config hash written into output headers.
struct RunConfig {
    Method method = Method::gpr;
    std::uint64_t seed = 0;
    int jobs = 1;

    GprConfig gpr;
    int knn_k = 5;
    Eigen::Index n_select = 10;
    bool knn_weighted = false;
    SaSchedule sa;
    McmcSettings mcmc;
    SynthConfig synth;
    std::vector<int> sizes;
    int reps = 2000;

    RunConfig() {
        for (int s = 20; s <= 400; s += 20) sizes.push_back(s);
    }

    EvalConfig eval_config() const {
        EvalConfig cfg;
        cfg.gpr = gpr;
        cfg.knn_k = knn_k;
        cfg.knn_weighted = knn_weighted;
        cfg.n_select = n_select;
        cfg.sa = sa;
        cfg.mcmc = mcmc;
        cfg.seed = seed;
        cfg.jobs = jobs;
        return cfg;
    }

    std::string canonical() const {
        std::ostringstream out;
        out << "run.method=" << method_name(method) << "\n";
        out << "run.seed=" << seed << "\n";
        out << "gpr.length_scale=" << detail::format_double(gpr.kernel.length_scale) << "\n";
        out << "gpr.signal_sigma=" << detail::format_double(gpr.kernel.signal_sigma) << "\n";
        out << "gpr.error_scale=" << detail::format_double(gpr.error_scale) << "\n";
        out << "gpr.center_targets=" << (gpr.center_targets ? "true" : "false") << "\n";
        out << "knn.k=" << knn_k << "\n";
        out << "knn.n_select=" << n_select << "\n";
        out << "knn.weighted=" << (knn_weighted ? "true" : "false") << "\n";
        out << "sa.init_samples=" << sa.init_samples << "\n";
        out << "sa.proposals_per_temp=" << sa.proposals_per_temp << "\n";
        out << "sa.max_temps=" << sa.max_temps << "\n";
        out << "sa.max_unimproved=" << sa.max_unimproved_temps << "\n";
        out << "sa.cooling=" << detail::format_double(sa.cooling) << "\n";
        out << "mcmc.iterations=" << mcmc.n_iterations << "\n";
        out << "mcmc.burn_in=" << mcmc.burn_in << "\n";
        out << "mcmc.proposal_scale=" << detail::format_double(mcmc.initial_proposal_scale)
            << "\n";
        out << "mcmc.target_acceptance=" << detail::format_double(mcmc.target_acceptance) << "\n";
        out << "synth.n_plots=" << synth.n_plots << "\n";
        out << "synth.n_predictors=" << synth.n_predictors << "\n";
        out << "synth.noise_scale=" << detail::format_double(synth.noise_scale) << "\n";
        out << "synth.zero_inflation_pine=" << detail::format_double(synth.zero_inflation[0])
            << "\n";
        out << "synth.zero_inflation_spruce=" << detail::format_double(synth.zero_inflation[1])
            << "\n";
        out << "synth.zero_inflation_decid=" << detail::format_double(synth.zero_inflation[2])
            << "\n";
        out << "synth.latent_smoothness=" << detail::format_double(synth.latent_smoothness)
            << "\n";
        out << "synth.mode=" << (synth.mode == SynthMode::surface ? "surface" : "gp") << "\n";
        out << "experiment.sizes=";
        for (std::size_t i = 0; i < sizes.size(); ++i) out << (i ? "," : "") << sizes[i];
        out << "\n";
        out << "experiment.reps=" << reps << "\n";
        return out.str();
    }

    /// FNV-1a over the canonical serialization.
    std::uint64_t hash() const {
        std::uint64_t h = 14695981039346656037ull;
        for (unsigned char c : canonical()) {
            h ^= c;
            h *= 1099511628211ull;
        }
        return h;
    }

    std::string hash_hex() const {
        char buf[17];
        auto res = std::to_chars(buf, buf + 16, hash(), 16);
        return std::string(buf, res.ptr);
    }

    void apply(const std::string& section, const std::string& key, const std::string& value) {
        const std::string where = section + "." + key;
        if (section == "run") {
            if (key == "method") method = parse_method(value);
            else if (key == "seed") seed = detail::config_u64(value, where);
            else if (key == "jobs") jobs = static_cast<int>(detail::config_long(value, where));
            else throw InputError("config: unknown key " + where);
        } else if (section == "gpr") {
            if (key == "length_scale") gpr.kernel.length_scale = detail::config_double(value, where);
            else if (key == "signal_sigma") gpr.kernel.signal_sigma = detail::config_double(value, where);
            else if (key == "error_scale") gpr.error_scale = detail::config_double(value, where);
            else if (key == "center_targets") gpr.center_targets = detail::config_bool(value, where);
            else throw InputError("config: unknown key " + where);
        } else if (section == "knn") {
            if (key == "k") knn_k = static_cast<int>(detail::config_long(value, where));
            else if (key == "n_select") n_select = detail::config_long(value, where);
            else if (key == "weighted") knn_weighted = detail::config_bool(value, where);
            else throw InputError("config: unknown key " + where);
        } else if (section == "sa") {
            if (key == "init_samples") sa.init_samples = static_cast<int>(detail::config_long(value, where));
            else if (key == "proposals_per_temp") sa.proposals_per_temp = static_cast<int>(detail::config_long(value, where));
            else if (key == "max_temps") sa.max_temps = static_cast<int>(detail::config_long(value, where));
            else if (key == "max_unimproved") sa.max_unimproved_temps = static_cast<int>(detail::config_long(value, where));
            else if (key == "cooling") sa.cooling = detail::config_double(value, where);
            else throw InputError("config: unknown key " + where);
        } else if (section == "mcmc") {
            if (key == "iterations") mcmc.n_iterations = static_cast<int>(detail::config_long(value, where));
            else if (key == "burn_in") mcmc.burn_in = static_cast<int>(detail::config_long(value, where));
            else if (key == "proposal_scale") mcmc.initial_proposal_scale = detail::config_double(value, where);
            else if (key == "target_acceptance") mcmc.target_acceptance = detail::config_double(value, where);
            else throw InputError("config: unknown key " + where);
        } else if (section == "synth") {
            if (key == "n_plots") synth.n_plots = detail::config_long(value, where);
            else if (key == "n_predictors") synth.n_predictors = detail::config_long(value, where);
            else if (key == "noise_scale") synth.noise_scale = detail::config_double(value, where);
            else if (key == "zero_inflation_pine") synth.zero_inflation[0] = detail::config_double(value, where);
            else if (key == "zero_inflation_spruce") synth.zero_inflation[1] = detail::config_double(value, where);
            else if (key == "zero_inflation_decid") synth.zero_inflation[2] = detail::config_double(value, where);
            else if (key == "latent_smoothness") synth.latent_smoothness = detail::config_double(value, where);
            else if (key == "mode") {
                if (value == "surface") synth.mode = SynthMode::surface;
                else if (value == "gp") synth.mode = SynthMode::gp;
                else throw InputError("config: synth.mode must be surface or gp");
            } else throw InputError("config: unknown key " + where);
        } else if (section == "experiment") {
            if (key == "sizes") sizes = detail::parse_sizes(value);
            else if (key == "reps") reps = static_cast<int>(detail::config_long(value, where));
            else throw InputError("config: unknown key " + where);
        } else {
            throw InputError("config: unknown section [" + section + "]");
        }
    }

    static RunConfig load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw InputError("cannot open config file: " + path);
        RunConfig cfg;
        std::string line, section;
        int line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            const std::string t = detail::trim(line);
            if (t.empty() || t[0] == '#' || t[0] == ';') continue;
            if (t.front() == '[') {
                if (t.back() != ']')
                    throw InputError("config line " + std::to_string(line_no) +
                                     ": malformed section header");
                section = detail::trim(t.substr(1, t.size() - 2));
                continue;
            }
            const auto eq = t.find('=');
            if (eq == std::string::npos)
                throw InputError("config line " + std::to_string(line_no) + ": expected key=value");
            if (section.empty())
                throw InputError("config line " + std::to_string(line_no) +
                                 ": key outside a section");
            try {
                cfg.apply(section, detail::trim(t.substr(0, eq)), detail::trim(t.substr(eq + 1)));
            } catch (const InputError& e) {
                throw InputError("config line " + std::to_string(line_no) + ": " + e.what());
            }
        }
        return cfg;
    }
};

}  // namespace standgp
