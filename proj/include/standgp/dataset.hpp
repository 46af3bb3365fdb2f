#pragma once

#include "standgp/types.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <system_error>
#include <unordered_set>
#include <vector>

namespace standgp {

/// Plot-level table in the canonical schema:
///   plot_id, pine_hgm..pine_v, spruce_hgm..spruce_v, decid_hgm..decid_v, <predictors>
/// Attribute columns are kept in canonical order; predictor columns are kept
/// sorted by name so that column permutations in the file do not matter.
/// Units: hgm m, dgm cm, n stems/ha, ba m2/ha, v m3/ha.
struct Dataset {
    std::vector<std::string> plot_ids;
    Matrix y;  // n x 15
    Matrix x;  // n x n_predictors
    std::vector<std::string> predictor_names;

    Eigen::Index n_plots() const { return y.rows(); }
    Eigen::Index n_predictors() const { return x.cols(); }

    Dataset subset(const std::vector<Eigen::Index>& rows) const {
        Dataset out;
        out.predictor_names = predictor_names;
        out.y.resize(static_cast<Eigen::Index>(rows.size()), y.cols());
        out.x.resize(static_cast<Eigen::Index>(rows.size()), x.cols());
        out.plot_ids.reserve(rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            out.y.row(static_cast<Eigen::Index>(i)) = y.row(rows[i]);
            out.x.row(static_cast<Eigen::Index>(i)) = x.row(rows[i]);
            out.plot_ids.push_back(plot_ids[static_cast<std::size_t>(rows[i])]);
        }
        return out;
    }
};

/// Per-column standardization statistics, estimated on training data.
struct StandardizeStats {
    Vector mean;
    Vector sd;  // sample sd (n-1 denominator); flagged columns keep their raw value
    std::vector<Eigen::Index> zero_variance_cols;
};

namespace detail {

inline bool is_zero_variance(double sd, double mean) {
    return !(sd > 1e-12 * (std::abs(mean) + 1.0));
}

/// Shortest round-trip decimal formatting.
inline std::string format_double(double v) {
    char buf[40];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find(',', start);
        std::string field = line.substr(start, pos == std::string::npos ? pos : pos - start);
        const auto b = field.find_first_not_of(" \t\r");
        const auto e = field.find_last_not_of(" \t\r");
        fields.push_back(b == std::string::npos ? std::string() : field.substr(b, e - b + 1));
        if (pos == std::string::npos) break;
        start = pos + 1;
    }
    return fields;
}

inline double parse_cell(const std::string& cell, int line_no, const std::string& col) {
    double v = 0.0;
    const char* first = cell.data();
    const char* last = cell.data() + cell.size();
    auto res = std::from_chars(first, last, v);
    if (res.ec != std::errc() || res.ptr != last)
        throw InputError("line " + std::to_string(line_no) + ", column '" + col +
                         "': non-numeric cell '" + cell + "'");
    if (!std::isfinite(v))
        throw InputError("line " + std::to_string(line_no) + ", column '" + col +
                         "': non-finite value");
    return v;
}

}  // namespace detail

inline Dataset load_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open dataset file: " + path);

    std::string line;
    int line_no = 0;
    // header (comment lines beginning with '#' are skipped)
    std::vector<std::string> header;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        header = detail::split_csv_line(line);
        break;
    }
    if (header.empty()) throw InputError("empty dataset file: " + path);

    const auto attr_names = attribute_names();
    Eigen::Index id_col = -1;
    std::vector<Eigen::Index> attr_cols(kNumAttributes, -1);
    std::vector<std::pair<std::string, Eigen::Index>> predictor_cols;
    for (Eigen::Index c = 0; c < static_cast<Eigen::Index>(header.size()); ++c) {
        const std::string& name = header[static_cast<std::size_t>(c)];
        if (name == "plot_id") {
            id_col = c;
            continue;
        }
        const auto it = std::find(attr_names.begin(), attr_names.end(), name);
        if (it != attr_names.end()) {
            attr_cols[static_cast<std::size_t>(it - attr_names.begin())] = c;
        } else {
            predictor_cols.emplace_back(name, c);
        }
    }
    if (id_col < 0) throw InputError("missing column 'plot_id'");
    for (int a = 0; a < kNumAttributes; ++a)
        if (attr_cols[static_cast<std::size_t>(a)] < 0)
            throw InputError("missing column '" + attr_names[static_cast<std::size_t>(a)] + "'");
    if (predictor_cols.empty()) throw InputError("dataset has no predictor columns");
    std::sort(predictor_cols.begin(), predictor_cols.end());
    for (std::size_t i = 1; i < predictor_cols.size(); ++i)
        if (predictor_cols[i].first == predictor_cols[i - 1].first)
            throw InputError("duplicate column '" + predictor_cols[i].first + "'");

    std::vector<std::string> plot_ids;
    std::vector<std::vector<double>> y_rows, x_rows;
    std::unordered_set<std::string> seen_ids;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        const auto fields = detail::split_csv_line(line);
        if (fields.size() != header.size())
            throw InputError("line " + std::to_string(line_no) + ": expected " +
                             std::to_string(header.size()) + " fields, got " +
                             std::to_string(fields.size()));
        const std::string& id = fields[static_cast<std::size_t>(id_col)];
        if (id.empty()) throw InputError("line " + std::to_string(line_no) + ": empty plot_id");
        if (!seen_ids.insert(id).second)
            throw InputError("line " + std::to_string(line_no) + ": duplicate plot_id '" + id +
                             "'");
        std::vector<double> yr(kNumAttributes), xr(predictor_cols.size());
        for (int a = 0; a < kNumAttributes; ++a) {
            const auto& name = attr_names[static_cast<std::size_t>(a)];
            const double v = detail::parse_cell(
                fields[static_cast<std::size_t>(attr_cols[static_cast<std::size_t>(a)])], line_no,
                name);
            if (v < 0.0)
                throw InputError("line " + std::to_string(line_no) + ", column '" + name +
                                 "': negative attribute value");
            yr[static_cast<std::size_t>(a)] = v;
        }
        for (std::size_t p = 0; p < predictor_cols.size(); ++p)
            xr[p] = detail::parse_cell(fields[static_cast<std::size_t>(predictor_cols[p].second)],
                                       line_no, predictor_cols[p].first);
        plot_ids.push_back(id);
        y_rows.push_back(std::move(yr));
        x_rows.push_back(std::move(xr));
    }
    if (plot_ids.empty()) throw InputError("dataset has no data rows: " + path);

    Dataset ds;
    ds.plot_ids = std::move(plot_ids);
    for (const auto& pc : predictor_cols) ds.predictor_names.push_back(pc.first);
    const Eigen::Index n = static_cast<Eigen::Index>(ds.plot_ids.size());
    ds.y.resize(n, kNumAttributes);
    ds.x.resize(n, static_cast<Eigen::Index>(predictor_cols.size()));
    for (Eigen::Index i = 0; i < n; ++i) {
        for (int a = 0; a < kNumAttributes; ++a)
            ds.y(i, a) = y_rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(a)];
        for (Eigen::Index p = 0; p < ds.x.cols(); ++p)
            ds.x(i, p) = x_rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(p)];
    }
    return ds;
}

/// Writes the canonical CSV. `comments` become '#'-prefixed header lines.
inline void save_dataset(const Dataset& ds, const std::string& path,
                         const std::vector<std::string>& comments = {}) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write dataset file: " + path);
    for (const auto& c : comments) out << "# " << c << "\n";
    out << "plot_id";
    for (const auto& a : attribute_names()) out << "," << a;
    for (const auto& p : ds.predictor_names) out << "," << p;
    out << "\n";
    for (Eigen::Index i = 0; i < ds.n_plots(); ++i) {
        out << ds.plot_ids[static_cast<std::size_t>(i)];
        for (Eigen::Index a = 0; a < ds.y.cols(); ++a)
            out << "," << detail::format_double(ds.y(i, a));
        for (Eigen::Index p = 0; p < ds.x.cols(); ++p)
            out << "," << detail::format_double(ds.x(i, p));
        out << "\n";
    }
    if (!out) throw InputError("write failed: " + path);
}

/// Per-column z-score using freshly estimated stats. Zero-variance columns map
/// to 0 and are flagged.
inline std::pair<Matrix, StandardizeStats> standardize(const Matrix& x) {
    const Eigen::Index n = x.rows();
    StandardizeStats stats;
    stats.mean = x.colwise().mean();
    stats.sd.resize(x.cols());
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
        const double var =
            n > 1 ? (x.col(c).array() - stats.mean(c)).square().sum() / static_cast<double>(n - 1)
                  : 0.0;
        stats.sd(c) = std::sqrt(var);
        if (detail::is_zero_variance(stats.sd(c), stats.mean(c)))
            stats.zero_variance_cols.push_back(c);
    }
    Matrix out(n, x.cols());
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
        if (detail::is_zero_variance(stats.sd(c), stats.mean(c)))
            out.col(c).setZero();
        else
            out.col(c) = (x.col(c).array() - stats.mean(c)) / stats.sd(c);
    }
    return {std::move(out), std::move(stats)};
}

/// Applies training stats to new data (test data must reuse training stats).
inline Matrix standardize(const Matrix& x, const StandardizeStats& stats) {
    if (x.cols() != stats.mean.size())
        throw InputError("standardize: column count does not match stats");
    Matrix out(x.rows(), x.cols());
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
        if (detail::is_zero_variance(stats.sd(c), stats.mean(c)))
            out.col(c).setZero();
        else
            out.col(c) = (x.col(c).array() - stats.mean(c)) / stats.sd(c);
    }
    return out;
}

}  // namespace standgp
