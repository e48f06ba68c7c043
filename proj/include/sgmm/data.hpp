#pragma once

// Balanced longitudinal panels: container, long-format CSV ingestion and
// emission, and invariant checks.

#include <Eigen/Core>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace sgmm {

enum class OutcomeKind { Continuous, Binary };

/// n subjects observed at the same T occasions. Row i of every matrix is a
/// subject, column t-1 is occasion t. Time-invariant covariates are stored
/// as columns that are constant in t.
struct LongitudinalDataset {
    Eigen::MatrixXd outcomes;                 // n x T
    std::vector<Eigen::MatrixXd> covariates;  // one n x T matrix per covariate
    std::vector<std::string> covariate_names;
    std::vector<std::string> subject_ids;     // row labels, canonical order
    std::vector<std::string> time_labels;     // occasion labels, rank order

    int n_subjects() const { return static_cast<int>(outcomes.rows()); }
    int n_times() const { return static_cast<int>(outcomes.cols()); }
    int n_covariates() const { return static_cast<int>(covariates.size()); }

    int covariate_index(std::string_view name) const {
        for (std::size_t j = 0; j < covariate_names.size(); ++j)
            if (covariate_names[j] == name) return static_cast<int>(j);
        return -1;
    }

    bool operator==(const LongitudinalDataset& o) const {
        if (outcomes.rows() != o.outcomes.rows() || outcomes.cols() != o.outcomes.cols()) return false;
        if (outcomes != o.outcomes) return false;
        if (covariates.size() != o.covariates.size()) return false;
        for (std::size_t j = 0; j < covariates.size(); ++j)
            if (covariates[j].rows() != o.covariates[j].rows() ||
                covariates[j].cols() != o.covariates[j].cols() || covariates[j] != o.covariates[j])
                return false;
        return covariate_names == o.covariate_names && subject_ids == o.subject_ids &&
               time_labels == o.time_labels;
    }
};

class DataError : public std::runtime_error {
public:
    enum class Kind { EmptyInput, MissingColumn, MalformedRow, NonNumeric, DuplicateObservation, MissingCell };

    DataError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

/// Column bindings for long-format input. An empty covariate list selects
/// every column that is not the id, time or outcome column, in header order.
struct CsvSchema {
    std::string id_column = "id";
    std::string time_column = "time";
    std::string outcome_column = "y";
    std::vector<std::string> covariate_columns;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

// RFC 4180 style split of a single physical line; embedded newlines are not supported.
inline std::vector<std::string> split_csv_line(std::string_view line) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t k = 0; k < line.size(); ++k) {
        char c = line[k];
        if (quoted) {
            if (c == '"') {
                if (k + 1 < line.size() && line[k + 1] == '"') {
                    cur.push_back('"');
                    ++k;
                } else {
                    quoted = false;
                }
            } else {
                cur.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.emplace_back(trim(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    fields.emplace_back(trim(cur));
    return fields;
}

inline std::optional<double> parse_double(std::string_view s) {
    s = trim(s);
    if (s.empty()) return std::nullopt;
    if (s.front() == '+') s.remove_prefix(1);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
    return v;
}

inline std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

// Numeric labels sort numerically, anything else lexicographically.
inline void sort_labels(std::vector<std::string>& labels) {
    bool numeric = std::all_of(labels.begin(), labels.end(),
                               [](const std::string& s) { return parse_double(s).has_value(); });
    if (numeric) {
        std::stable_sort(labels.begin(), labels.end(), [](const std::string& a, const std::string& b) {
            return *parse_double(a) < *parse_double(b);
        });
    } else {
        std::sort(labels.begin(), labels.end());
    }
}

inline std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

}  // namespace detail

/// Reads a long-format panel (one row per subject-occasion). Subjects and
/// occasions are put in canonical sorted order, so the result does not depend
/// on row order in the source.
inline LongitudinalDataset load_csv(std::istream& in, const CsvSchema& schema = {}) {
    using detail::split_csv_line;
    using K = DataError::Kind;

    std::string line;
    long line_no = 0;
    std::vector<std::string> header;
    while (std::getline(in, line)) {
        ++line_no;
        if (!detail::trim(line).empty()) {
            header = split_csv_line(line);
            break;
        }
    }
    if (header.empty()) throw DataError(K::EmptyInput, "input is empty (no header line)");

    auto column = [&](const std::string& name) {
        auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) throw DataError(K::MissingColumn, "missing required column '" + name + "'");
        return static_cast<std::size_t>(it - header.begin());
    };
    const std::size_t id_col = column(schema.id_column);
    const std::size_t time_col = column(schema.time_column);
    const std::size_t y_col = column(schema.outcome_column);

    std::vector<std::string> cov_names = schema.covariate_columns;
    if (cov_names.empty()) {
        for (std::size_t c = 0; c < header.size(); ++c)
            if (c != id_col && c != time_col && c != y_col) cov_names.push_back(header[c]);
    }
    std::vector<std::size_t> cov_cols;
    for (const auto& name : cov_names) cov_cols.push_back(column(name));

    struct Cell {
        double y;
        std::vector<double> x;
        long line;
    };
    // subject -> time label -> cell
    std::map<std::string, std::map<std::string, Cell>> rows;

    while (std::getline(in, line)) {
        ++line_no;
        if (detail::trim(line).empty()) continue;
        auto fields = split_csv_line(line);
        if (fields.size() != header.size())
            throw DataError(K::MalformedRow, "row " + std::to_string(line_no) + ": expected " +
                                                 std::to_string(header.size()) + " fields, found " +
                                                 std::to_string(fields.size()));
        auto number = [&](std::size_t c) {
            auto v = detail::parse_double(fields[c]);
            if (!v)
                throw DataError(K::NonNumeric, "row " + std::to_string(line_no) + ", column '" + header[c] +
                                                   "': cannot parse '" + fields[c] + "' as a number");
            return *v;
        };
        Cell cell{number(y_col), {}, line_no};
        for (auto c : cov_cols) cell.x.push_back(number(c));
        const std::string& id = fields[id_col];
        const std::string& time = fields[time_col];
        if (id.empty() || time.empty())
            throw DataError(K::MalformedRow, "row " + std::to_string(line_no) + ": empty id or time");
        auto [it, inserted] = rows[id].emplace(time, std::move(cell));
        if (!inserted)
            throw DataError(K::DuplicateObservation, "row " + std::to_string(line_no) + ": subject '" + id +
                                                         "' already has an observation at time '" + time +
                                                         "' (row " + std::to_string(it->second.line) + ")");
    }
    if (rows.empty()) throw DataError(K::EmptyInput, "input has a header but no observations");

    std::vector<std::string> time_labels;
    for (const auto& [id, cells] : rows)
        for (const auto& [t, cell] : cells)
            if (std::find(time_labels.begin(), time_labels.end(), t) == time_labels.end()) time_labels.push_back(t);
    detail::sort_labels(time_labels);

    std::vector<std::string> subject_ids;
    for (const auto& [id, cells] : rows) {
        subject_ids.push_back(id);
        for (const auto& t : time_labels)
            if (!cells.count(t))
                throw DataError(K::MissingCell, "subject '" + id + "' has no observation at time '" + t + "'");
    }
    detail::sort_labels(subject_ids);

    const Eigen::Index n = static_cast<Eigen::Index>(subject_ids.size());
    const Eigen::Index T = static_cast<Eigen::Index>(time_labels.size());
    LongitudinalDataset ds;
    ds.outcomes.resize(n, T);
    ds.covariates.assign(cov_names.size(), Eigen::MatrixXd(n, T));
    ds.covariate_names = cov_names;
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& cells = rows.at(subject_ids[i]);
        for (Eigen::Index t = 0; t < T; ++t) {
            const Cell& cell = cells.at(time_labels[t]);
            ds.outcomes(i, t) = cell.y;
            for (std::size_t j = 0; j < cov_names.size(); ++j) ds.covariates[j](i, t) = cell.x[j];
        }
    }
    ds.subject_ids = std::move(subject_ids);
    ds.time_labels = std::move(time_labels);
    return ds;
}

inline LongitudinalDataset load_csv_string(const std::string& text, const CsvSchema& schema = {}) {
    std::istringstream in(text);
    return load_csv(in, schema);
}

/// Writes the canonical long-format CSV; numbers use the shortest
/// representation that parses back to the same double.
inline void emit_csv(std::ostream& out, const LongitudinalDataset& ds) {
    out << "id,time,y";
    for (const auto& name : ds.covariate_names) out << ',' << detail::csv_field(name);
    out << '\n';
    for (int i = 0; i < ds.n_subjects(); ++i) {
        std::string id = i < static_cast<int>(ds.subject_ids.size()) ? ds.subject_ids[i] : std::to_string(i + 1);
        for (int t = 0; t < ds.n_times(); ++t) {
            std::string time = t < static_cast<int>(ds.time_labels.size()) ? ds.time_labels[t] : std::to_string(t + 1);
            out << detail::csv_field(id) << ',' << detail::csv_field(time) << ','
                << detail::format_double(ds.outcomes(i, t));
            for (const auto& x : ds.covariates) out << ',' << detail::format_double(x(i, t));
            out << '\n';
        }
    }
}

inline std::string emit_csv_string(const LongitudinalDataset& ds) {
    std::ostringstream out;
    emit_csv(out, ds);
    return out.str();
}

/// Fills default subject ids 1..n and time labels 1..T where absent.
inline void assign_default_labels(LongitudinalDataset& ds) {
    if (static_cast<int>(ds.subject_ids.size()) != ds.n_subjects()) {
        ds.subject_ids.clear();
        for (int i = 0; i < ds.n_subjects(); ++i) ds.subject_ids.push_back(std::to_string(i + 1));
    }
    if (static_cast<int>(ds.time_labels.size()) != ds.n_times()) {
        ds.time_labels.clear();
        for (int t = 0; t < ds.n_times(); ++t) ds.time_labels.push_back(std::to_string(t + 1));
    }
}

/// Every violated invariant, not just the first. Empty means valid.
inline std::vector<std::string> validate(const LongitudinalDataset& ds, OutcomeKind kind) {
    std::vector<std::string> v;
    const auto n = ds.outcomes.rows();
    const auto T = ds.outcomes.cols();
    if (n < 1) v.push_back("dataset has no subjects");
    if (T < 2) v.push_back("T must be >= 2 (found " + std::to_string(T) + ")");
    if (ds.covariate_names.size() != ds.covariates.size())
        v.push_back("covariate name count does not match covariate count");
    for (std::size_t j = 0; j < ds.covariates.size(); ++j) {
        const auto& x = ds.covariates[j];
        std::string name = j < ds.covariate_names.size() ? ds.covariate_names[j] : std::to_string(j);
        if (x.rows() != n || x.cols() != T)
            v.push_back("covariate '" + name + "' is not " + std::to_string(n) + "x" + std::to_string(T));
        else if (!x.allFinite())
            v.push_back("covariate '" + name + "' has missing or non-finite values");
    }
    if (!ds.outcomes.allFinite()) v.push_back("outcome has missing or non-finite values");
    if (kind == OutcomeKind::Binary) {
        bool bad = false;
        for (Eigen::Index i = 0; i < n && !bad; ++i)
            for (Eigen::Index t = 0; t < T && !bad; ++t) {
                double y = ds.outcomes(i, t);
                bad = !(y == 0.0 || y == 1.0);
            }
        if (bad) v.push_back("non-binary outcome: binary models require every outcome to be 0 or 1");
    }
    return v;
}

}  // namespace sgmm
