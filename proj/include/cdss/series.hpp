#pragma once

// Multivariate series container, window statistics, lag extension and CSV I/O.

#include "cdss/common.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace cdss {

/// A T x d block of finite measurements with one name per column.
class MultivariateSeries {
public:
    MultivariateSeries() = default;

    MultivariateSeries(Matrix values, std::vector<std::string> var_names, double sample_interval = 1.0)
        : values_(std::move(values)), names_(std::move(var_names)), sample_interval_(sample_interval) {
        require(values_.rows() >= 1, "invalid_series", "series needs at least one sample");
        require(values_.cols() >= 1, "invalid_series", "series needs at least one variable");
        require(static_cast<Index>(names_.size()) == values_.cols(), "invalid_series",
                concat("expected ", values_.cols(), " variable names, got ", names_.size()));
        std::set<std::string> seen(names_.begin(), names_.end());
        require(seen.size() == names_.size(), "invalid_series", "variable names must be distinct");
        require(values_.allFinite(), "invalid_series", "series contains non-finite values");
        require(sample_interval_ > 0.0 && std::isfinite(sample_interval_), "invalid_series",
                "sample interval must be positive");
    }

    const Matrix& values() const noexcept { return values_; }
    const std::vector<std::string>& var_names() const noexcept { return names_; }
    double sample_interval() const noexcept { return sample_interval_; }
    Index length() const noexcept { return values_.rows(); }
    Index dims() const noexcept { return values_.cols(); }

    Index index_of(const std::string& name) const {
        auto it = std::find(names_.begin(), names_.end(), name);
        require(it != names_.end(), "unknown_variable", concat("variable '", name, "' not in series"));
        return static_cast<Index>(it - names_.begin());
    }

    /// Rows [begin, end) as a new series with the same names.
    MultivariateSeries slice(Index begin, Index end) const {
        require(begin >= 0 && begin < end && end <= length(), "invalid_range",
                concat("slice [", begin, ", ", end, ") outside series of length ", length()));
        return MultivariateSeries(values_.middleRows(begin, end - begin), names_, sample_interval_);
    }

    /// Copy restricted to the given columns, in the given order.
    MultivariateSeries select(const std::vector<Index>& columns) const {
        Matrix out(length(), static_cast<Index>(columns.size()));
        std::vector<std::string> names;
        for (std::size_t c = 0; c < columns.size(); ++c) {
            require(columns[c] >= 0 && columns[c] < dims(), "invalid_range", "column index out of range");
            out.col(static_cast<Index>(c)) = values_.col(columns[c]);
            names.push_back(names_[static_cast<std::size_t>(columns[c])]);
        }
        return MultivariateSeries(std::move(out), std::move(names), sample_interval_);
    }

private:
    Matrix values_;
    std::vector<std::string> names_;
    double sample_interval_ = 1.0;
};

inline constexpr double kStdFloor = 1e-8;

struct NormalizationStats {
    Vector mean;
    Vector std;
    // true where the raw std fell below the floor (flat sensor)
    std::vector<bool> floored;

    Index dims() const noexcept { return mean.size(); }
};

struct NormalizedWindow {
    Matrix values;
    NormalizationStats stats;
};

/// Column-wise arithmetic mean of raw values.
inline Vector window_mean(const Eigen::Ref<const Matrix>& window) {
    require(window.rows() >= 1, "empty_window", "window_mean needs at least one row");
    return window.colwise().mean().transpose();
}

/// Population (ddof = 0) statistics with the std floored at `floor`.
inline NormalizationStats compute_stats(const Eigen::Ref<const Matrix>& window, double floor = kStdFloor) {
    require(window.rows() >= 2, "window_too_short", "normalization needs at least two rows");
    require(window.allFinite(), "non_finite", "window contains non-finite values");
    NormalizationStats stats;
    stats.mean = window_mean(window);
    stats.std.resize(window.cols());
    stats.floored.assign(static_cast<std::size_t>(window.cols()), false);
    for (Index j = 0; j < window.cols(); ++j) {
        const double var = (window.col(j).array() - stats.mean(j)).square().mean();
        const double sd = std::sqrt(var);
        if (!(sd >= floor)) {
            stats.std(j) = floor;
            stats.floored[static_cast<std::size_t>(j)] = true;
        } else {
            stats.std(j) = sd;
        }
    }
    return stats;
}

inline Matrix apply_stats(const Eigen::Ref<const Matrix>& window, const NormalizationStats& stats) {
    require(stats.dims() == window.cols() && stats.std.size() == window.cols(), "dimension_mismatch",
            concat("stats have ", stats.dims(), " columns, window has ", window.cols()));
    require(window.allFinite(), "non_finite", "window contains non-finite values");
    Matrix out = window.rowwise() - stats.mean.transpose();
    for (Index j = 0; j < out.cols(); ++j) {
        if (!stats.floored.empty() && stats.floored[static_cast<std::size_t>(j)]) {
            out.col(j).setZero();
        } else {
            out.col(j) /= stats.std(j);
        }
    }
    return out;
}

/// Standardizes a window. Without `stats` the window's own mean/std are used.
inline NormalizedWindow normalize_window(const Eigen::Ref<const Matrix>& window,
                                         const std::optional<NormalizationStats>& stats = std::nullopt) {
    require(window.rows() >= 2, "window_too_short", "normalization needs at least two rows");
    NormalizedWindow out;
    out.stats = stats ? *stats : compute_stats(window);
    out.values = apply_stats(window, out.stats);
    return out;
}

/// Rows of x_{t-K} .. x_t concatenated, oldest block first. Column (k*d + i)
/// of row r holds variable i at source row r + k.
struct LagExtendedMatrix {
    Matrix rows;
    int lag_order = 0;
    Index dims = 0;

    Index count() const noexcept { return rows.rows(); }
    Index width() const noexcept { return rows.cols(); }
    auto instantaneous() const { return rows.rightCols(dims); }
};

inline LagExtendedMatrix lag_extend(const Eigen::Ref<const Matrix>& values, int lag) {
    require(lag >= 0, "invalid_lag", "lag order must be nonnegative");
    const Index t = values.rows();
    const Index d = values.cols();
    require(t > lag, "series_too_short",
            concat("lag extension with K=", lag, " needs more than ", lag, " samples, got ", t));
    LagExtendedMatrix out;
    out.lag_order = lag;
    out.dims = d;
    out.rows.resize(t - lag, (lag + 1) * d);
    for (int k = 0; k <= lag; ++k) {
        out.rows.middleCols(k * d, d) = values.middleRows(k, t - lag);
    }
    return out;
}

inline LagExtendedMatrix lag_extend(const MultivariateSeries& series, int lag) {
    return lag_extend(series.values(), lag);
}

// ---------------------------------------------------------------------------
// CSV

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    for (char c : line) {
        if (c == ',') {
            cells.push_back(cell);
            cell.clear();
        } else if (c != '\r') {
            cell.push_back(c);
        }
    }
    cells.push_back(cell);
    for (auto& s : cells) {
        auto b = s.find_first_not_of(" \t");
        auto e = s.find_last_not_of(" \t");
        s = (b == std::string::npos) ? std::string() : s.substr(b, e - b + 1);
    }
    return cells;
}

inline std::string format_double(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
    return std::string(buf, res.ptr);
}

}  // namespace detail

inline MultivariateSeries load_csv(const std::string& path) {
    std::ifstream in(path);
    require(static_cast<bool>(in), "io", concat("cannot open '", path, "'"));
    std::string line;
    bool have_header = false;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") != std::string::npos) {
            have_header = true;
            break;
        }
    }
    require(have_header, "csv_format", concat(path, ": no header"));
    auto names = detail::split_csv_line(line);
    std::set<std::string> seen;
    for (std::size_t c = 0; c < names.size(); ++c) {
        require(!names[c].empty(), "csv_format", concat(path, ": empty header in column ", c + 1));
        require(seen.insert(names[c]).second, "csv_format",
                concat(path, ": duplicate header '", names[c], "' in column ", c + 1));
    }
    std::vector<double> data;
    Index rows = 0;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        auto cells = detail::split_csv_line(line);
        require(cells.size() == names.size(), "csv_format",
                concat(path, ": row ", line_no, " has ", cells.size(), " cells, expected ", names.size()));
        for (std::size_t c = 0; c < cells.size(); ++c) {
            const std::string& s = cells[c];
            double v = 0.0;
            auto res = std::from_chars(s.data(), s.data() + s.size(), v);
            require(!s.empty() && res.ec == std::errc() && res.ptr == s.data() + s.size() && std::isfinite(v),
                    "csv_format",
                    concat(path, ": row ", line_no, ", column ", c + 1, " ('", names[c], "'): not a finite number: '",
                           s, "'"));
            data.push_back(v);
        }
        ++rows;
    }
    require(rows > 0, "csv_format", concat(path, ": no samples"));
    const auto cols = static_cast<Index>(names.size());
    Matrix values(rows, cols);
    for (Index r = 0; r < rows; ++r)
        for (Index c = 0; c < cols; ++c) values(r, c) = data[static_cast<std::size_t>(r * cols + c)];
    return MultivariateSeries(std::move(values), std::move(names));
}

inline void save_csv(const MultivariateSeries& series, const std::string& path) {
    std::ofstream out(path);
    require(static_cast<bool>(out), "io", concat("cannot write '", path, "'"));
    const auto& names = series.var_names();
    for (std::size_t c = 0; c < names.size(); ++c) out << (c ? "," : "") << names[c];
    out << '\n';
    const Matrix& v = series.values();
    for (Index r = 0; r < v.rows(); ++r) {
        for (Index c = 0; c < v.cols(); ++c) out << (c ? "," : "") << detail::format_double(v(r, c));
        out << '\n';
    }
    require(static_cast<bool>(out), "io", concat("write to '", path, "' failed"));
}

}  // namespace cdss
