#pragma once

#include "scott/core.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace scott {

/// A univariate series with optional per-point binary labels.
struct TimeSeries {
    std::vector<double> values;
    std::vector<int> labels; // empty, or one per value

    TimeSeries() = default;
    explicit TimeSeries(std::vector<double> v) : values(std::move(v)) {}
    TimeSeries(std::vector<double> v, std::vector<int> l) : values(std::move(v)), labels(std::move(l)) {}

    std::size_t size() const { return values.size(); }
    bool has_labels() const { return !labels.empty(); }
    double operator[](std::size_t i) const { return values[i]; }

    void validate() const {
        if (values.empty()) throw FormatError("time series must have length >= 1");
        for (double v : values)
            if (!std::isfinite(v)) throw FormatError("time series contains a non-finite value");
        if (!labels.empty() && labels.size() != values.size())
            throw FormatError("per-point labels must match series length");
    }
};

enum class Split { train, test };

inline const char* to_string(Split s) { return s == Split::train ? "train" : "test"; }

/// Ordered raw label values; index in the vector is the contiguous class id.
struct LabelMap {
    std::vector<double> raw;

    int index_of(double r) const {
        auto it = std::lower_bound(raw.begin(), raw.end(), r);
        if (it == raw.end() || *it != r) return -1;
        return static_cast<int>(it - raw.begin());
    }
    std::size_t size() const { return raw.size(); }
};

struct LabeledDataset {
    std::vector<TimeSeries> series;
    std::vector<int> labels; // in [0, class_count)
    Split split = Split::train;
    int class_count = 0;
    LabelMap label_map;

    std::size_t size() const { return series.size(); }
    std::size_t length() const { return series.empty() ? 0 : series.front().size(); }

    std::vector<std::size_t> class_counts() const {
        std::vector<std::size_t> c(static_cast<std::size_t>(class_count), 0);
        for (int y : labels) ++c[static_cast<std::size_t>(y)];
        return c;
    }

    void validate() const {
        if (series.size() != labels.size()) throw FormatError("series and labels differ in cardinality");
        if (series.empty()) throw FormatError("dataset is empty");
        const std::size_t t = series.front().size();
        for (const auto& s : series) {
            s.validate();
            if (s.size() != t) throw FormatError("dataset series differ in length");
        }
        for (int y : labels)
            if (y < 0 || y >= class_count) throw FormatError("label outside [0, C)");
        if (split == Split::train) {
            for (std::size_t c : class_counts())
                if (c == 0) throw FormatError("a class has no instances in the train split");
        }
    }
};

namespace detail {

inline std::vector<std::string_view> split_fields(std::string_view line, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        std::size_t pos = line.find(sep, start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\r' || s.front() == '\n')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\r' || s.back() == '\n')) s.remove_suffix(1);
    return s;
}

inline bool parse_real(std::string_view cell, double& out) {
    cell = trim(cell);
    if (cell.empty()) return false;
    if (cell.front() == '+') cell.remove_prefix(1);
    auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), out);
    return ec == std::errc() && ptr == cell.data() + cell.size();
}

} // namespace detail

/// Parses UCR tab-separated text: `label<TAB>v1<TAB>v2...` per line.
/// When `map` is given (e.g. the train split's map while loading test), raw
/// labels are resolved against it instead of building a new one.
inline LabeledDataset parse_ucr_tsv(std::istream& in, const std::string& source, Split split = Split::train,
                                    const LabelMap* map = nullptr) {
    std::vector<double> raw_labels;
    std::vector<TimeSeries> rows;
    std::string line;
    std::size_t lineno = 0;
    std::size_t width = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string_view view = detail::trim(line);
        if (view.empty()) continue;
        auto fields = detail::split_fields(view, '\t');
        if (fields.size() < 2)
            throw FormatError(source + ":" + std::to_string(lineno) + ": expected a label and at least one value");
        if (width == 0) width = fields.size();
        if (fields.size() != width)
            throw FormatError(source + ":" + std::to_string(lineno) + ": ragged row (" +
                              std::to_string(fields.size() - 1) + " values, expected " +
                              std::to_string(width - 1) + ")");
        double label = 0.0;
        if (!detail::parse_real(fields[0], label))
            throw ParseError(source + ":" + std::to_string(lineno) + ": non-numeric label '" +
                             std::string(fields[0]) + "'");
        std::vector<double> values(fields.size() - 1);
        for (std::size_t i = 1; i < fields.size(); ++i) {
            if (!detail::parse_real(fields[i], values[i - 1]))
                throw ParseError(source + ":" + std::to_string(lineno) + ": non-numeric cell '" +
                                 std::string(fields[i]) + "' in column " + std::to_string(i));
            if (!std::isfinite(values[i - 1]))
                throw ParseError(source + ":" + std::to_string(lineno) + ": missing or non-finite value in column " +
                                 std::to_string(i));
        }
        raw_labels.push_back(label);
        rows.emplace_back(std::move(values));
    }
    if (rows.empty()) throw FormatError(source + ": empty dataset file");

    LabeledDataset ds;
    ds.split = split;
    if (map) {
        ds.label_map = *map;
    } else {
        ds.label_map.raw = raw_labels;
        std::sort(ds.label_map.raw.begin(), ds.label_map.raw.end());
        ds.label_map.raw.erase(std::unique(ds.label_map.raw.begin(), ds.label_map.raw.end()), ds.label_map.raw.end());
    }
    ds.class_count = static_cast<int>(ds.label_map.size());
    ds.labels.reserve(rows.size());
    for (std::size_t i = 0; i < raw_labels.size(); ++i) {
        int idx = ds.label_map.index_of(raw_labels[i]);
        if (idx < 0) {
            std::ostringstream msg;
            msg << source << ": row " << (i + 1) << " has label " << raw_labels[i] << " unknown to the label map";
            throw FormatError(msg.str());
        }
        ds.labels.push_back(idx);
    }
    ds.series = std::move(rows);
    if (split == Split::train) ds.validate();
    return ds;
}

inline LabeledDataset load_ucr_tsv(const std::string& path, Split split = Split::train, const LabelMap* map = nullptr) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open dataset file: " + path);
    return parse_ucr_tsv(in, path, split, map);
}

/// Writes raw labels (from the label map) so a reload reproduces the dataset.
inline void write_ucr_tsv(std::ostream& out, const LabeledDataset& ds) {
    out << std::setprecision(std::numeric_limits<double>::max_digits10);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const double raw = ds.label_map.size() ? ds.label_map.raw[static_cast<std::size_t>(ds.labels[i])]
                                               : static_cast<double>(ds.labels[i]);
        out << raw;
        for (double v : ds.series[i].values) out << '\t' << v;
        out << '\n';
    }
}

inline void save_ucr_tsv(const std::string& path, const LabeledDataset& ds) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot write dataset file: " + path);
    write_ucr_tsv(out, ds);
}

// ---------------------------------------------------------------------------
// Padding

enum class PaddingKind { rising_trend, gaussian, edge_replicate };

struct PaddingSpec {
    PaddingKind kind = PaddingKind::rising_trend;
    std::size_t count = 0;
    double mean = 1.0;   // gaussian only
    double stddev = 0.5; // gaussian only

    static PaddingSpec rising(std::size_t n) { return {PaddingKind::rising_trend, n, 0.0, 1.0}; }
    static PaddingSpec gaussian(std::size_t n, double mu, double sigma) {
        return {PaddingKind::gaussian, n, mu, sigma};
    }
    static PaddingSpec edge(std::size_t n) { return {PaddingKind::edge_replicate, n, 0.0, 1.0}; }

    void validate() const {
        if (kind == PaddingKind::gaussian && !(stddev > 0.0))
            throw ConfigError("gaussian padding requires sigma > 0");
    }
};

inline const char* to_string(PaddingKind k) {
    switch (k) {
    case PaddingKind::rising_trend: return "rising";
    case PaddingKind::gaussian: return "gaussian";
    case PaddingKind::edge_replicate: return "edge";
    }
    return "?";
}

inline PaddingKind padding_kind_from_string(const std::string& s) {
    if (s == "rising" || s == "rising-trend") return PaddingKind::rising_trend;
    if (s == "gaussian") return PaddingKind::gaussian;
    if (s == "edge" || s == "edge-replicate") return PaddingKind::edge_replicate;
    throw ConfigError("unknown padding kind: " + s);
}

/// Prepends `spec.count` points. The original values form the unchanged
/// suffix; padded points carry label 0 when the series is labelled.
///
/// The rising trend is a linear ramp from first - count*delta up to
/// first - delta, delta = max(1e-3, 0.01*|first|).
inline TimeSeries pad_series(const TimeSeries& series, const PaddingSpec& spec, Rng& rng) {
    spec.validate();
    if (series.values.empty()) throw FormatError("cannot pad an empty series");
    const std::size_t n = spec.count;
    TimeSeries out;
    out.values.resize(n + series.size());
    const double first = series.values.front();
    switch (spec.kind) {
    case PaddingKind::rising_trend: {
        const double delta = std::max(1e-3, 0.01 * std::abs(first));
        for (std::size_t i = 0; i < n; ++i) out.values[i] = first - static_cast<double>(n - i) * delta;
        break;
    }
    case PaddingKind::gaussian:
        for (std::size_t i = 0; i < n; ++i) out.values[i] = rng.normal(spec.mean, spec.stddev);
        break;
    case PaddingKind::edge_replicate:
        for (std::size_t i = 0; i < n; ++i) out.values[i] = first;
        break;
    }
    std::copy(series.values.begin(), series.values.end(), out.values.begin() + static_cast<std::ptrdiff_t>(n));
    if (series.has_labels()) {
        out.labels.assign(n, 0);
        out.labels.insert(out.labels.end(), series.labels.begin(), series.labels.end());
    }
    return out;
}

inline TimeSeries znormalize(const TimeSeries& s) {
    const double n = static_cast<double>(s.size());
    const double mean = std::accumulate(s.values.begin(), s.values.end(), 0.0) / n;
    double var = 0.0;
    for (double v : s.values) var += (v - mean) * (v - mean);
    const double sd = std::sqrt(var / n);
    TimeSeries out = s;
    for (double& v : out.values) v = sd > 1e-12 ? (v - mean) / sd : 0.0;
    return out;
}

// ---------------------------------------------------------------------------
// Validation split

inline LabeledDataset subset(const LabeledDataset& ds, const std::vector<std::size_t>& idx) {
    LabeledDataset out;
    out.split = ds.split;
    out.class_count = ds.class_count;
    out.label_map = ds.label_map;
    out.series.reserve(idx.size());
    out.labels.reserve(idx.size());
    for (std::size_t i : idx) {
        out.series.push_back(ds.series[i]);
        out.labels.push_back(ds.labels[i]);
    }
    return out;
}

struct SplitIndices {
    std::vector<std::size_t> train;
    std::vector<std::size_t> validation;
};

/// Stratified split. Each class contributes floor(fraction * n_c) to the
/// validation half; the shortfall against floor(fraction * N) is then handed
/// out one instance at a time to the classes with the largest fractional
/// remainder (ties to the lower class id), never emptying a class's train half.
inline SplitIndices stratified_split(const std::vector<int>& labels, int class_count, double fraction,
                                     std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction < 1.0)) throw ConfigError("validation fraction must lie in (0, 1)");
    const auto C = static_cast<std::size_t>(class_count);
    const std::size_t N = labels.size();
    std::vector<std::vector<std::size_t>> members(C);
    for (std::size_t i = 0; i < N; ++i) members[static_cast<std::size_t>(labels[i])].push_back(i);
    for (std::size_t c = 0; c < C; ++c)
        if (members[c].size() < 2)
            throw ConfigError("stratified split needs >= 2 members per class; class " + std::to_string(c) + " has " +
                              std::to_string(members[c].size()));

    std::vector<std::size_t> take(C);
    std::vector<double> remainder(C);
    std::size_t taken = 0;
    for (std::size_t c = 0; c < C; ++c) {
        const double exact = fraction * static_cast<double>(members[c].size());
        take[c] = static_cast<std::size_t>(std::floor(exact));
        remainder[c] = exact - static_cast<double>(take[c]);
        taken += take[c];
    }
    const auto target = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(N)));
    std::vector<std::size_t> order(C);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
    for (std::size_t k = 0; taken < target && k < order.size(); ++k) {
        const std::size_t c = order[k];
        if (take[c] + 1 < members[c].size()) {
            ++take[c];
            ++taken;
        }
    }

    Rng rng(seed);
    std::vector<char> in_val(N, 0);
    for (std::size_t c = 0; c < C; ++c) {
        auto m = members[c];
        std::shuffle(m.begin(), m.end(), rng.engine());
        for (std::size_t k = 0; k < take[c]; ++k) in_val[m[k]] = 1;
    }
    SplitIndices out;
    for (std::size_t i = 0; i < N; ++i) (in_val[i] ? out.validation : out.train).push_back(i);
    return out;
}

inline SplitIndices split_validation_indices(const LabeledDataset& ds, double fraction, std::uint64_t seed) {
    return stratified_split(ds.labels, ds.class_count, fraction, seed);
}

inline std::pair<LabeledDataset, LabeledDataset> split_validation(const LabeledDataset& ds, double fraction,
                                                                  std::uint64_t seed) {
    auto idx = split_validation_indices(ds, fraction, seed);
    return {subset(ds, idx.train), subset(ds, idx.validation)};
}

// ---------------------------------------------------------------------------
// Synthetic variance-change streams

struct Segment {
    long length = 0;
    int state = 0; // 0 = non-change, 1 = change
};

struct SyntheticCpdConfig {
    std::vector<Segment> segments;
    double mean = 1.0;
    double state0_stddev = 0.5;
    double state1_stddev = 1.5;
};

/// Draws state-0 points from N(mean, sd0^2), state-1 points from
/// N(mean, sd1^2); label = state.
inline TimeSeries generate_synthetic_cpd(const SyntheticCpdConfig& cfg, std::uint64_t seed) {
    if (cfg.segments.empty()) throw ConfigError("synthetic stream needs at least one segment");
    for (const auto& s : cfg.segments) {
        if (s.length <= 0) throw ConfigError("segment length must be positive");
        if (s.state != 0 && s.state != 1) throw ConfigError("segment state must be 0 or 1");
    }
    if (!(cfg.state0_stddev > 0.0) || !(cfg.state1_stddev > 0.0)) throw ConfigError("state std must be positive");
    Rng rng(seed);
    TimeSeries out;
    for (const auto& s : cfg.segments) {
        const double sd = s.state == 0 ? cfg.state0_stddev : cfg.state1_stddev;
        for (long i = 0; i < s.length; ++i) {
            out.values.push_back(rng.normal(cfg.mean, sd));
            out.labels.push_back(s.state);
        }
    }
    return out;
}

/// Alternating 0/1 segments (starting with state 0) whose lengths are drawn
/// uniformly from [min_len, max_len] until `total` points are covered.
inline std::vector<Segment> alternating_segments(long total, long min_len, long max_len, Rng& rng) {
    if (min_len <= 0 || max_len < min_len || total <= 0) throw ConfigError("invalid segment length range");
    std::vector<Segment> segs;
    long covered = 0;
    int state = 0;
    while (covered < total) {
        long len = min_len + static_cast<long>(rng.index(static_cast<std::size_t>(max_len - min_len + 1)));
        len = std::min(len, total - covered);
        segs.push_back({len, state});
        covered += len;
        state = 1 - state;
    }
    return segs;
}

// ---------------------------------------------------------------------------
// Stream CSV

inline void write_series_csv(std::ostream& out, const TimeSeries& s) {
    out << std::setprecision(std::numeric_limits<double>::max_digits10);
    // unlabelled series get no label column, so reading back keeps them unlabelled
    out << (s.has_labels() ? "t,value,label\n" : "t,value\n");
    for (std::size_t i = 0; i < s.size(); ++i) {
        out << i << ',' << s.values[i];
        if (s.has_labels()) out << ',' << s.labels[i];
        out << '\n';
    }
}

/// Accepts either a CSV with a `t,value[,label]` header or bare
/// newline-delimited values.
inline TimeSeries read_series_csv(std::istream& in, const std::string& source) {
    TimeSeries out;
    std::string line;
    std::size_t lineno = 0;
    int value_col = 0;
    int label_col = -1;
    bool header_seen = false;
    while (std::getline(in, line)) {
        ++lineno;
        std::string_view view = detail::trim(line);
        if (view.empty()) continue;
        auto fields = detail::split_fields(view, ',');
        if (!header_seen) {
            header_seen = true;
            double probe = 0.0;
            if (!detail::parse_real(fields[0], probe)) {
                value_col = -1;
                for (std::size_t i = 0; i < fields.size(); ++i) {
                    auto f = detail::trim(fields[i]);
                    if (f == "value") value_col = static_cast<int>(i);
                    if (f == "label") label_col = static_cast<int>(i);
                }
                if (value_col < 0) throw FormatError(source + ": header has no 'value' column");
                continue;
            }
            if (fields.size() > 1) throw FormatError(source + ": multi-column stream needs a header");
        }
        if (static_cast<int>(fields.size()) <= std::max(value_col, label_col))
            throw FormatError(source + ":" + std::to_string(lineno) + ": missing column");
        double v = 0.0;
        if (!detail::parse_real(fields[static_cast<std::size_t>(value_col)], v) || !std::isfinite(v))
            throw ParseError(source + ":" + std::to_string(lineno) + ": non-numeric value");
        out.values.push_back(v);
        if (label_col >= 0) {
            double l = 0.0;
            if (!detail::parse_real(fields[static_cast<std::size_t>(label_col)], l) || (l != 0.0 && l != 1.0))
                throw ParseError(source + ":" + std::to_string(lineno) + ": label must be 0 or 1");
            out.labels.push_back(static_cast<int>(l));
        }
    }
    if (out.values.empty()) throw FormatError(source + ": empty stream");
    return out;
}

inline TimeSeries load_series_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open stream file: " + path);
    return read_series_csv(in, path);
}

inline void save_series_csv(const std::string& path, const TimeSeries& s) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot write stream file: " + path);
    write_series_csv(out, s);
}

} // namespace scott
