#pragma once

#include "scott/core.hpp"
#include "scott/data.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace scott {

struct NoiseSpec {
    double sigma = 0.1;
    // When set, the noise std is sigma * (population std of the series).
    bool relative = true;

    static NoiseSpec absolute(double s) { return {s, false}; }
};

struct ScaleSpec {
    // One factor for the whole series instead of one per point.
    bool smoothed = false;
};

struct SegmentationSpec {
    std::size_t segments = 4;
    double min_distortion = 0.5;
    double max_distortion = 2.0;

    void validate() const {
        if (segments < 1) throw ConfigError("segment count h must be >= 1");
        if (!(min_distortion > 0.0) || max_distortion < min_distortion)
            throw ConfigError("distortion range must be a positive closed interval");
    }
};

enum class AugmentMethod { none, jitter, scale, permute, warp };

inline const char* to_string(AugmentMethod m) {
    switch (m) {
    case AugmentMethod::none: return "none";
    case AugmentMethod::jitter: return "jitter";
    case AugmentMethod::scale: return "scale";
    case AugmentMethod::permute: return "permute";
    case AugmentMethod::warp: return "warp";
    }
    return "?";
}

inline AugmentMethod augment_method_from_string(const std::string& s) {
    if (s == "none") return AugmentMethod::none;
    if (s == "jitter" || s == "jittering") return AugmentMethod::jitter;
    if (s == "scale" || s == "scaling") return AugmentMethod::scale;
    if (s == "permute" || s == "permutation") return AugmentMethod::permute;
    if (s == "warp" || s == "warping") return AugmentMethod::warp;
    throw ConfigError("unknown augmentation method: " + s);
}

/// Best augmentation per UCR dataset type.
inline AugmentMethod default_method_for_type(const std::string& type) {
    static const std::map<std::string, AugmentMethod> table = {
        {"image", AugmentMethod::warp},     {"motion", AugmentMethod::warp},
        {"traffic", AugmentMethod::permute}, {"sensor", AugmentMethod::permute},
        {"spectro", AugmentMethod::permute}, {"device", AugmentMethod::permute},
        {"ecg", AugmentMethod::jitter},      {"simulate", AugmentMethod::jitter},
        {"audio", AugmentMethod::jitter},
    };
    std::string key;
    for (char c : type) key.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    auto it = table.find(key);
    if (it == table.end()) throw ConfigError("unknown dataset type: " + type);
    return it->second;
}

struct AugmentParams {
    NoiseSpec noise;
    ScaleSpec scale;
    SegmentationSpec seg;
};

namespace detail {

inline double series_std(const std::vector<double>& v) {
    const double n = static_cast<double>(v.size());
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
    double acc = 0.0;
    for (double x : v) acc += (x - mean) * (x - mean);
    return std::sqrt(acc / n);
}

/// Linear resampling of `src` onto `n` evenly spaced points spanning the
/// same first-to-last range.
inline std::vector<double> resample_linear(const std::vector<double>& src, std::size_t n) {
    std::vector<double> out(n);
    if (n == 0) return out;
    if (src.size() == 1 || n == 1) {
        std::fill(out.begin(), out.end(), src.front());
        return out;
    }
    if (n == src.size()) return src;
    const double step = static_cast<double>(src.size() - 1) / static_cast<double>(n - 1);
    for (std::size_t k = 0; k < n; ++k) {
        const double pos = static_cast<double>(k) * step;
        auto lo = static_cast<std::size_t>(std::floor(pos));
        if (lo >= src.size() - 1) {
            out[k] = src.back();
            continue;
        }
        const double frac = pos - static_cast<double>(lo);
        out[k] = src[lo] + frac * (src[lo + 1] - src[lo]);
    }
    return out;
}

} // namespace detail

/// [begin, end) bounds of h near-equal contiguous segments; the remainder
/// goes to the leading segments.
inline std::vector<std::pair<std::size_t, std::size_t>> segment_bounds(std::size_t length, std::size_t h) {
    if (h < 1) throw ConfigError("segment count h must be >= 1");
    if (h > length) throw ConfigError("segment count h exceeds series length");
    std::vector<std::pair<std::size_t, std::size_t>> out;
    const std::size_t base = length / h;
    const std::size_t extra = length % h;
    std::size_t start = 0;
    for (std::size_t i = 0; i < h; ++i) {
        const std::size_t len = base + (i < extra ? 1 : 0);
        out.emplace_back(start, start + len);
        start += len;
    }
    return out;
}

inline TimeSeries jitter(const TimeSeries& series, const NoiseSpec& spec, Rng& rng) {
    if (spec.sigma < 0.0) throw ConfigError("noise sigma must be >= 0");
    const double sigma = spec.relative ? spec.sigma * detail::series_std(series.values) : spec.sigma;
    TimeSeries out = series;
    if (sigma == 0.0) return out;
    for (double& v : out.values) v += rng.normal(0.0, sigma);
    return out;
}

inline TimeSeries scale(const TimeSeries& series, const ScaleSpec& spec, Rng& rng) {
    TimeSeries out = series;
    if (spec.smoothed) {
        const double s = rng.uniform_open(0.0, 1.0);
        for (double& v : out.values) v *= s;
    } else {
        for (double& v : out.values) v *= rng.uniform_open(0.0, 1.0);
    }
    return out;
}

/// Reorders segments so that output segment k is input segment order[k].
inline TimeSeries apply_segment_order(const TimeSeries& series, std::size_t h, const std::vector<std::size_t>& order) {
    auto bounds = segment_bounds(series.size(), h);
    if (order.size() != h) throw ConfigError("segment order must have h entries");
    TimeSeries out;
    out.values.reserve(series.size());
    if (series.has_labels()) out.labels.reserve(series.size());
    for (std::size_t k : order) {
        auto [b, e] = bounds.at(k);
        out.values.insert(out.values.end(), series.values.begin() + static_cast<std::ptrdiff_t>(b),
                          series.values.begin() + static_cast<std::ptrdiff_t>(e));
        if (series.has_labels())
            out.labels.insert(out.labels.end(), series.labels.begin() + static_cast<std::ptrdiff_t>(b),
                              series.labels.begin() + static_cast<std::ptrdiff_t>(e));
    }
    return out;
}

struct PermuteResult {
    TimeSeries series;
    std::vector<std::size_t> order; // output segment k came from input segment order[k]
};

inline PermuteResult permute_traced(const TimeSeries& series, const SegmentationSpec& spec, Rng& rng) {
    spec.validate();
    std::vector<std::size_t> order(spec.segments);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng.engine());
    return {apply_segment_order(series, spec.segments, order), order};
}

inline TimeSeries permute(const TimeSeries& series, const SegmentationSpec& spec, Rng& rng) {
    return permute_traced(series, spec, rng).series;
}

/// Undoes permute_traced. Segment lengths differ when length % h != 0, so the
/// permuted series is cut by the permuted segment lengths, not evenly.
inline TimeSeries inverse_permute(const PermuteResult& p, std::size_t original_length) {
    const std::size_t h = p.order.size();
    auto bounds = segment_bounds(original_length, h);
    std::vector<std::vector<double>> pieces(h);
    std::size_t pos = 0;
    for (std::size_t k = 0; k < h; ++k) {
        const std::size_t src = p.order[k];
        const std::size_t len = bounds[src].second - bounds[src].first;
        pieces[src].assign(p.series.values.begin() + static_cast<std::ptrdiff_t>(pos),
                           p.series.values.begin() + static_cast<std::ptrdiff_t>(pos + len));
        pos += len;
    }
    TimeSeries out;
    for (auto& piece : pieces) out.values.insert(out.values.end(), piece.begin(), piece.end());
    return out;
}

/// Stretches one random segment by a factor from the distortion range, then
/// interpolates the concatenation back to the original length.
inline TimeSeries warp(const TimeSeries& series, const SegmentationSpec& spec, Rng& rng) {
    spec.validate();
    const std::size_t n = series.size();
    if (n < 2) throw ConfigError("warp needs a series of length >= 2");
    auto bounds = segment_bounds(n, spec.segments);
    const std::size_t j = rng.index(spec.segments);
    const double factor = spec.min_distortion == spec.max_distortion
                              ? spec.min_distortion
                              : rng.uniform(spec.min_distortion, spec.max_distortion);
    std::vector<double> stretched;
    stretched.reserve(2 * n);
    for (std::size_t k = 0; k < bounds.size(); ++k) {
        auto [b, e] = bounds[k];
        std::vector<double> seg(series.values.begin() + static_cast<std::ptrdiff_t>(b),
                                series.values.begin() + static_cast<std::ptrdiff_t>(e));
        if (k == j) {
            const auto m = static_cast<std::size_t>(
                std::max(1.0, std::round(static_cast<double>(seg.size()) * factor)));
            seg = detail::resample_linear(seg, m);
        }
        stretched.insert(stretched.end(), seg.begin(), seg.end());
    }
    TimeSeries out;
    out.values = detail::resample_linear(stretched, n);
    out.labels = series.labels;
    return out;
}

inline TimeSeries augment(const TimeSeries& series, AugmentMethod method, const AugmentParams& p, Rng& rng) {
    switch (method) {
    case AugmentMethod::none: return series;
    case AugmentMethod::jitter: return jitter(series, p.noise, rng);
    case AugmentMethod::scale: return scale(series, p.scale, rng);
    case AugmentMethod::permute: return permute(series, p.seg, rng);
    case AugmentMethod::warp: return warp(series, p.seg, rng);
    }
    return series;
}

/// Jitters or permutes the first lambda - beta points of a window and leaves
/// the last beta points bit-identical.
inline TimeSeries augment_cpd_slice(const TimeSeries& slice, std::size_t beta, AugmentMethod kind,
                                    const AugmentParams& p, Rng& rng) {
    const std::size_t lambda = slice.size();
    if (beta == 0 || beta >= lambda) throw ConfigError("tail length must satisfy 0 < beta < lambda");
    if (kind != AugmentMethod::jitter && kind != AugmentMethod::permute)
        throw ConfigError("window augmentation supports jitter and permute only");
    const std::size_t head = lambda - beta;
    TimeSeries prefix(std::vector<double>(slice.values.begin(), slice.values.begin() + static_cast<std::ptrdiff_t>(head)));
    TimeSeries changed;
    if (kind == AugmentMethod::jitter) {
        changed = jitter(prefix, p.noise, rng);
    } else {
        SegmentationSpec seg = p.seg;
        seg.segments = std::min(seg.segments, head);
        changed = permute(prefix, seg, rng);
    }
    TimeSeries out = slice;
    std::copy(changed.values.begin(), changed.values.end(), out.values.begin());
    return out;
}

struct OversampleOptions {
    AugmentParams params;
    // When set, augmentation is tail-preserving with this tail length.
    std::optional<std::size_t> tail;
    int max_attempts = 16;
};

/// Balances classes by appending augmented (never bit-identical) copies of
/// minority-class instances, alternating jitter and permutation.
inline LabeledDataset oversample(const LabeledDataset& ds, Rng& rng, const OversampleOptions& opt = {}) {
    if (ds.class_count < 2) throw ConfigError("oversampling needs at least two classes");
    auto counts = ds.class_counts();
    const std::size_t target = *std::max_element(counts.begin(), counts.end());
    LabeledDataset out = ds;
    std::set<std::vector<double>> seen;
    for (const auto& s : ds.series) seen.insert(s.values);

    std::vector<std::vector<std::size_t>> members(counts.size());
    for (std::size_t i = 0; i < ds.size(); ++i) members[static_cast<std::size_t>(ds.labels[i])].push_back(i);

    std::size_t generated = 0;
    for (std::size_t c = 0; c < counts.size(); ++c) {
        if (counts[c] == 0 || counts[c] == target) continue;
        for (std::size_t k = 0; counts[c] + k < target; ++k) {
            const TimeSeries& src = ds.series[members[c][k % members[c].size()]];
            AugmentMethod method = (generated % 2 == 0) ? AugmentMethod::jitter : AugmentMethod::permute;
            TimeSeries candidate;
            bool ok = false;
            for (int attempt = 0; attempt < opt.max_attempts && !ok; ++attempt) {
                AugmentParams p = opt.params;
                if (method == AugmentMethod::jitter && attempt > 0) {
                    // a flat series has zero std; fall back to a small absolute noise
                    double scale_ref = 0.0;
                    for (double v : src.values) scale_ref = std::max(scale_ref, std::abs(v));
                    p.noise = NoiseSpec::absolute(1e-3 * std::max(1.0, scale_ref));
                }
                candidate = opt.tail ? augment_cpd_slice(src, *opt.tail, method, p, rng)
                                     : augment(src, method, p, rng);
                ok = !seen.count(candidate.values);
                if (!ok) method = method == AugmentMethod::jitter ? AugmentMethod::permute : AugmentMethod::jitter;
            }
            if (!ok) throw StateError("oversampling could not produce a non-duplicate instance");
            seen.insert(candidate.values);
            out.series.push_back(std::move(candidate));
            out.labels.push_back(static_cast<int>(c));
            ++generated;
        }
    }
    return out;
}

} // namespace scott
