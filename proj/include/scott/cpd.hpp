#pragma once

#include "scott/augmentation.hpp"
#include "scott/core.hpp"
#include "scott/data.hpp"
#include "scott/model.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

namespace scott {

struct WindowSpec {
    std::size_t lambda = 150; // window length
    std::size_t beta = 50;    // protected tail
    double threshold = 0.30;  // drop ratio that marks a change

    std::size_t padding() const { return lambda - 1; }

    void validate() const {
        if (!(beta > 0 && beta < lambda)) throw ConfigError("window spec needs 0 < beta < lambda");
        if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("drop threshold must lie in (0, 1)");
    }
    bool operator==(const WindowSpec&) const = default;
};

/// Windows of length lambda stepping by one over an already padded series.
/// Window i covers padded[i, i + lambda) and takes the label of its last
/// point (0 when the series is unlabelled).
inline LabeledDataset sliding_windows(const TimeSeries& padded, const WindowSpec& spec) {
    spec.validate();
    if (padded.size() < spec.lambda) throw ShapeError("series is shorter than the window length");
    const std::size_t n = padded.size() - spec.lambda + 1;
    LabeledDataset out;
    out.class_count = 2;
    out.series.reserve(n);
    out.labels.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto first = padded.values.begin() + static_cast<std::ptrdiff_t>(i);
        out.series.emplace_back(std::vector<double>(first, first + static_cast<std::ptrdiff_t>(spec.lambda)));
        out.labels.push_back(padded.has_labels() ? padded.labels[i + spec.lambda - 1] : 0);
    }
    return out;
}

/// label[t] = 1 iff (peak - x[t]) / peak >= threshold, peak = max(x[0..t]).
/// With `peak_window` set, the peak is taken over the last that-many points
/// instead of the whole prefix.
inline std::vector<int> label_by_drop(const std::vector<double>& x, double threshold,
                                      std::optional<std::size_t> peak_window = std::nullopt) {
    if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("drop threshold must lie in (0, 1)");
    if (peak_window && *peak_window == 0) throw ConfigError("peak window must be positive");
    std::vector<int> labels(x.size(), 0);
    double peak = -std::numeric_limits<double>::infinity();
    std::deque<std::size_t> candidates; // indices with decreasing values (windowed variant)
    for (std::size_t t = 0; t < x.size(); ++t) {
        if (peak_window) {
            while (!candidates.empty() && x[candidates.back()] <= x[t]) candidates.pop_back();
            candidates.push_back(t);
            if (candidates.front() + *peak_window <= t) candidates.pop_front();
            peak = x[candidates.front()];
        } else {
            peak = std::max(peak, x[t]);
        }
        if (!(peak > 0.0)) throw ConfigError("drop labelling needs a positive running peak (t=" + std::to_string(t) + ")");
        labels[t] = (peak - x[t]) / peak >= threshold ? 1 : 0;
    }
    return labels;
}

/// Moves the start of every run of ones `shift` steps earlier (clamped at
/// 0). Runs closer than `shift` merge.
inline std::vector<int> shift_boundary(const std::vector<int>& labels, std::size_t shift) {
    std::vector<int> out = labels;
    for (std::size_t t = 0; t < labels.size(); ++t) {
        if (labels[t] != 0 && labels[t] != 1) throw ConfigError("labels must be binary");
        if (labels[t] == 1 && (t == 0 || labels[t - 1] == 0)) {
            const std::size_t from = t >= shift ? t - shift : 0;
            std::fill(out.begin() + static_cast<std::ptrdiff_t>(from), out.begin() + static_cast<std::ptrdiff_t>(t), 1);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Streaming

/// Ring buffer of the last lambda values plus a running peak and a step
/// counter. The buffer is seeded with the padding when the first value
/// arrives, so the first window already has full length.
class StreamState {
public:
    StreamState(const WindowSpec& spec, const PaddingSpec& padding, Rng padding_rng)
        : spec_(spec), padding_(padding), rng_(padding_rng), buffer_(spec.lambda, 0.0) {
        spec.validate();
        if (padding.count != spec.padding()) throw ConfigError("padding count must equal lambda - 1");
    }

    void push(double x) {
        if (steps_ == 0) {
            TimeSeries pad = pad_series(TimeSeries({x}), padding_, rng_);
            for (std::size_t i = 0; i + 1 < pad.size(); ++i) put(pad.values[i]);
        }
        put(x);
        peak_ = steps_ == 0 ? x : std::max(peak_, x);
        ++steps_;
    }

    /// Current window, oldest value first.
    std::vector<double> window() const {
        if (steps_ == 0) throw StateError("stream has no data yet");
        std::vector<double> w(spec_.lambda);
        for (std::size_t i = 0; i < spec_.lambda; ++i) w[i] = buffer_[(head_ + i) % spec_.lambda];
        return w;
    }

    std::size_t steps() const { return steps_; }
    double peak() const { return peak_; }
    std::size_t capacity() const { return buffer_.size(); }

private:
    void put(double v) {
        buffer_[head_] = v;
        head_ = (head_ + 1) % spec_.lambda;
    }

    WindowSpec spec_;
    PaddingSpec padding_;
    Rng rng_;
    std::vector<double> buffer_;
    std::size_t head_ = 0; // next write slot == oldest value once full
    std::size_t steps_ = 0;
    double peak_ = 0.0;
};

struct StreamResult {
    std::vector<double> probabilities;
    std::vector<int> predictions;
    std::vector<std::size_t> annotations; // steps with a positive prediction
};

template <typename S>
void require_trained(const ScottModel<S>& model) {
    if (model.config().features != FeatureSource::raw && !model.encoder_trained)
        throw StateError("encoder has not been trained");
    if (!model.classifier || !model.classifier_trained) throw StateError("classifier has not been trained");
    if (model.classes() != 2) throw StateError("change-point model must have two classes");
}

/// Probability of the change class for one window.
template <typename S>
double window_probability(const ScottModel<S>& model, const std::vector<double>& window) {
    const Mat<S> f = model.features(column<S>(window));
    return static_cast<double>(model.classify(f)(0, 1));
}

/// Offline path: one probability per window.
template <typename S>
std::vector<double> predict_windows(const ScottModel<S>& model, const LabeledDataset& windows) {
    require_trained(model);
    std::vector<double> p;
    p.reserve(windows.size());
    for (const auto& w : windows.series) p.push_back(window_probability(model, w.values));
    return p;
}

/// Replays `series` point by point; the prediction at step t sees only
/// x[0..t] (plus padding derived from x[0]).
template <typename S>
StreamResult simulate_stream(const ScottModel<S>& model, const TimeSeries& series, const WindowSpec& spec,
                             const PaddingSpec& padding, Rng padding_rng, double decision = 0.5) {
    require_trained(model);
    series.validate();
    StreamState state(spec, padding, padding_rng);
    StreamResult out;
    out.probabilities.reserve(series.size());
    out.predictions.reserve(series.size());
    for (std::size_t t = 0; t < series.size(); ++t) {
        state.push(series.values[t]);
        const double p = window_probability(model, state.window());
        const int y = p >= decision ? 1 : 0;
        out.probabilities.push_back(p);
        out.predictions.push_back(y);
        if (y == 1) out.annotations.push_back(t);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Dataset preparation

struct CpdPrepOptions {
    PaddingSpec padding = PaddingSpec::rising(149);
    bool augment = true;
    std::vector<AugmentMethod> kinds = {AugmentMethod::jitter, AugmentMethod::permute};
    AugmentParams params;
    bool oversample = false;
    bool shuffle = true;
};

/// Windows from every labelled series. Training windows are augmented in
/// their first lambda - beta points (kind drawn per window), optionally
/// balanced by augmented oversampling, then shuffled. Test windows are the
/// raw windows, in stream order.
inline LabeledDataset prepare_cpd_dataset(const std::vector<TimeSeries>& series, const WindowSpec& spec,
                                          const CpdPrepOptions& opt, Split split, Rng& rng) {
    spec.validate();
    if (opt.padding.count != spec.padding()) throw ConfigError("padding count must equal lambda - 1");
    if (opt.augment && opt.kinds.empty()) throw ConfigError("no augmentation kinds given");
    LabeledDataset out;
    out.class_count = 2;
    out.split = split;
    out.label_map.raw = {0.0, 1.0};
    for (const auto& s : series) {
        s.validate();
        if (!s.has_labels()) throw FormatError("change-point series needs per-point labels");
        Rng pad_rng(Rng::derive_seed(rng.next(), "padding"));
        LabeledDataset w = sliding_windows(pad_series(s, opt.padding, pad_rng), spec);
        for (std::size_t i = 0; i < w.size(); ++i) {
            out.series.push_back(std::move(w.series[i]));
            out.labels.push_back(w.labels[i]);
        }
    }
    if (split == Split::test) return out;

    if (opt.augment) {
        for (auto& s : out.series) {
            const AugmentMethod kind = opt.kinds[rng.index(opt.kinds.size())];
            s = augment_cpd_slice(s, spec.beta, kind, opt.params, rng);
        }
    }
    if (opt.oversample) {
        OversampleOptions o;
        o.params = opt.params;
        o.tail = spec.beta;
        out = oversample(out, rng, o);
    }
    if (opt.shuffle) {
        std::vector<std::size_t> order(out.size());
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng.engine());
        out = subset(out, order);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Synthetic amplitude streams with traumatic drops

struct AmplitudeStreamConfig {
    std::size_t length = 2000;
    double start = 1.0;           // initial amplitude
    double rise_per_step = 2e-4;  // slow upward trend
    double noise = 0.01;          // relative noise on every point
    std::size_t drops = 2;        // number of drop events
    double min_drop = 0.35;       // fractional fall below the current level
    double max_drop = 0.6;
    std::size_t min_hold = 60;
    std::size_t max_hold = 200;
    std::size_t ramp = 10;        // steps to fall / recover
    double threshold = 0.30;      // labelling rule
};

/// Positive amplitude trace: a rising trend with a few sudden falls that
/// recover after a while. Labels come from the drop rule.
inline TimeSeries generate_amplitude_stream(const AmplitudeStreamConfig& cfg, std::uint64_t seed) {
    if (cfg.length == 0 || !(cfg.start > 0.0)) throw ConfigError("amplitude stream needs length and start > 0");
    if (!(cfg.min_drop > 0.0 && cfg.max_drop < 1.0 && cfg.min_drop <= cfg.max_drop))
        throw ConfigError("drop fractions must satisfy 0 < min <= max < 1");
    if (cfg.min_hold == 0 || cfg.max_hold < cfg.min_hold) throw ConfigError("invalid hold range");
    Rng rng(seed);
    std::vector<double> factor(cfg.length, 1.0);
    for (std::size_t d = 0; d < cfg.drops; ++d) {
        const std::size_t at = cfg.length / 8 + rng.index(std::max<std::size_t>(1, cfg.length * 3 / 4));
        const double depth = rng.uniform(cfg.min_drop, cfg.max_drop);
        const std::size_t hold = cfg.min_hold + rng.index(cfg.max_hold - cfg.min_hold + 1);
        const std::size_t ramp = std::max<std::size_t>(1, cfg.ramp);
        for (std::size_t t = at; t < cfg.length; ++t) {
            const std::size_t k = t - at;
            double f = 1.0;
            if (k < ramp) f = 1.0 - depth * static_cast<double>(k + 1) / static_cast<double>(ramp);
            else if (k < ramp + hold) f = 1.0 - depth;
            else if (k < 2 * ramp + hold)
                f = 1.0 - depth * (1.0 - static_cast<double>(k - ramp - hold + 1) / static_cast<double>(ramp));
            else break;
            factor[t] = std::min(factor[t], f);
        }
    }
    TimeSeries out;
    out.values.resize(cfg.length);
    for (std::size_t t = 0; t < cfg.length; ++t) {
        const double level = cfg.start * (1.0 + cfg.rise_per_step * static_cast<double>(t));
        out.values[t] = std::max(1e-6, level * factor[t] * (1.0 + rng.normal(0.0, cfg.noise)));
    }
    out.labels = label_by_drop(out.values, cfg.threshold);
    return out;
}

/// Variance-change stream of roughly `length` points with alternating
/// segments of [min_seg, max_seg] points.
inline TimeSeries generate_variance_stream(std::size_t length, long min_seg, long max_seg, std::uint64_t seed,
                                           double sd0 = 0.5, double sd1 = 1.5) {
    Rng rng(Rng::derive_seed(seed, "segments"));
    SyntheticCpdConfig cfg;
    cfg.segments = alternating_segments(static_cast<long>(length), min_seg, max_seg, rng);
    cfg.state0_stddev = sd0;
    cfg.state1_stddev = sd1;
    return generate_synthetic_cpd(cfg, Rng::derive_seed(seed, "values"));
}

} // namespace scott
