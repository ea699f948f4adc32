#pragma once

#include "scott/core.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace scott {

/// A learnable tensor. `value` is stored as a matrix; `shape` is the logical
/// shape written to checkpoints (e.g. a conv kernel is k x in x filters,
/// stored as a (k*in) x filters matrix).
template <typename S>
struct Param {
    std::string name;
    std::vector<std::size_t> shape;
    Mat<S> value;
    Mat<S> grad;

    Param() = default;
    Param(std::string n, std::vector<std::size_t> logical, Eigen::Index rows, Eigen::Index cols)
        : name(std::move(n)), shape(std::move(logical)), value(Mat<S>::Zero(rows, cols)),
          grad(Mat<S>::Zero(rows, cols)) {}

    void zero_grad() { grad.setZero(); }
    std::size_t size() const { return static_cast<std::size_t>(value.size()); }
};

/// Batch x time x channels carrier. Each sample is a contiguous row-major
/// (T x D) block.
template <typename S>
class Tensor3 {
public:
    Tensor3() = default;
    Tensor3(std::size_t b, std::size_t t, std::size_t d) : b_(b), t_(t), d_(d), values_(b * t * d, S(0)) {
        if (b == 0 || t == 0 || d == 0) throw ShapeError("Tensor3 dimensions must be >= 1");
    }

    std::size_t batch() const { return b_; }
    std::size_t time() const { return t_; }
    std::size_t channels() const { return d_; }

    Eigen::Map<Mat<S>> sample(std::size_t b) {
        return {values_.data() + b * t_ * d_, static_cast<Eigen::Index>(t_), static_cast<Eigen::Index>(d_)};
    }
    Eigen::Map<const Mat<S>> sample(std::size_t b) const {
        return {values_.data() + b * t_ * d_, static_cast<Eigen::Index>(t_), static_cast<Eigen::Index>(d_)};
    }
    S& at(std::size_t b, std::size_t t, std::size_t d) { return values_[(b * t_ + t) * d_ + d]; }
    S at(std::size_t b, std::size_t t, std::size_t d) const { return values_[(b * t_ + t) * d_ + d]; }

    std::vector<S>& values() { return values_; }
    const std::vector<S>& values() const { return values_; }

    bool has_grad() const { return grad_.has_value(); }
    std::vector<S>& grad() {
        if (!grad_) grad_.emplace(values_.size(), S(0));
        return *grad_;
    }
    Eigen::Map<Mat<S>> grad_sample(std::size_t b) {
        return {grad().data() + b * t_ * d_, static_cast<Eigen::Index>(t_), static_cast<Eigen::Index>(d_)};
    }

    bool finite() const {
        return std::all_of(values_.begin(), values_.end(), [](S v) { return std::isfinite(v); });
    }

private:
    std::size_t b_ = 0, t_ = 0, d_ = 0;
    std::vector<S> values_;
    std::optional<std::vector<S>> grad_;
};

template <typename S>
void glorot_uniform(Mat<S>& w, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = static_cast<S>(rng.uniform(-limit, limit));
}

// ---------------------------------------------------------------------------
// Elementwise kernels

template <typename S>
Mat<S> relu(const Mat<S>& x) {
    return x.cwiseMax(S(0));
}

template <typename S>
Mat<S> relu_backward(const Mat<S>& pre, const Mat<S>& dy) {
    return (pre.array() > S(0)).select(dy, S(0));
}

template <typename S>
Mat<S> softmax_rows(const Mat<S>& a) {
    Mat<S> out(a.rows(), a.cols());
    for (Eigen::Index r = 0; r < a.rows(); ++r) {
        const S m = a.row(r).maxCoeff();
        out.row(r) = (a.row(r).array() - m).exp();
        out.row(r) /= out.row(r).sum();
    }
    return out;
}

/// Gradient through a row softmax given its output p and upstream dp.
template <typename S>
Mat<S> softmax_rows_backward(const Mat<S>& p, const Mat<S>& dp) {
    ColVec<S> dots = (dp.array() * p.array()).rowwise().sum();
    return p.array() * (dp.colwise() - dots).array();
}

template <typename S>
Mat<S> log_softmax_rows(const Mat<S>& a) {
    Mat<S> out(a.rows(), a.cols());
    for (Eigen::Index r = 0; r < a.rows(); ++r) {
        const S m = a.row(r).maxCoeff();
        const S lse = m + std::log((a.row(r).array() - m).exp().sum());
        out.row(r) = a.row(r).array() - lse;
    }
    return out;
}

template <typename S>
Mat<S> log_softmax_rows_backward(const Mat<S>& logp, const Mat<S>& dy) {
    ColVec<S> sums = dy.rowwise().sum();
    Mat<S> p = logp.array().exp();
    return dy - (p.array().colwise() * sums.array()).matrix();
}

/// Inverted dropout: kept units are scaled by 1/(1-rate) during training.
template <typename S>
Mat<S> dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate, Rng& rng) {
    Mat<S> mask(rows, cols);
    const S keep_scale = static_cast<S>(1.0 / (1.0 - rate));
    for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = rng.bernoulli(rate) ? S(0) : keep_scale;
    return mask;
}

// ---------------------------------------------------------------------------
// Dense

template <typename S>
class Dense {
public:
    Dense() = default;
    Dense(const std::string& name, std::size_t in, std::size_t out)
        : weight(name + ".weight", {in, out}, static_cast<Eigen::Index>(in), static_cast<Eigen::Index>(out)),
          bias(name + ".bias", {out}, 1, static_cast<Eigen::Index>(out)) {}

    std::size_t in_dim() const { return static_cast<std::size_t>(weight.value.rows()); }
    std::size_t out_dim() const { return static_cast<std::size_t>(weight.value.cols()); }

    void init(Rng& rng) {
        glorot_uniform(weight.value, in_dim(), out_dim(), rng);
        bias.value.setZero();
    }

    Mat<S> forward(const Mat<S>& x) const {
        require_shape(static_cast<std::size_t>(x.cols()) == in_dim(), weight.name + " input width");
        Mat<S> y = x * weight.value;
        y.rowwise() += bias.value.row(0);
        return y;
    }

    Mat<S> backward(const Mat<S>& x, const Mat<S>& dy) {
        weight.grad.noalias() += x.transpose() * dy;
        bias.grad.row(0) += dy.colwise().sum();
        return dy * weight.value.transpose();
    }

    template <typename F>
    void visit(F&& f) {
        f(weight);
        f(bias);
    }

    Param<S> weight;
    Param<S> bias;
};

// ---------------------------------------------------------------------------
// Multi-head self-attention (bidirectional, scaled dot product)

template <typename S>
class MultiHeadSelfAttention {
public:
    struct Cache {
        Mat<S> x, q, k, v, context;
        std::vector<Mat<S>> probs; // one (T x T) matrix per head
    };

    MultiHeadSelfAttention() = default;
    MultiHeadSelfAttention(const std::string& name, std::size_t dim, std::size_t heads, std::size_t head_dim)
        : heads_(heads), head_dim_(head_dim), query(name + ".query", dim, heads * head_dim),
          key(name + ".key", dim, heads * head_dim), value(name + ".value", dim, heads * head_dim),
          output(name + ".output", heads * head_dim, dim) {
        if (heads == 0 || head_dim == 0) throw ShapeError("attention needs >= 1 head of size >= 1");
    }

    std::size_t heads() const { return heads_; }
    std::size_t head_dim() const { return head_dim_; }
    std::size_t dim() const { return query.in_dim(); }

    void init(Rng& rng) {
        query.init(rng);
        key.init(rng);
        value.init(rng);
        output.init(rng);
    }

    Mat<S> forward(const Mat<S>& x, Cache* cache = nullptr) const {
        require_shape(static_cast<std::size_t>(x.cols()) == dim(), "attention input channels");
        require_shape(output.in_dim() == heads_ * head_dim_, "attention output projection");
        const auto T = x.rows();
        const auto dh = static_cast<Eigen::Index>(head_dim_);
        Mat<S> q = query.forward(x);
        Mat<S> k = key.forward(x);
        Mat<S> v = value.forward(x);
        Mat<S> context(T, static_cast<Eigen::Index>(heads_ * head_dim_));
        const S scale = static_cast<S>(1.0 / std::sqrt(static_cast<double>(head_dim_)));
        std::vector<Mat<S>> probs;
        if (cache) probs.reserve(heads_);
        for (std::size_t h = 0; h < heads_; ++h) {
            const auto c0 = static_cast<Eigen::Index>(h) * dh;
            Mat<S> scores = (q.middleCols(c0, dh) * k.middleCols(c0, dh).transpose()) * scale;
            Mat<S> p = softmax_rows(scores);
            context.middleCols(c0, dh).noalias() = p * v.middleCols(c0, dh);
            if (cache) probs.push_back(std::move(p));
        }
        Mat<S> y = output.forward(context);
        if (cache) {
            cache->x = x;
            cache->q = std::move(q);
            cache->k = std::move(k);
            cache->v = std::move(v);
            cache->context = std::move(context);
            cache->probs = std::move(probs);
        }
        return y;
    }

    /// Attention weights of a forward pass, one row-stochastic matrix per head.
    std::vector<Mat<S>> weights(const Mat<S>& x) const {
        Cache c;
        forward(x, &c);
        return c.probs;
    }

    Mat<S> backward(const Cache& c, const Mat<S>& dy) {
        const auto dh = static_cast<Eigen::Index>(head_dim_);
        const S scale = static_cast<S>(1.0 / std::sqrt(static_cast<double>(head_dim_)));
        Mat<S> dcontext = output.backward(c.context, dy);
        Mat<S> dq(c.q.rows(), c.q.cols());
        Mat<S> dk(c.k.rows(), c.k.cols());
        Mat<S> dv(c.v.rows(), c.v.cols());
        for (std::size_t h = 0; h < heads_; ++h) {
            const auto c0 = static_cast<Eigen::Index>(h) * dh;
            const Mat<S>& p = c.probs[h];
            Mat<S> dctx = dcontext.middleCols(c0, dh);
            Mat<S> dp = dctx * c.v.middleCols(c0, dh).transpose();
            dv.middleCols(c0, dh).noalias() = p.transpose() * dctx;
            Mat<S> dscores = softmax_rows_backward(p, dp) * scale;
            dq.middleCols(c0, dh).noalias() = dscores * c.k.middleCols(c0, dh);
            dk.middleCols(c0, dh).noalias() = dscores.transpose() * c.q.middleCols(c0, dh);
        }
        Mat<S> dx = query.backward(c.x, dq);
        dx += key.backward(c.x, dk);
        dx += value.backward(c.x, dv);
        return dx;
    }

    template <typename F>
    void visit(F&& f) {
        query.visit(f);
        key.visit(f);
        value.visit(f);
        output.visit(f);
    }

    std::size_t heads_ = 0;
    std::size_t head_dim_ = 0;
    Dense<S> query, key, value, output;
};

// ---------------------------------------------------------------------------
// Dilated causal convolution

/// out[t] = bias + sum_j x[t - (k-1-j)*d] * W_j, with x[<0] = 0.
template <typename S>
class CausalConv1d {
public:
    CausalConv1d() = default;
    CausalConv1d(const std::string& name, std::size_t kernel, std::size_t in, std::size_t filters,
                 std::size_t dilation)
        : kernel_(kernel), in_(in), filters_(filters), dilation_(dilation),
          weight(name + ".weight", {kernel, in, filters}, static_cast<Eigen::Index>(kernel * in),
                 static_cast<Eigen::Index>(filters)),
          bias(name + ".bias", {filters}, 1, static_cast<Eigen::Index>(filters)) {
        if (kernel < 1 || dilation < 1 || filters < 1 || in < 1)
            throw ShapeError("conv needs kernel, dilation, channels and filters >= 1");
    }

    std::size_t kernel() const { return kernel_; }
    std::size_t in_channels() const { return in_; }
    std::size_t filters() const { return filters_; }
    std::size_t dilation() const { return dilation_; }
    std::size_t shift(std::size_t tap) const { return (kernel_ - 1 - tap) * dilation_; }
    std::size_t receptive_field() const { return 1 + (kernel_ - 1) * dilation_; }

    void init(Rng& rng) {
        glorot_uniform(weight.value, kernel_ * in_, filters_, rng);
        bias.value.setZero();
    }

    Mat<S> forward(const Mat<S>& x) const {
        require_shape(static_cast<std::size_t>(x.cols()) == in_, weight.name + " input channels");
        const auto T = x.rows();
        Mat<S> y(T, static_cast<Eigen::Index>(filters_));
        y.rowwise() = bias.value.row(0);
        const auto ci = static_cast<Eigen::Index>(in_);
        for (std::size_t j = 0; j < kernel_; ++j) {
            const auto s = static_cast<Eigen::Index>(shift(j));
            if (s >= T) continue;
            y.bottomRows(T - s).noalias() += x.topRows(T - s) * weight.value.middleRows(static_cast<Eigen::Index>(j) * ci, ci);
        }
        return y;
    }

    Mat<S> backward(const Mat<S>& x, const Mat<S>& dy) {
        const auto T = x.rows();
        const auto ci = static_cast<Eigen::Index>(in_);
        Mat<S> dx = Mat<S>::Zero(T, ci);
        bias.grad.row(0) += dy.colwise().sum();
        for (std::size_t j = 0; j < kernel_; ++j) {
            const auto s = static_cast<Eigen::Index>(shift(j));
            if (s >= T) continue;
            const auto r0 = static_cast<Eigen::Index>(j) * ci;
            weight.grad.middleRows(r0, ci).noalias() += x.topRows(T - s).transpose() * dy.bottomRows(T - s);
            dx.topRows(T - s).noalias() += dy.bottomRows(T - s) * weight.value.middleRows(r0, ci).transpose();
        }
        return dx;
    }

    template <typename F>
    void visit(F&& f) {
        f(weight);
        f(bias);
    }

    std::size_t kernel_ = 1, in_ = 1, filters_ = 1, dilation_ = 1;
    Param<S> weight;
    Param<S> bias;
};

// ---------------------------------------------------------------------------
// Layer normalization over channels (optional, ablation only)

template <typename S>
class LayerNorm {
public:
    struct Cache {
        Mat<S> normalized;
        ColVec<S> inv_std;
    };

    LayerNorm() = default;
    LayerNorm(const std::string& name, std::size_t dim)
        : gain(name + ".gain", {dim}, 1, static_cast<Eigen::Index>(dim)),
          shift(name + ".shift", {dim}, 1, static_cast<Eigen::Index>(dim)) {
        gain.value.setOnes();
    }

    Mat<S> forward(const Mat<S>& x, Cache* cache = nullptr) const {
        const auto D = x.cols();
        ColVec<S> mean = x.rowwise().mean();
        Mat<S> centered = x.colwise() - mean;
        ColVec<S> var = centered.array().square().rowwise().sum() / static_cast<S>(D);
        ColVec<S> inv = (var.array() + static_cast<S>(eps)).rsqrt();
        Mat<S> n = centered.array().colwise() * inv.array();
        Mat<S> y = n.array().rowwise() * gain.value.row(0).array();
        y.rowwise() += shift.value.row(0);
        if (cache) {
            cache->normalized = std::move(n);
            cache->inv_std = std::move(inv);
        }
        return y;
    }

    Mat<S> backward(const Cache& c, const Mat<S>& dy) {
        const auto D = static_cast<S>(dy.cols());
        gain.grad.row(0) += (dy.array() * c.normalized.array()).colwise().sum().matrix();
        shift.grad.row(0) += dy.colwise().sum();
        Mat<S> dn = dy.array().rowwise() * gain.value.row(0).array();
        ColVec<S> sum_dn = dn.rowwise().sum();
        ColVec<S> sum_dn_n = (dn.array() * c.normalized.array()).rowwise().sum();
        Mat<S> dx = (D * dn.array() - (c.normalized.array().colwise() * sum_dn_n.array())).colwise() - sum_dn.array();
        return dx.array().colwise() * (c.inv_std.array() / D);
    }

    template <typename F>
    void visit(F&& f) {
        f(gain);
        f(shift);
    }

    static constexpr double eps = 1e-5;
    Param<S> gain;
    Param<S> shift;
};

// ---------------------------------------------------------------------------
// Temporal-Transformer block: attention then dilated causal convs with ReLU
// between them, residual form chosen by attention_residual.

struct ConvSpec {
    std::size_t kernel = 4;
    std::size_t filters = 256;
    std::size_t dilation = 1;
};

struct EncoderBlockConfig {
    std::size_t dim = 256;
    std::size_t heads = 3;
    std::size_t head_dim = 256;
    std::vector<ConvSpec> convs = {{4, 256, 1}, {4, 256, 4}, {4, 256, 16}};
    double dropout = 0.0;
    bool layer_norm = false;
    // true:  a = x + Attn(x), y = a + Convs(a)
    // false: y = x + Convs(Attn(x))
    bool attention_residual = true;
};

template <typename S>
class EncoderBlock {
public:
    struct Cache {
        typename MultiHeadSelfAttention<S>::Cache attention;
        std::vector<Mat<S>> conv_inputs;
        std::vector<Mat<S>> pre_activations;
        Mat<S> dropout;
        typename LayerNorm<S>::Cache norm;
    };

    EncoderBlock() = default;
    EncoderBlock(const std::string& name, const EncoderBlockConfig& cfg)
        : cfg_(cfg), attention(name + ".attention", cfg.dim, cfg.heads, cfg.head_dim) {
        if (cfg.convs.empty()) throw ShapeError("encoder block needs at least one conv layer");
        std::size_t in = cfg.dim;
        for (std::size_t i = 0; i < cfg.convs.size(); ++i) {
            const auto& c = cfg.convs[i];
            convs.emplace_back(name + ".conv" + std::to_string(i), c.kernel, in, c.filters, c.dilation);
            in = c.filters;
        }
        if (in != cfg.dim)
            throw ShapeError("residual mismatch: conv stack emits " + std::to_string(in) + " channels, block width is " +
                             std::to_string(cfg.dim));
        if (cfg.layer_norm) norm.emplace(name + ".norm", cfg.dim);
    }

    const EncoderBlockConfig& config() const { return cfg_; }

    /// 1 + sum_i (k_i - 1) * d_i.
    std::size_t receptive_field() const {
        std::size_t rf = 1;
        for (const auto& c : convs) rf += (c.kernel() - 1) * c.dilation();
        return rf;
    }

    void init(Rng& rng) {
        attention.init(rng);
        for (auto& c : convs) c.init(rng);
    }

    /// The conv path alone (no attention, no residual).
    Mat<S> conv_stack(const Mat<S>& x) const {
        Mat<S> h = x;
        for (std::size_t i = 0; i < convs.size(); ++i) {
            h = convs[i].forward(h);
            if (i + 1 < convs.size()) h = relu(h);
        }
        return h;
    }

    Mat<S> forward(const Mat<S>& x, bool training, Rng* rng, Cache* cache = nullptr) const {
        require_shape(static_cast<std::size_t>(x.cols()) == cfg_.dim, "encoder block input channels");
        Mat<S> a = attention.forward(x, cache ? &cache->attention : nullptr);
        if (cfg_.attention_residual) a += x;
        if (cache) {
            cache->conv_inputs.clear();
            cache->pre_activations.clear();
        }
        Mat<S> h = a;
        for (std::size_t i = 0; i < convs.size(); ++i) {
            if (cache) cache->conv_inputs.push_back(h);
            h = convs[i].forward(h);
            if (i + 1 < convs.size()) {
                if (cache) cache->pre_activations.push_back(h);
                h = relu(h);
            }
        }
        if (training && cfg_.dropout > 0.0) {
            if (!rng) throw StateError("dropout in training mode needs a random source");
            Mat<S> mask = dropout_mask<S>(h.rows(), h.cols(), cfg_.dropout, *rng);
            h = h.cwiseProduct(mask);
            if (cache) cache->dropout = std::move(mask);
        } else if (cache) {
            cache->dropout.resize(0, 0);
        }
        Mat<S> y = (cfg_.attention_residual ? a : x) + h;
        if (norm) y = norm->forward(y, cache ? &cache->norm : nullptr);
        return y;
    }

    Mat<S> backward(const Cache& c, const Mat<S>& dy_in) {
        Mat<S> dy = norm ? norm->backward(c.norm, dy_in) : dy_in;
        Mat<S> dh = dy;
        if (c.dropout.size() > 0) dh = dh.cwiseProduct(c.dropout);
        for (std::size_t i = convs.size(); i-- > 0;) {
            if (i + 1 < convs.size()) dh = relu_backward(c.pre_activations[i], dh);
            dh = convs[i].backward(c.conv_inputs[i], dh);
        }
        if (cfg_.attention_residual) dh += dy; // dh is now dL/da
        Mat<S> dx = attention.backward(c.attention, dh);
        dx += cfg_.attention_residual ? dh : dy;
        return dx;
    }

    template <typename F>
    void visit(F&& f) {
        attention.visit(f);
        for (auto& c : convs) c.visit(f);
        if (norm) norm->visit(f);
    }

    EncoderBlockConfig cfg_;
    MultiHeadSelfAttention<S> attention;
    std::vector<CausalConv1d<S>> convs;
    std::optional<LayerNorm<S>> norm;
};

// ---------------------------------------------------------------------------
// Finite-difference gradient check

/// A tensor entering the check: its storage (perturbed in place) and the
/// analytic gradient computed at the unperturbed point.
template <typename S>
struct GradProbe {
    std::string name;
    Mat<S>* value;
    Mat<S> analytic;
};

struct GradCheckReport {
    double max_relative_error = 0.0;
    std::string worst;
    std::size_t checked = 0;
};

/// max over probe entries of |a - n| / max(|a|, |n|, floor), with n the central
/// difference (loss(x+eps) - loss(x-eps)) / (2 eps). The floor keeps exactly
/// zero gradients (e.g. attention key biases, which shift a whole score row)
/// from turning ~1e-10 of roundoff into a large ratio.
template <typename S, typename LossFn>
GradCheckReport check_gradients(LossFn&& loss, std::vector<GradProbe<S>>& probes, double eps,
                                double floor = 1e-4) {
    GradCheckReport report;
    for (auto& p : probes) {
        if (!p.analytic.allFinite()) throw StateError("non-finite analytic gradient for " + p.name);
        for (Eigen::Index i = 0; i < p.value->size(); ++i) {
            S& slot = p.value->data()[i];
            const S saved = slot;
            slot = static_cast<S>(saved + eps);
            const double up = static_cast<double>(loss());
            slot = static_cast<S>(saved - eps);
            const double down = static_cast<double>(loss());
            slot = saved;
            const double numeric = (up - down) / (2.0 * eps);
            const double analytic = static_cast<double>(p.analytic.data()[i]);
            if (!std::isfinite(numeric)) throw StateError("non-finite numeric gradient for " + p.name);
            const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
            const double rel = std::abs(analytic - numeric) / denom;
            ++report.checked;
            if (rel > report.max_relative_error) {
                report.max_relative_error = rel;
                report.worst = p.name + "[" + std::to_string(i) + "]";
            }
        }
    }
    return report;
}

/// Gradient check for an op exposing
///   Mat<S> forward(const Mat<S>&)            (caches what backward needs)
///   Mat<S> backward(const Mat<S>& dy)        (accumulates parameter grads)
///   void visit(F)                            (over Param<S>)
/// The scalar loss is sum(weights .* output); weights default to all ones,
/// i.e. the plain sum of outputs.
template <typename S, typename Op>
GradCheckReport grad_check(Op& op, Mat<S> input, double eps, const Mat<S>* weights = nullptr) {
    Mat<S> probe_out = op.forward(input);
    const Mat<S> w = weights ? *weights : Mat<S>::Ones(probe_out.rows(), probe_out.cols());
    require_shape(w.rows() == probe_out.rows() && w.cols() == probe_out.cols(), "grad_check weight shape");
    op.visit([](Param<S>& p) { p.zero_grad(); });
    Mat<S> dx = op.backward(w);

    std::vector<GradProbe<S>> probes;
    probes.push_back({"input", &input, dx});
    op.visit([&](Param<S>& p) { probes.push_back({p.name, &p.value, p.grad}); });
    auto loss = [&]() -> S { return (op.forward(input).array() * w.array()).sum(); };
    return check_gradients<S>(loss, probes, eps);
}

/// Adapters binding the per-sample layer API to the grad_check contract.
template <typename S>
struct DenseOp {
    Dense<S>& layer;
    Mat<S> last;
    Mat<S> forward(const Mat<S>& x) {
        last = x;
        return layer.forward(x);
    }
    Mat<S> backward(const Mat<S>& dy) { return layer.backward(last, dy); }
    template <typename F>
    void visit(F&& f) {
        layer.visit(f);
    }
};

template <typename S>
struct AttentionOp {
    MultiHeadSelfAttention<S>& layer;
    typename MultiHeadSelfAttention<S>::Cache cache;
    Mat<S> forward(const Mat<S>& x) { return layer.forward(x, &cache); }
    Mat<S> backward(const Mat<S>& dy) { return layer.backward(cache, dy); }
    template <typename F>
    void visit(F&& f) {
        layer.visit(f);
    }
};

template <typename S>
struct ConvOp {
    CausalConv1d<S>& layer;
    Mat<S> last;
    Mat<S> forward(const Mat<S>& x) {
        last = x;
        return layer.forward(x);
    }
    Mat<S> backward(const Mat<S>& dy) { return layer.backward(last, dy); }
    template <typename F>
    void visit(F&& f) {
        layer.visit(f);
    }
};

template <typename S>
struct EncoderBlockOp {
    EncoderBlock<S>& block;
    typename EncoderBlock<S>::Cache cache;
    Mat<S> forward(const Mat<S>& x) { return block.forward(x, false, nullptr, &cache); }
    Mat<S> backward(const Mat<S>& dy) { return block.backward(cache, dy); }
    template <typename F>
    void visit(F&& f) {
        block.visit(f);
    }
};

/// Parameter-free elementwise/rowwise op from a forward and a backward lambda.
template <typename S>
struct FunctionOp {
    std::function<Mat<S>(const Mat<S>&)> fwd;
    std::function<Mat<S>(const Mat<S>& x, const Mat<S>& y, const Mat<S>& dy)> bwd;
    Mat<S> x, y;
    Mat<S> forward(const Mat<S>& in) {
        x = in;
        y = fwd(in);
        return y;
    }
    Mat<S> backward(const Mat<S>& dy) { return bwd(x, y, dy); }
    template <typename F>
    void visit(F&&) {}
};

} // namespace scott
