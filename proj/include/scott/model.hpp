#pragma once

#include "scott/core.hpp"
#include "scott/neural.hpp"

#include <optional>
#include <string>
#include <vector>

namespace scott {

enum class Pooling { mean, last };

inline const char* to_string(Pooling p) { return p == Pooling::mean ? "mean" : "last"; }
inline Pooling pooling_from_string(const std::string& s) {
    if (s == "mean") return Pooling::mean;
    if (s == "last") return Pooling::last;
    throw ConfigError("unknown pooling: " + s);
}

struct EncoderConfig {
    std::size_t dim = 256;
    std::size_t heads = 3;
    std::size_t head_dim = 256;
    std::size_t kernel = 4;
    std::vector<std::size_t> dilations = {1, 4, 16};
    std::size_t blocks = 1;
    double block_dropout = 0.0;
    bool layer_norm = false;
    bool attention_residual = true;
    Pooling pooling = Pooling::last;

    EncoderBlockConfig block_config() const {
        EncoderBlockConfig b;
        b.dim = dim;
        b.heads = heads;
        b.head_dim = head_dim;
        b.convs.clear();
        for (std::size_t d : dilations) b.convs.push_back({kernel, dim, d});
        b.dropout = block_dropout;
        b.layer_norm = layer_norm;
        b.attention_residual = attention_residual;
        return b;
    }
};

/// Dense stack with ReLU + dropout after every hidden layer and a linear
/// output layer.
template <typename S>
class Mlp {
public:
    struct Cache {
        std::vector<Mat<S>> inputs;
        std::vector<Mat<S>> pre_activations;
        std::vector<Mat<S>> masks;
    };

    Mlp() = default;
    Mlp(const std::string& name, const std::vector<std::size_t>& sizes, double dropout) : dropout_(dropout) {
        if (sizes.size() < 2) throw ShapeError("an MLP needs input and output sizes");
        for (std::size_t i = 0; i + 1 < sizes.size(); ++i)
            layers.emplace_back(name + ".dense" + std::to_string(i), sizes[i], sizes[i + 1]);
    }

    std::size_t in_dim() const { return layers.front().in_dim(); }
    std::size_t out_dim() const { return layers.back().out_dim(); }
    double dropout() const { return dropout_; }

    void init(Rng& rng) {
        for (auto& l : layers) l.init(rng);
    }

    Mat<S> forward(const Mat<S>& x, bool training, Rng* rng, Cache* cache = nullptr) const {
        if (cache) {
            cache->inputs.clear();
            cache->pre_activations.clear();
            cache->masks.clear();
        }
        Mat<S> h = x;
        for (std::size_t i = 0; i < layers.size(); ++i) {
            if (cache) cache->inputs.push_back(h);
            h = layers[i].forward(h);
            if (i + 1 == layers.size()) break;
            if (cache) cache->pre_activations.push_back(h);
            h = relu(h);
            if (training && dropout_ > 0.0) {
                if (!rng) throw StateError("dropout in training mode needs a random source");
                Mat<S> mask = dropout_mask<S>(h.rows(), h.cols(), dropout_, *rng);
                h = h.cwiseProduct(mask);
                if (cache) cache->masks.push_back(std::move(mask));
            } else if (cache) {
                cache->masks.emplace_back();
            }
        }
        return h;
    }

    Mat<S> backward(const Cache& c, const Mat<S>& dy) {
        Mat<S> d = dy;
        for (std::size_t i = layers.size(); i-- > 0;) {
            if (i + 1 < layers.size()) {
                if (c.masks[i].size() > 0) d = d.cwiseProduct(c.masks[i]);
                d = relu_backward(c.pre_activations[i], d);
            }
            d = layers[i].backward(c.inputs[i], d);
        }
        return d;
    }

    template <typename F>
    void visit(F&& f) {
        for (auto& l : layers) l.visit(f);
    }

    std::vector<Dense<S>> layers;

private:
    double dropout_ = 0.0;
};

/// f(.): pointwise 1 -> dim lift, Temporal-Transformer blocks, pooling over time.
template <typename S>
class Encoder {
public:
    struct Cache {
        Mat<S> input;
        std::vector<typename EncoderBlock<S>::Cache> blocks;
        Eigen::Index time = 0;
    };

    Encoder() = default;
    explicit Encoder(const EncoderConfig& cfg) : cfg_(cfg), embed("encoder.embed", 1, cfg.dim) {
        if (cfg.blocks < 1) throw ConfigError("encoder needs at least one block");
        auto bc = cfg.block_config();
        for (std::size_t b = 0; b < cfg.blocks; ++b) blocks.emplace_back("encoder.block" + std::to_string(b), bc);
    }

    const EncoderConfig& config() const { return cfg_; }
    std::size_t dim() const { return cfg_.dim; }

    void init(Rng& rng) {
        embed.init(rng);
        for (auto& b : blocks) b.init(rng);
    }

    /// x is (T x 1); returns the (1 x dim) representation.
    RowVec<S> forward(const Mat<S>& x, bool training, Rng* rng, Cache* cache = nullptr) const {
        require_shape(x.cols() == 1 && x.rows() >= 1, "encoder expects a (T x 1) univariate series");
        Mat<S> h = embed.forward(x);
        if (cache) {
            cache->input = x;
            cache->time = x.rows();
            cache->blocks.resize(blocks.size());
        }
        for (std::size_t b = 0; b < blocks.size(); ++b)
            h = blocks[b].forward(h, training, rng, cache ? &cache->blocks[b] : nullptr);
        if (cfg_.pooling == Pooling::last) return h.row(h.rows() - 1);
        return h.colwise().mean();
    }

    /// Returns d loss / d x, (T x 1).
    Mat<S> backward(const Cache& c, const RowVec<S>& dr) {
        Mat<S> dh;
        if (cfg_.pooling == Pooling::last) {
            dh = Mat<S>::Zero(c.time, static_cast<Eigen::Index>(cfg_.dim));
            dh.row(c.time - 1) = dr;
        } else {
            dh = (dr / static_cast<S>(c.time)).replicate(c.time, 1);
        }
        for (std::size_t b = blocks.size(); b-- > 0;) dh = blocks[b].backward(c.blocks[b], dh);
        return embed.backward(c.input, dh);
    }

    /// Encodes every sample of a (B x T x 1) batch; row i depends only on sample i.
    Mat<S> encode(const Tensor3<S>& batch, bool training, Rng* rng) const {
        require_shape(batch.channels() == 1, "encoder batch must be univariate");
        Mat<S> out(static_cast<Eigen::Index>(batch.batch()), static_cast<Eigen::Index>(cfg_.dim));
        for (std::size_t b = 0; b < batch.batch(); ++b)
            out.row(static_cast<Eigen::Index>(b)) = forward(Mat<S>(batch.sample(b)), training, rng);
        return out;
    }

    template <typename F>
    void visit(F&& f) {
        embed.visit(f);
        for (auto& b : blocks) b.visit(f);
    }

    EncoderConfig cfg_;
    Dense<S> embed;
    std::vector<EncoderBlock<S>> blocks;
};

/// What the classifier consumes: encoder representations r, projector
/// embeddings z, or the raw window values (MLP-only ablation).
enum class FeatureSource { representation, embedding, raw };

inline const char* to_string(FeatureSource f) {
    switch (f) {
    case FeatureSource::representation: return "representation";
    case FeatureSource::embedding: return "embedding";
    case FeatureSource::raw: return "raw";
    }
    return "?";
}
inline FeatureSource feature_source_from_string(const std::string& s) {
    if (s == "representation" || s == "r") return FeatureSource::representation;
    if (s == "embedding" || s == "z") return FeatureSource::embedding;
    if (s == "raw") return FeatureSource::raw;
    throw ConfigError("unknown feature source: " + s);
}

struct ModelConfig {
    EncoderConfig encoder;
    std::vector<std::size_t> projector_hidden = {128, 64};
    std::size_t embedding_dim = 8;
    double projector_dropout = 0.3;
    std::vector<std::size_t> classifier_hidden = {256, 64};
    double classifier_dropout = 0.4;
    FeatureSource features = FeatureSource::representation;
    // Series length; only used when features == raw.
    std::size_t raw_length = 0;
};

/// Encoder f, projector g and the downstream classifier.
template <typename S>
class ScottModel {
public:
    ScottModel() = default;
    explicit ScottModel(const ModelConfig& cfg) : cfg_(cfg), encoder(cfg.encoder) {
        std::vector<std::size_t> sizes = {cfg.encoder.dim};
        sizes.insert(sizes.end(), cfg.projector_hidden.begin(), cfg.projector_hidden.end());
        sizes.push_back(cfg.embedding_dim);
        projector = Mlp<S>("projector", sizes, cfg.projector_dropout);
    }

    const ModelConfig& config() const { return cfg_; }

    void init(Rng& rng) {
        encoder.init(rng);
        projector.init(rng);
    }

    /// Creates (or replaces) a classifier head for `classes` outputs.
    void add_classifier(int classes, Rng& rng) {
        if (classes < 2) throw ConfigError("classifier needs at least two classes");
        std::vector<std::size_t> sizes = {feature_dim()};
        sizes.insert(sizes.end(), cfg_.classifier_hidden.begin(), cfg_.classifier_hidden.end());
        sizes.push_back(static_cast<std::size_t>(classes));
        classifier.emplace("classifier", sizes, cfg_.classifier_dropout);
        classifier->init(rng);
        classifier_trained = false;
    }

    std::size_t feature_dim() const {
        switch (cfg_.features) {
        case FeatureSource::representation: return cfg_.encoder.dim;
        case FeatureSource::embedding: return cfg_.embedding_dim;
        case FeatureSource::raw: return cfg_.raw_length;
        }
        return 0;
    }
    int classes() const { return classifier ? static_cast<int>(classifier->out_dim()) : 0; }

    Mat<S> encode(const Tensor3<S>& batch, bool training = false, Rng* rng = nullptr) const {
        return encoder.encode(batch, training, rng);
    }

    Mat<S> project(const Mat<S>& r, bool training = false, Rng* rng = nullptr) const {
        require_shape(static_cast<std::size_t>(r.cols()) == projector.in_dim(), "projector input width");
        return projector.forward(r, training, rng);
    }

    /// Inputs to the classifier (inference mode).
    Mat<S> features(const Tensor3<S>& batch) const {
        if (cfg_.features == FeatureSource::raw) {
            require_shape(batch.time() == cfg_.raw_length && batch.channels() == 1, "raw feature length");
            Mat<S> out(static_cast<Eigen::Index>(batch.batch()), static_cast<Eigen::Index>(batch.time()));
            for (std::size_t b = 0; b < batch.batch(); ++b)
                out.row(static_cast<Eigen::Index>(b)) = batch.sample(b).col(0).transpose();
            return out;
        }
        Mat<S> r = encode(batch);
        return cfg_.features == FeatureSource::embedding ? project(r) : r;
    }

    /// Features of a single (T x 1) series.
    RowVec<S> features(const Mat<S>& x) const {
        if (cfg_.features == FeatureSource::raw) {
            require_shape(static_cast<std::size_t>(x.rows()) == cfg_.raw_length && x.cols() == 1, "raw feature length");
            return x.col(0).transpose();
        }
        Mat<S> r = encoder.forward(x, false, nullptr);
        return cfg_.features == FeatureSource::embedding ? RowVec<S>(project(r)) : RowVec<S>(r);
    }

    Mat<S> logits(const Mat<S>& features, bool training = false, Rng* rng = nullptr) const {
        if (!classifier) throw StateError("model has no classifier");
        require_shape(static_cast<std::size_t>(features.cols()) == classifier->in_dim(), "classifier input width");
        return classifier->forward(features, training, rng);
    }

    /// Row-stochastic class probabilities.
    Mat<S> classify(const Mat<S>& features, bool training = false, Rng* rng = nullptr) const {
        return softmax_rows(logits(features, training, rng));
    }

    template <typename F>
    void visit_encoder(F&& f) {
        encoder.visit(f);
        projector.visit(f);
    }
    template <typename F>
    void visit(F&& f) {
        encoder.visit(f);
        projector.visit(f);
        if (classifier) classifier->visit(f);
    }

    ModelConfig cfg_;
    Encoder<S> encoder;
    Mlp<S> projector;
    std::optional<Mlp<S>> classifier;
    bool encoder_trained = false;
    bool classifier_trained = false;
};

/// (B x T x 1) batch from equal-length value vectors.
template <typename S>
Tensor3<S> make_batch(const std::vector<const std::vector<double>*>& rows) {
    if (rows.empty()) throw ShapeError("empty batch");
    const std::size_t t = rows.front()->size();
    Tensor3<S> out(rows.size(), t, 1);
    for (std::size_t b = 0; b < rows.size(); ++b) {
        if (rows[b]->size() != t) throw ShapeError("batch series differ in length");
        for (std::size_t i = 0; i < t; ++i) out.at(b, i, 0) = static_cast<S>((*rows[b])[i]);
    }
    return out;
}

template <typename S>
Mat<S> column(const std::vector<double>& values) {
    Mat<S> x(static_cast<Eigen::Index>(values.size()), 1);
    for (std::size_t i = 0; i < values.size(); ++i) x(static_cast<Eigen::Index>(i), 0) = static_cast<S>(values[i]);
    return x;
}

} // namespace scott
