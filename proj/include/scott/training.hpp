#pragma once

#include "scott/augmentation.hpp"
#include "scott/core.hpp"
#include "scott/data.hpp"
#include "scott/loss.hpp"
#include "scott/model.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

namespace scott {

struct TrainingError : Error {
    using Error::Error;
};

enum class OptimizerKind { adam, sgd };

inline const char* to_string(OptimizerKind k) { return k == OptimizerKind::adam ? "adam" : "sgd"; }
inline OptimizerKind optimizer_from_string(const std::string& s) {
    if (s == "adam") return OptimizerKind::adam;
    if (s == "sgd") return OptimizerKind::sgd;
    throw ConfigError("unknown optimizer: " + s);
}

enum class EncoderLoss { supcon, supcon_separate };

struct TrainConfig {
    double learning_rate = 1e-3;
    std::size_t encoder_epochs = 300;
    std::size_t encoder_batch = 128;
    std::size_t classifier_epochs = 200;
    std::size_t classifier_batch = 64;
    std::size_t plateau_patience = 10;
    double plateau_factor = 0.5;
    double min_improvement = 1e-4;
    double min_learning_rate = 1e-6;
    std::size_t early_stop_patience = 20;
    double validation_fraction = 0.2;
    std::uint64_t seed = 0;
    std::size_t views = 2;
    double temperature = 1.0;
    Similarity similarity = Similarity::cosine;
    OptimizerKind optimizer = OptimizerKind::adam;
    EncoderLoss encoder_loss = EncoderLoss::supcon;
    // Called after every epoch with (stage, epoch, loss); may be empty.
    std::function<void(const std::string&, std::size_t, double)> on_epoch;

    void validate() const {
        if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be > 0");
        if (encoder_batch == 0 || classifier_batch == 0) throw ConfigError("batch sizes must be > 0");
        if (!(plateau_factor > 0.0 && plateau_factor < 1.0)) throw ConfigError("plateau factor must lie in (0, 1)");
        if (plateau_patience == 0 || early_stop_patience == 0) throw ConfigError("patience must be > 0");
        if (views == 0) throw ConfigError("need at least one view");
        if (!(temperature > 0.0)) throw ConfigError("temperature must be > 0");
    }
};

struct TrainReport {
    std::string stage;
    std::vector<double> loss;            // per epoch (mean of batch losses)
    std::vector<std::vector<double>> batch_losses;
    std::vector<double> validation_loss; // classifier stage only
    std::vector<double> learning_rate;   // lr used during each epoch
    std::vector<double> epoch_seconds;
    std::size_t best_epoch = 0;
    bool early_stopped = false;
    std::size_t anchors_without_positives = 0;
    std::uint64_t seed = 0;
};

// ---------------------------------------------------------------------------
// Learning-rate schedule

/// Returns lr * factor (floored at min_lr) when the last `patience` entries of
/// `history` fail to improve on the best earlier entry by at least
/// `min_improvement`; otherwise lr unchanged.
inline double lr_on_plateau(const std::vector<double>& history, double lr, std::size_t patience, double factor,
                            double min_improvement, double min_lr = 1e-6) {
    if (!(factor > 0.0 && factor < 1.0)) throw ConfigError("plateau factor must lie in (0, 1)");
    if (history.size() <= patience) return lr;
    const auto split = static_cast<std::ptrdiff_t>(history.size() - patience);
    const double best_before = *std::min_element(history.begin(), history.begin() + split);
    const double best_recent = *std::min_element(history.begin() + split, history.end());
    if (best_before - best_recent >= min_improvement) return lr;
    if (lr <= min_lr) return lr;
    return std::max(lr * factor, min_lr);
}

/// Stateful wrapper: after each reduction the plateau window restarts, so a
/// long plateau halves the rate once per `patience` epochs.
class PlateauScheduler {
public:
    PlateauScheduler(double lr, std::size_t patience, double factor, double min_improvement, double min_lr = 1e-6)
        : lr_(lr), patience_(patience), factor_(factor), min_improvement_(min_improvement), min_lr_(min_lr) {}

    double lr() const { return lr_; }

    double step(double loss) {
        window_.push_back(loss);
        const double next = lr_on_plateau(window_, lr_, patience_, factor_, min_improvement_, min_lr_);
        if (next != lr_) {
            lr_ = next;
            window_.assign(1, *std::min_element(window_.begin(), window_.end()));
        }
        return lr_;
    }

private:
    double lr_;
    std::size_t patience_;
    double factor_;
    double min_improvement_;
    double min_lr_;
    std::vector<double> window_;
};

class EarlyStopping {
public:
    explicit EarlyStopping(std::size_t patience) : patience_(patience) {}

    /// Returns true when training should stop.
    bool step(double loss) {
        if (loss < best_) {
            best_ = loss;
            best_epoch_ = epoch_;
            bad_ = 0;
        } else {
            ++bad_;
        }
        ++epoch_;
        return bad_ >= patience_;
    }
    bool improved_last() const { return bad_ == 0; }
    std::size_t best_epoch() const { return best_epoch_; }
    double best() const { return best_; }

private:
    std::size_t patience_;
    std::size_t epoch_ = 0;
    std::size_t best_epoch_ = 0;
    std::size_t bad_ = 0;
    double best_ = std::numeric_limits<double>::infinity();
};

// ---------------------------------------------------------------------------
// Optimizers

template <typename S>
class Optimizer {
public:
    explicit Optimizer(OptimizerKind kind, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-7)
        : kind_(kind), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    /// Applies one update to every visited parameter, in visit order.
    template <typename Visitor>
    void step(Visitor&& visit, double lr) {
        ++t_;
        std::size_t slot = 0;
        const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        visit([&](Param<S>& p) {
            if (kind_ == OptimizerKind::sgd) {
                p.value -= static_cast<S>(lr) * p.grad;
                return;
            }
            if (slot == m_.size()) {
                m_.push_back(Mat<S>::Zero(p.value.rows(), p.value.cols()));
                v_.push_back(Mat<S>::Zero(p.value.rows(), p.value.cols()));
            }
            Mat<S>& m = m_[slot];
            Mat<S>& v = v_[slot];
            ++slot;
            m = static_cast<S>(beta1_) * m + static_cast<S>(1.0 - beta1_) * p.grad;
            v = static_cast<S>(beta2_) * v + static_cast<S>(1.0 - beta2_) * p.grad.cwiseAbs2();
            const S step_size = static_cast<S>(lr / c1);
            const S inv_c2 = static_cast<S>(1.0 / c2);
            p.value.array() -= step_size * m.array() / ((v.array() * inv_c2).sqrt() + static_cast<S>(eps_));
        });
    }

private:
    OptimizerKind kind_;
    double beta1_, beta2_, eps_;
    std::size_t t_ = 0;
    std::vector<Mat<S>> m_, v_;
};

// ---------------------------------------------------------------------------
// View generation

/// How contrastive views are produced each epoch. View 0 is the instance
/// itself (when keep_original), the remaining views are fresh augmentations.
struct AugmentationPlan {
    AugmentMethod method = AugmentMethod::jitter;
    AugmentParams params;
    bool keep_original = true;
    // CPD windows: tail-preserving augmentation with this tail, drawing the
    // operator from `window_kinds`.
    std::optional<std::size_t> tail;
    std::vector<AugmentMethod> window_kinds = {AugmentMethod::jitter, AugmentMethod::permute};

    TimeSeries make_view(const TimeSeries& s, Rng& rng) const {
        if (tail) {
            const AugmentMethod k = window_kinds[rng.index(window_kinds.size())];
            return augment_cpd_slice(s, *tail, k, params, rng);
        }
        return augment(s, method, params, rng);
    }
};

template <typename S>
bool params_finite(ScottModel<S>& model) {
    bool ok = true;
    model.visit([&](Param<S>& p) { ok = ok && p.value.allFinite(); });
    return ok;
}

// ---------------------------------------------------------------------------
// Stage 1: encoder + projector under supervised contrastive loss

/// One contrastive step over a flat batch of views; returns the loss
/// (averaged over anchors) and leaves gradients in the encoder/projector.
template <typename S>
double contrastive_step(ScottModel<S>& model, const std::vector<TimeSeries>& rows, const std::vector<int>& labels,
                        std::size_t views, const TrainConfig& cfg, Rng& dropout_rng, TrainReport* report = nullptr) {
    const auto n = static_cast<Eigen::Index>(rows.size());
    std::vector<typename Encoder<S>::Cache> caches(rows.size());
    Mat<S> r(n, static_cast<Eigen::Index>(model.encoder.dim()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        r.row(static_cast<Eigen::Index>(i)) = model.encoder.forward(column<S>(rows[i].values), true, &dropout_rng, &caches[i]);
    typename Mlp<S>::Cache pcache;
    Mat<S> z = model.projector.forward(r, true, &dropout_rng, &pcache);

    const auto temp = static_cast<S>(cfg.temperature);
    Mat<S> dz;
    double loss = 0.0;
    LossDiagnostics diag;
    if (cfg.encoder_loss == EncoderLoss::supcon_separate) {
        const Eigen::Index bn = n / static_cast<Eigen::Index>(views);
        std::vector<Mat<S>> per_view;
        for (std::size_t q = 0; q < views; ++q) per_view.push_back(z.middleRows(static_cast<Eigen::Index>(q) * bn, bn));
        std::vector<int> inst(labels.begin(), labels.begin() + bn);
        auto res = supcon_separate<S>(per_view, inst, temp, cfg.similarity);
        dz = flatten_views(res.grads) / static_cast<S>(bn);
        loss = static_cast<double>(res.value) / static_cast<double>(bn);
        diag = res.diagnostics;
    } else {
        auto res = supcon_simplified<S>(z, labels, temp, cfg.similarity);
        dz = res.grad / static_cast<S>(n);
        loss = static_cast<double>(res.value) / static_cast<double>(n);
        diag = res.diagnostics;
    }
    if (report) report->anchors_without_positives += diag.anchors_without_positives;
    if (!std::isfinite(loss)) return loss;

    model.visit_encoder([](Param<S>& p) { p.zero_grad(); });
    Mat<S> dr = model.projector.backward(pcache, dz);
    for (std::size_t i = 0; i < rows.size(); ++i)
        model.encoder.backward(caches[i], dr.row(static_cast<Eigen::Index>(i)));
    return loss;
}

/// Trains encoder f and projector g in place. Deterministic for a fixed
/// cfg.seed; randomness is split into named streams (init, data, augment,
/// dropout).
template <typename S>
TrainReport train_encoder(ScottModel<S>& model, const LabeledDataset& ds, const AugmentationPlan& plan,
                          const TrainConfig& cfg) {
    cfg.validate();
    ds.validate();
    if (ds.size() < 1) throw ConfigError("empty training set");
    TrainReport report;
    report.stage = "encoder";
    report.seed = cfg.seed;

    const Rng root(cfg.seed);
    if (!model.encoder_trained) {
        Rng init = root.child("init");
        model.init(init);
    }
    Rng data_rng = root.child("data");
    Rng aug_rng = root.child("augment");
    Rng dropout_rng = root.child("dropout");
    Optimizer<S> opt(cfg.optimizer);
    PlateauScheduler sched(cfg.learning_rate, cfg.plateau_patience, cfg.plateau_factor, cfg.min_improvement,
                           cfg.min_learning_rate);

    std::vector<std::size_t> order(ds.size());
    std::iota(order.begin(), order.end(), 0);
    const std::size_t views = cfg.views;

    for (std::size_t epoch = 0; epoch < cfg.encoder_epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        const double lr = sched.lr();
        std::shuffle(order.begin(), order.end(), data_rng.engine());
        std::vector<double> batch_losses;
        for (std::size_t start = 0; start < order.size(); start += cfg.encoder_batch) {
            const std::size_t stop = std::min(order.size(), start + cfg.encoder_batch);
            const std::size_t bn = stop - start;
            if (bn * views < 2) continue;
            std::vector<TimeSeries> rows;
            std::vector<int> labels;
            rows.reserve(bn * views);
            for (std::size_t q = 0; q < views; ++q) {
                for (std::size_t k = start; k < stop; ++k) {
                    const TimeSeries& s = ds.series[order[k]];
                    rows.push_back(q == 0 && plan.keep_original ? s : plan.make_view(s, aug_rng));
                    labels.push_back(ds.labels[order[k]]);
                }
            }
            const double loss = contrastive_step(model, rows, labels, views, cfg, dropout_rng, &report);
            if (!std::isfinite(loss))
                throw TrainingError("non-finite contrastive loss at epoch " + std::to_string(epoch) + ", batch " +
                                    std::to_string(start / cfg.encoder_batch) + " (seed " +
                                    std::to_string(cfg.seed) + ")");
            opt.step([&](auto&& f) { model.visit_encoder(f); }, lr);
            batch_losses.push_back(loss);
        }
        if (batch_losses.empty()) throw TrainingError("no batch with at least two rows");
        const double epoch_loss =
            std::accumulate(batch_losses.begin(), batch_losses.end(), 0.0) / static_cast<double>(batch_losses.size());
        report.loss.push_back(epoch_loss);
        report.batch_losses.push_back(std::move(batch_losses));
        report.learning_rate.push_back(lr);
        report.epoch_seconds.push_back(
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
        sched.step(epoch_loss);
        if (cfg.on_epoch) cfg.on_epoch("encoder", epoch, epoch_loss);
    }
    if (!report.loss.empty())
        report.best_epoch = static_cast<std::size_t>(std::min_element(report.loss.begin(), report.loss.end()) -
                                                     report.loss.begin());
    model.encoder_trained = true;
    return report;
}

// ---------------------------------------------------------------------------
// Stage 2: classifier on frozen features

/// Mean cross-entropy of a classifier head on features (inference mode).
template <typename S>
double evaluate_cross_entropy(const Mlp<S>& head, const Mat<S>& features, const std::vector<int>& labels) {
    Mat<S> logits = head.forward(features, false, nullptr);
    return static_cast<double>(softmax_cross_entropy<S>(logits, labels).value);
}

template <typename S>
Mat<S> gather_rows(const Mat<S>& m, const std::vector<std::size_t>& idx) {
    Mat<S> out(static_cast<Eigen::Index>(idx.size()), m.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(idx[i]));
    return out;
}

/// Trains a classifier head with cross-entropy and early stopping on a
/// stratified validation split; the head is restored to its best-validation
/// epoch. `report.best_epoch` is the argmin of `report.validation_loss`.
template <typename S>
TrainReport train_classifier_head(Mlp<S>& head, const Mat<S>& features, const std::vector<int>& labels, int classes,
                                  const TrainConfig& cfg) {
    cfg.validate();
    require_shape(static_cast<std::size_t>(features.rows()) == labels.size(), "one label per feature row");
    std::vector<std::size_t> counts(static_cast<std::size_t>(std::max(classes, 0)), 0);
    for (int y : labels) {
        if (y < 0 || y >= classes) throw ConfigError("label outside [0, C)");
        ++counts[static_cast<std::size_t>(y)];
    }
    const auto present = std::count_if(counts.begin(), counts.end(), [](std::size_t c) { return c > 0; });
    if (present < 2) throw ConfigError("classifier training needs at least two classes in the data");

    TrainReport report;
    report.stage = "classifier";
    report.seed = cfg.seed;
    const Rng root(cfg.seed);
    auto split = stratified_split(labels, classes, cfg.validation_fraction, root.child("validation").seed());
    if (split.validation.empty()) throw ConfigError("validation split is empty");
    const Mat<S> val_x = gather_rows(features, split.validation);
    std::vector<int> val_y;
    for (std::size_t i : split.validation) val_y.push_back(labels[i]);

    Rng data_rng = root.child("classifier-data");
    Rng dropout_rng = root.child("classifier-dropout");
    Optimizer<S> opt(cfg.optimizer);
    PlateauScheduler sched(cfg.learning_rate, cfg.plateau_patience, cfg.plateau_factor, cfg.min_improvement,
                           cfg.min_learning_rate);
    EarlyStopping stopper(cfg.early_stop_patience);
    Mlp<S> best = head;
    std::vector<std::size_t> order = split.train;

    for (std::size_t epoch = 0; epoch < cfg.classifier_epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        const double lr = sched.lr();
        std::shuffle(order.begin(), order.end(), data_rng.engine());
        std::vector<double> batch_losses;
        for (std::size_t start = 0; start < order.size(); start += cfg.classifier_batch) {
            const std::size_t stop = std::min(order.size(), start + cfg.classifier_batch);
            std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                         order.begin() + static_cast<std::ptrdiff_t>(stop));
            Mat<S> x = gather_rows(features, idx);
            std::vector<int> y;
            for (std::size_t i : idx) y.push_back(labels[i]);
            typename Mlp<S>::Cache cache;
            Mat<S> logits = head.forward(x, true, &dropout_rng, &cache);
            auto ce = softmax_cross_entropy<S>(logits, y);
            if (!std::isfinite(static_cast<double>(ce.value)))
                throw TrainingError("non-finite classifier loss at epoch " + std::to_string(epoch) + " (seed " +
                                    std::to_string(cfg.seed) + ")");
            head.visit([](Param<S>& p) { p.zero_grad(); });
            head.backward(cache, ce.grad);
            opt.step([&](auto&& f) { head.visit(f); }, lr);
            batch_losses.push_back(static_cast<double>(ce.value));
        }
        const double epoch_loss =
            std::accumulate(batch_losses.begin(), batch_losses.end(), 0.0) / static_cast<double>(batch_losses.size());
        const double val_loss = evaluate_cross_entropy(head, val_x, val_y);
        report.loss.push_back(epoch_loss);
        report.batch_losses.push_back(std::move(batch_losses));
        report.validation_loss.push_back(val_loss);
        report.learning_rate.push_back(lr);
        report.epoch_seconds.push_back(
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
        const bool stop = stopper.step(val_loss);
        if (stopper.improved_last()) best = head;
        sched.step(val_loss);
        if (cfg.on_epoch) cfg.on_epoch("classifier", epoch, val_loss);
        if (stop) {
            report.early_stopped = epoch + 1 < cfg.classifier_epochs;
            break;
        }
    }
    head = best;
    report.best_epoch = stopper.best_epoch();
    return report;
}

/// Attaches and trains the model's classifier on its (frozen) features.
template <typename S>
TrainReport train_classifier(ScottModel<S>& model, const Mat<S>& features, const std::vector<int>& labels,
                             int classes, const TrainConfig& cfg) {
    Rng init = Rng(cfg.seed).child("classifier-init");
    model.add_classifier(classes, init);
    auto report = train_classifier_head(*model.classifier, features, labels, classes, cfg);
    model.classifier_trained = true;
    return report;
}

/// Classifier features for every series of a dataset (inference mode).
template <typename S>
Mat<S> dataset_features(const ScottModel<S>& model, const LabeledDataset& ds) {
    Mat<S> out(static_cast<Eigen::Index>(ds.size()), static_cast<Eigen::Index>(model.feature_dim()));
    for (std::size_t i = 0; i < ds.size(); ++i)
        out.row(static_cast<Eigen::Index>(i)) = model.features(column<S>(ds.series[i].values));
    return out;
}

template <typename S>
std::vector<int> predict_labels(const ScottModel<S>& model, const Mat<S>& features) {
    Mat<S> p = model.classify(features);
    std::vector<int> out(static_cast<std::size_t>(p.rows()));
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
        Eigen::Index arg = 0;
        p.row(i).maxCoeff(&arg);
        out[static_cast<std::size_t>(i)] = static_cast<int>(arg);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Ablation: encoder + classifier trained jointly with cross-entropy (TT+CE)

template <typename S>
TrainReport train_end_to_end(ScottModel<S>& model, const LabeledDataset& ds, const AugmentationPlan& plan,
                             const TrainConfig& cfg) {
    cfg.validate();
    ds.validate();
    if (model.config().features != FeatureSource::representation)
        throw ConfigError("end-to-end training classifies encoder representations");
    TrainReport report;
    report.stage = "end-to-end";
    report.seed = cfg.seed;
    const Rng root(cfg.seed);
    Rng init = root.child("init");
    model.init(init);
    Rng cinit = root.child("classifier-init");
    model.add_classifier(ds.class_count, cinit);
    Rng data_rng = root.child("data");
    Rng aug_rng = root.child("augment");
    Rng dropout_rng = root.child("dropout");
    Optimizer<S> opt(cfg.optimizer);
    PlateauScheduler sched(cfg.learning_rate, cfg.plateau_patience, cfg.plateau_factor, cfg.min_improvement,
                           cfg.min_learning_rate);
    std::vector<std::size_t> order(ds.size());
    std::iota(order.begin(), order.end(), 0);
    auto visit_all = [&](auto&& f) {
        model.encoder.visit(f);
        model.classifier->visit(f);
    };
    for (std::size_t epoch = 0; epoch < cfg.encoder_epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        const double lr = sched.lr();
        std::shuffle(order.begin(), order.end(), data_rng.engine());
        std::vector<double> batch_losses;
        for (std::size_t start = 0; start < order.size(); start += cfg.encoder_batch) {
            const std::size_t stop = std::min(order.size(), start + cfg.encoder_batch);
            std::vector<TimeSeries> rows;
            std::vector<int> labels;
            for (std::size_t q = 0; q < cfg.views; ++q)
                for (std::size_t k = start; k < stop; ++k) {
                    const TimeSeries& s = ds.series[order[k]];
                    rows.push_back(q == 0 && plan.keep_original ? s : plan.make_view(s, aug_rng));
                    labels.push_back(ds.labels[order[k]]);
                }
            std::vector<typename Encoder<S>::Cache> caches(rows.size());
            Mat<S> r(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(model.encoder.dim()));
            for (std::size_t i = 0; i < rows.size(); ++i)
                r.row(static_cast<Eigen::Index>(i)) =
                    model.encoder.forward(column<S>(rows[i].values), true, &dropout_rng, &caches[i]);
            typename Mlp<S>::Cache ccache;
            Mat<S> logits = model.classifier->forward(r, true, &dropout_rng, &ccache);
            auto ce = softmax_cross_entropy<S>(logits, labels);
            if (!std::isfinite(static_cast<double>(ce.value)))
                throw TrainingError("non-finite cross-entropy at epoch " + std::to_string(epoch));
            visit_all([](Param<S>& p) { p.zero_grad(); });
            Mat<S> dr = model.classifier->backward(ccache, ce.grad);
            for (std::size_t i = 0; i < rows.size(); ++i)
                model.encoder.backward(caches[i], dr.row(static_cast<Eigen::Index>(i)));
            opt.step(visit_all, lr);
            batch_losses.push_back(static_cast<double>(ce.value));
        }
        const double epoch_loss =
            std::accumulate(batch_losses.begin(), batch_losses.end(), 0.0) / static_cast<double>(batch_losses.size());
        report.loss.push_back(epoch_loss);
        report.batch_losses.push_back(std::move(batch_losses));
        report.learning_rate.push_back(lr);
        report.epoch_seconds.push_back(
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
        sched.step(epoch_loss);
        if (cfg.on_epoch) cfg.on_epoch("end-to-end", epoch, epoch_loss);
    }
    model.encoder_trained = true;
    model.classifier_trained = true;
    return report;
}

} // namespace scott
