#pragma once

#include "scott/augmentation.hpp"
#include "scott/checkpoint.hpp"
#include "scott/core.hpp"
#include "scott/cpd.hpp"
#include "scott/data.hpp"
#include "scott/loss.hpp"
#include "scott/metrics.hpp"
#include "scott/model.hpp"
#include "scott/training.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

// Experiment configuration and the subcommands of the command-line tool.
// Every command validates its configuration before touching the output
// directory, and every random draw is derived from the configured seed.

namespace scott {

namespace fs = std::filesystem;

using Real = float; // scalar type used for training in the tool

struct DatasetConfig {
    // ucr: directory holding <name>_TRAIN.tsv / <name>_TEST.tsv, or the
    //      _TRAIN.tsv file itself.
    // streams: CSV stream files (train_streams / test_streams).
    // synthetic-variance, synthetic-amplitude: generated from the seed.
    std::string kind = "ucr";
    std::string path;
    std::string type; // UCR data type, selects the default augmentation
    bool znormalize = false;
    std::vector<std::string> train_streams;
    std::vector<std::string> test_streams;
    // synthetic streams
    std::size_t train_length = 50000; // one window per point
    std::size_t test_length = 5000;
    std::size_t test_count = 2;
    long min_segment = 200;
    long max_segment = 800;
    double mean = 1.0;
    double state0_stddev = 0.5;
    double state1_stddev = 1.5;
    std::size_t train_count = 8; // amplitude streams
    AmplitudeStreamConfig amplitude;
};

struct LossBenchConfig {
    std::vector<std::size_t> sizes = {512, 1024, 2048, 4096, 8192};
    std::vector<std::size_t> batches = {16, 32, 64, 128, 256};
    std::size_t length = 256;
    std::size_t classes = 2;
    std::size_t repeats = 3;
    double temperature = 1.0;
};

struct ExperimentConfig {
    std::string task = "tsc"; // tsc | cpd
    std::optional<std::uint64_t> seed;
    std::string out_dir;
    DatasetConfig dataset;
    std::vector<DatasetConfig> datasets; // augment-study only; falls back to `dataset`
    std::string augmentation = "auto";   // auto | none | jitter | scale | permute | warp
    AugmentParams augment_params;
    bool oversample = false;
    WindowSpec window;
    bool window_given = false;
    std::string padding = "auto"; // auto | rising | gaussian | edge
    ModelConfig model;
    TrainConfig train;
    std::string pipeline = "scott"; // scott | tt-ce | mlp
    double decision = 0.5;
    std::size_t max_shift = 30;
    bool retrain_per_shift = true;
    std::string checkpoint;
    std::string stream; // cpd-simulate input ("-" = stdin)
    LossBenchConfig loss_bench;
    bool verbose = false;
};

// ---------------------------------------------------------------------------
// JSON config parsing

namespace detail {

inline void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + " must be an object");
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!allowed.count(it.key())) throw ConfigError("unknown key '" + it.key() + "' in " + where);
}

template <typename T>
void read(const json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
    }
}

inline DatasetConfig dataset_from_json(const json& j) {
    check_keys(j,
               {"kind", "path", "type", "znormalize", "train_streams", "test_streams", "train_length",
                "test_length", "test_count", "min_segment", "max_segment", "mean", "state0_stddev", "state1_stddev",
                "train_count", "stream_length", "drops"},
               "dataset");
    DatasetConfig d;
    read(j, "kind", d.kind);
    read(j, "path", d.path);
    read(j, "type", d.type);
    read(j, "znormalize", d.znormalize);
    read(j, "train_streams", d.train_streams);
    read(j, "test_streams", d.test_streams);
    read(j, "train_length", d.train_length);
    read(j, "test_length", d.test_length);
    read(j, "test_count", d.test_count);
    read(j, "min_segment", d.min_segment);
    read(j, "max_segment", d.max_segment);
    read(j, "mean", d.mean);
    read(j, "state0_stddev", d.state0_stddev);
    read(j, "state1_stddev", d.state1_stddev);
    read(j, "train_count", d.train_count);
    read(j, "stream_length", d.amplitude.length);
    read(j, "drops", d.amplitude.drops);
    return d;
}

inline void train_from_json(const json& j, TrainConfig& t) {
    check_keys(j,
               {"learning_rate", "encoder_epochs", "encoder_batch", "classifier_epochs", "classifier_batch",
                "plateau_patience", "plateau_factor", "min_improvement", "early_stop_patience",
                "validation_fraction", "views", "temperature", "similarity", "optimizer", "loss"},
               "train");
    read(j, "learning_rate", t.learning_rate);
    read(j, "encoder_epochs", t.encoder_epochs);
    read(j, "encoder_batch", t.encoder_batch);
    read(j, "classifier_epochs", t.classifier_epochs);
    read(j, "classifier_batch", t.classifier_batch);
    read(j, "plateau_patience", t.plateau_patience);
    read(j, "plateau_factor", t.plateau_factor);
    read(j, "min_improvement", t.min_improvement);
    read(j, "early_stop_patience", t.early_stop_patience);
    read(j, "validation_fraction", t.validation_fraction);
    read(j, "views", t.views);
    read(j, "temperature", t.temperature);
    if (j.contains("similarity")) t.similarity = similarity_from_string(j.at("similarity").get<std::string>());
    if (j.contains("optimizer")) t.optimizer = optimizer_from_string(j.at("optimizer").get<std::string>());
    if (j.contains("loss")) {
        const auto s = j.at("loss").get<std::string>();
        if (s == "simplified") t.encoder_loss = EncoderLoss::supcon;
        else if (s == "separate") t.encoder_loss = EncoderLoss::supcon_separate;
        else throw ConfigError("unknown encoder loss: " + s);
    }
}

} // namespace detail

inline ExperimentConfig config_from_json(const json& j) {
    detail::check_keys(j,
                       {"task", "seed", "out_dir", "dataset", "datasets", "augmentation", "noise_sigma",
                        "segments", "distortion", "oversample", "window", "padding", "model", "train", "pipeline",
                        "decision", "max_shift", "retrain_per_shift", "checkpoint", "stream", "loss_bench"},
                       "config");
    ExperimentConfig c;
    detail::read(j, "task", c.task);
    if (j.contains("seed")) {
        if (!j.at("seed").is_number_unsigned() && !j.at("seed").is_number_integer())
            throw ConfigError("seed must be a non-negative integer");
        c.seed = j.at("seed").get<std::uint64_t>();
    }
    detail::read(j, "out_dir", c.out_dir);
    if (j.contains("dataset")) c.dataset = detail::dataset_from_json(j.at("dataset"));
    if (j.contains("datasets"))
        for (const auto& d : j.at("datasets")) c.datasets.push_back(detail::dataset_from_json(d));
    detail::read(j, "augmentation", c.augmentation);
    detail::read(j, "noise_sigma", c.augment_params.noise.sigma);
    detail::read(j, "segments", c.augment_params.seg.segments);
    if (j.contains("distortion")) {
        auto d = j.at("distortion").get<std::vector<double>>();
        if (d.size() != 2) throw ConfigError("distortion must be [low, high]");
        c.augment_params.seg.min_distortion = d[0];
        c.augment_params.seg.max_distortion = d[1];
    }
    detail::read(j, "oversample", c.oversample);
    if (j.contains("window")) {
        const json& w = j.at("window");
        detail::check_keys(w, {"lambda", "beta", "threshold"}, "window");
        detail::read(w, "lambda", c.window.lambda);
        detail::read(w, "beta", c.window.beta);
        detail::read(w, "threshold", c.window.threshold);
        c.window_given = true;
    }
    detail::read(j, "padding", c.padding);
    if (j.contains("model")) {
        const json& m = j.at("model");
        c.model = model_config_from_json(m);
    }
    if (j.contains("train")) detail::train_from_json(j.at("train"), c.train);
    detail::read(j, "pipeline", c.pipeline);
    detail::read(j, "decision", c.decision);
    detail::read(j, "max_shift", c.max_shift);
    detail::read(j, "retrain_per_shift", c.retrain_per_shift);
    detail::read(j, "checkpoint", c.checkpoint);
    detail::read(j, "stream", c.stream);
    if (j.contains("loss_bench")) {
        const json& b = j.at("loss_bench");
        detail::check_keys(b, {"sizes", "batches", "length", "classes", "repeats", "temperature"}, "loss_bench");
        detail::read(b, "sizes", c.loss_bench.sizes);
        detail::read(b, "batches", c.loss_bench.batches);
        detail::read(b, "length", c.loss_bench.length);
        detail::read(b, "classes", c.loss_bench.classes);
        detail::read(b, "repeats", c.loss_bench.repeats);
        detail::read(b, "temperature", c.loss_bench.temperature);
    }
    return c;
}

inline ExperimentConfig load_config(const std::string& path) {
    if (!fs::exists(path)) throw ConfigError("config file not found: " + path);
    try {
        return config_from_json(read_json_file(path));
    } catch (const ParseError& e) {
        throw ConfigError(e.what());
    } catch (const json::exception& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------
// Validation

struct UcrFiles {
    std::string name, train, test;
};

inline UcrFiles resolve_ucr(const std::string& path) {
    if (path.empty()) throw ConfigError("no dataset path given");
    fs::path p(path);
    if (!fs::exists(p)) throw ConfigError("dataset path not found: " + path);
    UcrFiles f;
    if (fs::is_directory(p)) {
        if (p.filename().empty()) p = p.parent_path();
        f.name = p.filename().string();
        f.train = (p / (f.name + "_TRAIN.tsv")).string();
        f.test = (p / (f.name + "_TEST.tsv")).string();
    } else {
        const std::string file = p.filename().string();
        const std::string suffix = "_TRAIN.tsv";
        if (file.size() <= suffix.size() || file.compare(file.size() - suffix.size(), suffix.size(), suffix) != 0)
            throw ConfigError("UCR dataset path must be a directory or a *_TRAIN.tsv file: " + path);
        f.name = file.substr(0, file.size() - suffix.size());
        f.train = p.string();
        f.test = (p.parent_path() / (f.name + "_TEST.tsv")).string();
    }
    if (!fs::exists(f.train)) throw ConfigError("dataset file not found: " + f.train);
    if (!fs::exists(f.test)) throw ConfigError("dataset file not found: " + f.test);
    return f;
}

inline void validate_dataset(const DatasetConfig& d, const std::string& task) {
    if (d.kind == "ucr") {
        if (task != "tsc") throw ConfigError("UCR datasets are for the tsc task");
        resolve_ucr(d.path);
    } else if (d.kind == "streams") {
        if (task != "cpd") throw ConfigError("stream datasets are for the cpd task");
        if (d.train_streams.empty() || d.test_streams.empty())
            throw ConfigError("stream dataset needs train_streams and test_streams");
        for (const auto& s : d.train_streams)
            if (!fs::exists(s)) throw ConfigError("stream file not found: " + s);
        for (const auto& s : d.test_streams)
            if (!fs::exists(s)) throw ConfigError("stream file not found: " + s);
    } else if (d.kind == "synthetic-variance" || d.kind == "synthetic-amplitude") {
        if (task != "cpd") throw ConfigError("synthetic streams are for the cpd task");
        if (d.train_length == 0 || d.test_length == 0 || d.test_count == 0)
            throw ConfigError("synthetic stream lengths must be positive");
        if (d.min_segment <= 0 || d.max_segment < d.min_segment) throw ConfigError("invalid segment range");
    } else {
        throw ConfigError("unknown dataset kind: " + d.kind);
    }
}

inline AugmentMethod resolve_method(const ExperimentConfig& c, const DatasetConfig& d) {
    if (c.augmentation == "auto") {
        if (c.task == "cpd") return AugmentMethod::jitter;
        if (d.type.empty()) return AugmentMethod::jitter;
        return default_method_for_type(d.type);
    }
    return augment_method_from_string(c.augmentation);
}

inline PaddingSpec resolve_padding(const ExperimentConfig& c) {
    std::string kind = c.padding;
    if (kind == "auto") kind = c.dataset.kind == "synthetic-variance" ? "gaussian" : "rising";
    const std::size_t n = c.window.padding();
    switch (padding_kind_from_string(kind)) {
    case PaddingKind::gaussian: return PaddingSpec::gaussian(n, c.dataset.mean, c.dataset.state0_stddev);
    case PaddingKind::edge_replicate: return PaddingSpec::edge(n);
    case PaddingKind::rising_trend: break;
    }
    return PaddingSpec::rising(n);
}

/// Checks everything that can be checked without running. `needs_out`
/// requires an output directory.
inline void validate_config(ExperimentConfig& c, const std::string& command, bool needs_out = true) {
    if (!c.seed) throw ConfigError("a seed is required (config 'seed' or --seed)");
    if (needs_out && c.out_dir.empty()) throw ConfigError("an output directory is required (--out-dir)");
    if (c.task != "tsc" && c.task != "cpd") throw ConfigError("task must be 'tsc' or 'cpd'");
    if (c.pipeline != "scott" && c.pipeline != "tt-ce" && c.pipeline != "mlp")
        throw ConfigError("pipeline must be scott, tt-ce or mlp");
    if (!(c.decision > 0.0 && c.decision < 1.0)) throw ConfigError("decision threshold must lie in (0, 1)");
    c.window.validate();
    c.train.seed = *c.seed;
    c.train.validate();
    c.augment_params.seg.validate();
    if (c.augmentation != "auto") augment_method_from_string(c.augmentation);
    resolve_padding(c);
    if (command == "augment-study") {
        if (c.task != "tsc") throw ConfigError("augment-study runs on classification datasets");
        if (c.datasets.empty()) c.datasets.push_back(c.dataset);
        for (const auto& d : c.datasets) validate_dataset(d, c.task);
    } else if (command == "loss-bench") {
        if (c.loss_bench.sizes.empty() || c.loss_bench.batches.empty()) throw ConfigError("empty benchmark grid");
        for (auto s : c.loss_bench.sizes)
            if (s == 0) throw ConfigError("training sizes must be positive");
        for (auto b : c.loss_bench.batches)
            if (b == 0) throw ConfigError("batch sizes must be positive");
        if (c.loss_bench.length == 0 || c.loss_bench.repeats == 0 || c.loss_bench.classes < 2)
            throw ConfigError("invalid loss-bench settings");
        if (c.train.views < 2) throw ConfigError("loss-bench needs at least two views");
    } else if (command == "cpd-simulate") {
        if (c.checkpoint.empty()) throw ConfigError("cpd-simulate needs a checkpoint (--checkpoint)");
        if (!fs::exists(c.checkpoint)) throw ConfigError("checkpoint not found: " + c.checkpoint);
        if (c.stream.empty()) throw ConfigError("cpd-simulate needs a stream (--dataset FILE or '-')");
        if (c.stream != "-" && !fs::exists(c.stream)) throw ConfigError("stream file not found: " + c.stream);
    } else if (command == "eval") {
        if (c.checkpoint.empty()) throw ConfigError("eval needs a checkpoint (--checkpoint)");
        if (!fs::exists(c.checkpoint)) throw ConfigError("checkpoint not found: " + c.checkpoint);
        validate_dataset(c.dataset, c.task);
    } else {
        if (command == "early-detect" && c.task != "cpd") throw ConfigError("early-detect needs a cpd config");
        validate_dataset(c.dataset, c.task);
    }
}

inline void ensure_out_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error("cannot create output directory " + dir + ": " + ec.message());
}

// ---------------------------------------------------------------------------
// Reports

inline json report_to_json(const TrainReport& r) {
    return json{{"stage", r.stage},
                {"seed", r.seed},
                {"loss", r.loss},
                {"batch_losses", r.batch_losses},
                {"validation_loss", r.validation_loss},
                {"learning_rate", r.learning_rate},
                {"epoch_seconds", r.epoch_seconds},
                {"best_epoch", r.best_epoch},
                {"early_stopped", r.early_stopped},
                {"anchors_without_positives", r.anchors_without_positives}};
}

inline json window_to_json(const WindowSpec& w) {
    return json{{"lambda", w.lambda}, {"beta", w.beta}, {"threshold", w.threshold}};
}

inline WindowSpec window_from_json(const json& j) {
    WindowSpec w;
    w.lambda = j.at("lambda").get<std::size_t>();
    w.beta = j.at("beta").get<std::size_t>();
    w.threshold = j.at("threshold").get<double>();
    return w;
}

inline json padding_to_json(const PaddingSpec& p) {
    return json{{"kind", to_string(p.kind)}, {"count", p.count}, {"mean", p.mean}, {"stddev", p.stddev}};
}

inline PaddingSpec padding_from_json(const json& j) {
    PaddingSpec p;
    p.kind = padding_kind_from_string(j.at("kind").get<std::string>());
    p.count = j.at("count").get<std::size_t>();
    p.mean = j.at("mean").get<double>();
    p.stddev = j.at("stddev").get<double>();
    return p;
}

struct RunResult {
    ScottModel<Real> model;
    std::vector<TrainReport> reports;
    json metrics;
    json metadata;
};

inline std::function<void(const std::string&, std::size_t, double)> progress_logger(bool verbose) {
    if (!verbose) return {};
    return [](const std::string& stage, std::size_t epoch, double loss) {
        std::cerr << stage << " epoch " << epoch + 1 << " loss " << loss << '\n';
    };
}

// ---------------------------------------------------------------------------
// Classification pipeline

struct TscData {
    std::string name;
    LabeledDataset train, test;
};

inline TscData load_tsc(const DatasetConfig& d) {
    const UcrFiles f = resolve_ucr(d.path);
    TscData out;
    out.name = f.name;
    out.train = load_ucr_tsv(f.train, Split::train);
    out.test = load_ucr_tsv(f.test, Split::test, &out.train.label_map);
    if (out.train.length() != out.test.length()) throw FormatError(f.name + ": train and test lengths differ");
    if (d.znormalize) {
        for (auto& s : out.train.series) s = znormalize(s);
        for (auto& s : out.test.series) s = znormalize(s);
    }
    out.train.validate();
    out.test.validate();
    return out;
}

/// Two-stage (or ablation) training on a classification dataset followed by
/// test accuracy. Deterministic for a fixed seed.
inline RunResult run_tsc(const ExperimentConfig& c, const DatasetConfig& d, const TscData& data) {
    TrainConfig tc = c.train;
    tc.on_epoch = progress_logger(c.verbose);
    ModelConfig mc = c.model;
    if (c.pipeline == "mlp") {
        mc.features = FeatureSource::raw;
        mc.raw_length = data.train.length();
    }
    AugmentationPlan plan;
    plan.method = resolve_method(c, d);
    plan.params = c.augment_params;

    RunResult r;
    r.model = ScottModel<Real>(mc);
    if (c.pipeline == "scott") {
        r.reports.push_back(train_encoder(r.model, data.train, plan, tc));
        const Mat<Real> f = dataset_features(r.model, data.train);
        r.reports.push_back(train_classifier(r.model, f, data.train.labels, data.train.class_count, tc));
    } else if (c.pipeline == "tt-ce") {
        r.reports.push_back(train_end_to_end(r.model, data.train, plan, tc));
    } else {
        Rng init = Rng(tc.seed).child("init");
        r.model.init(init);
        const Mat<Real> f = dataset_features(r.model, data.train);
        r.reports.push_back(train_classifier(r.model, f, data.train.labels, data.train.class_count, tc));
    }
    const auto predicted = predict_labels(r.model, dataset_features(r.model, data.test));
    const double acc = accuracy(predicted, data.test.labels);
    r.metrics = json{{"task", "tsc"},
                     {"dataset", data.name},
                     {"pipeline", c.pipeline},
                     {"augmentation", to_string(plan.method)},
                     {"seed", tc.seed},
                     {"n_train", data.train.size()},
                     {"n_test", data.test.size()},
                     {"classes", data.train.class_count},
                     {"accuracy", acc},
                     {"final_train_loss", r.reports.front().loss.empty() ? 0.0 : r.reports.front().loss.back()}};
    r.metadata = json{{"task", "tsc"},
                      {"dataset", data.name},
                      {"length", data.train.length()},
                      {"labels", data.train.label_map.raw},
                      {"znormalize", d.znormalize}};
    return r;
}

// ---------------------------------------------------------------------------
// Change-point pipeline

struct CpdStreams {
    std::vector<TimeSeries> train, test;
};

inline TimeSeries load_labeled_stream(const std::string& path, double threshold) {
    TimeSeries s = load_series_csv(path);
    if (!s.has_labels()) s.labels = label_by_drop(s.values, threshold);
    return s;
}

inline CpdStreams load_cpd_streams(const DatasetConfig& d, const WindowSpec& w, std::uint64_t seed) {
    CpdStreams out;
    const Rng root(seed);
    if (d.kind == "streams") {
        for (const auto& p : d.train_streams) out.train.push_back(load_labeled_stream(p, w.threshold));
        for (const auto& p : d.test_streams) out.test.push_back(load_labeled_stream(p, w.threshold));
    } else if (d.kind == "synthetic-variance") {
        out.train.push_back(generate_variance_stream(d.train_length, d.min_segment, d.max_segment,
                                                     root.child("train-stream").seed(), d.state0_stddev,
                                                     d.state1_stddev));
        for (std::size_t i = 0; i < d.test_count; ++i)
            out.test.push_back(generate_variance_stream(d.test_length, d.min_segment, d.max_segment,
                                                        root.child("test-stream-" + std::to_string(i)).seed(),
                                                        d.state0_stddev, d.state1_stddev));
        for (auto* set : {&out.train, &out.test})
            for (auto& s : *set)
                for (double& v : s.values) v += d.mean - 1.0;
    } else {
        AmplitudeStreamConfig a = d.amplitude;
        a.threshold = w.threshold;
        for (std::size_t i = 0; i < d.train_count; ++i)
            out.train.push_back(generate_amplitude_stream(a, root.child("train-stream-" + std::to_string(i)).seed()));
        for (std::size_t i = 0; i < d.test_count; ++i)
            out.test.push_back(generate_amplitude_stream(a, root.child("test-stream-" + std::to_string(i)).seed()));
    }
    return out;
}

inline json cpd_metrics(const std::vector<double>& probabilities, const std::vector<int>& truths, double decision) {
    ScoredPredictions sp{probabilities, truths};
    json m{{"n_windows", truths.size()}, {"positives", sp.positives()}, {"decision", decision}};
    if (sp.positives() > 0 && sp.positives() < truths.size()) {
        m["auroc"] = auroc(sp);
        m["auprc"] = auprc(sp);
    }
    if (sp.positives() > 0) {
        const auto pr = precision_recall(sp, decision);
        m["precision"] = pr.precision;
        m["recall"] = pr.recall;
    }
    return m;
}

/// Trains on windows of the training streams and scores every window of
/// the test streams.
inline RunResult run_cpd(const ExperimentConfig& c, const CpdStreams& streams) {
    TrainConfig tc = c.train;
    tc.on_epoch = progress_logger(c.verbose);
    const Rng root(tc.seed);
    CpdPrepOptions prep;
    prep.padding = resolve_padding(c);
    prep.params = c.augment_params;
    prep.oversample = c.oversample;
    prep.augment = c.augmentation != "none";
    if (c.augmentation != "auto" && c.augmentation != "none")
        prep.kinds = {augment_method_from_string(c.augmentation)};
    Rng prep_rng = root.child("cpd-train-windows");
    const LabeledDataset train = prepare_cpd_dataset(streams.train, c.window, prep, Split::train, prep_rng);
    Rng test_rng = root.child("cpd-test-windows");
    const LabeledDataset test = prepare_cpd_dataset(streams.test, c.window, prep, Split::test, test_rng);
    train.validate();

    ModelConfig mc = c.model;
    if (c.pipeline == "mlp") {
        mc.features = FeatureSource::raw;
        mc.raw_length = c.window.lambda;
    }
    AugmentationPlan plan;
    plan.params = c.augment_params;
    plan.tail = c.window.beta;
    plan.window_kinds = prep.kinds;

    RunResult r;
    r.model = ScottModel<Real>(mc);
    if (c.pipeline == "scott") {
        r.reports.push_back(train_encoder(r.model, train, plan, tc));
        const Mat<Real> f = dataset_features(r.model, train);
        r.reports.push_back(train_classifier(r.model, f, train.labels, 2, tc));
    } else if (c.pipeline == "tt-ce") {
        r.reports.push_back(train_end_to_end(r.model, train, plan, tc));
    } else {
        Rng init = root.child("init");
        r.model.init(init);
        const Mat<Real> f = dataset_features(r.model, train);
        r.reports.push_back(train_classifier(r.model, f, train.labels, 2, tc));
    }
    const auto probabilities = predict_windows(r.model, test);
    r.metrics = cpd_metrics(probabilities, test.labels, c.decision);
    r.metrics["task"] = "cpd";
    r.metrics["pipeline"] = c.pipeline;
    r.metrics["seed"] = tc.seed;
    r.metrics["n_train_windows"] = train.size();
    r.metrics["window"] = window_to_json(c.window);
    r.metadata = json{{"task", "cpd"},
                      {"window", window_to_json(c.window)},
                      {"padding", padding_to_json(prep.padding)},
                      {"decision", c.decision}};
    return r;
}

// ---------------------------------------------------------------------------
// Commands. Each returns normally on success and throws on failure.

inline void write_run(const std::string& out_dir, RunResult& r) {
    save_checkpoint(out_dir + "/checkpoint.json", r.model, r.metadata);
    json reports = json::array();
    for (const auto& rep : r.reports) reports.push_back(report_to_json(rep));
    write_json_file(out_dir + "/train_report.json", json{{"stages", reports}});
    write_json_file(out_dir + "/metrics.json", r.metrics);
}

inline void cmd_ingest(ExperimentConfig c, std::ostream& log) {
    if (!c.seed) c.seed = 0; // ingest draws nothing random
    validate_config(c, "ingest", false);
    json summary;
    if (c.task == "tsc") {
        const TscData data = load_tsc(c.dataset);
        summary = json{{"dataset", data.name},
                       {"length", data.train.length()},
                       {"classes", data.train.class_count},
                       {"labels", data.train.label_map.raw},
                       {"n_train", data.train.size()},
                       {"n_test", data.test.size()},
                       {"train_class_counts", data.train.class_counts()},
                       {"test_class_counts", data.test.class_counts()}};
    } else {
        const CpdStreams s = load_cpd_streams(c.dataset, c.window, *c.seed);
        auto describe = [&](const std::vector<TimeSeries>& v) {
            json a = json::array();
            for (const auto& t : v) {
                const auto pos = std::count(t.labels.begin(), t.labels.end(), 1);
                a.push_back(json{{"length", t.size()}, {"windows", t.size()}, {"change_points", pos}});
            }
            return a;
        };
        summary = json{{"train_streams", describe(s.train)}, {"test_streams", describe(s.test)},
                       {"window", window_to_json(c.window)}};
    }
    if (!c.out_dir.empty()) {
        ensure_out_dir(c.out_dir);
        write_json_file(c.out_dir + "/dataset.json", summary);
    }
    log << summary.dump(2) << '\n';
}

inline void cmd_train(ExperimentConfig c, std::ostream& log) {
    validate_config(c, "train");
    RunResult r;
    if (c.task == "tsc") {
        const TscData data = load_tsc(c.dataset);
        r = run_tsc(c, c.dataset, data);
    } else {
        r = run_cpd(c, load_cpd_streams(c.dataset, c.window, *c.seed));
    }
    ensure_out_dir(c.out_dir);
    write_run(c.out_dir, r);
    log << r.metrics.dump() << '\n';
}

inline void check_window_matches(const ExperimentConfig& c, const json& metadata) {
    if (!metadata.contains("window")) throw ConfigError("checkpoint carries no window spec");
    const WindowSpec w = window_from_json(metadata.at("window"));
    if (c.window_given && !(w == c.window))
        throw ConfigError("window spec (lambda " + std::to_string(c.window.lambda) + ", beta " +
                          std::to_string(c.window.beta) + ") does not match the checkpoint (lambda " +
                          std::to_string(w.lambda) + ", beta " + std::to_string(w.beta) + ")");
}

inline void cmd_eval(ExperimentConfig c, std::ostream& log) {
    validate_config(c, "eval", false);
    json metadata;
    auto model = load_checkpoint<Real>(c.checkpoint, &metadata);
    json metrics;
    if (c.task == "tsc") {
        if (metadata.value("task", std::string()) != "tsc") throw ConfigError("checkpoint is not a tsc model");
        const TscData data = load_tsc(c.dataset);
        if (!model.classifier) throw StateError("checkpoint has no classifier");
        const auto predicted = predict_labels(model, dataset_features(model, data.test));
        metrics = json{{"task", "tsc"}, {"dataset", data.name}, {"n_test", data.test.size()},
                       {"accuracy", accuracy(predicted, data.test.labels)}};
    } else {
        if (metadata.value("task", std::string()) != "cpd") throw ConfigError("checkpoint is not a cpd model");
        check_window_matches(c, metadata);
        c.window = window_from_json(metadata.at("window"));
        const CpdStreams s = load_cpd_streams(c.dataset, c.window, *c.seed);
        CpdPrepOptions prep;
        prep.padding = padding_from_json(metadata.at("padding"));
        Rng test_rng = Rng(*c.seed).child("cpd-test-windows");
        const LabeledDataset test = prepare_cpd_dataset(s.test, c.window, prep, Split::test, test_rng);
        metrics = cpd_metrics(predict_windows(model, test), test.labels, metadata.value("decision", c.decision));
        metrics["task"] = "cpd";
    }
    if (!c.out_dir.empty()) {
        ensure_out_dir(c.out_dir);
        write_json_file(c.out_dir + "/eval_metrics.json", metrics);
    }
    log << metrics.dump() << '\n';
}

inline void write_annotations(std::ostream& out, const TimeSeries& s, const StreamResult& r) {
    out << std::setprecision(std::numeric_limits<double>::max_digits10);
    out << "t,value,probability,prediction\n";
    for (std::size_t t = 0; t < s.size(); ++t)
        out << t << ',' << s.values[t] << ',' << r.probabilities[t] << ',' << r.predictions[t] << '\n';
}

inline void cmd_cpd_simulate(ExperimentConfig c, std::ostream& log, std::istream& stdin_stream = std::cin) {
    validate_config(c, "cpd-simulate");
    json metadata;
    auto model = load_checkpoint<Real>(c.checkpoint, &metadata);
    if (metadata.value("task", std::string()) != "cpd") throw ConfigError("checkpoint is not a cpd model");
    check_window_matches(c, metadata);
    const WindowSpec w = window_from_json(metadata.at("window"));
    const PaddingSpec padding = padding_from_json(metadata.at("padding"));
    require_trained(model);
    const TimeSeries s = c.stream == "-" ? read_series_csv(stdin_stream, "<stdin>") : load_series_csv(c.stream);

    ensure_out_dir(c.out_dir);
    const StreamResult r =
        simulate_stream(model, s, w, padding, Rng(*c.seed).child("stream-padding"), metadata.value("decision", 0.5));
    std::ofstream out(c.out_dir + "/annotations.csv");
    if (!out) throw Error("cannot write annotations");
    write_annotations(out, s, r);
    json summary{{"steps", s.size()}, {"annotations", r.annotations.size()}};
    if (s.has_labels()) {
        summary["metrics"] = cpd_metrics(r.probabilities, s.labels, metadata.value("decision", 0.5));
        write_json_file(c.out_dir + "/metrics.json", summary["metrics"]);
    }
    log << summary.dump() << '\n';
}

inline void cmd_early_detect(ExperimentConfig c, std::ostream& log) {
    validate_config(c, "early-detect");
    const CpdStreams base = load_cpd_streams(c.dataset, c.window, *c.seed);
    auto shifted = [&](std::size_t shift) {
        CpdStreams s = base;
        for (auto* set : {&s.train, &s.test})
            for (auto& t : *set) t.labels = shift_boundary(t.labels, shift);
        return s;
    };
    RunResult baseline = run_cpd(c, base);
    ensure_out_dir(c.out_dir);
    std::ofstream out(c.out_dir + "/early_detect.csv");
    if (!out) throw Error("cannot write early_detect.csv");
    out << std::setprecision(std::numeric_limits<double>::max_digits10);
    out << "shift,auprc,auroc,precision,recall,positives\n";
    auto row = [&](std::size_t shift, const json& m) {
        out << shift << ',' << m.value("auprc", 0.0) << ',' << m.value("auroc", 0.0) << ','
            << m.value("precision", 0.0) << ',' << m.value("recall", 0.0) << ',' << m.value("positives", 0) << '\n';
        log << "shift " << shift << " auprc " << m.value("auprc", 0.0) << " recall " << m.value("recall", 0.0)
            << '\n';
    };
    row(0, baseline.metrics);
    for (std::size_t shift = 1; shift <= c.max_shift; ++shift) {
        const CpdStreams s = shifted(shift);
        if (c.retrain_per_shift) {
            row(shift, run_cpd(c, s).metrics);
        } else {
            CpdPrepOptions prep;
            prep.padding = resolve_padding(c);
            Rng test_rng = Rng(*c.seed).child("cpd-test-windows");
            const LabeledDataset test = prepare_cpd_dataset(s.test, c.window, prep, Split::test, test_rng);
            row(shift, cpd_metrics(predict_windows(baseline.model, test), test.labels, c.decision));
        }
    }
}

inline void cmd_augment_study(ExperimentConfig c, std::ostream& log) {
    validate_config(c, "augment-study");
    const std::vector<std::pair<std::string, AugmentMethod>> methods = {{"warping", AugmentMethod::warp},
                                                                        {"permutation", AugmentMethod::permute},
                                                                        {"scaling", AugmentMethod::scale},
                                                                        {"jittering", AugmentMethod::jitter}};
    std::vector<std::vector<double>> table;
    std::vector<std::string> names;
    for (const auto& d : c.datasets) {
        const TscData data = load_tsc(d);
        names.push_back(data.name);
        std::vector<double> row;
        for (const auto& [label, method] : methods) {
            ExperimentConfig run = c;
            run.augmentation = to_string(method);
            row.push_back(run_tsc(run, d, data).metrics.at("accuracy").get<double>());
            log << data.name << ' ' << label << ' ' << row.back() << '\n';
        }
        table.push_back(row);
    }
    ensure_out_dir(c.out_dir);
    std::ofstream out(c.out_dir + "/augment_study.csv");
    if (!out) throw Error("cannot write augment_study.csv");
    out << std::fixed << std::setprecision(4);
    out << "dataset,type";
    for (const auto& m : methods) out << ',' << m.first;
    out << ",best\n";
    for (std::size_t i = 0; i < table.size(); ++i) {
        out << names[i] << ',' << (c.datasets[i].type.empty() ? "-" : c.datasets[i].type);
        for (double a : table[i]) out << ',' << a;
        const auto best = std::max_element(table[i].begin(), table[i].end()) - table[i].begin();
        out << ',' << methods[static_cast<std::size_t>(best)].first << '\n';
    }
}

// ---------------------------------------------------------------------------
// Loss benchmark

struct LossBenchCell {
    std::size_t training_size = 0;
    std::size_t batch_size = 0; // instances per batch for the per-view loss
    std::size_t views = 0;
    double original_seconds = 0.0;
    double simplified_seconds = 0.0;
    double original_loss = 0.0;
    double simplified_loss_scaled = 0.0; // simplified / n_v
    double max_abs_diff = 0.0;           // worst batch
};

/// Synthetic 8-d embeddings for `n` instances x `views` views: length-`length`
/// class-dependent series, jittered per view and mapped through a fixed
/// random linear projection.
inline std::vector<Mat<double>> bench_embeddings(std::size_t n, std::size_t views, std::size_t length,
                                                 const std::vector<int>& labels, Rng& rng) {
    Mat<double> proj(static_cast<Eigen::Index>(length), 8);
    for (Eigen::Index i = 0; i < proj.size(); ++i) proj.data()[i] = rng.normal(0.0, 1.0 / std::sqrt(double(length)));
    Mat<double> base(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(length));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t t = 0; t < length; ++t)
            base(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t)) =
                std::sin(0.05 * double(t) * double(labels[i] + 1)) + rng.normal(0.0, 0.3);
    std::vector<Mat<double>> out;
    for (std::size_t q = 0; q < views; ++q) {
        Mat<double> v = base;
        if (q > 0)
            for (Eigen::Index i = 0; i < v.size(); ++i) v.data()[i] += rng.normal(0.0, 0.1);
        out.push_back(v * proj);
    }
    return out;
}

/// Times one pass over `training_size` instances with both loss
/// formulations (forward + gradient), best of `repeats`.
inline LossBenchCell bench_cell(std::size_t training_size, std::size_t batch, std::size_t views,
                                const LossBenchConfig& cfg, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<int> labels(training_size);
    for (auto& y : labels) y = static_cast<int>(rng.index(cfg.classes));
    const auto emb = bench_embeddings(training_size, views, cfg.length, labels, rng);

    struct Batch {
        std::vector<Mat<double>> views;
        Mat<double> flat;
        std::vector<int> labels, flat_labels;
    };
    std::vector<Batch> batches;
    for (std::size_t s = 0; s < training_size; s += batch) {
        const std::size_t bn = std::min(batch, training_size - s);
        if (bn < 1) continue;
        Batch b;
        for (const auto& v : emb) b.views.push_back(v.middleRows(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(bn)));
        b.labels.assign(labels.begin() + static_cast<std::ptrdiff_t>(s),
                        labels.begin() + static_cast<std::ptrdiff_t>(s + bn));
        b.flat = flatten_views(b.views);
        b.flat_labels = repeat_labels(b.labels, views);
        batches.push_back(std::move(b));
    }
    const double tau = cfg.temperature;
    LossBenchCell cell;
    cell.training_size = training_size;
    cell.batch_size = batch;
    cell.views = views;
    cell.original_seconds = cell.simplified_seconds = std::numeric_limits<double>::infinity();
    using clock = std::chrono::steady_clock;
    for (std::size_t rep = 0; rep < cfg.repeats; ++rep) {
        // alternate the order so neither formulation always runs on a warm cache
        for (int which = 0; which < 2; ++which) {
            const bool original = (rep + static_cast<std::size_t>(which)) % 2 == 0;
            double total = 0.0;
            const auto t0 = clock::now();
            for (const auto& b : batches) {
                if (original) total += supcon_separate<double>(b.views, b.labels, tau, Similarity::cosine).value;
                else total += supcon_simplified<double>(b.flat, b.flat_labels, tau, Similarity::cosine).value;
            }
            const double secs = std::chrono::duration<double>(clock::now() - t0).count();
            if (original) {
                cell.original_seconds = std::min(cell.original_seconds, secs);
                cell.original_loss = total;
            } else {
                cell.simplified_seconds = std::min(cell.simplified_seconds, secs);
                cell.simplified_loss_scaled = total / static_cast<double>(views);
            }
        }
    }
    for (const auto& b : batches) {
        const double a = supcon_separate<double>(b.views, b.labels, tau, Similarity::cosine).value;
        const double f = supcon_simplified<double>(b.flat, b.flat_labels, tau, Similarity::cosine).value;
        cell.max_abs_diff = std::max(cell.max_abs_diff, std::abs(a - f / static_cast<double>(views)));
    }
    return cell;
}

inline std::vector<LossBenchCell> run_loss_bench(const LossBenchConfig& cfg, std::size_t views, std::uint64_t seed,
                                                 std::ostream* log = nullptr) {
    std::vector<LossBenchCell> cells;
    const Rng root(seed);
    for (std::size_t size : cfg.sizes) {
        for (std::size_t batch : cfg.batches) {
            const auto s = root.child("bench-" + std::to_string(size) + "-" + std::to_string(batch)).seed();
            cells.push_back(bench_cell(size, batch, views, cfg, s));
            if (log)
                *log << "size " << size << " batch " << batch << " original " << cells.back().original_seconds
                     << "s simplified " << cells.back().simplified_seconds << "s\n";
        }
    }
    return cells;
}

inline void write_loss_bench_csv(std::ostream& out, const std::vector<LossBenchCell>& cells) {
    out << std::setprecision(std::numeric_limits<double>::max_digits10);
    out << "training_size,batch_size,n_views,original_seconds,simplified_seconds,difference,original_loss,"
           "simplified_loss_scaled,max_abs_diff\n";
    for (const auto& c : cells)
        out << c.training_size << ',' << c.batch_size << ',' << c.views << ',' << c.original_seconds << ','
            << c.simplified_seconds << ',' << c.original_seconds - c.simplified_seconds << ',' << c.original_loss
            << ',' << c.simplified_loss_scaled << ',' << c.max_abs_diff << '\n';
}

inline void cmd_loss_bench(ExperimentConfig c, std::ostream& log) {
    validate_config(c, "loss-bench");
    const auto cells = run_loss_bench(c.loss_bench, c.train.views, *c.seed, c.verbose ? &log : nullptr);
    ensure_out_dir(c.out_dir);
    std::ofstream out(c.out_dir + "/loss_bench.csv");
    if (!out) throw Error("cannot write loss_bench.csv");
    write_loss_bench_csv(out, cells);
    std::size_t faster = 0;
    for (const auto& cell : cells) faster += cell.simplified_seconds <= cell.original_seconds;
    log << "simplified no slower in " << faster << " of " << cells.size() << " cells\n";
}

} // namespace scott
