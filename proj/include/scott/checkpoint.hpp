#pragma once

#include "scott/core.hpp"
#include "scott/model.hpp"
#include "scott/neural.hpp"

#include "json.hpp"

#include <fstream>
#include <map>
#include <string>

// Checkpoint file (JSON):
//   {
//     "format": "scott-checkpoint",
//     "version": 1,
//     "config":   { model configuration },
//     "state":    { "encoder_trained": bool, "classifier_trained": bool, "classes": int },
//     "metadata": { free-form: task, window spec, label map, ... },
//     "params":   { "<layer>.<tensor>": { "shape": [..], "values": [row-major reals] } }
//   }

namespace scott {

using json = nlohmann::json;

inline constexpr int kCheckpointVersion = 1;

inline json to_json(const EncoderConfig& c) {
    return json{{"dim", c.dim},
                {"heads", c.heads},
                {"head_dim", c.head_dim},
                {"kernel", c.kernel},
                {"dilations", c.dilations},
                {"blocks", c.blocks},
                {"block_dropout", c.block_dropout},
                {"layer_norm", c.layer_norm},
                {"attention_residual", c.attention_residual},
                {"pooling", to_string(c.pooling)}};
}

inline EncoderConfig encoder_config_from_json(const json& j, EncoderConfig c = {}) {
    c.dim = j.value("dim", c.dim);
    c.heads = j.value("heads", c.heads);
    c.head_dim = j.value("head_dim", c.head_dim);
    c.kernel = j.value("kernel", c.kernel);
    if (j.contains("dilations")) c.dilations = j.at("dilations").get<std::vector<std::size_t>>();
    c.blocks = j.value("blocks", c.blocks);
    c.block_dropout = j.value("block_dropout", c.block_dropout);
    c.layer_norm = j.value("layer_norm", c.layer_norm);
    c.attention_residual = j.value("attention_residual", c.attention_residual);
    if (j.contains("pooling")) c.pooling = pooling_from_string(j.at("pooling").get<std::string>());
    return c;
}

inline json to_json(const ModelConfig& c) {
    return json{{"encoder", to_json(c.encoder)},
                {"projector_hidden", c.projector_hidden},
                {"embedding_dim", c.embedding_dim},
                {"projector_dropout", c.projector_dropout},
                {"classifier_hidden", c.classifier_hidden},
                {"classifier_dropout", c.classifier_dropout},
                {"features", to_string(c.features)},
                {"raw_length", c.raw_length}};
}

inline ModelConfig model_config_from_json(const json& j, ModelConfig c = {}) {
    if (j.contains("encoder")) c.encoder = encoder_config_from_json(j.at("encoder"), c.encoder);
    if (j.contains("projector_hidden")) c.projector_hidden = j.at("projector_hidden").get<std::vector<std::size_t>>();
    c.embedding_dim = j.value("embedding_dim", c.embedding_dim);
    c.projector_dropout = j.value("projector_dropout", c.projector_dropout);
    if (j.contains("classifier_hidden"))
        c.classifier_hidden = j.at("classifier_hidden").get<std::vector<std::size_t>>();
    c.classifier_dropout = j.value("classifier_dropout", c.classifier_dropout);
    if (j.contains("features")) c.features = feature_source_from_string(j.at("features").get<std::string>());
    c.raw_length = j.value("raw_length", c.raw_length);
    return c;
}

template <typename S>
json params_to_json(ScottModel<S>& model) {
    json params = json::object();
    model.visit([&](Param<S>& p) {
        std::vector<double> values(p.value.data(), p.value.data() + p.value.size());
        params[p.name] = json{{"shape", p.shape}, {"values", values}};
    });
    return params;
}

template <typename S>
json checkpoint_to_json(ScottModel<S>& model, const json& metadata = json::object()) {
    return json{{"format", "scott-checkpoint"},
                {"version", kCheckpointVersion},
                {"config", to_json(model.config())},
                {"state",
                 {{"encoder_trained", model.encoder_trained},
                  {"classifier_trained", model.classifier_trained},
                  {"classes", model.classes()}}},
                {"metadata", metadata},
                {"params", params_to_json(model)}};
}

template <typename S>
ScottModel<S> model_from_checkpoint(const json& j, json* metadata = nullptr) {
    if (j.value("format", std::string()) != "scott-checkpoint") throw FormatError("not a scott checkpoint");
    if (!j.contains("version")) throw FormatError("checkpoint has no version field");
    const int version = j.at("version").get<int>();
    if (version != kCheckpointVersion)
        throw FormatError("unsupported checkpoint version " + std::to_string(version));
    ScottModel<S> model(model_config_from_json(j.at("config")));
    const json& state = j.at("state");
    const int classes = state.value("classes", 0);
    if (classes > 0) {
        Rng dummy(0);
        model.add_classifier(classes, dummy);
    }
    const json& params = j.at("params");
    std::size_t loaded = 0;
    model.visit([&](Param<S>& p) {
        if (!params.contains(p.name)) throw FormatError("checkpoint is missing tensor " + p.name);
        const json& t = params.at(p.name);
        if (t.at("shape").get<std::vector<std::size_t>>() != p.shape)
            throw FormatError("checkpoint tensor " + p.name + " has the wrong shape");
        const auto values = t.at("values").get<std::vector<double>>();
        if (values.size() != p.size()) throw FormatError("checkpoint tensor " + p.name + " has the wrong size");
        for (std::size_t i = 0; i < values.size(); ++i) p.value.data()[i] = static_cast<S>(values[i]);
        ++loaded;
    });
    if (loaded != params.size()) throw FormatError("checkpoint has tensors the configured model does not use");
    model.encoder_trained = state.value("encoder_trained", false);
    model.classifier_trained = state.value("classifier_trained", false);
    if (metadata) *metadata = j.value("metadata", json::object());
    return model;
}

inline void write_json_file(const std::string& path, const json& j, int indent = 2) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot write " + path);
    out << j.dump(indent) << '\n';
    if (!out) throw FormatError("failed writing " + path);
}

inline json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open " + path);
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ParseError(path + ": " + e.what());
    }
}

template <typename S>
void save_checkpoint(const std::string& path, ScottModel<S>& model, const json& metadata = json::object()) {
    write_json_file(path, checkpoint_to_json(model, metadata), -1);
}

template <typename S>
ScottModel<S> load_checkpoint(const std::string& path, json* metadata = nullptr) {
    return model_from_checkpoint<S>(read_json_file(path), metadata);
}

} // namespace scott
