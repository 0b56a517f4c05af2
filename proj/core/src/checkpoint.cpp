#include "kbcin/checkpoint.hpp"

#include <json.hpp>

namespace kbcin {

using nlohmann::json;

namespace {

json config_to_json_obj(const ModelConfig& c) {
    json j;
    j["d_m"] = c.d_m;
    j["enc_layers"] = c.enc_layers;
    j["enc_heads"] = c.enc_heads;
    j["d_ff"] = c.d_ff;
    j["max_len"] = c.max_len;
    j["d_h"] = c.d_h;
    j["heads"] = c.n_heads;
    j["d_k"] = c.d_k;
    j["p_max"] = c.p_max;
    j["mlp_hidden"] = c.mlp_hidden;
    j["dropout"] = c.dropout;
    j["leaky_slope"] = c.leaky_slope;
    j["emotion_mode"] = emotion_mode_name(c.emotion_mode);
    j["s_bridge"] = c.bridges.s_bridge;
    j["e_bridge"] = c.bridges.e_bridge;
    j["a_bridge"] = c.bridges.a_bridge;
    j["threshold"] = c.threshold;
    j["pos_weight"] = c.pos_weight;
    j["emotion_labels"] = c.emotion_labels;
    return j;
}

ModelConfig config_from_json_obj(const json& j) {
    ModelConfig c;
    c.d_m = j.value("d_m", c.d_m);
    c.enc_layers = j.value("enc_layers", c.enc_layers);
    c.enc_heads = j.value("enc_heads", c.enc_heads);
    c.d_ff = j.value("d_ff", c.d_ff);
    c.max_len = j.value("max_len", c.max_len);
    c.d_h = j.value("d_h", c.d_h);
    c.n_heads = j.value("heads", c.n_heads);
    c.d_k = j.value("d_k", c.d_k);
    c.p_max = j.value("p_max", c.p_max);
    c.mlp_hidden = j.value("mlp_hidden", c.mlp_hidden);
    c.dropout = j.value("dropout", c.dropout);
    c.leaky_slope = j.value("leaky_slope", c.leaky_slope);
    c.emotion_mode = emotion_mode_from_string(j.value("emotion_mode", "gold"));
    c.bridges.s_bridge = j.value("s_bridge", true);
    c.bridges.e_bridge = j.value("e_bridge", true);
    c.bridges.a_bridge = j.value("a_bridge", true);
    c.threshold = j.value("threshold", c.threshold);
    c.pos_weight = j.value("pos_weight", c.pos_weight);
    c.emotion_labels = j.value("emotion_labels", c.emotion_labels);
    return c;
}

}  // namespace

std::string model_config_to_json(const ModelConfig& cfg) {
    return config_to_json_obj(cfg).dump(2);
}

ModelConfig model_config_from_json(const std::string& document) {
    json j;
    try {
        j = json::parse(document);
    } catch (const json::exception& e) {
        throw ParseError(std::string("model config: invalid JSON: ") + e.what());
    }
    return config_from_json_obj(j);
}

std::string checkpoint_to_json(const KbcinModel& model, const CheckpointMeta& meta) {
    json j;
    j["config"] = config_to_json_obj(model.cfg);
    j["vocab"] = model.vocab.tokens();
    j["best_valid_macro"] = meta.best_valid_macro;
    j["epoch"] = meta.epoch;
    json params = json::object();
    for (const auto& [name, tensor] : model.named_params()) {
        params[name] = {{"shape", tensor.shape()}, {"data", tensor.values()}};
    }
    j["params"] = std::move(params);
    return j.dump();
}

KbcinModel checkpoint_from_json(const std::string& document, CheckpointMeta* meta) {
    json j;
    try {
        j = json::parse(document);
    } catch (const json::exception& e) {
        throw ParseError(std::string("checkpoint: invalid JSON: ") + e.what());
    }
    const ModelConfig cfg = config_from_json_obj(j.at("config"));
    Vocabulary vocab;
    const auto tokens = j.at("vocab").get<std::vector<std::string>>();
    for (std::size_t i = 3; i < tokens.size(); ++i) vocab.add(tokens[i]);  // 0..2 reserved
    KbcinModel model = KbcinModel::init(cfg, std::move(vocab), 0);

    const json& params = j.at("params");
    for (auto& [name, tensor] : model.named_params()) {
        if (!params.contains(name)) {
            throw ParseError("checkpoint: missing parameter '" + name + "'");
        }
        const json& entry = params.at(name);
        const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
        if (shape != tensor.shape()) {
            throw ParseError("checkpoint: parameter '" + name + "' has wrong shape");
        }
        auto data = entry.at("data").get<std::vector<double>>();
        if (data.size() != tensor.size()) {
            throw ParseError("checkpoint: parameter '" + name + "' has wrong length");
        }
        const_cast<Tensor&>(tensor).mutable_values() = std::move(data);
    }
    if (meta) {
        meta->best_valid_macro = j.value("best_valid_macro", 0.0);
        meta->epoch = j.value("epoch", std::size_t{0});
    }
    return model;
}

}  // namespace kbcin
