#pragma once

#include <string>

#include "kbcin/model.hpp"

namespace kbcin {

struct CheckpointMeta {
    double best_valid_macro = 0.0;
    std::size_t epoch = 0;
};

std::string checkpoint_to_json(const KbcinModel& model, const CheckpointMeta& meta);
KbcinModel checkpoint_from_json(const std::string& document, CheckpointMeta* meta = nullptr);

std::string model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const std::string& document);

}  // namespace kbcin
