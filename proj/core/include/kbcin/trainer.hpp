#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "kbcin/adamw.hpp"
#include "kbcin/checkpoint.hpp"
#include "kbcin/model.hpp"

namespace kbcin {

struct TrainConfig {
    ModelConfig model;
    double learning_rate = 4e-5;
    double weight_decay = 3e-4;
    std::size_t batch_size = 8;  // whole dialogues
    std::size_t epochs = 200;
    std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
    std::size_t patience = 10;  // epochs without valid macro-F1 improvement
    double clip_norm = 0.0;     // 0 disables

    void validate() const;
};

// key = value lines, '#' comments. Keys match the TrainConfig field names;
// later assignments win.
std::vector<std::pair<std::string, std::string>> parse_config_text(const std::string& text);
void apply_config_entry(TrainConfig& cfg, const std::string& key, const std::string& value);

struct EpochStats {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    MetricReport train_metrics;
    MetricReport valid_metrics;
};

struct SeedRunResult {
    std::uint64_t seed = 0;
    std::size_t best_epoch = 0;
    double best_valid_macro = 0.0;
    MetricReport test_metrics;
    std::vector<EpochStats> history;
    std::vector<PairPrediction> test_predictions;
    std::string checkpoint_json;  // best-valid parameters
};

struct AveragedMetrics {
    double neg_f1 = 0.0;
    double pos_f1 = 0.0;
    double macro_f1 = 0.0;
};

struct TrainResult {
    std::vector<SeedRunResult> per_seed;
    AveragedMetrics averaged_test;
    std::size_t best_seed_index = 0;  // by best valid macro
};

// Full optimization run: per-seed training with best-valid checkpointing and
// early stopping, then test metrics averaged over seeds.
TrainResult train_run(const Corpus& train, const Corpus& valid, const Corpus& test,
                      const KnowledgeStore& store, const TrainConfig& cfg,
                      const EmotionOverlay* overlay = nullptr, std::ostream* log = nullptr);

struct EvalOverrides {
    std::optional<EmotionMode> emotion_mode;
    std::optional<double> threshold;
    std::optional<BridgeSwitches> bridges;
};

struct EvalOutput {
    MetricReport metrics;
    std::vector<PairPrediction> predictions;
};

EvalOutput evaluate_run(const KbcinModel& model, const Corpus& corpus,
                        const KnowledgeStore& store, const EvalOverrides& overrides = {},
                        const EmotionOverlay* overlay = nullptr);

// Per-sample attention matrices (alpha, s_emo, s_act per head) as JSON lines.
void dump_attention(const KbcinModel& model, const Corpus& corpus, const KnowledgeStore& store,
                    const EmotionOverlay* overlay, std::ostream& out);

std::string metrics_to_json(const MetricReport& m);
std::string train_result_to_json(const TrainResult& r);
std::string predictions_to_jsonl(const std::vector<PairPrediction>& preds);
std::string history_to_json(const TrainResult& r);

}  // namespace kbcin
