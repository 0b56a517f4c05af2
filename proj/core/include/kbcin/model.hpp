#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kbcin/dataset.hpp"
#include "kbcin/encoder.hpp"
#include "kbcin/kbci.hpp"
#include "kbcin/knowledge.hpp"
#include "kbcin/prediction.hpp"

namespace kbcin {

enum class EmotionMode { Gold, Predicted, None };
EmotionMode emotion_mode_from_string(const std::string& s);
const char* emotion_mode_name(EmotionMode m);

struct ModelConfig {
    // utterance encoder
    std::size_t d_m = 64;
    std::size_t enc_layers = 2;
    std::size_t enc_heads = 4;
    std::size_t d_ff = 256;
    std::size_t max_len = 64;
    // shared representation width and paralleled KBCI heads
    std::size_t d_h = 300;
    std::size_t n_heads = 2;
    std::size_t d_k = 64;  // width of incoming knowledge vectors
    int p_max = 40;
    std::vector<std::size_t> mlp_hidden = {300, 300, 300};
    double dropout = 0.07;
    double leaky_slope = 0.01;
    EmotionMode emotion_mode = EmotionMode::Gold;
    BridgeSwitches bridges;
    double threshold = 0.5;
    double pos_weight = 1.0;
    std::vector<std::string> emotion_labels;  // empty = default DailyDialog set

    EncoderConfig encoder_config() const { return {d_m, enc_layers, enc_heads, d_ff, max_len}; }
    EmotionVocab emotion_vocab() const;
    void validate() const;
};

struct KbcinModel {
    ModelConfig cfg;
    Vocabulary vocab;
    EncoderParams encoder;
    Tensor pemb;    // [p_max, d_h]
    Tensor eemb;    // [|E|, d_h]
    Tensor w_init;  // [3*d_h, d_h]
    Tensor w_kin;   // [d_k, d_h], shared input map for all knowledge vectors
    std::vector<BlockParams> heads;
    PredictorParams predictor;

    static KbcinModel init(ModelConfig cfg, Vocabulary vocab, std::uint64_t seed);
    std::vector<NamedTensor> named_params() const;
};

// Everything the forward pass needs for one sample; knowledge enters as
// constant tensors at its native width.
struct SampleInput {
    std::string dialogue_id;
    int target_index = 0;
    std::vector<std::vector<int>> token_ids;  // per candidate
    std::vector<int> pos_buckets;
    std::vector<int> emotion_ids;  // feature labels after mode resolution
    int target_emotion_id = 0;
    std::vector<std::uint8_t> labels;
    Tensor k_after, k_before, k_react, k_want;  // [n, d_k]

    std::size_t n_candidates() const { return token_ids.size(); }
};

// Resolves emotion labels per the configured mode; in predicted mode every
// touched utterance must appear in the overlay.
SampleInput build_sample_input(const Corpus& corpus, const CEESample& sample,
                               const KnowledgeStore& store, const KbcinModel& model,
                               const EmotionOverlay* overlay);

// Scores for every candidate, shape [t+1], values in (0,1).
Tensor model_forward(Tape& tape, const KbcinModel& model, const SampleInput& input, bool train,
                     Rng* dropout_rng, std::vector<HeadTrace>* traces = nullptr);

}  // namespace kbcin
