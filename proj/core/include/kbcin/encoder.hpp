#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "kbcin/dataset.hpp"
#include "kbcin/grad_check.hpp"
#include "kbcin/ops.hpp"

namespace kbcin {

class Vocabulary {
public:
    static constexpr int kCls = 0;
    static constexpr int kPad = 1;
    static constexpr int kUnk = 2;

    Vocabulary();
    int add(const std::string& token);  // returns existing id if present
    int id_of(const std::string& token) const;  // kUnk for OOV
    const std::string& token_of(int id) const { return tokens_[id]; }
    std::size_t size() const { return tokens_.size(); }
    const std::vector<std::string>& tokens() const { return tokens_; }

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> index_;
};

// Lowercase, split on whitespace; punctuation characters become their own
// tokens. Never empty: blank text yields a single token.
std::vector<std::string> tokenize(const std::string& text);
// Token ids; empty text maps to [UNK].
std::vector<int> tokenize_ids(const std::string& text, const Vocabulary& vocab);

Vocabulary build_vocabulary(const Corpus& corpus);

struct EncoderConfig {
    std::size_t d_m = 64;
    std::size_t n_layers = 2;
    std::size_t n_heads = 4;
    std::size_t d_ff = 256;
    std::size_t max_len = 64;  // including [CLS]
};

struct EncoderLayerParams {
    Tensor ln1_gain, ln1_bias;
    Tensor wq, bq, wk, bk, wv, bv, wo, bo;
    Tensor ln2_gain, ln2_bias;
    Tensor w1, b1, w2, b2;
};

struct EncoderParams {
    Tensor token_emb;  // [|V|, d_m]
    std::vector<EncoderLayerParams> layers;
    Tensor final_gain, final_bias;
    Tensor w_proj;  // [d_m, d_h]

    static EncoderParams init(const EncoderConfig& cfg, std::size_t vocab_size, std::size_t d_h,
                              Rng& rng);
    void collect_params(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

struct EncodeStats {
    std::size_t truncated = 0;
};

// Eq.-style utterance feature: prepend [CLS], run pre-norm self-attention
// blocks with sinusoidal positions, then column-wise max-pool all hidden
// states. With zero layers this degenerates to max-pooled raw embeddings.
Tensor encode_utterance(Tape& tape, const EncoderParams& params, const EncoderConfig& cfg,
                        std::vector<int> ids, EncodeStats* stats = nullptr);

// Linear projection of the pooled feature to the model width.
Tensor project(Tape& tape, const Tensor& c, const Tensor& w_proj);

// Sinusoidal position encodings, constant (no gradient).
Tensor sinusoidal_positions(std::size_t n, std::size_t d_m);

}  // namespace kbcin
