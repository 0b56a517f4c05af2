#include "kbcin/encoder.hpp"

#include <cctype>
#include <cmath>

namespace kbcin {

Vocabulary::Vocabulary() {
    add("[CLS]");
    add("[PAD]");
    add("[UNK]");
}

int Vocabulary::add(const std::string& token) {
    const auto it = index_.find(token);
    if (it != index_.end()) return it->second;
    const int id = static_cast<int>(tokens_.size());
    tokens_.push_back(token);
    index_[token] = id;
    return id;
}

int Vocabulary::id_of(const std::string& token) const {
    const auto it = index_.find(token);
    return it == index_.end() ? kUnk : it->second;
}

std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (const char ch : text) {
        const unsigned char c = static_cast<unsigned char>(ch);
        if (std::isalnum(c) || ch == '\'') {
            cur += static_cast<char>(std::tolower(c));
        } else {
            if (!cur.empty()) {
                out.push_back(cur);
                cur.clear();
            }
            if (!std::isspace(c)) out.push_back(std::string(1, ch));
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

std::vector<int> tokenize_ids(const std::string& text, const Vocabulary& vocab) {
    std::vector<int> ids;
    for (const std::string& tok : tokenize(text)) ids.push_back(vocab.id_of(tok));
    if (ids.empty()) ids.push_back(Vocabulary::kUnk);
    return ids;
}

Vocabulary build_vocabulary(const Corpus& corpus) {
    Vocabulary vocab;
    for (const Dialogue& d : corpus.dialogues) {
        for (const Utterance& u : d.utterances) {
            for (const std::string& tok : tokenize(u.text)) vocab.add(tok);
        }
    }
    return vocab;
}

namespace {

Tensor init_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(rows));
    Tensor t = Tensor::zeros({rows, cols}, true);
    for (double& v : t.mutable_values()) v = rng.uniform(-bound, bound);
    return t;
}

Tensor init_embedding(std::size_t rows, std::size_t cols, Rng& rng) {
    Tensor t = Tensor::zeros({rows, cols}, true);
    for (double& v : t.mutable_values()) v = rng.normal(0.0, 0.02);
    return t;
}

}  // namespace

EncoderParams EncoderParams::init(const EncoderConfig& cfg, std::size_t vocab_size,
                                  std::size_t d_h, Rng& rng) {
    if (cfg.n_heads == 0 || cfg.d_m % cfg.n_heads != 0) {
        throw ConfigError("encoder: n_heads " + std::to_string(cfg.n_heads) +
                          " must divide d_m " + std::to_string(cfg.d_m));
    }
    EncoderParams p;
    p.token_emb = init_embedding(vocab_size, cfg.d_m, rng);
    for (std::size_t l = 0; l < cfg.n_layers; ++l) {
        EncoderLayerParams lp;
        lp.ln1_gain = Tensor::full({cfg.d_m}, 1.0, true);
        lp.ln1_bias = Tensor::zeros({cfg.d_m}, true);
        lp.wq = init_matrix(cfg.d_m, cfg.d_m, rng);
        lp.bq = Tensor::zeros({cfg.d_m}, true);
        lp.wk = init_matrix(cfg.d_m, cfg.d_m, rng);
        lp.bk = Tensor::zeros({cfg.d_m}, true);
        lp.wv = init_matrix(cfg.d_m, cfg.d_m, rng);
        lp.bv = Tensor::zeros({cfg.d_m}, true);
        lp.wo = init_matrix(cfg.d_m, cfg.d_m, rng);
        lp.bo = Tensor::zeros({cfg.d_m}, true);
        lp.ln2_gain = Tensor::full({cfg.d_m}, 1.0, true);
        lp.ln2_bias = Tensor::zeros({cfg.d_m}, true);
        lp.w1 = init_matrix(cfg.d_m, cfg.d_ff, rng);
        lp.b1 = Tensor::zeros({cfg.d_ff}, true);
        lp.w2 = init_matrix(cfg.d_ff, cfg.d_m, rng);
        lp.b2 = Tensor::zeros({cfg.d_m}, true);
        p.layers.push_back(std::move(lp));
    }
    p.final_gain = Tensor::full({cfg.d_m}, 1.0, true);
    p.final_bias = Tensor::zeros({cfg.d_m}, true);
    p.w_proj = init_matrix(cfg.d_m, d_h, rng);
    return p;
}

void EncoderParams::collect_params(const std::string& prefix,
                                   std::vector<NamedTensor>& out) const {
    out.emplace_back(prefix + ".token_emb", token_emb);
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const std::string lp = prefix + ".layer" + std::to_string(l);
        const EncoderLayerParams& p = layers[l];
        out.emplace_back(lp + ".ln1_gain", p.ln1_gain);
        out.emplace_back(lp + ".ln1_bias", p.ln1_bias);
        out.emplace_back(lp + ".wq", p.wq);
        out.emplace_back(lp + ".bq", p.bq);
        out.emplace_back(lp + ".wk", p.wk);
        out.emplace_back(lp + ".bk", p.bk);
        out.emplace_back(lp + ".wv", p.wv);
        out.emplace_back(lp + ".bv", p.bv);
        out.emplace_back(lp + ".wo", p.wo);
        out.emplace_back(lp + ".bo", p.bo);
        out.emplace_back(lp + ".ln2_gain", p.ln2_gain);
        out.emplace_back(lp + ".ln2_bias", p.ln2_bias);
        out.emplace_back(lp + ".w1", p.w1);
        out.emplace_back(lp + ".b1", p.b1);
        out.emplace_back(lp + ".w2", p.w2);
        out.emplace_back(lp + ".b2", p.b2);
    }
    out.emplace_back(prefix + ".final_gain", final_gain);
    out.emplace_back(prefix + ".final_bias", final_bias);
    out.emplace_back(prefix + ".w_proj", w_proj);
}

Tensor sinusoidal_positions(std::size_t n, std::size_t d_m) {
    Tensor pe = Tensor::zeros({n, d_m});
    auto& v = pe.mutable_values();
    for (std::size_t pos = 0; pos < n; ++pos) {
        for (std::size_t k = 0; 2 * k < d_m; ++k) {
            const double rate = std::pow(10000.0, -2.0 * static_cast<double>(k) /
                                                      static_cast<double>(d_m));
            const double angle = static_cast<double>(pos) * rate;
            v[pos * d_m + 2 * k] = std::sin(angle);
            if (2 * k + 1 < d_m) v[pos * d_m + 2 * k + 1] = std::cos(angle);
        }
    }
    return pe;
}

namespace {

Tensor self_attention(Tape& tape, const Tensor& x, const EncoderLayerParams& p,
                      std::size_t n_heads) {
    const std::size_t d_m = x.cols();
    const std::size_t d_head = d_m / n_heads;
    const Tensor q = linear_map(tape, x, p.wq, p.bq);
    const Tensor k = linear_map(tape, x, p.wk, p.bk);
    const Tensor v = linear_map(tape, x, p.wv, p.bv);
    std::vector<Tensor> heads;
    for (std::size_t h = 0; h < n_heads; ++h) {
        const Tensor qh = slice_cols(tape, q, h * d_head, d_head);
        const Tensor kh = slice_cols(tape, k, h * d_head, d_head);
        const Tensor vh = slice_cols(tape, v, h * d_head, d_head);
        const Tensor scores =
            scale(tape, matmul_nt(tape, qh, kh), 1.0 / std::sqrt(static_cast<double>(d_head)));
        const Tensor attn = softmax_rows(tape, scores);
        heads.push_back(matmul(tape, attn, vh));
    }
    const Tensor merged = concat_cols(tape, heads);
    return linear_map(tape, merged, p.wo, p.bo);
}

}  // namespace

Tensor encode_utterance(Tape& tape, const EncoderParams& params, const EncoderConfig& cfg,
                        std::vector<int> ids, EncodeStats* stats) {
    if (ids.empty()) throw PreconditionError("encode_utterance: empty token sequence");
    if (ids.size() + 1 > cfg.max_len) {
        if (stats) stats->truncated += ids.size() + 1 - cfg.max_len;
        ids.resize(cfg.max_len - 1);
    }
    std::vector<int> with_cls;
    with_cls.reserve(ids.size() + 1);
    with_cls.push_back(Vocabulary::kCls);
    with_cls.insert(with_cls.end(), ids.begin(), ids.end());

    Tensor x = take_rows(tape, params.token_emb, with_cls);
    if (cfg.n_layers > 0) {
        x = add(tape, x, sinusoidal_positions(with_cls.size(), cfg.d_m));
        for (const EncoderLayerParams& p : params.layers) {
            const Tensor a =
                self_attention(tape, layer_norm_rows(tape, x, p.ln1_gain, p.ln1_bias), p,
                               cfg.n_heads);
            x = add(tape, x, a);
            const Tensor h = layer_norm_rows(tape, x, p.ln2_gain, p.ln2_bias);
            const Tensor ff = linear_map(
                tape, leaky_relu(tape, linear_map(tape, h, p.w1, p.b1), 0.01), p.w2, p.b2);
            x = add(tape, x, ff);
        }
        x = layer_norm_rows(tape, x, params.final_gain, params.final_bias);
    }
    return max_pool_rows(tape, x);
}

Tensor project(Tape& tape, const Tensor& c, const Tensor& w_proj) {
    const Tensor row = reshape(tape, c, {1, c.size()});
    const Tensor out = linear_map(tape, row, w_proj);
    return reshape(tape, out, {out.cols()});
}

}  // namespace kbcin
