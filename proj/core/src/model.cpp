#include "kbcin/model.hpp"

#include <cmath>

namespace kbcin {

EmotionMode emotion_mode_from_string(const std::string& s) {
    if (s == "gold") return EmotionMode::Gold;
    if (s == "predicted") return EmotionMode::Predicted;
    if (s == "none") return EmotionMode::None;
    throw ConfigError("unknown emotion mode '" + s + "' (expected gold|predicted|none)");
}

const char* emotion_mode_name(EmotionMode m) {
    switch (m) {
        case EmotionMode::Gold: return "gold";
        case EmotionMode::Predicted: return "predicted";
        case EmotionMode::None: return "none";
    }
    return "gold";
}

EmotionVocab ModelConfig::emotion_vocab() const {
    if (emotion_labels.empty()) return EmotionVocab();
    return EmotionVocab(emotion_labels);
}

void ModelConfig::validate() const {
    if (d_m == 0 || d_h == 0 || d_k == 0) throw ConfigError("model: zero dimension");
    if (n_heads == 0) throw ConfigError("model: at least one KBCI head required");
    if (p_max < 1) throw ConfigError("model: p_max must be positive");
    if (enc_heads == 0 || d_m % enc_heads != 0) {
        throw ConfigError("model: encoder heads " + std::to_string(enc_heads) +
                          " must divide d_m " + std::to_string(d_m));
    }
    if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("model: dropout outside [0, 1)");
    if (threshold <= 0.0 || threshold >= 1.0) throw ConfigError("model: threshold outside (0, 1)");
    if (pos_weight <= 0.0) throw ConfigError("model: pos_weight must be positive");
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

KbcinModel KbcinModel::init(ModelConfig cfg, Vocabulary vocab, std::uint64_t seed) {
    cfg.validate();
    KbcinModel m;
    m.cfg = std::move(cfg);
    m.vocab = std::move(vocab);
    Rng rng(stable_hash("model-init", stable_hash_u64(seed)));
    m.encoder = EncoderParams::init(m.cfg.encoder_config(), m.vocab.size(), m.cfg.d_h, rng);
    m.pemb = init_embedding(static_cast<std::size_t>(m.cfg.p_max), m.cfg.d_h, rng);
    m.eemb = init_embedding(m.cfg.emotion_vocab().size(), m.cfg.d_h, rng);
    m.w_init = init_matrix(3 * m.cfg.d_h, m.cfg.d_h, rng);
    m.w_kin = init_matrix(m.cfg.d_k, m.cfg.d_h, rng);
    for (std::size_t h = 0; h < m.cfg.n_heads; ++h) {
        m.heads.push_back(BlockParams::init(m.cfg.d_h, rng));
    }
    m.predictor = PredictorParams::init(m.cfg.n_heads * m.cfg.d_h, m.cfg.mlp_hidden,
                                        m.cfg.dropout, rng);
    return m;
}

std::vector<NamedTensor> KbcinModel::named_params() const {
    std::vector<NamedTensor> out;
    encoder.collect_params("encoder", out);
    out.emplace_back("pemb", pemb);
    out.emplace_back("eemb", eemb);
    out.emplace_back("w_init", w_init);
    out.emplace_back("w_kin", w_kin);
    for (std::size_t h = 0; h < heads.size(); ++h) {
        heads[h].collect_params("head" + std::to_string(h), out);
    }
    predictor.collect_params("predictor", out);
    return out;
}

namespace {

Tensor knowledge_rows(const KnowledgeStore& store, const Corpus& corpus,
                      const CEESample& sample, const std::vector<RelationKind>& per_candidate) {
    const std::size_t n = per_candidate.size();
    Tensor out = Tensor::zeros({n, store.dim()});
    auto& v = out.mutable_values();
    for (std::size_t i = 0; i < n; ++i) {
        const auto vec = store.get(sample.dialogue_id, static_cast<int>(i), per_candidate[i]);
        std::copy(vec.begin(), vec.end(), v.begin() + i * store.dim());
    }
    (void)corpus;
    return out;
}

int resolve_emotion(const Corpus& corpus, const CEESample& sample, int utt_index,
                    EmotionMode mode, const EmotionOverlay* overlay) {
    if (mode == EmotionMode::Predicted) {
        if (!overlay) {
            throw ConfigError("emotion mode 'predicted' needs an overlay file");
        }
        const auto id = overlay->get(sample.dialogue_id, utt_index);
        if (!id) {
            throw ConfigError("overlay missing utterance (" + sample.dialogue_id + ", " +
                              std::to_string(utt_index) + ") required in predicted mode");
        }
        return *id;
    }
    return corpus.dialogues[sample.dialogue_index].utterances[utt_index].emotion;
}

}  // namespace

SampleInput build_sample_input(const Corpus& corpus, const CEESample& sample,
                               const KnowledgeStore& store, const KbcinModel& model,
                               const EmotionOverlay* overlay) {
    const Dialogue& d = corpus.dialogues[sample.dialogue_index];
    const int t = sample.target_index;
    const std::size_t n = static_cast<std::size_t>(t) + 1;
    SampleInput in;
    in.dialogue_id = sample.dialogue_id;
    in.target_index = t;
    in.labels = sample.labels;

    const std::string& target_speaker = d.utterances[t].speaker;
    std::vector<RelationKind> react(n), want(n);
    for (std::size_t i = 0; i < n; ++i) {
        const Utterance& u = d.utterances[i];
        in.token_ids.push_back(tokenize_ids(u.text, model.vocab));
        in.pos_buckets.push_back(relative_position(static_cast<int>(i), t, model.cfg.p_max));
        in.emotion_ids.push_back(
            resolve_emotion(corpus, sample, static_cast<int>(i), model.cfg.emotion_mode, overlay));
        react[i] = select_social_relation(u.speaker, target_speaker, SocialKind::React);
        want[i] = select_social_relation(u.speaker, target_speaker, SocialKind::Want);
    }
    in.target_emotion_id = in.emotion_ids.back();

    std::vector<RelationKind> after(n, RelationKind::isAfter);
    std::vector<RelationKind> before(n, RelationKind::isBefore);
    in.k_after = knowledge_rows(store, corpus, sample, after);
    in.k_before = knowledge_rows(store, corpus, sample, before);
    in.k_react = knowledge_rows(store, corpus, sample, react);
    in.k_want = knowledge_rows(store, corpus, sample, want);
    return in;
}

Tensor model_forward(Tape& tape, const KbcinModel& model, const SampleInput& input, bool train,
                     Rng* dropout_rng, std::vector<HeadTrace>* traces) {
    const ModelConfig& cfg = model.cfg;
    const std::size_t n = input.n_candidates();
    if (n == 0) throw PreconditionError("model_forward: sample without candidates");

    // utterance-level features, projected to d_h
    std::vector<Tensor> pooled;
    pooled.reserve(n);
    const EncoderConfig enc_cfg = cfg.encoder_config();
    for (const std::vector<int>& ids : input.token_ids) {
        pooled.push_back(encode_utterance(tape, model.encoder, enc_cfg, ids));
    }
    const Tensor features = stack_rows(tape, pooled);
    const Tensor projected = linear_map(tape, features, model.encoder.w_proj);

    const bool emotion_off = cfg.emotion_mode == EmotionMode::None;
    const Tensor nodes = init_nodes(tape, projected, input.pos_buckets, input.emotion_ids,
                                    model.pemb, model.eemb, model.w_init, emotion_off);

    KbciInputs kin;
    kin.nodes = nodes;
    kin.k_after = matmul(tape, input.k_after, model.w_kin);
    kin.k_before = matmul(tape, input.k_before, model.w_kin);
    kin.k_react = matmul(tape, input.k_react, model.w_kin);
    kin.k_want = matmul(tape, input.k_want, model.w_kin);
    kin.h_target = select_row(tape, nodes, n - 1);
    if (emotion_off) {
        kin.eemb_target = Tensor::zeros({cfg.d_h});
    } else {
        const std::vector<int> tid = {input.target_emotion_id};
        kin.eemb_target = reshape(tape, take_rows(tape, model.eemb, tid), {cfg.d_h});
    }

    const Tensor concat =
        multi_head_forward(tape, kin, model.heads, cfg.bridges, cfg.leaky_slope, traces);
    return predict_scores(tape, concat, model.predictor, cfg.leaky_slope, train, dropout_rng);
}

}  // namespace kbcin
