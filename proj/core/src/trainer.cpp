#include "kbcin/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>

#include <json.hpp>

namespace kbcin {

using nlohmann::json;

void TrainConfig::validate() const {
    model.validate();
    if (learning_rate <= 0.0) throw ConfigError("train: learning_rate must be positive");
    if (weight_decay < 0.0) throw ConfigError("train: weight_decay must be non-negative");
    if (batch_size == 0) throw ConfigError("train: batch_size must be positive");
    if (epochs == 0) throw ConfigError("train: epochs must be positive");
    if (seeds.empty()) throw ConfigError("train: at least one seed required");
}

std::vector<std::pair<std::string, std::string>> parse_config_text(const std::string& text) {
    std::vector<std::pair<std::string, std::string>> entries;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const auto strip = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            if (b == std::string::npos) return std::string();
            const auto e = s.find_last_not_of(" \t\r");
            return s.substr(b, e - b + 1);
        };
        const std::string stripped = strip(line);
        if (stripped.empty()) continue;
        const auto eq = stripped.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
        }
        entries.emplace_back(strip(stripped.substr(0, eq)), strip(stripped.substr(eq + 1)));
    }
    return entries;
}

namespace {

bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError("config: bad boolean '" + v + "' for " + key);
}

template <typename T>
std::vector<T> parse_list(const std::string& v) {
    std::vector<T> out;
    std::istringstream in(v);
    std::string item;
    while (std::getline(in, item, ',')) {
        std::istringstream conv(item);
        T x;
        conv >> x;
        if (conv.fail()) throw ConfigError("config: bad list item '" + item + "'");
        out.push_back(x);
    }
    return out;
}

std::vector<std::string> parse_string_list(const std::string& v) {
    std::vector<std::string> out;
    std::istringstream in(v);
    std::string item;
    while (std::getline(in, item, ',')) {
        const auto b = item.find_first_not_of(" \t");
        const auto e = item.find_last_not_of(" \t");
        if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
    }
    return out;
}

}  // namespace

void apply_config_entry(TrainConfig& cfg, const std::string& key, const std::string& value) {
    const auto as_double = [&] {
        try {
            return std::stod(value);
        } catch (...) {
            throw ConfigError("config: bad number '" + value + "' for " + key);
        }
    };
    const auto as_size = [&] {
        try {
            return static_cast<std::size_t>(std::stoull(value));
        } catch (...) {
            throw ConfigError("config: bad integer '" + value + "' for " + key);
        }
    };
    if (key == "learning_rate") cfg.learning_rate = as_double();
    else if (key == "weight_decay") cfg.weight_decay = as_double();
    else if (key == "batch_size") cfg.batch_size = as_size();
    else if (key == "epochs") cfg.epochs = as_size();
    else if (key == "seeds") cfg.seeds = parse_list<std::uint64_t>(value);
    else if (key == "patience") cfg.patience = as_size();
    else if (key == "clip_norm") cfg.clip_norm = as_double();
    else if (key == "heads") cfg.model.n_heads = as_size();
    else if (key == "d_h") cfg.model.d_h = as_size();
    else if (key == "d_m") cfg.model.d_m = as_size();
    else if (key == "enc_layers") cfg.model.enc_layers = as_size();
    else if (key == "enc_heads") cfg.model.enc_heads = as_size();
    else if (key == "d_ff") cfg.model.d_ff = as_size();
    else if (key == "max_len") cfg.model.max_len = as_size();
    else if (key == "d_k") cfg.model.d_k = as_size();
    else if (key == "p_max") cfg.model.p_max = static_cast<int>(as_size());
    else if (key == "mlp_hidden") cfg.model.mlp_hidden = parse_list<std::size_t>(value);
    else if (key == "dropout") cfg.model.dropout = as_double();
    else if (key == "leaky_slope") cfg.model.leaky_slope = as_double();
    else if (key == "emotion_mode") cfg.model.emotion_mode = emotion_mode_from_string(value);
    else if (key == "disable_s_bridge") cfg.model.bridges.s_bridge = !parse_bool(value, key);
    else if (key == "disable_e_bridge") cfg.model.bridges.e_bridge = !parse_bool(value, key);
    else if (key == "disable_a_bridge") cfg.model.bridges.a_bridge = !parse_bool(value, key);
    else if (key == "threshold") cfg.model.threshold = as_double();
    else if (key == "pos_weight") cfg.model.pos_weight = as_double();
    else if (key == "emotion_labels") cfg.model.emotion_labels = parse_string_list(value);
    else throw ConfigError("config: unknown key '" + key + "'");
}

namespace {

struct SplitData {
    const Corpus* corpus = nullptr;
    std::vector<CEESample> samples;
    std::vector<SampleInput> inputs;
    // dialogue index -> sample indices, preserving order
    std::vector<std::vector<std::size_t>> by_dialogue;
};

SplitData build_split(const Corpus& corpus, const KnowledgeStore& store,
                      const KbcinModel& model, const EmotionOverlay* overlay,
                      const char* name) {
    SplitData split;
    split.corpus = &corpus;
    split.samples = build_samples(corpus);
    if (split.samples.empty()) {
        throw ConfigError(std::string("train: split '") + name + "' produced no samples");
    }
    split.by_dialogue.resize(corpus.dialogues.size());
    for (std::size_t i = 0; i < split.samples.size(); ++i) {
        split.inputs.push_back(
            build_sample_input(corpus, split.samples[i], store, model, overlay));
        split.by_dialogue[split.samples[i].dialogue_index].push_back(i);
    }
    return split;
}

std::vector<PairPrediction> collect_predictions(const KbcinModel& model, const SplitData& split) {
    std::vector<PairPrediction> preds;
    for (std::size_t si = 0; si < split.samples.size(); ++si) {
        Tape tape;
        const Tensor scores = model_forward(tape, model, split.inputs[si], false, nullptr);
        const CEESample& s = split.samples[si];
        for (std::size_t i = 0; i < scores.size(); ++i) {
            PairPrediction p;
            p.dialogue_id = s.dialogue_id;
            p.target_index = s.target_index;
            p.candidate_index = static_cast<int>(i);
            p.score = std::clamp(scores.at(i), 1e-12, 1.0 - 1e-12);
            p.label = s.labels[i];
            preds.push_back(std::move(p));
        }
    }
    return preds;
}

std::vector<std::vector<double>> snapshot_params(std::span<const NamedTensor> params) {
    std::vector<std::vector<double>> snap;
    snap.reserve(params.size());
    for (const auto& [name, p] : params) snap.push_back(p.values());
    return snap;
}

void restore_params(std::span<const NamedTensor> params,
                    const std::vector<std::vector<double>>& snap) {
    for (std::size_t i = 0; i < params.size(); ++i) {
        const_cast<Tensor&>(params[i].second).mutable_values() = snap[i];
    }
}

}  // namespace

TrainResult train_run(const Corpus& train, const Corpus& valid, const Corpus& test,
                      const KnowledgeStore& store, const TrainConfig& cfg,
                      const EmotionOverlay* overlay, std::ostream* log) {
    cfg.validate();
    if (cfg.model.emotion_mode == EmotionMode::Predicted && !overlay) {
        throw ConfigError("train: emotion mode 'predicted' needs an overlay");
    }
    const Vocabulary vocab = build_vocabulary(train);

    TrainResult result;
    for (const std::uint64_t seed : cfg.seeds) {
        KbcinModel model = KbcinModel::init(cfg.model, vocab, seed);
        auto params = model.named_params();

        const SplitData train_split = build_split(train, store, model, overlay, "train");
        const SplitData valid_split = build_split(valid, store, model, overlay, "valid");
        const SplitData test_split = build_split(test, store, model, overlay, "test");

        AdamW optimizer({cfg.learning_rate, 0.9, 0.999, 1e-8, cfg.weight_decay, cfg.clip_norm});
        Rng shuffle_rng(stable_hash("shuffle", stable_hash_u64(seed)));
        Rng dropout_rng(stable_hash("dropout", stable_hash_u64(seed)));

        SeedRunResult run;
        run.seed = seed;
        std::vector<std::vector<double>> best_snapshot = snapshot_params(params);
        double best_macro = -1.0;
        std::size_t best_epoch = 0;
        std::size_t since_best = 0;

        std::vector<std::size_t> dialogue_order(train.dialogues.size());
        for (std::size_t i = 0; i < dialogue_order.size(); ++i) dialogue_order[i] = i;

        for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
            // Fisher-Yates with the run RNG
            for (std::size_t i = dialogue_order.size(); i > 1; --i) {
                const std::size_t j =
                    static_cast<std::size_t>(shuffle_rng.uniform_int(0, static_cast<int>(i) - 1));
                std::swap(dialogue_order[i - 1], dialogue_order[j]);
            }

            double loss_sum = 0.0;
            std::size_t loss_count = 0;
            for (std::size_t start = 0; start < dialogue_order.size();
                 start += cfg.batch_size) {
                const std::size_t stop =
                    std::min(start + cfg.batch_size, dialogue_order.size());
                std::vector<std::size_t> batch_samples;
                for (std::size_t di = start; di < stop; ++di) {
                    const auto& ids = train_split.by_dialogue[dialogue_order[di]];
                    batch_samples.insert(batch_samples.end(), ids.begin(), ids.end());
                }
                if (batch_samples.empty()) continue;

                Tape tape;
                Tensor total;
                for (const std::size_t si : batch_samples) {
                    const Tensor scores =
                        model_forward(tape, model, train_split.inputs[si], true, &dropout_rng);
                    const Tensor loss = bce_loss(tape, scores, train_split.inputs[si].labels,
                                                 cfg.model.pos_weight);
                    total = total.defined() ? add(tape, total, loss) : loss;
                }
                const Tensor batch_loss =
                    scale(tape, total, 1.0 / static_cast<double>(batch_samples.size()));
                zero_all_grads(params);
                tape.backward(batch_loss);
                optimizer.step(params);
                loss_sum += batch_loss.item() * static_cast<double>(batch_samples.size());
                loss_count += batch_samples.size();
            }

            EpochStats stats;
            stats.epoch = epoch;
            stats.train_loss = loss_count ? loss_sum / static_cast<double>(loss_count) : 0.0;
            stats.train_metrics =
                f1_metrics(collect_predictions(model, train_split), cfg.model.threshold);
            stats.valid_metrics =
                f1_metrics(collect_predictions(model, valid_split), cfg.model.threshold);
            run.history.push_back(stats);
            if (log) {
                (*log) << "seed " << seed << " epoch " << epoch << " loss " << stats.train_loss
                       << " train-pos-f1 " << stats.train_metrics.pos_f1 << " valid-macro "
                       << stats.valid_metrics.macro_f1 << "\n";
            }

            if (stats.valid_metrics.macro_f1 > best_macro) {
                best_macro = stats.valid_metrics.macro_f1;
                best_epoch = epoch;
                best_snapshot = snapshot_params(params);
                since_best = 0;
            } else if (++since_best >= cfg.patience) {
                break;
            }
        }

        restore_params(params, best_snapshot);
        run.best_epoch = best_epoch;
        run.best_valid_macro = best_macro;
        run.test_predictions = collect_predictions(model, test_split);
        run.test_metrics = f1_metrics(run.test_predictions, cfg.model.threshold);
        run.checkpoint_json = checkpoint_to_json(model, {best_macro, best_epoch});
        result.per_seed.push_back(std::move(run));
    }

    AveragedMetrics avg;
    for (const SeedRunResult& r : result.per_seed) {
        avg.neg_f1 += r.test_metrics.neg_f1;
        avg.pos_f1 += r.test_metrics.pos_f1;
        avg.macro_f1 += r.test_metrics.macro_f1;
    }
    const double n = static_cast<double>(result.per_seed.size());
    avg.neg_f1 /= n;
    avg.pos_f1 /= n;
    avg.macro_f1 /= n;
    result.averaged_test = avg;
    for (std::size_t i = 0; i < result.per_seed.size(); ++i) {
        if (result.per_seed[i].best_valid_macro >
            result.per_seed[result.best_seed_index].best_valid_macro) {
            result.best_seed_index = i;
        }
    }
    return result;
}

EvalOutput evaluate_run(const KbcinModel& model, const Corpus& corpus,
                        const KnowledgeStore& store, const EvalOverrides& overrides,
                        const EmotionOverlay* overlay) {
    KbcinModel view = model;  // parameters shared, config copied
    if (overrides.emotion_mode) view.cfg.emotion_mode = *overrides.emotion_mode;
    if (overrides.threshold) view.cfg.threshold = *overrides.threshold;
    if (overrides.bridges) view.cfg.bridges = *overrides.bridges;
    if (view.cfg.emotion_mode == EmotionMode::Predicted && !overlay) {
        throw ConfigError("evaluate: emotion mode 'predicted' needs an overlay");
    }

    SplitData split = build_split(corpus, store, view, overlay, "eval");
    EvalOutput out;
    out.predictions = collect_predictions(view, split);
    out.metrics = f1_metrics(out.predictions, view.cfg.threshold);
    return out;
}

void dump_attention(const KbcinModel& model, const Corpus& corpus, const KnowledgeStore& store,
                    const EmotionOverlay* overlay, std::ostream& out) {
    const std::vector<CEESample> samples = build_samples(corpus);
    for (const CEESample& s : samples) {
        const SampleInput input = build_sample_input(corpus, s, store, model, overlay);
        Tape tape;
        std::vector<HeadTrace> traces;
        model_forward(tape, model, input, false, nullptr, &traces);
        json rec;
        rec["dialogue_id"] = s.dialogue_id;
        rec["target_index"] = s.target_index;
        rec["heads"] = json::array();
        for (const HeadTrace& tr : traces) {
            json h;
            const std::size_t n = tr.alpha.rows();
            json alpha = json::array();
            for (std::size_t i = 0; i < n; ++i) {
                json row = json::array();
                for (std::size_t j = 0; j < n; ++j) row.push_back(tr.alpha.at(i, j));
                alpha.push_back(std::move(row));
            }
            h["alpha"] = std::move(alpha);
            h["s_emo"] = tr.s_emo.values();
            h["s_act"] = tr.s_act.values();
            rec["heads"].push_back(std::move(h));
        }
        out << rec.dump() << '\n';
    }
}

namespace {

json metrics_obj(const MetricReport& m) {
    return {{"neg_f1", m.neg_f1},
            {"pos_f1", m.pos_f1},
            {"macro_f1", m.macro_f1},
            {"counts",
             {{"tp", m.counts.tp}, {"fp", m.counts.fp}, {"fn", m.counts.fn}, {"tn", m.counts.tn}}}};
}

}  // namespace

std::string metrics_to_json(const MetricReport& m) { return metrics_obj(m).dump(2); }

std::string train_result_to_json(const TrainResult& r) {
    json j;
    j["averaged_test"] = {{"neg_f1", r.averaged_test.neg_f1},
                          {"pos_f1", r.averaged_test.pos_f1},
                          {"macro_f1", r.averaged_test.macro_f1}};
    j["per_seed"] = json::array();
    for (const SeedRunResult& s : r.per_seed) {
        j["per_seed"].push_back({{"seed", s.seed},
                                 {"best_epoch", s.best_epoch},
                                 {"best_valid_macro", s.best_valid_macro},
                                 {"test", metrics_obj(s.test_metrics)}});
    }
    return j.dump(2);
}

std::string predictions_to_jsonl(const std::vector<PairPrediction>& preds) {
    std::ostringstream out;
    for (const PairPrediction& p : preds) {
        out << json({{"dialogue_id", p.dialogue_id},
                     {"target_index", p.target_index},
                     {"candidate_index", p.candidate_index},
                     {"score", p.score},
                     {"label", p.label}})
                   .dump()
            << '\n';
    }
    return out.str();
}

std::string history_to_json(const TrainResult& r) {
    json j = json::array();
    for (const SeedRunResult& s : r.per_seed) {
        json h = json::array();
        for (const EpochStats& e : s.history) {
            h.push_back({{"epoch", e.epoch},
                         {"train_loss", e.train_loss},
                         {"train", metrics_obj(e.train_metrics)},
                         {"valid", metrics_obj(e.valid_metrics)}});
        }
        j.push_back({{"seed", s.seed}, {"epochs", std::move(h)}});
    }
    return j.dump(2);
}

}  // namespace kbcin
