#include "kbcin/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <sstream>

#include <json.hpp>

#include "kbcin/rng.hpp"

namespace kbcin {

using nlohmann::json;

EmotionVocab::EmotionVocab()
    : EmotionVocab({"neutral", "anger", "disgust", "fear", "happiness", "sadness", "surprise"}) {}

EmotionVocab::EmotionVocab(std::vector<std::string> labels, std::string neutral)
    : labels_(std::move(labels)) {
    const auto it = std::find(labels_.begin(), labels_.end(), neutral);
    if (it == labels_.end()) {
        throw ConfigError("EmotionVocab: neutral label '" + neutral + "' not in label set");
    }
    neutral_id_ = static_cast<int>(it - labels_.begin());
}

int EmotionVocab::id_of(const std::string& label) const {
    const auto it = std::find(labels_.begin(), labels_.end(), label);
    return it == labels_.end() ? -1 : static_cast<int>(it - labels_.begin());
}

bool Dialogue::is_causal_pair(int target, int cause) const {
    return std::find(causal_pairs.begin(), causal_pairs.end(), std::make_pair(target, cause)) !=
           causal_pairs.end();
}

const Dialogue* Corpus::find_dialogue(const std::string& id) const {
    for (const Dialogue& d : dialogues) {
        if (d.id == id) return &d;
    }
    return nullptr;
}

namespace {

void assign_speaker_ids(Dialogue& d) {
    d.speaker_ids.clear();
    std::vector<std::string> seen;
    for (const Utterance& u : d.utterances) {
        auto it = std::find(seen.begin(), seen.end(), u.speaker);
        if (it == seen.end()) {
            seen.push_back(u.speaker);
            it = std::prev(seen.end());
        }
        d.speaker_ids.push_back(static_cast<int>(it - seen.begin()));
    }
    if (seen.size() > 2) {
        throw ParseError("dialogue '" + d.id + "': more than 2 speakers");
    }
}

}  // namespace

Corpus parse_corpus(const std::string& document, const EmotionVocab& emotions,
                    ParseStats* stats) {
    json doc;
    try {
        doc = json::parse(document);
    } catch (const json::exception& e) {
        throw ParseError(std::string("corpus: invalid JSON: ") + e.what());
    }
    if (!doc.is_object() || !doc.contains("dialogues") || !doc["dialogues"].is_array()) {
        throw ParseError("corpus: expected top-level object with a 'dialogues' list");
    }
    Corpus corpus;
    corpus.emotions = emotions;
    ParseStats local;
    for (const json& jd : doc["dialogues"]) {
        Dialogue d;
        d.id = jd.value("id", "");
        if (d.id.empty()) throw ParseError("corpus: dialogue without id");
        if (!jd.contains("utterances") || !jd["utterances"].is_array() ||
            jd["utterances"].empty()) {
            throw ParseError("dialogue '" + d.id + "': missing utterances");
        }
        int pos = 0;
        for (const json& ju : jd["utterances"]) {
            Utterance u;
            u.index = pos;
            if (ju.contains("index") && ju["index"].get<int>() != pos) {
                throw ParseError("dialogue '" + d.id + "': non-contiguous utterance index " +
                                 std::to_string(ju["index"].get<int>()) + " at position " +
                                 std::to_string(pos));
            }
            u.speaker = ju.value("speaker", "");
            u.text = ju.value("text", "");
            const std::string emo = ju.value("emotion", "");
            u.emotion = emotions.id_of(emo);
            if (u.emotion < 0) {
                throw ParseError("dialogue '" + d.id + "': unknown emotion label '" + emo + "'");
            }
            d.utterances.push_back(std::move(u));
            ++pos;
        }
        assign_speaker_ids(d);
        const int n = static_cast<int>(d.utterances.size());
        if (jd.contains("causal_pairs")) {
            for (const json& jp : jd["causal_pairs"]) {
                const int target = jp.at("target").get<int>();
                const int cause = jp.at("cause").get<int>();
                if (target < 0 || target >= n || cause < 0 || cause >= n) {
                    throw ParseError("dialogue '" + d.id + "': causal pair (" +
                                     std::to_string(target) + ", " + std::to_string(cause) +
                                     ") out of range");
                }
                if (cause > target) {
                    throw ParseError("dialogue '" + d.id + "': cause " + std::to_string(cause) +
                                     " lies after target " + std::to_string(target));
                }
                if (d.utterances[target].emotion == emotions.neutral_id()) {
                    throw ParseError("dialogue '" + d.id + "': causal pair targets neutral utterance " +
                                     std::to_string(target));
                }
                const auto pair = std::make_pair(target, cause);
                if (std::find(d.causal_pairs.begin(), d.causal_pairs.end(), pair) !=
                    d.causal_pairs.end()) {
                    ++local.duplicate_pairs_removed;
                } else {
                    d.causal_pairs.push_back(pair);
                }
            }
        }
        corpus.dialogues.push_back(std::move(d));
    }
    if (stats) *stats = local;
    return corpus;
}

std::string serialize_corpus(const Corpus& corpus) {
    json doc;
    doc["dialogues"] = json::array();
    for (const Dialogue& d : corpus.dialogues) {
        json jd;
        jd["id"] = d.id;
        jd["utterances"] = json::array();
        for (const Utterance& u : d.utterances) {
            jd["utterances"].push_back({{"speaker", u.speaker},
                                        {"text", u.text},
                                        {"emotion", corpus.emotions.label_of(u.emotion)}});
        }
        jd["causal_pairs"] = json::array();
        for (const auto& [target, cause] : d.causal_pairs) {
            jd["causal_pairs"].push_back({{"target", target}, {"cause", cause}});
        }
        doc["dialogues"].push_back(std::move(jd));
    }
    return doc.dump(2);
}

std::vector<CEESample> build_samples(const Corpus& corpus, BuildStats* stats) {
    std::vector<CEESample> samples;
    BuildStats local;
    for (std::size_t di = 0; di < corpus.dialogues.size(); ++di) {
        const Dialogue& d = corpus.dialogues[di];
        for (const Utterance& u : d.utterances) {
            if (u.emotion == corpus.emotions.neutral_id()) continue;
            const int t = u.index;
            bool has_cause = false;
            for (const auto& [pt, pc] : d.causal_pairs) {
                if (pt == t) {
                    has_cause = true;
                    break;
                }
            }
            if (!has_cause) {
                ++local.skipped_no_cause;
                continue;
            }
            CEESample s;
            s.dialogue_index = di;
            s.dialogue_id = d.id;
            s.target_index = t;
            s.target_emotion = u.emotion;
            for (int i = 0; i <= t; ++i) {
                const bool pos = d.is_causal_pair(t, i);
                s.labels.push_back(pos ? 1 : 0);
                s.candidate_emotions.push_back(d.utterances[i].emotion);
                s.candidate_speaker_ids.push_back(d.speaker_ids[i]);
                s.candidate_distances.push_back(t - i);
                if (pos) {
                    ++local.n_positive;
                } else {
                    ++local.n_negative;
                }
            }
            samples.push_back(std::move(s));
        }
    }
    local.n_samples = samples.size();
    if (stats) *stats = local;
    return samples;
}

int relative_position(int i, int t, int p_max) {
    if (i > t) {
        throw PreconditionError("relative_position: candidate " + std::to_string(i) +
                                " after target " + std::to_string(t));
    }
    return std::min(t - i, p_max - 1);
}

const std::vector<std::pair<std::string, std::vector<std::string>>>& trigger_lexicon() {
    static const std::vector<std::pair<std::string, std::vector<std::string>>> lex = {
        {"anger", {"rage", "fury"}},        {"disgust", {"gross", "vile"}},
        {"fear", {"dread", "panic"}},       {"happiness", {"delight", "cheer"}},
        {"sadness", {"sorrow", "gloom"}},   {"surprise", {"astonish", "gasp"}},
    };
    return lex;
}

namespace {

std::vector<std::string> split_words(const std::string& text) {
    std::vector<std::string> words;
    std::string cur;
    for (const char ch : text) {
        if (std::isalnum(static_cast<unsigned char>(ch))) {
            cur += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
        } else if (!cur.empty()) {
            words.push_back(cur);
            cur.clear();
        }
    }
    if (!cur.empty()) words.push_back(cur);
    return words;
}

}  // namespace

std::optional<std::pair<std::string, std::string>> find_trigger(const std::string& text) {
    for (const std::string& w : split_words(text)) {
        for (const auto& [emotion, tokens] : trigger_lexicon()) {
            if (std::find(tokens.begin(), tokens.end(), w) != tokens.end()) {
                return std::make_pair(emotion, w);
            }
        }
    }
    return std::nullopt;
}

std::vector<std::string> default_filler_vocab() {
    return {"the",    "a",      "and",   "so",      "well",   "you",     "i",      "we",
            "they",   "he",     "she",   "it",      "today",  "morning", "evening", "market",
            "garden", "coffee", "train", "meeting", "weather", "plan",   "story",  "movie",
            "book",   "lunch",  "dinner", "walk",   "game",   "ticket",  "phone",  "letter",
            "street", "house",  "river", "music",   "quiet",  "busy",    "maybe",  "later"};
}

Corpus generate_synthetic(const SyntheticConfig& cfg) {
    if (cfg.len_min < 2) {
        throw ConfigError("generate_synthetic: dialogue length must be at least 2");
    }
    if (cfg.len_max < cfg.len_min) {
        throw ConfigError("generate_synthetic: len_max below len_min");
    }
    if (cfg.n_dialogues == 0) {
        throw ConfigError("generate_synthetic: n_dialogues must be positive");
    }
    const std::vector<std::string> vocab =
        cfg.vocab.empty() ? default_filler_vocab() : cfg.vocab;
    for (const std::string& w : vocab) {
        if (find_trigger(w)) {
            throw ConfigError("generate_synthetic: filler token '" + w +
                              "' collides with the trigger lexicon");
        }
    }

    Corpus corpus;
    const EmotionVocab& emotions = corpus.emotions;
    const auto& lexicon = trigger_lexicon();
    Rng rng(stable_hash(cfg.id_prefix, stable_hash_u64(cfg.seed)));

    for (std::size_t n = 0; n < cfg.n_dialogues; ++n) {
        Dialogue d;
        {
            std::ostringstream os;
            os << cfg.id_prefix << '-';
            os.width(4);
            os.fill('0');
            os << n;
            d.id = os.str();
        }
        const int len = static_cast<int>(rng.uniform_int(cfg.len_min, cfg.len_max));
        const int t = static_cast<int>(rng.uniform_int(1, len - 1));
        const int first_speaker = static_cast<int>(rng.uniform_int(0, 1));

        // target emotion and its trigger token
        const auto& [target_emotion_label, trigger_tokens] =
            lexicon[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(lexicon.size()) - 1))];
        const std::string trigger =
            trigger_tokens[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(trigger_tokens.size()) - 1))];

        // cause positions: 1-2 history slots, plus the target itself sometimes
        std::set<int> causes;
        const int n_hist = static_cast<int>(rng.uniform_int(1, t >= 4 ? 2 : 1));
        for (int k = 0; k < n_hist; ++k) {
            causes.insert(static_cast<int>(rng.uniform_int(0, t - 1)));
        }
        if (rng.next_double() < cfg.self_cause_prob) causes.insert(t);

        // optional distractor: a trigger of a different emotion in a non-cause slot
        int distractor_pos = -1;
        std::string distractor_token;
        if (rng.next_double() < cfg.distractor_prob) {
            std::vector<int> free_slots;
            for (int i = 0; i < t; ++i) {
                if (!causes.count(i)) free_slots.push_back(i);
            }
            if (!free_slots.empty()) {
                distractor_pos =
                    free_slots[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(free_slots.size()) - 1))];
                std::size_t other;
                do {
                    other = static_cast<std::size_t>(
                        rng.uniform_int(0, static_cast<int>(lexicon.size()) - 1));
                } while (lexicon[other].first == target_emotion_label);
                const auto& toks = lexicon[other].second;
                distractor_token =
                    toks[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(toks.size()) - 1))];
            }
        }

        for (int i = 0; i < len; ++i) {
            Utterance u;
            u.index = i;
            u.speaker = ((i + first_speaker) % 2 == 0) ? "A" : "B";
            const int n_tok = static_cast<int>(rng.uniform_int(3, 7));
            std::vector<std::string> words;
            for (int w = 0; w < n_tok; ++w) {
                words.push_back(vocab[static_cast<std::size_t>(
                    rng.uniform_int(0, static_cast<int>(vocab.size()) - 1))]);
            }
            if (causes.count(i)) {
                words[static_cast<std::size_t>(rng.uniform_int(0, n_tok - 1))] = trigger;
            } else if (i == distractor_pos) {
                words[static_cast<std::size_t>(rng.uniform_int(0, n_tok - 1))] = distractor_token;
            }
            std::ostringstream os;
            for (std::size_t w = 0; w < words.size(); ++w) {
                if (w) os << ' ';
                os << words[w];
            }
            u.text = os.str();
            u.emotion = (i == t) ? emotions.id_of(target_emotion_label) : emotions.neutral_id();
            d.utterances.push_back(std::move(u));
        }

        // labels re-derived by the planted rule itself
        for (int i = 0; i <= t; ++i) {
            const auto hit = find_trigger(d.utterances[i].text);
            if (hit && hit->first == target_emotion_label) {
                d.causal_pairs.emplace_back(t, i);
            }
        }
        assign_speaker_ids(d);
        corpus.dialogues.push_back(std::move(d));
    }
    return corpus;
}

void EmotionOverlay::set(const std::string& dialogue_id, int utterance_index, int emotion) {
    entries_[{dialogue_id, utterance_index}] = emotion;
}

std::optional<int> EmotionOverlay::get(const std::string& dialogue_id,
                                       int utterance_index) const {
    const auto it = entries_.find({dialogue_id, utterance_index});
    if (it == entries_.end()) return std::nullopt;
    return it->second;
}

EmotionOverlay parse_overlay(const std::string& document, const EmotionVocab& emotions) {
    json doc;
    try {
        doc = json::parse(document);
    } catch (const json::exception& e) {
        throw ParseError(std::string("overlay: invalid JSON: ") + e.what());
    }
    if (!doc.is_array()) throw ParseError("overlay: expected a top-level list");
    EmotionOverlay overlay;
    for (const json& je : doc) {
        const std::string id = je.at("dialogue_id").get<std::string>();
        const int idx = je.at("utterance_index").get<int>();
        const std::string emo = je.at("emotion").get<std::string>();
        const int eid = emotions.id_of(emo);
        if (eid < 0) {
            throw ParseError("overlay: unknown emotion label '" + emo + "' for dialogue '" + id +
                             "'");
        }
        overlay.set(id, idx, eid);
    }
    return overlay;
}

std::string serialize_overlay(const EmotionOverlay& overlay, const EmotionVocab& emotions) {
    json doc = json::array();
    for (const auto& [key, emotion] : overlay.entries()) {
        doc.push_back({{"dialogue_id", key.first},
                       {"utterance_index", key.second},
                       {"emotion", emotions.label_of(emotion)}});
    }
    return doc.dump(2);
}

}  // namespace kbcin
