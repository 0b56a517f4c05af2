#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "kbcin/errors.hpp"

namespace kbcin {

// Emotion label set. Defaults to the seven DailyDialog classes; index 0 is
// always the neutral label.
class EmotionVocab {
public:
    EmotionVocab();  // default 7-class set
    explicit EmotionVocab(std::vector<std::string> labels, std::string neutral = "neutral");

    int id_of(const std::string& label) const;          // -1 if unknown
    const std::string& label_of(int id) const { return labels_[id]; }
    int neutral_id() const { return neutral_id_; }
    std::size_t size() const { return labels_.size(); }
    const std::vector<std::string>& labels() const { return labels_; }

private:
    std::vector<std::string> labels_;
    int neutral_id_ = 0;
};

struct Utterance {
    int index = 0;  // 0-based position in the dialogue
    std::string speaker;
    std::string text;
    int emotion = 0;  // id into EmotionVocab
};

struct Dialogue {
    std::string id;
    std::vector<Utterance> utterances;
    // (target_index, cause_index), deduplicated, cause <= target
    std::vector<std::pair<int, int>> causal_pairs;
    // dense speaker ids (0/1) aligned with utterances
    std::vector<int> speaker_ids;

    bool is_causal_pair(int target, int cause) const;
};

struct Corpus {
    EmotionVocab emotions;
    std::vector<Dialogue> dialogues;

    const Dialogue* find_dialogue(const std::string& id) const;
};

struct ParseStats {
    std::size_t duplicate_pairs_removed = 0;
};

// Parses the corpus document (JSON, see README for the schema). Duplicate
// causal pairs are dropped silently and counted; a pair whose cause lies
// after its target is rejected with a ParseError naming the dialogue.
Corpus parse_corpus(const std::string& document, const EmotionVocab& emotions,
                    ParseStats* stats = nullptr);
std::string serialize_corpus(const Corpus& corpus);

// One target utterance plus its candidate history (the target included).
struct CEESample {
    std::size_t dialogue_index = 0;
    std::string dialogue_id;
    int target_index = 0;
    std::vector<std::uint8_t> labels;  // one per candidate 0..t
    int target_emotion = 0;
    std::vector<int> candidate_emotions;
    std::vector<int> candidate_speaker_ids;
    std::vector<int> candidate_distances;  // t - i, unclamped
};

struct BuildStats {
    std::size_t n_samples = 0;
    std::size_t n_positive = 0;
    std::size_t n_negative = 0;
    // non-neutral targets skipped for having no annotated cause in [0..t]
    std::size_t skipped_no_cause = 0;
};

std::vector<CEESample> build_samples(const Corpus& corpus, BuildStats* stats = nullptr);

// min(t - i, p_max - 1); i must not exceed t.
int relative_position(int i, int t, int p_max);

// --- synthetic corpus with a planted causal rule ---

struct SyntheticConfig {
    std::size_t n_dialogues = 64;
    int len_min = 4;
    int len_max = 10;
    std::vector<std::string> vocab;  // filler tokens; defaults when empty
    std::uint64_t seed = 1;
    std::string id_prefix = "synth";
    double self_cause_prob = 0.5;
    double distractor_prob = 0.35;
};

// Every dialogue carries one non-neutral target; a candidate is a cause iff
// its text contains the trigger token drawn for the target's emotion.
Corpus generate_synthetic(const SyntheticConfig& cfg);

// Trigger lexicon mapping each non-neutral emotion label to its tokens.
const std::vector<std::pair<std::string, std::vector<std::string>>>& trigger_lexicon();
// First trigger token occurring in `text`, with the emotion it maps to.
std::optional<std::pair<std::string, std::string>> find_trigger(const std::string& text);
std::vector<std::string> default_filler_vocab();

// --- predicted-emotion overlay ---

class EmotionOverlay {
public:
    void set(const std::string& dialogue_id, int utterance_index, int emotion);
    std::optional<int> get(const std::string& dialogue_id, int utterance_index) const;
    std::size_t size() const { return entries_.size(); }
    const std::map<std::pair<std::string, int>, int>& entries() const { return entries_; }

private:
    std::map<std::pair<std::string, int>, int> entries_;
};

EmotionOverlay parse_overlay(const std::string& document, const EmotionVocab& emotions);
std::string serialize_overlay(const EmotionOverlay& overlay, const EmotionVocab& emotions);

}  // namespace kbcin
