#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "kbcin/dataset.hpp"

namespace kbcin {

// The six ATOMIC relations; isAfter/isBefore are event-centered, the rest
// social-interaction.
enum class RelationKind : int {
    isAfter = 0,
    isBefore = 1,
    xReact = 2,
    oReact = 3,
    xWant = 4,
    oWant = 5,
};
inline constexpr int kNumRelations = 6;

const char* relation_name(RelationKind r);
RelationKind relation_from_name(const std::string& name);  // throws ParseError

enum class SocialKind { React, Want };

// xReact/xWant when candidate and target share a speaker, oReact/oWant
// otherwise.
RelationKind select_social_relation(const std::string& speaker_i, const std::string& speaker_t,
                                    SocialKind kind);

// Per-utterance vectors for all six relations; complete over its corpus.
class KnowledgeStore {
public:
    explicit KnowledgeStore(std::size_t dim) : dim_(dim) {}

    std::size_t dim() const { return dim_; }
    void put(const std::string& dialogue_id, int utterance_index, RelationKind r,
             std::vector<double> vec);
    bool has(const std::string& dialogue_id, int utterance_index, RelationKind r) const;
    std::span<const double> get(const std::string& dialogue_id, int utterance_index,
                                RelationKind r) const;

private:
    std::size_t dim_;
    std::map<std::pair<std::string, int>, std::array<std::vector<double>, kNumRelations>> map_;
};

// Line-oriented document: a {"dim": d} header, then one record per line.
// Errors on missing entries, dimension mismatches, unknown relations, and
// records pointing at utterances the corpus does not have.
KnowledgeStore load_store(const std::string& document, const Corpus& corpus);
std::string serialize_store(const KnowledgeStore& store, const Corpus& corpus);

// Deterministic substitute for exported model vectors: unit vectors keyed by
// (dialogue, utterance, relation, seed). Utterances containing a trigger
// token are additionally pulled toward a direction keyed by the trigger's
// (emotion, token) pair so the bridges carry learnable signal.
KnowledgeStore synthesize_store(const Corpus& corpus, std::size_t d_k, std::uint64_t seed);

}  // namespace kbcin
