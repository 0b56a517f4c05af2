#include "kbcin/knowledge.hpp"

#include <cmath>
#include <sstream>

#include <json.hpp>

#include "kbcin/rng.hpp"

namespace kbcin {

using nlohmann::json;

namespace {
constexpr std::array<const char*, kNumRelations> kRelationNames = {
    "isAfter", "isBefore", "xReact", "oReact", "xWant", "oWant"};
}

const char* relation_name(RelationKind r) { return kRelationNames[static_cast<int>(r)]; }

RelationKind relation_from_name(const std::string& name) {
    for (int i = 0; i < kNumRelations; ++i) {
        if (name == kRelationNames[i]) return static_cast<RelationKind>(i);
    }
    throw ParseError("knowledge: unknown relation '" + name + "'");
}

RelationKind select_social_relation(const std::string& speaker_i, const std::string& speaker_t,
                                    SocialKind kind) {
    const bool same = speaker_i == speaker_t;
    if (kind == SocialKind::React) return same ? RelationKind::xReact : RelationKind::oReact;
    return same ? RelationKind::xWant : RelationKind::oWant;
}

void KnowledgeStore::put(const std::string& dialogue_id, int utterance_index, RelationKind r,
                         std::vector<double> vec) {
    if (vec.size() != dim_) {
        throw DimensionError("knowledge: vector of length " + std::to_string(vec.size()) +
                             " for (" + dialogue_id + ", " + std::to_string(utterance_index) +
                             ", " + relation_name(r) + ") but store dim is " +
                             std::to_string(dim_));
    }
    map_[{dialogue_id, utterance_index}][static_cast<int>(r)] = std::move(vec);
}

bool KnowledgeStore::has(const std::string& dialogue_id, int utterance_index,
                         RelationKind r) const {
    const auto it = map_.find({dialogue_id, utterance_index});
    return it != map_.end() && !it->second[static_cast<int>(r)].empty();
}

std::span<const double> KnowledgeStore::get(const std::string& dialogue_id, int utterance_index,
                                            RelationKind r) const {
    const auto it = map_.find({dialogue_id, utterance_index});
    if (it == map_.end() || it->second[static_cast<int>(r)].empty()) {
        throw PreconditionError("knowledge: no vector for (" + dialogue_id + ", " +
                                std::to_string(utterance_index) + ", " + relation_name(r) + ")");
    }
    return it->second[static_cast<int>(r)];
}

KnowledgeStore load_store(const std::string& document, const Corpus& corpus) {
    std::istringstream in(document);
    std::string line;
    if (!std::getline(in, line)) throw ParseError("knowledge: empty document");
    json header;
    try {
        header = json::parse(line);
    } catch (const json::exception& e) {
        throw ParseError(std::string("knowledge: invalid header: ") + e.what());
    }
    if (!header.contains("dim")) throw ParseError("knowledge: header missing 'dim'");
    const std::size_t dim = header["dim"].get<std::size_t>();
    KnowledgeStore store(dim);

    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::exception& e) {
            throw ParseError("knowledge: invalid record at line " + std::to_string(line_no) +
                             ": " + e.what());
        }
        const std::string id = rec.at("dialogue_id").get<std::string>();
        const int idx = rec.at("utterance_index").get<int>();
        const RelationKind r = relation_from_name(rec.at("relation").get<std::string>());
        const Dialogue* d = corpus.find_dialogue(id);
        if (!d || idx < 0 || idx >= static_cast<int>(d->utterances.size())) {
            // the file may cover more corpora than the one being bound
            continue;
        }
        std::vector<double> vec = rec.at("vector").get<std::vector<double>>();
        store.put(id, idx, r, std::move(vec));
    }

    for (const Dialogue& d : corpus.dialogues) {
        for (const Utterance& u : d.utterances) {
            for (int r = 0; r < kNumRelations; ++r) {
                if (!store.has(d.id, u.index, static_cast<RelationKind>(r))) {
                    throw ParseError("knowledge: store incomplete, first missing entry (" +
                                     d.id + ", " + std::to_string(u.index) + ", " +
                                     kRelationNames[r] + ")");
                }
            }
        }
    }
    return store;
}

std::string serialize_store(const KnowledgeStore& store, const Corpus& corpus) {
    std::ostringstream out;
    out << json({{"dim", store.dim()}}).dump() << '\n';
    for (const Dialogue& d : corpus.dialogues) {
        for (const Utterance& u : d.utterances) {
            for (int r = 0; r < kNumRelations; ++r) {
                const auto vec = store.get(d.id, u.index, static_cast<RelationKind>(r));
                json rec = {{"dialogue_id", d.id},
                            {"utterance_index", u.index},
                            {"relation", kRelationNames[r]},
                            {"vector", std::vector<double>(vec.begin(), vec.end())}};
                out << rec.dump() << '\n';
            }
        }
    }
    return out.str();
}

namespace {

std::vector<double> unit_vector_from(std::uint64_t key, std::size_t d_k) {
    Rng rng(key);
    std::vector<double> v(d_k);
    double norm2 = 0.0;
    for (double& x : v) {
        x = rng.normal();
        norm2 += x * x;
    }
    const double inv = 1.0 / std::sqrt(norm2);
    for (double& x : v) x *= inv;
    return v;
}

}  // namespace

KnowledgeStore synthesize_store(const Corpus& corpus, std::size_t d_k, std::uint64_t seed) {
    if (d_k < 1) throw ConfigError("synthesize_store: d_k must be positive");
    // Pull strength toward the trigger direction; dominates the per-utterance
    // noise so matched pairs align.
    constexpr double kBias = 3.0;
    KnowledgeStore store(d_k);
    for (const Dialogue& d : corpus.dialogues) {
        for (const Utterance& u : d.utterances) {
            const auto trig = find_trigger(u.text);
            for (int r = 0; r < kNumRelations; ++r) {
                const char* rname = kRelationNames[r];
                std::uint64_t key = stable_hash(d.id);
                key = stable_hash_u64(static_cast<std::uint64_t>(u.index), key);
                key = stable_hash(rname, key);
                key = stable_hash_u64(seed, key);
                std::vector<double> v = unit_vector_from(key, d_k);
                if (trig) {
                    std::uint64_t bkey = stable_hash("bias");
                    bkey = stable_hash(trig->first, bkey);
                    bkey = stable_hash(trig->second, bkey);
                    bkey = stable_hash(rname, bkey);
                    bkey = stable_hash_u64(seed, bkey);
                    const std::vector<double> dir = unit_vector_from(bkey, d_k);
                    double norm2 = 0.0;
                    for (std::size_t i = 0; i < d_k; ++i) {
                        v[i] += kBias * dir[i];
                        norm2 += v[i] * v[i];
                    }
                    const double inv = 1.0 / std::sqrt(norm2);
                    for (double& x : v) x *= inv;
                }
                store.put(d.id, u.index, static_cast<RelationKind>(r), std::move(v));
            }
        }
    }
    return store;
}

}  // namespace kbcin
