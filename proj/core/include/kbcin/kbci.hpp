#pragma once

#include <vector>

#include "kbcin/grad_check.hpp"
#include "kbcin/ops.hpp"

namespace kbcin {

// Conversation graph over candidates 0..t: edges j -> i for all j <= i
// (self-loops included), so information can only flow from the past.
struct ConversationGraph {
    int target = 0;

    std::size_t node_count() const { return static_cast<std::size_t>(target) + 1; }
    std::size_t edge_count() const {
        const std::size_t n = node_count();
        return n * (n + 1) / 2;
    }
    bool has_edge(int from, int to) const {
        return from >= 0 && to <= target && from <= to;
    }
    // in-neighborhood of node i is {0..i}
    std::vector<int> neighbors(int i) const {
        std::vector<int> out;
        for (int j = 0; j <= i; ++j) out.push_back(j);
        return out;
    }
};

ConversationGraph build_graph(int target);

struct LinearParams {
    Tensor w;
    Tensor b;
};

// Trainable weights for one KBCI head.
struct BlockParams {
    Tensor w_h;   // [d_h, d_h]
    Tensor w_e;   // [d_h, d_h], shared by the isAfter and isBefore terms
    Tensor attn;  // [2*d_h]
    LinearParams f_q, f_k, f_v, f_e;      // emotional interaction
    LinearParams f_q2, f_k2, f_v2, f_e2;  // actional interaction

    static BlockParams init(std::size_t d_h, Rng& rng);
    void collect_params(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

struct BridgeSwitches {
    bool s_bridge = true;
    bool e_bridge = true;
    bool a_bridge = true;
};

// h_i = W_init [c_i || pemb_i || eemb_i]. When emotion information is off
// the eemb block is a zero vector. Throws when an emotion id is outside the
// embedding table.
Tensor init_nodes(Tape& tape, const Tensor& projected, const std::vector<int>& pos_buckets,
                  const std::vector<int>& emotion_ids, const Tensor& pemb_table,
                  const Tensor& eemb_table, const Tensor& w_init, bool emotion_off);

// Per-sample inputs to one head, everything already at model width d_h.
struct KbciInputs {
    Tensor nodes;    // [n, d_h] initial node states h_i
    Tensor k_after;  // [n, d_h] mapped isAfter vectors
    Tensor k_before;
    Tensor k_react;  // row i: xReact or oReact of candidate i per speaker match
    Tensor k_want;
    Tensor h_target;     // [d_h] pre-graph state of the target node
    Tensor eemb_target;  // [d_h]; zero vector when emotion info is off
};

struct HeadTrace {
    Tensor alpha;  // [n, n] graph attention, rows sum to 1 over j <= i
    Tensor s_emo;  // [n]
    Tensor s_act;  // [n]
};

// Graph attention with the event-centered knowledge mixed into the scores.
// Returns per-node updates; alpha_out, when given, receives the attention.
Tensor csk_graph_attention(Tape& tape, const Tensor& nodes, const Tensor& k_after,
                           const Tensor& k_before, const BlockParams& params, bool s_bridge,
                           double leaky_slope, Tensor* alpha_out = nullptr);

// Shared emotional/actional machinery: target-conditioned attention over the
// candidates plus a score-weighted query residual.
Tensor knowledge_interaction(Tape& tape, const Tensor& updated, const Tensor& query_input,
                             const Tensor& k_social, const LinearParams& f_q,
                             const LinearParams& f_k, const LinearParams& f_v,
                             const LinearParams& f_e, bool use_knowledge, Tensor* scores_out);

Tensor emotional_interaction(Tape& tape, const Tensor& updated, const KbciInputs& in,
                             const BlockParams& params, bool e_bridge,
                             Tensor* scores_out = nullptr);
Tensor actional_interaction(Tape& tape, const Tensor& updated, const KbciInputs& in,
                            const BlockParams& params, bool a_bridge,
                            Tensor* scores_out = nullptr);

// One KBCI head: graph update + both interactions, summed.
Tensor head_forward(Tape& tape, const KbciInputs& in, const BlockParams& params,
                    const BridgeSwitches& bridges, double leaky_slope,
                    HeadTrace* trace = nullptr);

// Concatenation of N independent heads, head order fixed.
Tensor multi_head_forward(Tape& tape, const KbciInputs& in,
                          const std::vector<BlockParams>& heads, const BridgeSwitches& bridges,
                          double leaky_slope, std::vector<HeadTrace>* traces = nullptr);

}  // namespace kbcin
