#include "kbcin/kbci.hpp"

#include <cmath>

namespace kbcin {

ConversationGraph build_graph(int target) {
    if (target < 0) throw PreconditionError("build_graph: negative target index");
    return ConversationGraph{target};
}

namespace {

Tensor init_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(rows));
    Tensor t = Tensor::zeros({rows, cols}, true);
    for (double& v : t.mutable_values()) v = rng.uniform(-bound, bound);
    return t;
}

Tensor init_vector(std::size_t n, std::size_t fan_in, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    Tensor t = Tensor::zeros({n}, true);
    for (double& v : t.mutable_values()) v = rng.uniform(-bound, bound);
    return t;
}

LinearParams init_linear(std::size_t d, Rng& rng) {
    return {init_matrix(d, d, rng), Tensor::zeros({d}, true)};
}

Tensor apply_linear(Tape& tape, const Tensor& x, const LinearParams& p) {
    return linear_map(tape, x, p.w, p.b);
}

Tensor apply_linear_vec(Tape& tape, const Tensor& v, const LinearParams& p) {
    const Tensor row = reshape(tape, v, {1, v.size()});
    const Tensor out = linear_map(tape, row, p.w, p.b);
    return reshape(tape, out, {out.cols()});
}

}  // namespace

BlockParams BlockParams::init(std::size_t d_h, Rng& rng) {
    BlockParams p;
    p.w_h = init_matrix(d_h, d_h, rng);
    p.w_e = init_matrix(d_h, d_h, rng);
    p.attn = init_vector(2 * d_h, 2 * d_h, rng);
    p.f_q = init_linear(d_h, rng);
    p.f_k = init_linear(d_h, rng);
    p.f_v = init_linear(d_h, rng);
    p.f_e = init_linear(d_h, rng);
    p.f_q2 = init_linear(d_h, rng);
    p.f_k2 = init_linear(d_h, rng);
    p.f_v2 = init_linear(d_h, rng);
    p.f_e2 = init_linear(d_h, rng);
    return p;
}

void BlockParams::collect_params(const std::string& prefix,
                                 std::vector<NamedTensor>& out) const {
    out.emplace_back(prefix + ".w_h", w_h);
    out.emplace_back(prefix + ".w_e", w_e);
    out.emplace_back(prefix + ".attn", attn);
    const auto lin = [&out](const std::string& name, const LinearParams& p) {
        out.emplace_back(name + ".w", p.w);
        out.emplace_back(name + ".b", p.b);
    };
    lin(prefix + ".f_q", f_q);
    lin(prefix + ".f_k", f_k);
    lin(prefix + ".f_v", f_v);
    lin(prefix + ".f_e", f_e);
    lin(prefix + ".f_q2", f_q2);
    lin(prefix + ".f_k2", f_k2);
    lin(prefix + ".f_v2", f_v2);
    lin(prefix + ".f_e2", f_e2);
}

Tensor init_nodes(Tape& tape, const Tensor& projected, const std::vector<int>& pos_buckets,
                  const std::vector<int>& emotion_ids, const Tensor& pemb_table,
                  const Tensor& eemb_table, const Tensor& w_init, bool emotion_off) {
    const std::size_t n = projected.rows();
    if (pos_buckets.size() != n || emotion_ids.size() != n) {
        throw DimensionError("init_nodes: " + std::to_string(n) + " candidates vs " +
                             std::to_string(pos_buckets.size()) + " positions, " +
                             std::to_string(emotion_ids.size()) + " emotions");
    }
    const Tensor pos = take_rows(tape, pemb_table, pos_buckets);
    Tensor emo;
    if (emotion_off) {
        emo = Tensor::zeros({n, eemb_table.cols()});
    } else {
        emo = take_rows(tape, eemb_table, emotion_ids);
    }
    const std::vector<Tensor> parts = {projected, pos, emo};
    return matmul(tape, concat_cols(tape, parts), w_init);
}

Tensor csk_graph_attention(Tape& tape, const Tensor& nodes, const Tensor& k_after,
                           const Tensor& k_before, const BlockParams& params, bool s_bridge,
                           double leaky_slope, Tensor* alpha_out) {
    const std::size_t d_h = nodes.cols();
    const Tensor hh = matmul(tape, nodes, params.w_h);
    Tensor mixed = hh;
    if (s_bridge) {
        const Tensor ka = matmul(tape, k_after, params.w_e);
        const Tensor kb = matmul(tape, k_before, params.w_e);
        mixed = add(tape, hh, add(tape, ka, kb));
    }
    // a^T [W_h h_i || W_h h_j + W_e K_j ...] splits into a source and a
    // destination half, so scores form an outer sum.
    const Tensor a_src = slice_vec(tape, params.attn, 0, d_h);
    const Tensor a_dst = slice_vec(tape, params.attn, d_h, d_h);
    const Tensor u = matvec(tape, hh, a_src);
    const Tensor w = matvec(tape, mixed, a_dst);
    const Tensor scores = leaky_relu(tape, outer_add(tape, u, w), leaky_slope);
    const Tensor alpha = causal_softmax_rows(tape, scores);
    if (alpha_out) *alpha_out = alpha;
    return elu(tape, matmul(tape, alpha, hh));
}

Tensor knowledge_interaction(Tape& tape, const Tensor& updated, const Tensor& query_input,
                             const Tensor& k_social, const LinearParams& f_q,
                             const LinearParams& f_k, const LinearParams& f_v,
                             const LinearParams& f_e, bool use_knowledge, Tensor* scores_out) {
    const std::size_t n = updated.rows();
    const std::size_t d_h = updated.cols();
    const Tensor q = apply_linear_vec(tape, query_input, f_q);
    Tensor keys = apply_linear(tape, updated, f_k);
    Tensor vals = apply_linear(tape, updated, f_v);
    if (use_knowledge) {
        const Tensor ek = apply_linear(tape, k_social, f_e);
        keys = add(tape, keys, ek);
        vals = add(tape, vals, ek);
    }
    const Tensor raw =
        scale(tape, matvec(tape, keys, q), 1.0 / std::sqrt(static_cast<double>(d_h)));
    const std::vector<std::uint8_t> all_kept(n, 1);
    const Tensor s = masked_softmax(tape, raw, all_kept);
    if (scores_out) *scores_out = s;
    const Tensor weighted_vals = scale_rows(tape, vals, s);
    const Tensor weighted_query = scale_rows(tape, broadcast_row(tape, q, n), s);
    return add(tape, weighted_vals, weighted_query);
}

Tensor emotional_interaction(Tape& tape, const Tensor& updated, const KbciInputs& in,
                             const BlockParams& params, bool e_bridge, Tensor* scores_out) {
    const Tensor query_input = add(tape, in.h_target, in.eemb_target);
    return knowledge_interaction(tape, updated, query_input, in.k_react, params.f_q, params.f_k,
                                 params.f_v, params.f_e, e_bridge, scores_out);
}

Tensor actional_interaction(Tape& tape, const Tensor& updated, const KbciInputs& in,
                            const BlockParams& params, bool a_bridge, Tensor* scores_out) {
    return knowledge_interaction(tape, updated, in.h_target, in.k_want, params.f_q2, params.f_k2,
                                 params.f_v2, params.f_e2, a_bridge, scores_out);
}

Tensor head_forward(Tape& tape, const KbciInputs& in, const BlockParams& params,
                    const BridgeSwitches& bridges, double leaky_slope, HeadTrace* trace) {
    Tensor alpha;
    const Tensor updated = csk_graph_attention(tape, in.nodes, in.k_after, in.k_before, params,
                                               bridges.s_bridge, leaky_slope,
                                               trace ? &alpha : nullptr);
    Tensor s_emo, s_act;
    const Tensor h_emo = emotional_interaction(tape, updated, in, params, bridges.e_bridge,
                                               trace ? &s_emo : nullptr);
    const Tensor h_act = actional_interaction(tape, updated, in, params, bridges.a_bridge,
                                              trace ? &s_act : nullptr);
    if (trace) {
        trace->alpha = alpha;
        trace->s_emo = s_emo;
        trace->s_act = s_act;
    }
    return add(tape, add(tape, updated, h_emo), h_act);
}

Tensor multi_head_forward(Tape& tape, const KbciInputs& in,
                          const std::vector<BlockParams>& heads, const BridgeSwitches& bridges,
                          double leaky_slope, std::vector<HeadTrace>* traces) {
    if (heads.empty()) throw PreconditionError("multi_head_forward: no heads");
    std::vector<Tensor> outputs;
    for (const BlockParams& p : heads) {
        HeadTrace trace;
        outputs.push_back(
            head_forward(tape, in, p, bridges, leaky_slope, traces ? &trace : nullptr));
        if (traces) traces->push_back(std::move(trace));
    }
    return concat_cols(tape, outputs);
}

}  // namespace kbcin
