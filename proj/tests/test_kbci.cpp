#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>

#include "kbcin/kbci.hpp"

using namespace kbcin;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng, bool requires_grad = false) {
    Tensor t = Tensor::zeros(std::move(shape), requires_grad);
    for (double& v : t.mutable_values()) v = rng.uniform(-1.0, 1.0);
    return t;
}

KbciInputs random_inputs(std::size_t n, std::size_t d_h, Rng& rng, bool grad_nodes = false) {
    KbciInputs in;
    in.nodes = random_tensor({n, d_h}, rng, grad_nodes);
    in.k_after = random_tensor({n, d_h}, rng);
    in.k_before = random_tensor({n, d_h}, rng);
    in.k_react = random_tensor({n, d_h}, rng);
    in.k_want = random_tensor({n, d_h}, rng);
    Tape tape;
    in.h_target = select_row(tape, in.nodes, n - 1);
    in.eemb_target = random_tensor({d_h}, rng);
    return in;
}

void zero_linear(LinearParams& p) {
    std::fill(p.w.mutable_values().begin(), p.w.mutable_values().end(), 0.0);
    std::fill(p.b.mutable_values().begin(), p.b.mutable_values().end(), 0.0);
}

double elu_ref(double x) { return x >= 0 ? x : std::expm1(x); }

}  // namespace

TEST_CASE("build_graph shapes and neighborhoods") {
    const ConversationGraph g0 = build_graph(0);
    CHECK(g0.node_count() == 1);
    CHECK(g0.edge_count() == 1);
    CHECK(g0.has_edge(0, 0));

    const ConversationGraph g2 = build_graph(2);
    CHECK(g2.neighbors(0) == std::vector<int>{0});
    CHECK(g2.neighbors(1) == std::vector<int>{0, 1});
    CHECK(g2.neighbors(2) == std::vector<int>{0, 1, 2});
    CHECK(!g2.has_edge(2, 1));

    // exhaustive enumeration up to n = 10
    for (int n = 0; n <= 10; ++n) {
        const ConversationGraph g = build_graph(n);
        std::size_t edges = 0;
        for (int i = 0; i <= n; ++i) {
            for (int j = 0; j <= n; ++j) {
                if (g.has_edge(j, i)) ++edges;
            }
        }
        CHECK(edges == static_cast<std::size_t>((n + 1) * (n + 2) / 2));
        CHECK(g.edge_count() == edges);
    }
    CHECK_THROWS_AS(build_graph(-1), PreconditionError);
}

TEST_CASE("init_nodes") {
    Rng rng(1);
    const std::size_t d_h = 4;
    const Tensor projected = random_tensor({3, d_h}, rng);
    const Tensor pemb = random_tensor({5, d_h}, rng);
    const Tensor eemb = random_tensor({7, d_h}, rng);
    const std::vector<int> pos = {2, 1, 0};
    const std::vector<int> emo = {0, 0, 3};

    SUBCASE("zero map sends every node to zero") {
        Tape tape;
        const Tensor w0 = Tensor::zeros({3 * d_h, d_h});
        const Tensor h = init_nodes(tape, projected, pos, emo, pemb, eemb, w0, false);
        for (const double v : h.values()) CHECK(v == 0.0);
    }

    SUBCASE("distinct positions separate otherwise identical utterances") {
        Tape tape;
        const Tensor w = random_tensor({3 * d_h, d_h}, rng);
        const Tensor same = Tensor::from_rows({{1, 2, 3, 4}, {1, 2, 3, 4}});
        const Tensor h = init_nodes(tape, same, {1, 0}, {0, 0}, pemb, eemb, w, false);
        bool differs = false;
        for (std::size_t j = 0; j < d_h; ++j) differs = differs || h.at(0, j) != h.at(1, j);
        CHECK(differs);
    }

    SUBCASE("matches the concat+matmul loop oracle") {
        Tape tape;
        const Tensor w = random_tensor({3 * d_h, d_h}, rng);
        const Tensor h = init_nodes(tape, projected, pos, emo, pemb, eemb, w, false);
        for (std::size_t i = 0; i < 3; ++i) {
            std::vector<double> cat;
            for (std::size_t j = 0; j < d_h; ++j) cat.push_back(projected.at(i, j));
            for (std::size_t j = 0; j < d_h; ++j) cat.push_back(pemb.at(pos[i], j));
            for (std::size_t j = 0; j < d_h; ++j) cat.push_back(eemb.at(emo[i], j));
            for (std::size_t j = 0; j < d_h; ++j) {
                double acc = 0.0;
                for (std::size_t k = 0; k < 3 * d_h; ++k) acc += cat[k] * w.at(k, j);
                CHECK(h.at(i, j) == doctest::Approx(acc).epsilon(1e-12));
            }
        }
    }

    SUBCASE("emotion id out of range") {
        Tape tape;
        const Tensor w = random_tensor({3 * d_h, d_h}, rng);
        CHECK_THROWS_AS(init_nodes(tape, projected, pos, {0, 0, 99}, pemb, eemb, w, false),
                        PreconditionError);
    }

    SUBCASE("emotion-off mode zeroes the eemb block") {
        Tape tape;
        const Tensor w = random_tensor({3 * d_h, d_h}, rng);
        const Tensor off = init_nodes(tape, projected, pos, emo, pemb, eemb, w, true);
        const Tensor zero_emo = init_nodes(tape, projected, pos, emo, pemb,
                                           Tensor::zeros({7, d_h}), w, false);
        for (std::size_t i = 0; i < off.size(); ++i) CHECK(off.values()[i] == zero_emo.values()[i]);
    }
}

TEST_CASE("graph attention on a single node") {
    Rng rng(2);
    const std::size_t d_h = 6;
    const KbciInputs in = random_inputs(1, d_h, rng);
    const BlockParams params = BlockParams::init(d_h, rng);
    Tape tape;
    Tensor alpha;
    const Tensor out =
        csk_graph_attention(tape, in.nodes, in.k_after, in.k_before, params, true, 0.01, &alpha);
    CHECK(alpha.at(0, 0) == 1.0);
    // single neighbor: elu(W_h h_0)
    for (std::size_t j = 0; j < d_h; ++j) {
        double wh = 0.0;
        for (std::size_t k = 0; k < d_h; ++k) wh += in.nodes.at(0, k) * params.w_h.at(k, j);
        CHECK(out.at(0, j) == doctest::Approx(elu_ref(wh)).epsilon(1e-12));
    }
}

TEST_CASE("graph attention rows are normalized over the past") {
    Rng rng(3);
    const std::size_t n = 5, d_h = 8;
    const KbciInputs in = random_inputs(n, d_h, rng);
    const BlockParams params = BlockParams::init(d_h, rng);
    Tape tape;
    Tensor alpha;
    csk_graph_attention(tape, in.nodes, in.k_after, in.k_before, params, true, 0.01, &alpha);
    for (std::size_t i = 0; i < n; ++i) {
        double sum = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            if (j > i) CHECK(alpha.at(i, j) == 0.0);
            sum += alpha.at(i, j);
        }
        CHECK(std::abs(sum - 1.0) <= 1e-9);
    }
}

TEST_CASE("perturbing a later utterance leaves earlier graph outputs bit-identical") {
    Rng rng(4);
    const std::size_t n = 3, d_h = 8;
    KbciInputs in = random_inputs(n, d_h, rng);
    const BlockParams params = BlockParams::init(d_h, rng);

    const auto run = [&](const KbciInputs& inputs) {
        Tape tape;
        return csk_graph_attention(tape, inputs.nodes, inputs.k_after, inputs.k_before, params,
                                   true, 0.01);
    };
    const Tensor base = run(in);

    KbciInputs poked = in;
    poked.nodes = Tensor::from(in.nodes.shape(), in.nodes.values());
    poked.k_after = Tensor::from(in.k_after.shape(), in.k_after.values());
    // perturb node 2 and its knowledge
    poked.nodes.mutable_values()[2 * d_h + 1] += 10.0;
    poked.k_after.mutable_values()[2 * d_h + 3] -= 4.0;
    const Tensor moved = run(poked);

    for (std::size_t i = 0; i < 2; ++i) {
        for (std::size_t j = 0; j < d_h; ++j) {
            const double a = base.at(i, j), b = moved.at(i, j);
            CHECK(std::memcmp(&a, &b, sizeof(double)) == 0);
        }
    }
    bool row2_changed = false;
    for (std::size_t j = 0; j < d_h; ++j) row2_changed = row2_changed || base.at(2, j) != moved.at(2, j);
    CHECK(row2_changed);
}

TEST_CASE("emotional interaction on a single candidate") {
    Rng rng(5);
    const std::size_t d_h = 6;
    const KbciInputs in = random_inputs(1, d_h, rng);
    const BlockParams params = BlockParams::init(d_h, rng);
    Tape tape;
    const Tensor updated =
        csk_graph_attention(tape, in.nodes, in.k_after, in.k_before, params, true, 0.01);
    Tensor s;
    const Tensor h_emo = emotional_interaction(tape, updated, in, params, true, &s);
    CHECK(s.at(0) == 1.0);

    // straight-line recomputation: h = V + Q
    const auto lin_vec = [&](const LinearParams& p, const std::vector<double>& x) {
        std::vector<double> out(d_h);
        for (std::size_t j = 0; j < d_h; ++j) {
            double acc = p.b.at(j);
            for (std::size_t k = 0; k < d_h; ++k) acc += x[k] * p.w.at(k, j);
            out[j] = acc;
        }
        return out;
    };
    std::vector<double> qin(d_h);
    for (std::size_t j = 0; j < d_h; ++j) qin[j] = in.h_target.at(j) + in.eemb_target.at(j);
    const auto q = lin_vec(params.f_q, qin);
    std::vector<double> hhat(d_h);
    for (std::size_t j = 0; j < d_h; ++j) hhat[j] = updated.at(0, j);
    auto v = lin_vec(params.f_v, hhat);
    std::vector<double> kr(d_h);
    for (std::size_t j = 0; j < d_h; ++j) kr[j] = in.k_react.at(0, j);
    const auto fe = lin_vec(params.f_e, kr);
    for (std::size_t j = 0; j < d_h; ++j) {
        CHECK(h_emo.at(0, j) == doctest::Approx(v[j] + fe[j] + q[j]).epsilon(1e-10));
    }
}

TEST_CASE("interaction scores form a probability vector") {
    Rng rng(6);
    const std::size_t n = 6, d_h = 8;
    const KbciInputs in = random_inputs(n, d_h, rng);
    const BlockParams params = BlockParams::init(d_h, rng);
    Tape tape;
    const Tensor updated =
        csk_graph_attention(tape, in.nodes, in.k_after, in.k_before, params, true, 0.01);
    Tensor s_emo, s_act;
    emotional_interaction(tape, updated, in, params, true, &s_emo);
    actional_interaction(tape, updated, in, params, true, &s_act);
    for (const Tensor* s : {&s_emo, &s_act}) {
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            CHECK(s->at(i) >= 0.0);
            sum += s->at(i);
        }
        CHECK(std::abs(sum - 1.0) <= 1e-9);
    }
}

TEST_CASE("knowledge aligned with the query raises its candidate's score") {
    Rng rng(7);
    const std::size_t n = 4, d_h = 6;
    KbciInputs in = random_inputs(n, d_h, rng);
    BlockParams params = BlockParams::init(d_h, rng);
    // identity f_e so the knowledge row enters the key space unchanged
    auto& few = params.f_e.w.mutable_values();
    std::fill(few.begin(), few.end(), 0.0);
    for (std::size_t j = 0; j < d_h; ++j) few[j * d_h + j] = 1.0;
    std::fill(params.f_e.b.mutable_values().begin(), params.f_e.b.mutable_values().end(), 0.0);

    const auto score_of = [&](const KbciInputs& inputs, std::size_t i) {
        Tape tape;
        const Tensor updated = csk_graph_attention(tape, inputs.nodes, inputs.k_after,
                                                   inputs.k_before, params, true, 0.01);
        Tensor s;
        emotional_interaction(tape, updated, inputs, params, true, &s);
        return s.at(i);
    };
    const double baseline = score_of(in, 1);

    // recompute Q and overwrite candidate 1's knowledge with a collinear copy
    Tape tape;
    const Tensor q_in = add(tape, in.h_target, in.eemb_target);
    const Tensor q = reshape(
        tape, linear_map(tape, reshape(tape, q_in, {1, d_h}), params.f_q.w, params.f_q.b), {d_h});
    KbciInputs aligned = in;
    aligned.k_react = Tensor::from(in.k_react.shape(), in.k_react.values());
    for (std::size_t j = 0; j < d_h; ++j) {
        aligned.k_react.mutable_values()[1 * d_h + j] = 5.0 * q.at(j);
    }
    CHECK(score_of(aligned, 1) > baseline);
}

TEST_CASE("actional interaction matches a straight-line recomputation") {
    Rng rng(8);
    const std::size_t n = 4, d_h = 5;
    const KbciInputs in = random_inputs(n, d_h, rng);
    const BlockParams params = BlockParams::init(d_h, rng);
    Tape tape;
    const Tensor updated =
        csk_graph_attention(tape, in.nodes, in.k_after, in.k_before, params, true, 0.01);
    Tensor s;
    const Tensor h_act = actional_interaction(tape, updated, in, params, true, &s);

    const auto lin = [&](const LinearParams& p, const std::vector<double>& x) {
        std::vector<double> out(d_h);
        for (std::size_t j = 0; j < d_h; ++j) {
            double acc = p.b.at(j);
            for (std::size_t k = 0; k < d_h; ++k) acc += x[k] * p.w.at(k, j);
            out[j] = acc;
        }
        return out;
    };
    std::vector<double> ht(d_h);
    for (std::size_t j = 0; j < d_h; ++j) ht[j] = in.h_target.at(j);
    const auto q = lin(params.f_q2, ht);

    std::vector<double> raw(n);
    std::vector<std::vector<double>> vals(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> hi(d_h), ki(d_h);
        for (std::size_t j = 0; j < d_h; ++j) hi[j] = updated.at(i, j);
        for (std::size_t j = 0; j < d_h; ++j) ki[j] = in.k_want.at(i, j);
        const auto key_h = lin(params.f_k2, hi);
        const auto key_e = lin(params.f_e2, ki);
        const auto val_h = lin(params.f_v2, hi);
        double dot = 0.0;
        vals[i].resize(d_h);
        for (std::size_t j = 0; j < d_h; ++j) {
            dot += (key_h[j] + key_e[j]) * q[j];
            vals[i][j] = val_h[j] + key_e[j];
        }
        raw[i] = dot / std::sqrt(static_cast<double>(d_h));
    }
    double mx = raw[0];
    for (const double r : raw) mx = std::max(mx, r);
    double denom = 0.0;
    std::vector<double> sm(n);
    for (std::size_t i = 0; i < n; ++i) {
        sm[i] = std::exp(raw[i] - mx);
        denom += sm[i];
    }
    for (std::size_t i = 0; i < n; ++i) sm[i] /= denom;

    for (std::size_t i = 0; i < n; ++i) {
        CHECK(s.at(i) == doctest::Approx(sm[i]).epsilon(1e-10));
        for (std::size_t j = 0; j < d_h; ++j) {
            CHECK(h_act.at(i, j) ==
                  doctest::Approx(sm[i] * vals[i][j] + sm[i] * q[j]).epsilon(1e-10));
        }
    }
}

TEST_CASE("head output is the sum of its three components") {
    Rng rng(9);
    const std::size_t n = 4, d_h = 6;
    const KbciInputs in = random_inputs(n, d_h, rng);
    const BlockParams params = BlockParams::init(d_h, rng);
    Tape tape;
    const Tensor combined = head_forward(tape, in, params, BridgeSwitches{}, 0.01);
    CHECK(combined.rows() == n);
    CHECK(combined.cols() == d_h);

    const Tensor updated =
        csk_graph_attention(tape, in.nodes, in.k_after, in.k_before, params, true, 0.01);
    const Tensor h_emo = emotional_interaction(tape, updated, in, params, true);
    const Tensor h_act = actional_interaction(tape, updated, in, params, true);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d_h; ++j) {
            CHECK(combined.at(i, j) ==
                  doctest::Approx(updated.at(i, j) + h_emo.at(i, j) + h_act.at(i, j))
                      .epsilon(1e-12));
        }
    }
}

TEST_CASE("zeroed interaction maps reduce the head to the graph path") {
    Rng rng(10);
    const std::size_t n = 3, d_h = 4;
    const KbciInputs in = random_inputs(n, d_h, rng);
    BlockParams params = BlockParams::init(d_h, rng);
    zero_linear(params.f_q);
    zero_linear(params.f_k);
    zero_linear(params.f_v);
    zero_linear(params.f_e);
    zero_linear(params.f_q2);
    zero_linear(params.f_k2);
    zero_linear(params.f_v2);
    zero_linear(params.f_e2);
    Tape tape;
    const Tensor combined = head_forward(tape, in, params, BridgeSwitches{}, 0.01);
    const Tensor updated =
        csk_graph_attention(tape, in.nodes, in.k_after, in.k_before, params, true, 0.01);
    for (std::size_t i = 0; i < combined.size(); ++i) {
        CHECK(combined.values()[i] == updated.values()[i]);
    }
}

TEST_CASE("multi-head structure") {
    Rng rng(11);
    const std::size_t n = 3, d_h = 5;
    const KbciInputs in = random_inputs(n, d_h, rng);

    SUBCASE("one head equals head_forward") {
        const std::vector<BlockParams> heads = {BlockParams::init(d_h, rng)};
        Tape tape;
        const Tensor multi = multi_head_forward(tape, in, heads, BridgeSwitches{}, 0.01);
        const Tensor single = head_forward(tape, in, heads[0], BridgeSwitches{}, 0.01);
        CHECK(multi.cols() == d_h);
        for (std::size_t i = 0; i < multi.size(); ++i) {
            CHECK(multi.values()[i] == single.values()[i]);
        }
    }

    SUBCASE("shared parameters duplicate the halves") {
        const BlockParams shared = BlockParams::init(d_h, rng);
        const std::vector<BlockParams> heads = {shared, shared};
        Tape tape;
        const Tensor multi = multi_head_forward(tape, in, heads, BridgeSwitches{}, 0.01);
        CHECK(multi.cols() == 2 * d_h);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < d_h; ++j) {
                CHECK(multi.at(i, j) == multi.at(i, d_h + j));
            }
        }
    }

    SUBCASE("zeroing the second head zeroes exactly its column block") {
        std::vector<BlockParams> heads = {BlockParams::init(d_h, rng),
                                          BlockParams::init(d_h, rng)};
        Tape tape;
        const Tensor before = multi_head_forward(tape, in, heads, BridgeSwitches{}, 0.01);
        auto zero_tensor = [](Tensor& t) {
            std::fill(t.mutable_values().begin(), t.mutable_values().end(), 0.0);
        };
        zero_tensor(heads[1].w_h);
        zero_tensor(heads[1].w_e);
        zero_tensor(heads[1].attn);
        for (LinearParams* lp : {&heads[1].f_q, &heads[1].f_k, &heads[1].f_v, &heads[1].f_e,
                                 &heads[1].f_q2, &heads[1].f_k2, &heads[1].f_v2, &heads[1].f_e2}) {
            zero_linear(*lp);
        }
        const Tensor after = multi_head_forward(tape, in, heads, BridgeSwitches{}, 0.01);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < d_h; ++j) {
                CHECK(after.at(i, j) == before.at(i, j));
                CHECK(after.at(i, d_h + j) == 0.0);
            }
        }
    }
}

TEST_CASE("kbci block gradient check at d_h=8") {
    Rng rng(12);
    const std::size_t n = 3, d_h = 8;
    KbciInputs in = random_inputs(n, d_h, rng, true);
    {
        Tape t0;
        in.h_target = select_row(t0, in.nodes, n - 1);
    }
    std::vector<BlockParams> heads = {BlockParams::init(d_h, rng), BlockParams::init(d_h, rng)};
    const std::vector<std::uint8_t> labels = {1, 0, 1};

    const auto build = [&](Tape& t) -> Tensor {
        KbciInputs local = in;
        local.h_target = select_row(t, in.nodes, n - 1);
        const Tensor concat = multi_head_forward(t, local, heads, BridgeSwitches{}, 0.01);
        const Tensor flat =
            sigmoid(t, matmul(t, concat, Tensor::full({2 * d_h, 1}, 0.35)));
        // simple scalar readout across candidates
        return reshape(
            t, matmul(t, reshape(t, flat, {1, n}), Tensor::full({n, 1}, 1.0 / n)), {1});
    };

    std::vector<NamedTensor> params = {{"nodes", in.nodes}};
    heads[0].collect_params("head0", params);
    heads[1].collect_params("head1", params);
    const auto report = grad_check(build, params, 1e-5);
    CHECK(report.max_rel_err < 1e-4);
}
