#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>

#include "kbcin/grad_check.hpp"
#include "kbcin/ops.hpp"

using namespace kbcin;

namespace {

// element-wise triple loop, the independent route for matmul checks
std::vector<double> matmul_oracle(const std::vector<double>& a, std::size_t m, std::size_t p,
                                  const std::vector<double>& b, std::size_t q) {
    std::vector<double> c(m * q, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < q; ++j) {
            for (std::size_t k = 0; k < p; ++k) c[i * q + j] += a[i * p + k] * b[k * q + j];
        }
    }
    return c;
}

Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng, bool requires_grad = false) {
    Tensor t = Tensor::zeros(std::move(shape), requires_grad);
    for (double& v : t.mutable_values()) v = rng.uniform(-1.5, 1.5);
    return t;
}

}  // namespace

TEST_CASE("tensor invariants") {
    Tensor t = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
    CHECK(t.size() == 6);
    CHECK(t.rows() == 2);
    CHECK(t.cols() == 3);
    CHECK(t.at(1, 2) == 6.0);
    CHECK_THROWS_AS(Tensor::from({2, 2}, {1, 2, 3}), DimensionError);
    Tensor g = Tensor::zeros({4}, true);
    CHECK(!g.has_grad());
    g.grad()[1] = 2.0;
    CHECK(g.grad().size() == g.size());
}

TEST_CASE("linear_map examples") {
    Tape tape;
    const Tensor x = Tensor::from({1, 2}, {1, 2});
    const Tensor eye = Tensor::from({2, 2}, {1, 0, 0, 1});
    const Tensor y = linear_map(tape, x, eye);
    CHECK(y.at(0, 0) == 1.0);
    CHECK(y.at(0, 1) == 2.0);

    const Tensor x2 = Tensor::from({1, 2}, {1, 1});
    const Tensor w2 = Tensor::from({2, 1}, {2, 3});
    const Tensor b2 = Tensor::from({1}, {1});
    CHECK(linear_map(tape, x2, w2, b2).at(0, 0) == 6.0);
}

TEST_CASE("linear_map matches triple-loop oracle exactly") {
    Rng rng(7);
    Tape tape;
    const Tensor x = random_tensor({3, 4}, rng);
    const Tensor w = random_tensor({4, 2}, rng);
    const Tensor y = linear_map(tape, x, w);
    const auto expect = matmul_oracle(x.values(), 3, 4, w.values(), 2);
    for (std::size_t i = 0; i < expect.size(); ++i) CHECK(y.values()[i] == expect[i]);
}

TEST_CASE("linear_map names both shapes on mismatch") {
    Tape tape;
    const Tensor x = Tensor::zeros({3, 4});
    const Tensor w = Tensor::zeros({5, 2});
    try {
        linear_map(tape, x, w);
        FAIL("expected DimensionError");
    } catch (const DimensionError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("[3x4]") != std::string::npos);
        CHECK(msg.find("[5x2]") != std::string::npos);
    }
}

TEST_CASE("masked_softmax examples") {
    Tape tape;
    {
        const Tensor s = Tensor::from({3}, {5, 5, 5});
        const std::vector<std::uint8_t> mask = {1, 1, 1};
        const Tensor out = masked_softmax(tape, s, mask);
        for (std::size_t i = 0; i < 3; ++i)
            CHECK(out.at(i) == doctest::Approx(1.0 / 3).epsilon(1e-12));
    }
    {
        const Tensor s = Tensor::from({2}, {0, 100});
        const std::vector<std::uint8_t> mask = {1, 0};
        const Tensor out = masked_softmax(tape, s, mask);
        CHECK(out.at(0) == 1.0);
        CHECK(out.at(1) == 0.0);
    }
    {
        // direct exp-sum route
        const Tensor s = Tensor::from({3}, {1, 2, 3});
        const std::vector<std::uint8_t> mask = {1, 1, 0};
        const Tensor out = masked_softmax(tape, s, mask);
        const double e1 = std::exp(1.0), e2 = std::exp(2.0);
        CHECK(out.at(0) == doctest::Approx(e1 / (e1 + e2)).epsilon(1e-14));
        CHECK(out.at(1) == doctest::Approx(e2 / (e1 + e2)).epsilon(1e-14));
        CHECK(out.at(2) == 0.0);
    }
    {
        const Tensor s = Tensor::from({2}, {1, 2});
        const std::vector<std::uint8_t> mask = {0, 0};
        CHECK_THROWS_AS(masked_softmax(tape, s, mask), PreconditionError);
    }
}

TEST_CASE("masked_softmax is a probability vector over the kept set") {
    Rng rng(13);
    Tape tape;
    for (int it = 0; it < 200; ++it) {
        const std::size_t n = 1 + rng.next_u64() % 8;
        Tensor s = random_tensor({n}, rng);
        for (double& v : s.mutable_values()) v *= 50.0;  // stress the stabilization
        std::vector<std::uint8_t> mask(n);
        bool any = false;
        for (auto& m : mask) {
            m = rng.bernoulli(0.6) ? 1 : 0;
            any = any || m;
        }
        if (!any) mask[rng.next_u64() % n] = 1;
        const Tensor out = masked_softmax(tape, s, mask);
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (mask[i]) {
                CHECK(out.at(i) >= 0.0);
                sum += out.at(i);
            } else {
                CHECK(out.at(i) == 0.0);
            }
        }
        CHECK(std::abs(sum - 1.0) <= 1e-9);
    }
}

TEST_CASE("activations") {
    Tape tape;
    const Tensor x = Tensor::from({5}, {0.0, -1.0, 2.0, 20.0, -20.0});
    const Tensor lr = leaky_relu(tape, x, 0.2);
    CHECK(lr.at(0) == 0.0);
    CHECK(lr.at(1) == doctest::Approx(-0.2).epsilon(1e-15));
    CHECK(lr.at(2) == 2.0);

    const Tensor sg = sigmoid(tape, x);
    CHECK(sg.at(0) == 0.5);
    // high-precision reference values for the tails
    CHECK(sg.at(3) == doctest::Approx(1.0 / (1.0 + std::exp(-20.0))).epsilon(1e-15));
    CHECK(sg.at(4) == doctest::Approx(std::exp(-20.0) / (1.0 + std::exp(-20.0))).epsilon(1e-15));
    CHECK(sg.at(3) < 1.0);
    CHECK(sg.at(4) > 0.0);

    const Tensor el = elu(tape, x);
    CHECK(el.at(0) == 0.0);
    CHECK(el.at(1) == doctest::Approx(std::expm1(-1.0)).epsilon(1e-15));
    CHECK(el.at(2) == 2.0);
}

TEST_CASE("max_pool_rows") {
    Tape tape;
    const Tensor x = Tensor::from_rows({{1, 5}, {3, 2}});
    const Tensor out = max_pool_rows(tape, x);
    CHECK(out.at(0) == 3.0);
    CHECK(out.at(1) == 5.0);

    const Tensor single = Tensor::from_rows({{7, -2, 4}});
    const Tensor pooled = max_pool_rows(tape, single);
    for (std::size_t j = 0; j < 3; ++j) CHECK(pooled.at(j) == single.at(0, j));

    Rng rng(5);
    const Tensor r = random_tensor({4, 3}, rng);
    const Tensor rp = max_pool_rows(tape, r);
    for (std::size_t j = 0; j < 3; ++j) {
        double best = r.at(0, j);
        for (std::size_t i = 1; i < 4; ++i) best = std::max(best, r.at(i, j));
        CHECK(rp.at(j) == best);
    }

    CHECK_THROWS_AS(max_pool_rows(tape, Tensor::zeros({0, 3})), PreconditionError);
}

TEST_CASE("max_pool tie sends gradient to the lowest row") {
    Tape tape;
    const Tensor x = Tensor::from({2, 1}, {1.0, 1.0}, true);
    const Tensor out = max_pool_rows(tape, x);
    const Tensor loss = reshape(tape, out, {1});
    tape.backward(loss);
    CHECK(x.grad_view()[0] == 1.0);
    CHECK(x.grad_view()[1] == 0.0);
}

TEST_CASE("grad_check on w^2") {
    Tensor w = Tensor::from({1, 1}, {3.0}, true);
    const std::vector<NamedTensor> params = {{"w", w}};
    const auto build = [&](Tape& tape) {
        const Tensor y = matmul(tape, w, w);  // w used twice: accumulation path
        return reshape(tape, y, {1});
    };
    const auto report = grad_check(build, params, 1e-5);
    CHECK(report.max_rel_err < 1e-8);

    Tape tape;
    Tensor loss = build(tape);
    w.zero_grad();
    tape.backward(loss);
    CHECK(w.grad_view()[0] == doctest::Approx(6.0).epsilon(1e-12));
}

TEST_CASE("gradient of masked entries is zero through a loss") {
    Tensor s = Tensor::from({3}, {0.3, -0.2, 0.9}, true);
    Tape tape;
    const std::vector<std::uint8_t> mask = {1, 0, 1};
    const Tensor p = masked_softmax(tape, s, mask);
    // scalar loss touching every output entry
    const Tensor loss =
        matmul(tape, reshape(tape, p, {1, 3}), Tensor::from({3, 1}, {1.0, 2.0, 3.0}));
    tape.backward(reshape(tape, loss, {1}));
    CHECK(s.grad_view()[1] == 0.0);
    CHECK(s.grad_view()[0] != 0.0);
}

TEST_CASE("two-branch consumption accumulates the sum of branch gradients") {
    Rng rng(3);
    Tensor x = random_tensor({2, 2}, rng, true);
    const Tensor a = Tensor::from({2, 2}, {1.0, 0.5, -0.25, 2.0});
    const Tensor ones = Tensor::from({2, 1}, {1.0, 1.0});

    const auto branch_a = [&](Tape& t) {
        return reshape(t, matmul(t, reshape(t, max_pool_rows(t, matmul(t, x, a)), {1, 2}), ones),
                       {1});
    };
    const auto branch_b = [&](Tape& t) {
        return reshape(t, matmul(t, reshape(t, max_pool_rows(t, x), {1, 2}), ones), {1});
    };

    x.zero_grad();
    {
        Tape t;
        const Tensor loss = add(t, branch_a(t), branch_b(t));
        t.backward(loss);
    }
    const std::vector<double> combined = x.grad_view();

    x.zero_grad();
    {
        Tape t;
        t.backward(branch_a(t));
    }
    const std::vector<double> only_a = x.grad_view();
    x.zero_grad();
    {
        Tape t;
        t.backward(branch_b(t));
    }
    const std::vector<double> only_b = x.grad_view();

    for (std::size_t i = 0; i < combined.size(); ++i) {
        CHECK(combined[i] == doctest::Approx(only_a[i] + only_b[i]).epsilon(1e-12));
    }
}

TEST_CASE("composite op backward matches central differences") {
    Rng rng(11);
    Tensor w1 = random_tensor({3, 4}, rng, true);
    Tensor b1 = random_tensor({4}, rng, true);
    Tensor w2 = random_tensor({4, 2}, rng, true);
    Tensor gain = Tensor::full({4}, 1.1, true);
    Tensor bias = random_tensor({4}, rng, true);
    Tensor s = random_tensor({5}, rng, true);
    const Tensor x = random_tensor({5, 3}, rng);

    const auto build = [&](Tape& t) -> Tensor {
        Tensor h = linear_map(t, x, w1, b1);
        h = layer_norm_rows(t, h, gain, bias);
        h = elu(t, h);
        const Tensor sq = causal_softmax_rows(t, matmul_nt(t, h, h));
        h = matmul(t, sq, h);
        h = scale_rows(t, h, masked_softmax(t, s, std::vector<std::uint8_t>(5, 1)));
        Tensor o = linear_map(t, h, w2);
        o = sigmoid(t, o);
        const Tensor pooled = max_pool_rows(t, o);
        return reshape(t,
                       matmul(t, reshape(t, pooled, {1, 2}), Tensor::from({2, 1}, {1.0, 1.0})),
                       {1});
    };
    const std::vector<NamedTensor> params = {{"w1", w1},     {"b1", b1},     {"w2", w2},
                                             {"gain", gain}, {"bias", bias}, {"s", s}};
    const auto report = grad_check(build, params, 1e-5);
    CHECK(report.max_rel_err < 1e-4);
}

TEST_CASE("repeat runs are bit-identical") {
    const auto run = [](std::vector<double>& grads) {
        Rng rng(42);
        Tensor w = random_tensor({4, 4}, rng, true);
        const Tensor x = random_tensor({2, 4}, rng);
        Tape t;
        Rng drop(9);
        Tensor h = linear_map(t, x, w);
        h = dropout(t, h, 0.25, drop, true);
        h = leaky_relu(t, h, 0.01);
        const Tensor pooled = max_pool_rows(t, h);
        const Tensor loss =
            reshape(t, matmul(t, reshape(t, pooled, {1, 4}), Tensor::full({4, 1}, 0.5)), {1});
        t.backward(loss);
        grads = w.grad_view();
        return loss.item();
    };
    std::vector<double> g1, g2;
    const double l1 = run(g1);
    const double l2 = run(g2);
    CHECK(std::memcmp(&l1, &l2, sizeof(double)) == 0);
    REQUIRE(g1.size() == g2.size());
    CHECK(std::memcmp(g1.data(), g2.data(), g1.size() * sizeof(double)) == 0);
}

TEST_CASE("shape ops against loops") {
    Rng rng(17);
    Tape tape;
    const Tensor m = random_tensor({3, 4}, rng);
    const Tensor u = random_tensor({3}, rng);
    const Tensor w = random_tensor({5}, rng);

    const Tensor sliced = slice_cols(tape, m, 1, 2);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(sliced.at(i, 0) == m.at(i, 1));
        CHECK(sliced.at(i, 1) == m.at(i, 2));
    }

    const Tensor oa = outer_add(tape, u, w);
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = 0; j < 5; ++j) CHECK(oa.at(i, j) == u.at(i) + w.at(j));
    }

    const Tensor sr = scale_rows(tape, m, u);
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = 0; j < 4; ++j) CHECK(sr.at(i, j) == u.at(i) * m.at(i, j));
    }

    const Tensor br = broadcast_row(tape, w, 2);
    CHECK(br.rows() == 2);
    for (std::size_t j = 0; j < 5; ++j) CHECK(br.at(1, j) == w.at(j));

    const std::vector<int> ids = {2, 0, 2};
    const Tensor took = take_rows(tape, m, ids);
    for (std::size_t j = 0; j < 4; ++j) {
        CHECK(took.at(0, j) == m.at(2, j));
        CHECK(took.at(1, j) == m.at(0, j));
        CHECK(took.at(2, j) == m.at(2, j));
    }
}

TEST_CASE("causal softmax keeps the upper triangle at exactly zero") {
    Rng rng(23);
    Tape tape;
    const Tensor s = random_tensor({4, 4}, rng);
    const Tensor a = causal_softmax_rows(tape, s);
    for (std::size_t i = 0; i < 4; ++i) {
        double sum = 0.0;
        for (std::size_t j = 0; j < 4; ++j) {
            if (j > i) CHECK(a.at(i, j) == 0.0);
            sum += a.at(i, j);
        }
        CHECK(std::abs(sum - 1.0) <= 1e-9);
    }
}

TEST_CASE("dropout semantics") {
    Tape tape;
    const Tensor x = Tensor::full({100}, 1.0);
    Rng d1(77);
    const Tensor eval_out = dropout(tape, x, 0.5, d1, false);
    CHECK(eval_out.same_storage(x));

    Rng d2(77);
    const Tensor train_out = dropout(tape, x, 0.5, d2, true);
    for (std::size_t i = 0; i < 100; ++i) {
        CHECK((train_out.at(i) == 0.0 || train_out.at(i) == 2.0));
    }
    Rng d3(77);
    const Tensor again = dropout(tape, x, 0.5, d3, true);
    CHECK(std::memcmp(train_out.values().data(), again.values().data(), 100 * sizeof(double)) ==
          0);
}
