#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "kbcin/encoder.hpp"

using namespace kbcin;

TEST_CASE("tokenize splits words and punctuation") {
    CHECK(tokenize("Hello!") == std::vector<std::string>{"hello", "!"});
    CHECK(tokenize("So, what now?") == std::vector<std::string>{"so", ",", "what", "now", "?"});
    CHECK(tokenize("").empty());
    const Vocabulary vocab;
    CHECK(tokenize_ids("", vocab) == std::vector<int>{Vocabulary::kUnk});
}

TEST_CASE("vocabulary reserves special ids and maps OOV to UNK") {
    Vocabulary vocab;
    CHECK(vocab.size() == 3);
    const int id = vocab.add("hello");
    CHECK(id == 3);
    CHECK(vocab.add("hello") == 3);
    CHECK(vocab.id_of("hello") == 3);
    CHECK(vocab.id_of("unseen") == Vocabulary::kUnk);
}

TEST_CASE("vocabulary built from a synthetic corpus leaves no training UNK") {
    SyntheticConfig cfg;
    cfg.n_dialogues = 32;
    cfg.seed = 8;
    const Corpus corpus = generate_synthetic(cfg);
    const Vocabulary vocab = build_vocabulary(corpus);
    for (const Dialogue& d : corpus.dialogues) {
        for (const Utterance& u : d.utterances) {
            for (const int id : tokenize_ids(u.text, vocab)) {
                CHECK(id != Vocabulary::kUnk);
            }
        }
    }
}

namespace {

EncoderConfig small_cfg() {
    EncoderConfig cfg;
    cfg.d_m = 16;
    cfg.n_layers = 2;
    cfg.n_heads = 4;
    cfg.d_ff = 32;
    cfg.max_len = 16;
    return cfg;
}

}  // namespace

TEST_CASE("encode_utterance output shape is d_m for any length") {
    Rng rng(1);
    const EncoderConfig cfg = small_cfg();
    const EncoderParams params = EncoderParams::init(cfg, 10, 8, rng);
    Tape tape;
    for (const std::size_t len : {1u, 3u, 9u}) {
        std::vector<int> ids(len, 4);
        const Tensor c = encode_utterance(tape, params, cfg, ids);
        CHECK(c.shape() == std::vector<std::size_t>{16});
    }
}

TEST_CASE("swapping two distinct tokens changes the encoding") {
    Rng rng(2);
    const EncoderConfig cfg = small_cfg();
    const EncoderParams params = EncoderParams::init(cfg, 10, 8, rng);
    Tape tape;
    const Tensor a = encode_utterance(tape, params, cfg, {3, 4, 5});
    const Tensor b = encode_utterance(tape, params, cfg, {5, 4, 3});
    bool differs = false;
    for (std::size_t j = 0; j < a.size(); ++j) differs = differs || a.at(j) != b.at(j);
    CHECK(differs);
}

TEST_CASE("identical inputs encode identically") {
    Rng rng(3);
    const EncoderConfig cfg = small_cfg();
    const EncoderParams params = EncoderParams::init(cfg, 10, 8, rng);
    Tape tape;
    const Tensor a = encode_utterance(tape, params, cfg, {3, 4, 5});
    const Tensor b = encode_utterance(tape, params, cfg, {3, 4, 5});
    for (std::size_t j = 0; j < a.size(); ++j) CHECK(a.at(j) == b.at(j));
}

TEST_CASE("zero layers degenerate to max-pooled raw embeddings") {
    Rng rng(4);
    EncoderConfig cfg = small_cfg();
    cfg.n_layers = 0;
    const EncoderParams params = EncoderParams::init(cfg, 10, 8, rng);
    Tape tape;
    const std::vector<int> ids = {3, 7, 2};
    const Tensor c = encode_utterance(tape, params, cfg, ids);
    // per-column loop over [CLS] + tokens straight from the table
    const std::vector<int> with_cls = {Vocabulary::kCls, 3, 7, 2};
    for (std::size_t j = 0; j < cfg.d_m; ++j) {
        double best = -1e300;
        for (const int id : with_cls) {
            best = std::max(best, params.token_emb.at(static_cast<std::size_t>(id), j));
        }
        CHECK(c.at(j) == best);
    }
}

TEST_CASE("single-token utterance pools over CLS plus token") {
    Rng rng(5);
    EncoderConfig cfg = small_cfg();
    cfg.n_layers = 0;
    const EncoderParams params = EncoderParams::init(cfg, 10, 8, rng);
    Tape tape;
    const Tensor c = encode_utterance(tape, params, cfg, {6});
    for (std::size_t j = 0; j < cfg.d_m; ++j) {
        const double expect = std::max(params.token_emb.at(0, j), params.token_emb.at(6, j));
        CHECK(c.at(j) == expect);
    }
}

TEST_CASE("over-long utterances truncate the tail and count it") {
    Rng rng(6);
    EncoderConfig cfg = small_cfg();
    cfg.max_len = 4;
    const EncoderParams params = EncoderParams::init(cfg, 10, 8, rng);
    Tape tape;
    EncodeStats stats;
    const std::vector<int> ids = {3, 4, 5, 6, 7};
    const Tensor c = encode_utterance(tape, params, cfg, ids, &stats);
    CHECK(c.size() == cfg.d_m);
    CHECK(stats.truncated == 2);  // 6 rows with CLS, 2 dropped
}

TEST_CASE("project applies the linear map") {
    Tape tape;
    const Tensor c = Tensor::from({3}, {1.0, -2.0, 0.5});
    {
        const Tensor eye = Tensor::from({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
        const Tensor out = project(tape, c, eye);
        for (std::size_t j = 0; j < 3; ++j) CHECK(out.at(j) == c.at(j));
    }
    {
        const Tensor zero = Tensor::zeros({3, 2});
        const Tensor out = project(tape, c, zero);
        CHECK(out.shape() == std::vector<std::size_t>{2});
        CHECK(out.at(0) == 0.0);
        CHECK(out.at(1) == 0.0);
    }
    {
        Rng rng(9);
        Tensor w = Tensor::zeros({3, 4});
        for (double& v : w.mutable_values()) v = rng.uniform(-1, 1);
        const Tensor out = project(tape, c, w);
        for (std::size_t j = 0; j < 4; ++j) {
            double expect = 0.0;
            for (std::size_t k = 0; k < 3; ++k) expect += c.at(k) * w.at(k, j);
            CHECK(out.at(j) == expect);
        }
    }
}

TEST_CASE("gradients reach the embedding of every input position") {
    Rng rng(10);
    const EncoderConfig cfg = small_cfg();
    const EncoderParams params = EncoderParams::init(cfg, 12, 8, rng);
    const std::vector<int> ids = {3, 4, 5, 6};
    Tape tape;
    const Tensor c = encode_utterance(tape, params, cfg, ids);
    const Tensor loss = reshape(
        tape, matmul(tape, reshape(tape, c, {1, cfg.d_m}), Tensor::full({cfg.d_m, 1}, 1.0)),
        {1});
    tape.backward(loss);
    const auto& g = params.token_emb.grad_view();
    REQUIRE(!g.empty());
    for (const int id : ids) {
        double row_norm = 0.0;
        for (std::size_t j = 0; j < cfg.d_m; ++j) {
            row_norm += std::abs(g[static_cast<std::size_t>(id) * cfg.d_m + j]);
        }
        CHECK(row_norm > 0.0);
    }
}

TEST_CASE("encoder gradient check on a toy loss") {
    Rng rng(14);
    EncoderConfig cfg;
    cfg.d_m = 8;
    cfg.n_layers = 1;
    cfg.n_heads = 2;
    cfg.d_ff = 16;
    cfg.max_len = 8;
    const EncoderParams params = EncoderParams::init(cfg, 8, 4, rng);
    const std::vector<int> ids = {3, 5, 7};

    const auto build = [&](Tape& t) {
        const Tensor c = encode_utterance(t, params, cfg, ids);
        const Tensor p = project(t, c, params.w_proj);
        const Tensor s = sigmoid(t, p);
        return reshape(t, matmul(t, reshape(t, s, {1, 4}), Tensor::full({4, 1}, 1.0)), {1});
    };
    std::vector<NamedTensor> named;
    params.collect_params("encoder", named);
    const auto report = grad_check(build, named, 1e-5);
    CHECK(report.max_rel_err < 1e-4);
}
