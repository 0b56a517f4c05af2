#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "kbcin/checkpoint.hpp"
#include "kbcin/trainer.hpp"

namespace fs = std::filesystem;
using namespace kbcin;

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open file: " + path);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

void write_file(const fs::path& path, const std::string& content) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write file: " + path.string());
    out << content;
}

Corpus merge_corpora(const std::vector<const Corpus*>& parts) {
    Corpus merged;
    if (!parts.empty()) merged.emotions = parts.front()->emotions;
    for (const Corpus* c : parts) {
        merged.dialogues.insert(merged.dialogues.end(), c->dialogues.begin(),
                                c->dialogues.end());
    }
    return merged;
}

// Collects CLI overrides and replays them through the config-file path so
// flags and file entries share one parser.
struct ConfigCollector {
    std::vector<std::pair<std::string, std::string>> entries;

    void add_number_option(CLI::App* app, const std::string& flag, const std::string& key,
                           const std::string& desc) {
        auto value = std::make_shared<std::string>();
        app->add_option_function<std::string>(
               flag, [this, key, value](const std::string& v) { entries.emplace_back(key, v); },
               desc)
            ->expected(1);
    }
    void add_disable_flag(CLI::App* app, const std::string& flag, const std::string& key,
                          const std::string& desc) {
        app->add_flag_callback(
            flag, [this, key]() { entries.emplace_back(key, "true"); }, desc);
    }
};

void register_train_flags(CLI::App* app, ConfigCollector& cc) {
    cc.add_number_option(app, "--learning-rate", "learning_rate", "AdamW learning rate");
    cc.add_number_option(app, "--weight-decay", "weight_decay", "decoupled L2 strength");
    cc.add_number_option(app, "--batch-size", "batch_size", "dialogues per step");
    cc.add_number_option(app, "--epochs", "epochs", "max training epochs");
    cc.add_number_option(app, "--patience", "patience", "early-stopping patience");
    cc.add_number_option(app, "--clip-norm", "clip_norm", "gradient norm clip (0 = off)");
    cc.add_number_option(app, "--heads", "heads", "paralleled KBCI heads");
    cc.add_number_option(app, "--d-h", "d_h", "model width");
    cc.add_number_option(app, "--d-m", "d_m", "encoder width");
    cc.add_number_option(app, "--enc-layers", "enc_layers", "encoder layers");
    cc.add_number_option(app, "--enc-heads", "enc_heads", "encoder attention heads");
    cc.add_number_option(app, "--d-ff", "d_ff", "encoder feed-forward width");
    cc.add_number_option(app, "--max-len", "max_len", "max tokens per utterance incl. [CLS]");
    cc.add_number_option(app, "--d-k", "d_k", "knowledge vector width");
    cc.add_number_option(app, "--p-max", "p_max", "relative position buckets");
    cc.add_number_option(app, "--mlp-hidden", "mlp_hidden", "predictor hidden widths (comma)");
    cc.add_number_option(app, "--dropout", "dropout", "MLP dropout rate");
    cc.add_number_option(app, "--emotion-mode", "emotion_mode", "gold|predicted|none");
    cc.add_number_option(app, "--threshold", "threshold", "decision threshold");
    cc.add_number_option(app, "--pos-weight", "pos_weight", "positive class loss weight");
    cc.add_disable_flag(app, "--disable-s-bridge", "disable_s_bridge",
                        "drop knowledge from graph attention scores");
    cc.add_disable_flag(app, "--disable-e-bridge", "disable_e_bridge",
                        "drop knowledge from the emotional interaction");
    cc.add_disable_flag(app, "--disable-a-bridge", "disable_a_bridge",
                        "drop knowledge from the actional interaction");
}

KnowledgeStore resolve_knowledge(const std::string& knowledge_path, const Corpus& corpus,
                                 std::size_t dim, std::uint64_t seed) {
    if (!knowledge_path.empty()) return load_store(read_file(knowledge_path), corpus);
    return synthesize_store(corpus, dim, seed);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"KBCIN: causal emotion entailment trainer"};
    app.require_subcommand(1);

    // ---- train ----
    auto* train_cmd = app.add_subcommand("train", "train a model and evaluate on test");
    std::string tr_config, tr_corpus, tr_valid, tr_test, tr_knowledge, tr_overlay, tr_out;
    std::vector<std::uint64_t> tr_seeds;
    std::size_t tr_kdim = 64;
    std::uint64_t tr_kseed = 17;
    bool tr_quiet = false;
    train_cmd->add_option("--config", tr_config, "key = value config file");
    train_cmd->add_option("--corpus", tr_corpus, "train corpus (JSON)")->required();
    train_cmd->add_option("--valid", tr_valid, "validation corpus")->required();
    train_cmd->add_option("--test", tr_test, "test corpus")->required();
    train_cmd->add_option("--knowledge", tr_knowledge,
                          "knowledge file covering all splits (synthesized when omitted)");
    train_cmd->add_option("--knowledge-dim", tr_kdim, "dim for synthesized knowledge");
    train_cmd->add_option("--knowledge-seed", tr_kseed, "seed for synthesized knowledge");
    train_cmd->add_option("--overlay", tr_overlay, "predicted-emotion overlay file");
    train_cmd->add_option("--seed", tr_seeds, "run seed (repeatable)");
    train_cmd->add_option("--out-dir", tr_out, "output directory")->required();
    train_cmd->add_flag("--quiet", tr_quiet, "suppress per-epoch log lines");
    ConfigCollector tr_cc;
    register_train_flags(train_cmd, tr_cc);

    // ---- eval ----
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a corpus");
    std::string ev_ckpt, ev_corpus, ev_knowledge, ev_overlay, ev_out, ev_mode;
    std::size_t ev_kdim = 64;
    std::uint64_t ev_kseed = 17;
    double ev_threshold = -1.0;
    bool ev_no_s = false, ev_no_e = false, ev_no_a = false;
    eval_cmd->add_option("--checkpoint", ev_ckpt, "checkpoint JSON")->required();
    eval_cmd->add_option("--corpus", ev_corpus, "corpus to evaluate")->required();
    eval_cmd->add_option("--knowledge", ev_knowledge, "knowledge file");
    eval_cmd->add_option("--knowledge-dim", ev_kdim, "dim for synthesized knowledge");
    eval_cmd->add_option("--knowledge-seed", ev_kseed, "seed for synthesized knowledge");
    eval_cmd->add_option("--overlay", ev_overlay, "predicted-emotion overlay file");
    eval_cmd->add_option("--emotion-mode", ev_mode, "override emotion mode");
    eval_cmd->add_option("--threshold", ev_threshold, "override decision threshold");
    eval_cmd->add_flag("--disable-s-bridge", ev_no_s, "override: drop S-bridge");
    eval_cmd->add_flag("--disable-e-bridge", ev_no_e, "override: drop E-bridge");
    eval_cmd->add_flag("--disable-a-bridge", ev_no_a, "override: drop A-bridge");
    eval_cmd->add_option("--out-dir", ev_out, "output directory")->required();

    // ---- gen-synth ----
    auto* synth_cmd = app.add_subcommand("gen-synth", "generate synthetic corpora");
    std::string gs_out;
    std::size_t gs_train = 64, gs_valid = 16, gs_test = 16;
    int gs_len_min = 4, gs_len_max = 10;
    std::uint64_t gs_seed = 1;
    synth_cmd->add_option("--out-dir", gs_out, "output directory")->required();
    synth_cmd->add_option("--n-train", gs_train, "train dialogues");
    synth_cmd->add_option("--n-valid", gs_valid, "valid dialogues");
    synth_cmd->add_option("--n-test", gs_test, "test dialogues");
    synth_cmd->add_option("--len-min", gs_len_min, "min dialogue length");
    synth_cmd->add_option("--len-max", gs_len_max, "max dialogue length");
    synth_cmd->add_option("--seed", gs_seed, "generator seed");

    // ---- gen-knowledge ----
    auto* knw_cmd = app.add_subcommand("gen-knowledge", "synthesize a knowledge file");
    std::vector<std::string> gk_corpora;
    std::string gk_out;
    std::size_t gk_dim = 64;
    std::uint64_t gk_seed = 17;
    knw_cmd->add_option("--corpus", gk_corpora, "corpus file (repeatable)")->required();
    knw_cmd->add_option("--dim", gk_dim, "vector width");
    knw_cmd->add_option("--seed", gk_seed, "synthesis seed");
    knw_cmd->add_option("--out", gk_out, "output knowledge file")->required();

    // ---- dump-attention ----
    auto* dump_cmd = app.add_subcommand("dump-attention",
                                        "write per-sample attention matrices as JSON lines");
    std::string da_ckpt, da_corpus, da_knowledge, da_overlay, da_out;
    std::size_t da_kdim = 64;
    std::uint64_t da_kseed = 17;
    dump_cmd->add_option("--checkpoint", da_ckpt, "checkpoint JSON")->required();
    dump_cmd->add_option("--corpus", da_corpus, "corpus")->required();
    dump_cmd->add_option("--knowledge", da_knowledge, "knowledge file");
    dump_cmd->add_option("--knowledge-dim", da_kdim, "dim for synthesized knowledge");
    dump_cmd->add_option("--knowledge-seed", da_kseed, "seed for synthesized knowledge");
    dump_cmd->add_option("--overlay", da_overlay, "predicted-emotion overlay");
    dump_cmd->add_option("--out", da_out, "output JSONL file")->required();

    // ---- stats ----
    auto* stats_cmd = app.add_subcommand("stats", "report sample and pair counts for a corpus");
    std::string st_corpus;
    stats_cmd->add_option("--corpus", st_corpus, "corpus file")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*train_cmd) {
            TrainConfig cfg;
            if (!tr_config.empty()) {
                for (const auto& [k, v] : parse_config_text(read_file(tr_config))) {
                    apply_config_entry(cfg, k, v);
                }
            }
            for (const auto& [k, v] : tr_cc.entries) apply_config_entry(cfg, k, v);
            if (!tr_seeds.empty()) cfg.seeds = tr_seeds;

            const EmotionVocab emotions = cfg.model.emotion_vocab();
            const Corpus train = parse_corpus(read_file(tr_corpus), emotions);
            const Corpus valid = parse_corpus(read_file(tr_valid), emotions);
            const Corpus test = parse_corpus(read_file(tr_test), emotions);
            const Corpus merged = merge_corpora({&train, &valid, &test});
            const KnowledgeStore store =
                resolve_knowledge(tr_knowledge, merged, tr_kdim, tr_kseed);
            if (store.dim() != cfg.model.d_k) {
                std::cerr << "note: knowledge dim " << store.dim() << " overrides configured d_k "
                          << cfg.model.d_k << "\n";
                cfg.model.d_k = store.dim();
            }
            EmotionOverlay overlay;
            const bool have_overlay = !tr_overlay.empty();
            if (have_overlay) overlay = parse_overlay(read_file(tr_overlay), emotions);

            const TrainResult result =
                train_run(train, valid, test, store, cfg, have_overlay ? &overlay : nullptr,
                          tr_quiet ? nullptr : &std::cerr);

            const fs::path out_dir(tr_out);
            write_file(out_dir / "metrics.json", train_result_to_json(result));
            write_file(out_dir / "history.json", history_to_json(result));
            for (const SeedRunResult& s : result.per_seed) {
                write_file(out_dir / ("checkpoint_seed" + std::to_string(s.seed) + ".json"),
                           s.checkpoint_json);
                write_file(out_dir /
                               ("predictions_test_seed" + std::to_string(s.seed) + ".jsonl"),
                           predictions_to_jsonl(s.test_predictions));
            }
            write_file(out_dir / "checkpoint.json",
                       result.per_seed[result.best_seed_index].checkpoint_json);
            std::cout << "averaged test: neg_f1 " << result.averaged_test.neg_f1 << " pos_f1 "
                      << result.averaged_test.pos_f1 << " macro_f1 "
                      << result.averaged_test.macro_f1 << "\n";
        } else if (*eval_cmd) {
            CheckpointMeta meta;
            const KbcinModel model = checkpoint_from_json(read_file(ev_ckpt), &meta);
            const EmotionVocab emotions = model.cfg.emotion_vocab();
            const Corpus corpus = parse_corpus(read_file(ev_corpus), emotions);
            const KnowledgeStore store =
                resolve_knowledge(ev_knowledge, corpus, ev_kdim, ev_kseed);
            EmotionOverlay overlay;
            const bool have_overlay = !ev_overlay.empty();
            if (have_overlay) overlay = parse_overlay(read_file(ev_overlay), emotions);

            EvalOverrides overrides;
            if (!ev_mode.empty()) overrides.emotion_mode = emotion_mode_from_string(ev_mode);
            if (ev_threshold > 0.0) overrides.threshold = ev_threshold;
            if (ev_no_s || ev_no_e || ev_no_a) {
                BridgeSwitches b = model.cfg.bridges;
                if (ev_no_s) b.s_bridge = false;
                if (ev_no_e) b.e_bridge = false;
                if (ev_no_a) b.a_bridge = false;
                overrides.bridges = b;
            }
            const EvalOutput out =
                evaluate_run(model, corpus, store, overrides, have_overlay ? &overlay : nullptr);
            const fs::path out_dir(ev_out);
            write_file(out_dir / "metrics.json", metrics_to_json(out.metrics));
            write_file(out_dir / "predictions.jsonl", predictions_to_jsonl(out.predictions));
            std::cout << metrics_to_json(out.metrics) << "\n";
        } else if (*synth_cmd) {
            const fs::path out_dir(gs_out);
            const auto emit = [&](const char* name, std::size_t n, std::uint64_t sub) {
                SyntheticConfig sc;
                sc.n_dialogues = n;
                sc.len_min = gs_len_min;
                sc.len_max = gs_len_max;
                sc.seed = gs_seed + sub;
                sc.id_prefix = std::string("synth-") + name;
                const Corpus corpus = generate_synthetic(sc);
                BuildStats stats;
                build_samples(corpus, &stats);
                write_file(out_dir / (std::string(name) + ".json"), serialize_corpus(corpus));
                std::cout << name << ": " << corpus.dialogues.size() << " dialogues, "
                          << stats.n_samples << " samples, " << stats.n_positive << " pos / "
                          << stats.n_negative << " neg pairs\n";
            };
            emit("train", gs_train, 0);
            emit("valid", gs_valid, 1);
            emit("test", gs_test, 2);
        } else if (*knw_cmd) {
            EmotionVocab emotions;
            std::vector<Corpus> corpora;
            for (const std::string& path : gk_corpora) {
                corpora.push_back(parse_corpus(read_file(path), emotions));
            }
            std::vector<const Corpus*> refs;
            for (const Corpus& c : corpora) refs.push_back(&c);
            const Corpus merged = merge_corpora(refs);
            const KnowledgeStore store = synthesize_store(merged, gk_dim, gk_seed);
            write_file(gk_out, serialize_store(store, merged));
            std::cout << "wrote " << gk_out << " (dim " << gk_dim << ", "
                      << merged.dialogues.size() << " dialogues)\n";
        } else if (*dump_cmd) {
            CheckpointMeta meta;
            const KbcinModel model = checkpoint_from_json(read_file(da_ckpt), &meta);
            const EmotionVocab emotions = model.cfg.emotion_vocab();
            const Corpus corpus = parse_corpus(read_file(da_corpus), emotions);
            const KnowledgeStore store =
                resolve_knowledge(da_knowledge, corpus, da_kdim, da_kseed);
            EmotionOverlay overlay;
            const bool have_overlay = !da_overlay.empty();
            if (have_overlay) overlay = parse_overlay(read_file(da_overlay), emotions);
            std::ostringstream os;
            dump_attention(model, corpus, store, have_overlay ? &overlay : nullptr, os);
            write_file(da_out, os.str());
            std::cout << "wrote " << da_out << "\n";
        } else if (*stats_cmd) {
            EmotionVocab emotions;
            ParseStats ps;
            const Corpus corpus = parse_corpus(read_file(st_corpus), emotions, &ps);
            BuildStats bs;
            build_samples(corpus, &bs);
            std::size_t utterances = 0;
            for (const Dialogue& d : corpus.dialogues) utterances += d.utterances.size();
            std::cout << "dialogues: " << corpus.dialogues.size() << "\n"
                      << "utterances: " << utterances << "\n"
                      << "samples: " << bs.n_samples << "\n"
                      << "positive pairs: " << bs.n_positive << "\n"
                      << "negative pairs: " << bs.n_negative << "\n"
                      << "targets skipped (no annotated cause): " << bs.skipped_no_cause << "\n"
                      << "duplicate pairs removed: " << ps.duplicate_pairs_removed << "\n";
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
