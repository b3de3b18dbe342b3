// Command-line surface: data generation, two-stage training, index build,
// interactive search, evaluation, and the numeric verification suites.
//
// Exit codes: 0 success, 1 validation error, 2 runtime/numeric error.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "lrem/config.hpp"
#include "lrem/grpo.hpp"
#include "lrem/net.hpp"
#include "lrem/pipeline.hpp"
#include "lrem/retrieval.hpp"
#include "lrem/trainer.hpp"
#include "lrem/verify.hpp"
#include "lrem/world.hpp"

namespace fs = std::filesystem;
using namespace lrem;

namespace {

struct GenDataArgs {
    std::uint64_t seed = 7;
    int items = 2000;
    int queries_per_cat = 150;
    int eval_per_cat = 25;
    double noise = 0.0;
    int topk = 20;
    int cot_limit = 16;
    double rl_fraction = 0.10;
    std::string out;
};

int cmd_gen_data(const GenDataArgs& a) {
    fs::create_directories(a.out);
    const World world = gen_world(a.seed);
    const auto corpus = gen_corpus(world, a.items);
    const auto train_queries =
        gen_queries(world, corpus, a.queries_per_cat, derive_seed(a.seed, 1));
    const auto eval_queries =
        gen_queries(world, corpus, a.eval_per_cat, derive_seed(a.seed, 2));
    PipelineConfig pcfg;
    pcfg.retrieve_k = a.topk;
    pcfg.eta = a.noise;
    pcfg.cot_limit = a.cot_limit;
    pcfg.rl_fraction = a.rl_fraction;
    pcfg.split_seed = derive_seed(a.seed, 3);
    const auto result = build_triplets(world, corpus, train_queries, pcfg);
    const fs::path dir(a.out);
    write_corpus_file((dir / "corpus.jsonl").string(), corpus);
    write_triplets_file((dir / "triplets.jsonl").string(), result.triplets);
    write_rl_pairs_file((dir / "rl_pairs.jsonl").string(), result.rl_pairs);
    write_eval_queries_file((dir / "queries_eval.jsonl").string(),
                            eval_queries);
    write_stats_file((dir / "stats.json").string(), result.stats);
    build_vocab(world).save((dir / "vocab.txt").string());
    std::cout << "items " << corpus.size() << ", triplets "
              << result.triplets.size() << ", rl pairs "
              << result.rl_pairs.size() << ", discarded "
              << result.stats.discarded << "\n";
    return 0;
}

RunConfig load_run_config(const std::string& path) {
    if (path.empty()) {
        RunConfig cfg;
        cfg.validate();
        return cfg;
    }
    return load_config_file(path);
}

template <typename T>
int run_train_cold(const RunConfig& run, const std::string& data,
                   const std::string& out, const std::string& curve_path) {
    const fs::path dir(data);
    const Vocab vocab = Vocab::load((dir / "vocab.txt").string());
    const auto triplets = read_triplets_file((dir / "triplets.jsonl").string());
    const auto corpus = read_corpus_file((dir / "corpus.jsonl").string());
    ModelConfig mcfg = run.model;
    mcfg.vocab_size = vocab.size();
    auto params = init_params<T>(mcfg, run.train.seed);
    CurveWriter curve(curve_path);
    const auto stats =
        cold_start_run(params, vocab, triplets, corpus, run.train, curve);
    Rng rng(run.train.seed);
    save_checkpoint(params, run.train, stats.steps, rng, out);
    const auto fp = sha256_file(out);
    std::cout << "cold start: " << stats.steps << " steps, loss "
              << stats.initial_loss << " -> " << stats.final_loss << "\n";
    std::cout << "checkpoint " << out << " fingerprint " << hex_of(fp) << "\n";
    return 0;
}

template <typename T>
int run_train_rl(const RunConfig& run, const std::string& data,
                 const std::string& ckpt_in, const std::string& out,
                 const std::string& curve_path) {
    const fs::path dir(data);
    const Vocab vocab = Vocab::load((dir / "vocab.txt").string());
    const auto pairs = read_rl_pairs_file((dir / "rl_pairs.jsonl").string());
    const auto corpus = read_corpus_file((dir / "corpus.jsonl").string());
    auto ck = load_checkpoint<T>(ckpt_in);
    TrainConfig tcfg = run.train;
    CurveWriter curve(curve_path);
    const auto stats = rl_run(ck.params, vocab, pairs, corpus, tcfg, curve);
    Rng rng(tcfg.seed);
    save_checkpoint(ck.params, tcfg, ck.step + stats.steps, rng, out);
    const auto fp = sha256_file(out);
    std::cout << "rl: " << stats.steps << " steps, probe reward "
              << stats.probe_reward_start << " -> " << stats.probe_reward_end
              << "\n";
    std::cout << "checkpoint " << out << " fingerprint " << hex_of(fp) << "\n";
    return 0;
}

template <typename T>
int run_build_index(const std::string& ckpt, const std::string& vocab_path,
                    const std::string& corpus_path, const std::string& out) {
    const Vocab vocab = Vocab::load(vocab_path);
    auto ck = load_checkpoint<T>(ckpt);
    const auto corpus = read_corpus_file(corpus_path);
    auto built = build_index(ck.params, vocab, corpus, ck.fingerprint);
    save_index(built.index, out);
    std::cout << "index " << out << ": " << built.index.size() << " items";
    if (built.skipped > 0) {
        std::cout << " (" << built.skipped << " skipped: over length)";
    }
    std::cout << "\n";
    return 0;
}

template <typename T>
int run_search(const std::string& ckpt, const std::string& vocab_path,
               const std::string& index_path, const std::string& corpus_path,
               const std::string& query, const std::string& mode_str, int k) {
    const Vocab vocab = Vocab::load(vocab_path);
    auto ck = load_checkpoint<T>(ckpt);
    const EmbIndex index = load_index(index_path);
    if (index.fingerprint != ck.fingerprint) {
        throw std::runtime_error("index fingerprint does not match checkpoint");
    }
    const auto corpus = read_corpus_file(corpus_path);
    std::unordered_map<std::int64_t, std::string> titles;
    for (const auto& e : corpus) {
        titles[e.id] = e.title;
    }
    const QueryMode mode = mode_from_name(mode_str);
    const TokenSeq q = encode(vocab, query);
    Rng rng(derive_seed(ck.train.seed, 0xeeee));
    TokenSeq generated;
    bool fell_back = false;
    const auto vec =
        embed_query(ck.params, vocab, q, mode, ck.train.reward.length_limit,
                    rng, &generated, &fell_back);
    if (mode == QueryMode::lrem) {
        TokenSeq shown(generated.begin(),
                       generated.begin() + cot_length(generated));
        std::cout << "cot: " << decode(vocab, shown)
                  << (fell_back ? "  [no <emb>, fell back to empty]" : "")
                  << "\n";
    } else {
        std::cout << "cot: (" << mode_str << " mode)\n";
    }
    for (const auto& [id, score] : topk(index, vec, k)) {
        std::printf("%6lld  %+.6f  %s\n", static_cast<long long>(id), score,
                    titles.count(id) ? titles[id].c_str() : "?");
    }
    return 0;
}

template <typename T>
int run_eval(const std::string& ckpt, const std::string& vocab_path,
             const std::string& index_path, const std::string& queries_path,
             const std::string& mode_str, int k, int kp,
             const std::string& out) {
    const Vocab vocab = Vocab::load(vocab_path);
    auto ck = load_checkpoint<T>(ckpt);
    const EmbIndex index = load_index(index_path);
    const auto queries = read_eval_queries_file(queries_path);
    const auto report =
        eval_run(ck.params, vocab, index, queries, mode_from_name(mode_str), k,
                 kp, ck.train.reward.length_limit, ck.fingerprint);
    if (!out.empty()) {
        write_file(out, report_to_json(report));
    }
    std::printf("%-12s", ("[" + report.mode + "]").c_str());
    for (const char* cat : {"qa", "alternative", "negative", "knowledge"}) {
        std::printf("  %-11s", cat);
    }
    std::printf("  %-11s\n", "overall");
    std::printf("HitRate@%-4d", report.k);
    for (const char* cat : {"qa", "alternative", "negative", "knowledge"}) {
        const auto it = report.per_category.find(cat);
        std::printf("  %-11.4f",
                    it == report.per_category.end() ? 0.0 : it->second.hitrate);
    }
    std::printf("  %-11.4f\n", report.overall.hitrate);
    std::printf("Prec@%-7d", report.kp);
    for (const char* cat : {"qa", "alternative", "negative", "knowledge"}) {
        const auto it = report.per_category.find(cat);
        std::printf("  %-11.4f", it == report.per_category.end()
                                     ? 0.0
                                     : it->second.precision);
    }
    std::printf("  %-11.4f\n", report.overall.precision);
    if (report.lrem_fallbacks > 0) {
        std::cout << "fallbacks without <emb>: " << report.lrem_fallbacks
                  << "\n";
    }
    return 0;
}

int cmd_verify(const std::string& suite) {
    struct Entry {
        const char* name;
        VerifyResult (*fn)();
    };
    const Entry all[] = {{"gradcheck", verify_gradcheck},
                         {"rewards", verify_rewards},
                         {"retrieval", verify_retrieval},
                         {"losses", verify_losses}};
    bool found = false, ok = true;
    for (const auto& e : all) {
        if (suite != "all" && suite != e.name) {
            continue;
        }
        found = true;
        std::cout << "== " << e.name << " ==\n";
        const VerifyResult res = e.fn();
        for (const auto& line : res.lines) {
            std::cout << "  " << line << "\n";
        }
        ok = ok && res.ok;
    }
    if (!found) {
        throw std::invalid_argument("unknown verify suite: " + suite);
    }
    std::cout << (ok ? "all checks passed" : "FAILURES above") << "\n";
    return ok ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"reasoning-then-embedding retrieval workbench"};
    app.require_subcommand(1);

    GenDataArgs gen;
    auto* cmd_gen = app.add_subcommand("gen-data",
                                       "generate world, corpus and datasets");
    cmd_gen->add_option("--seed", gen.seed, "world seed");
    cmd_gen->add_option("--items", gen.items, "corpus size");
    cmd_gen->add_option("--queries-per-cat", gen.queries_per_cat,
                        "training queries per category");
    cmd_gen->add_option("--eval-per-cat", gen.eval_per_cat,
                        "evaluation queries per category");
    cmd_gen->add_option("--noise", gen.noise, "teacher noise rate");
    cmd_gen->add_option("--topk", gen.topk, "pipeline retrieval depth");
    cmd_gen->add_option("--cot-limit", gen.cot_limit, "keyword list limit");
    cmd_gen->add_option("--rl-fraction", gen.rl_fraction,
                        "query share reserved for the RL stage");
    cmd_gen->add_option("--out", gen.out, "output directory")->required();

    std::string data, config_path, ckpt_in, out_path, curve_path;
    auto* cmd_cold = app.add_subcommand("train-cold", "stage-1 training");
    cmd_cold->add_option("--data", data, "data directory")->required();
    cmd_cold->add_option("--config", config_path, "run config file");
    cmd_cold->add_option("--out", out_path, "checkpoint output")->required();
    cmd_cold->add_option("--curve", curve_path, "loss curve jsonl");

    auto* cmd_rl = app.add_subcommand("train-rl", "stage-2 training");
    cmd_rl->add_option("--data", data, "data directory")->required();
    cmd_rl->add_option("--config", config_path, "run config file");
    cmd_rl->add_option("--ckpt", ckpt_in, "cold-start checkpoint")->required();
    cmd_rl->add_option("--out", out_path, "checkpoint output")->required();
    cmd_rl->add_option("--curve", curve_path, "reward curve jsonl");

    std::string vocab_path, corpus_path, index_path, query, mode = "lrem";
    int k = 10, kp = 10;
    auto* cmd_index = app.add_subcommand("build-index", "embed the corpus");
    cmd_index->add_option("--ckpt", ckpt_in, "checkpoint")->required();
    cmd_index->add_option("--vocab", vocab_path, "vocabulary file")->required();
    cmd_index->add_option("--corpus", corpus_path, "corpus jsonl")->required();
    cmd_index->add_option("--out", out_path, "index output")->required();

    auto* cmd_search = app.add_subcommand("search", "interactive retrieval");
    cmd_search->add_option("--ckpt", ckpt_in, "checkpoint")->required();
    cmd_search->add_option("--vocab", vocab_path, "vocabulary file")->required();
    cmd_search->add_option("--index", index_path, "index file")->required();
    cmd_search->add_option("--corpus", corpus_path, "corpus jsonl")->required();
    cmd_search->add_option("--query", query, "query text")->required();
    cmd_search->add_option("--mode", mode,
                           "lrem | empty_cot | random_cot | query_cot");
    cmd_search->add_option("--k", k, "results to print");

    std::string queries_path, report_path;
    auto* cmd_eval = app.add_subcommand("eval", "metric evaluation");
    cmd_eval->add_option("--ckpt", ckpt_in, "checkpoint")->required();
    cmd_eval->add_option("--vocab", vocab_path, "vocabulary file")->required();
    cmd_eval->add_option("--index", index_path, "index file")->required();
    cmd_eval->add_option("--queries", queries_path, "eval queries jsonl")
        ->required();
    cmd_eval->add_option("--mode", mode,
                         "lrem | empty_cot | random_cot | query_cot");
    cmd_eval->add_option("--k", k, "hit-rate cutoff")->capture_default_str();
    cmd_eval->add_option("--kp", kp, "precision cutoff")->capture_default_str();
    cmd_eval->add_option("--out", report_path, "report json output");

    std::string suite = "all";
    auto* cmd_ver = app.add_subcommand("verify", "numeric verification suites");
    cmd_ver->add_option("--suite", suite,
                        "gradcheck | rewards | retrieval | losses | all");

    try {
        app.parse(argc, argv);
        if (cmd_gen->parsed()) {
            return cmd_gen_data(gen);
        }
        if (cmd_cold->parsed()) {
            const RunConfig run = load_run_config(config_path);
            if (run.model.float_width == 32) {
                return run_train_cold<float>(run, data, out_path, curve_path);
            }
            return run_train_cold<double>(run, data, out_path, curve_path);
        }
        if (cmd_rl->parsed()) {
            const RunConfig run = load_run_config(config_path);
            if (checkpoint_float_width(ckpt_in) == 32) {
                return run_train_rl<float>(run, data, ckpt_in, out_path,
                                           curve_path);
            }
            return run_train_rl<double>(run, data, ckpt_in, out_path,
                                        curve_path);
        }
        if (cmd_index->parsed()) {
            if (checkpoint_float_width(ckpt_in) == 32) {
                return run_build_index<float>(ckpt_in, vocab_path, corpus_path,
                                              out_path);
            }
            return run_build_index<double>(ckpt_in, vocab_path, corpus_path,
                                           out_path);
        }
        if (cmd_search->parsed()) {
            if (checkpoint_float_width(ckpt_in) == 32) {
                return run_search<float>(ckpt_in, vocab_path, index_path,
                                         corpus_path, query, mode, k);
            }
            return run_search<double>(ckpt_in, vocab_path, index_path,
                                      corpus_path, query, mode, k);
        }
        if (cmd_eval->parsed()) {
            if (checkpoint_float_width(ckpt_in) == 32) {
                return run_eval<float>(ckpt_in, vocab_path, index_path,
                                       queries_path, mode, k, kp, report_path);
            }
            return run_eval<double>(ckpt_in, vocab_path, index_path,
                                    queries_path, mode, k, kp, report_path);
        }
        if (cmd_ver->parsed()) {
            return cmd_verify(suite);
        }
        return 1;
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
