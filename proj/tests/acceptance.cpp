// Acceptance suite: numeric contracts first, then the full desk experiment
// (data construction, two-stage training, indexing, four-mode evaluation),
// run twice to confirm bit-exact reproducibility. One line per criterion.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <sstream>

#include "lrem/config.hpp"
#include "lrem/pipeline.hpp"
#include "lrem/retrieval.hpp"
#include "lrem/trainer.hpp"
#include "lrem/verify.hpp"
#include "lrem/world.hpp"

using namespace lrem;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void criterion(const std::string& name, bool ok, const std::string& detail) {
    std::printf("[%s] %s%s%s\n", ok ? "PASS" : "FAIL", name.c_str(),
                detail.empty() ? "" : " -- ", detail.c_str());
    if (!ok) {
        ++g_failures;
    }
}

std::string fmt(double v) {
    std::ostringstream ss;
    ss.precision(4);
    ss << v;
    return ss.str();
}

// ----------------------------------------------------------------------
// criteria 1-5: delegated to the shared verification suites

void run_verify_criteria() {
    auto run = [](const std::string& name, VerifyResult (*fn)()) {
        const auto res = fn();
        std::string detail;
        for (const auto& line : res.lines) {
            if (line.rfind("FAIL", 0) == 0) {
                detail += line + "; ";
            }
        }
        criterion(name, res.ok, detail);
    };
    run("1 gradient contract (finite differences, micro config)",
        verify_gradcheck);
    run("2 reward exactness", verify_reward_exactness);
    run("3 advantage normalization", verify_advantage_normalization);
    run("4 retrieval oracle", verify_retrieval);
    run("5 closed-form losses", verify_losses);
}

// ----------------------------------------------------------------------
// criterion 6: pipeline soundness at desk scale

void run_pipeline_criterion() {
    const World world = gen_world(7);
    const auto corpus = gen_corpus(world, 2000);
    const auto queries = gen_queries(world, corpus, 150, derive_seed(7, 1));
    PipelineConfig pcfg;
    pcfg.split_seed = derive_seed(7, 3);
    const auto res = build_triplets(world, corpus, queries, pcfg);

    std::unordered_map<std::int64_t, const ItemDoc*> by_id;
    for (const auto& d : corpus) {
        by_id[d.id] = &d;
    }
    std::unordered_map<std::int64_t, const QuerySpec*> by_qid;
    for (const auto& q : queries) {
        by_qid[q.id] = &q;
    }
    bool sound = !res.triplets.empty();
    for (const auto& t : res.triplets) {
        sound = sound &&
                relevance_judge(world, *by_qid.at(t.query_id), *by_id.at(t.item_id));
    }
    for (const auto& p : res.rl_pairs) {
        sound = sound &&
                relevance_judge(world, *by_qid.at(p.query_id), *by_id.at(p.item_id));
    }

    // Every discarded query must have an empty difference set; recompute the
    // sets independently of the builder's bookkeeping.
    std::unordered_set<std::int64_t> emitted;
    for (const auto& t : res.triplets) {
        emitted.insert(t.query_id);
    }
    for (const auto& p : res.rl_pairs) {
        emitted.insert(p.query_id);
    }
    bool discards_ok = res.stats.discarded_no_relevant == 0;
    for (const auto& q : queries) {
        if (emitted.count(q.id)) {
            continue;
        }
        Rng rng(derive_seed(world.seed, 0x07, static_cast<std::uint64_t>(q.id)));
        const auto cot = cot_oracle(world, q, 0.0, rng, pcfg.cot_limit);
        auto augmented = q.tokens;
        augmented.insert(augmented.end(), cot.begin(), cot.end());
        const auto set1 = lexical_retrieve(corpus, q.tokens, pcfg.retrieve_k);
        const auto set2 = lexical_retrieve(corpus, augmented, pcfg.retrieve_k);
        std::unordered_set<std::int64_t> in1(set1.begin(), set1.end());
        for (std::int64_t id : set2) {
            if (!in1.count(id)) {
                discards_ok = false;
            }
        }
    }

    // Post-processing rules over ten thousand noisy generations.
    std::unordered_set<std::string> prohibited(world.prohibited.begin(),
                                               world.prohibited.end());
    int violations = 0;
    Rng rng(912);
    for (int i = 0; i < 10000; ++i) {
        const auto& q = queries[static_cast<std::size_t>(i) % queries.size()];
        const auto cot = cot_oracle(world, q, 0.3, rng, pcfg.cot_limit);
        std::unordered_set<std::string> seen;
        std::unordered_set<std::string> qtok(q.tokens.begin(), q.tokens.end());
        if (static_cast<int>(cot.size()) > pcfg.cot_limit) {
            ++violations;
        }
        for (const auto& tok : cot) {
            if (!seen.insert(tok).second || qtok.count(tok) ||
                prohibited.count(tok)) {
                ++violations;
            }
        }
    }
    criterion("6 pipeline soundness",
              sound && discards_ok && violations == 0,
              "emitted " + std::to_string(res.stats.emitted_queries) +
                  " queries, discarded " + std::to_string(res.stats.discarded) +
                  ", rule violations " + std::to_string(violations));
}

// ----------------------------------------------------------------------
// criteria 7-8: desk experiment

struct ExperimentOutcome {
    std::array<unsigned char, 32> cold_fp{};
    std::array<unsigned char, 32> final_fp{};
    double cold_format_rate = 0.0;
    double probe_start = 0.0;
    double probe_end = 0.0;
    EvalReport cold_lrem;
    EvalReport final_lrem, final_empty, final_random, final_query;
    double wall_seconds = 0.0;
};

std::vector<EvalQuery> to_eval_queries(const std::vector<QuerySpec>& specs) {
    std::vector<EvalQuery> out;
    for (const auto& q : specs) {
        EvalQuery e;
        e.id = q.id;
        std::string text;
        for (std::size_t i = 0; i < q.tokens.size(); ++i) {
            if (i) text += ' ';
            text += q.tokens[i];
        }
        e.query = text;
        e.category = category_name(q.category);
        e.gt_ids = q.ground_truth;
        std::sort(e.gt_ids.begin(), e.gt_ids.end());
        out.push_back(std::move(e));
    }
    return out;
}

ExperimentOutcome run_experiment(const fs::path& workdir) {
    using FloatT = float;  // 32-bit training mode
    const auto t0 = std::chrono::steady_clock::now();
    fs::create_directories(workdir);

    RunConfig run;
    run.model.float_width = 32;
    run.train.seed = 123;
    run.train.epochs_cold = 3;
    run.train.epochs_rl = 1;
    run.validate();

    const World world = gen_world(run.world_seed);
    const auto items = gen_corpus(world, run.items);
    const auto train_q =
        gen_queries(world, items, run.queries_per_cat, derive_seed(run.world_seed, 1));
    const auto eval_q =
        gen_queries(world, items, run.eval_per_cat, derive_seed(run.world_seed, 2));
    PipelineConfig pcfg;
    pcfg.retrieve_k = run.retrieve_k;
    pcfg.eta = run.noise;
    pcfg.cot_limit = run.train.reward.length_limit;
    pcfg.rl_fraction = run.rl_fraction;
    pcfg.split_seed = derive_seed(run.world_seed, 3);
    const auto data = build_triplets(world, items, train_q, pcfg);

    const Vocab vocab = build_vocab(world);
    std::vector<CorpusEntry> corpus;
    for (const auto& d : items) {
        std::string title;
        for (std::size_t i = 0; i < d.title.size(); ++i) {
            if (i) title += ' ';
            title += d.title[i];
        }
        corpus.push_back({d.id, title});
    }
    ModelConfig mcfg = run.model;
    mcfg.vocab_size = vocab.size();

    ExperimentOutcome out;
    const auto eval_queries = to_eval_queries(eval_q);
    const std::string cold_path = (workdir / "cold.ckpt").string();
    const std::string final_path = (workdir / "final.ckpt").string();

    {
        auto params = init_params<FloatT>(mcfg, run.train.seed);
        CurveWriter curve((workdir / "cold_curve.jsonl").string());
        cold_start_run(params, vocab, data.triplets, corpus, run.train, curve);
        Rng rng(run.train.seed);
        save_checkpoint(params, run.train, 0, rng, cold_path);
    }
    auto cold_ck = load_checkpoint<FloatT>(cold_path);
    out.cold_fp = cold_ck.fingerprint;

    // 7a: greedy format adherence on the evaluation queries
    {
        int well_formed = 0;
        std::vector<std::uint8_t> flags(eval_queries.size(), 0);
        parallel_for(static_cast<int>(eval_queries.size()), [&](int i) {
            const auto& q = eval_queries[static_cast<std::size_t>(i)];
            const TokenSeq prompt = render_query_input(
                vocab, encode(vocab, q.query), std::nullopt, mcfg.max_seq_len);
            const auto g = greedy_cot(cold_ck.params, prompt,
                                      2 * run.train.reward.length_limit + 2);
            flags[static_cast<std::size_t>(i)] =
                format_reward(g.new_tokens) == 1 ? 1 : 0;
        });
        for (auto f : flags) {
            well_formed += f;
        }
        out.cold_format_rate =
            static_cast<double>(well_formed) / eval_queries.size();
    }

    // RL stage continues from the cold checkpoint
    {
        CurveWriter curve((workdir / "rl_curve.jsonl").string());
        const auto stats = rl_run(cold_ck.params, vocab, data.rl_pairs, corpus,
                                  run.train, curve);
        out.probe_start = stats.probe_reward_start;
        out.probe_end = stats.probe_reward_end;
        Rng rng(run.train.seed);
        save_checkpoint(cold_ck.params, run.train, stats.steps, rng,
                        final_path);
    }
    auto final_ck = load_checkpoint<FloatT>(final_path);
    out.final_fp = final_ck.fingerprint;

    // Indexes + evaluations
    auto reload_cold = load_checkpoint<FloatT>(cold_path);
    const auto cold_index =
        build_index(reload_cold.params, vocab, corpus, reload_cold.fingerprint);
    const auto final_index =
        build_index(final_ck.params, vocab, corpus, final_ck.fingerprint);

    const int l = run.train.reward.length_limit;
    out.cold_lrem =
        eval_run(reload_cold.params, vocab, cold_index.index, eval_queries,
                 QueryMode::lrem, run.eval_k, run.eval_kp, l,
                 reload_cold.fingerprint, 5);
    out.final_lrem =
        eval_run(final_ck.params, vocab, final_index.index, eval_queries,
                 QueryMode::lrem, run.eval_k, run.eval_kp, l,
                 final_ck.fingerprint, 5);
    out.final_empty =
        eval_run(final_ck.params, vocab, final_index.index, eval_queries,
                 QueryMode::empty_cot, run.eval_k, run.eval_kp, l,
                 final_ck.fingerprint, 5);
    out.final_random =
        eval_run(final_ck.params, vocab, final_index.index, eval_queries,
                 QueryMode::random_cot, run.eval_k, run.eval_kp, l,
                 final_ck.fingerprint, 5);
    out.final_query =
        eval_run(final_ck.params, vocab, final_index.index, eval_queries,
                 QueryMode::query_cot, run.eval_k, run.eval_kp, l,
                 final_ck.fingerprint, 5);

    out.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    return out;
}

bool reports_equal(const EvalReport& a, const EvalReport& b) {
    if (a.mode != b.mode || a.k != b.k || a.kp != b.kp ||
        a.lrem_fallbacks != b.lrem_fallbacks ||
        a.per_category.size() != b.per_category.size()) {
        return false;
    }
    if (a.overall.queries != b.overall.queries ||
        a.overall.hitrate != b.overall.hitrate ||
        a.overall.precision != b.overall.precision) {
        return false;
    }
    for (const auto& [name, cm] : a.per_category) {
        const auto it = b.per_category.find(name);
        if (it == b.per_category.end() || it->second.queries != cm.queries ||
            it->second.hitrate != cm.hitrate ||
            it->second.precision != cm.precision) {
            return false;
        }
    }
    return true;
}

double slice_hitrate(const EvalReport& r, std::initializer_list<const char*> cats) {
    double weighted = 0.0;
    int n = 0;
    for (const char* c : cats) {
        const auto it = r.per_category.find(c);
        if (it != r.per_category.end()) {
            weighted += it->second.hitrate * it->second.queries;
            n += it->second.queries;
        }
    }
    return n > 0 ? weighted / n : 0.0;
}

void run_experiment_criteria() {
    const fs::path base = fs::temp_directory_path() / "lrem_acceptance";
    fs::remove_all(base);
    const auto a = run_experiment(base / "run_a");
    const auto b = run_experiment(base / "run_b");

    criterion("7a format adherence after cold start >= 95%",
              a.cold_format_rate >= 0.95,
              "rate " + fmt(a.cold_format_rate));
    criterion("7b probe reward strictly improves over the rl stage",
              a.probe_end > a.probe_start,
              fmt(a.probe_start) + " -> " + fmt(a.probe_end));

    const double margin =
        slice_hitrate(a.final_lrem, {"alternative", "negative"}) -
        slice_hitrate(a.final_empty, {"alternative", "negative"});
    criterion(
        "7c generated reasoning beats empty reasoning by >= 10 points on the "
        "alternative+negative slice",
        margin >= 0.10, "margin " + fmt(margin));

    const double h_lrem = a.final_lrem.overall.hitrate;
    const double h_query = a.final_query.overall.hitrate;
    const double h_empty = a.final_empty.overall.hitrate;
    const double h_random = a.final_random.overall.hitrate;
    criterion("7d content ablation ordering (generated > query-copy >= empty "
              "> random)",
              h_lrem > h_query && h_query >= h_empty && h_empty > h_random,
              fmt(h_lrem) + " / " + fmt(h_query) + " / " + fmt(h_empty) +
                  " / " + fmt(h_random));
    criterion("7e rl stage does not hurt overall retrieval",
              a.final_lrem.overall.hitrate >= a.cold_lrem.overall.hitrate,
              fmt(a.cold_lrem.overall.hitrate) + " -> " +
                  fmt(a.final_lrem.overall.hitrate));
    criterion("7 runtime within budget",
              a.wall_seconds <= 1800.0 && b.wall_seconds <= 1800.0,
              fmt(a.wall_seconds) + " s per run");

    const bool deterministic =
        a.cold_fp == b.cold_fp && a.final_fp == b.final_fp &&
        a.cold_format_rate == b.cold_format_rate &&
        a.probe_start == b.probe_start && a.probe_end == b.probe_end &&
        reports_equal(a.cold_lrem, b.cold_lrem) &&
        reports_equal(a.final_lrem, b.final_lrem) &&
        reports_equal(a.final_empty, b.final_empty) &&
        reports_equal(a.final_random, b.final_random) &&
        reports_equal(a.final_query, b.final_query);
    criterion("8 bit-identical rerun with the same seeds", deterministic, "");
    fs::remove_all(base);
}

}  // namespace

int main() {
    run_verify_criteria();
    run_pipeline_criterion();
    run_experiment_criteria();
    if (g_failures > 0) {
        std::printf("%d criterion(s) failed\n", g_failures);
        return 1;
    }
    std::printf("all acceptance criteria passed\n");
    return 0;
}
