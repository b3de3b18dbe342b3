#include <algorithm>
#include <filesystem>
#include <unordered_map>
#include <unordered_set>

#include "doctest.h"
#include "lrem/pipeline.hpp"
#include "lrem/util.hpp"

using namespace lrem;
namespace fs = std::filesystem;

namespace {

QuerySpec find_query(const std::vector<QuerySpec>& queries, QueryCategory c) {
    for (const auto& q : queries) {
        if (q.category == c) {
            return q;
        }
    }
    throw std::runtime_error("category missing");
}

}  // namespace

TEST_CASE("oracle emits exactly the bridging keywords without noise") {
    const World w = gen_world(7);
    const auto corpus = gen_corpus(w, 800);
    const auto queries = gen_queries(w, corpus, 6, 2);
    Rng rng(1);

    const auto alt = find_query(queries, QueryCategory::alternative);
    const auto cot = cot_oracle(w, alt, 0.0, rng);
    // peer brands of the queried brand, in group order, brand itself omitted
    std::vector<std::string> expected;
    for (int b :
         w.peer_groups[static_cast<std::size_t>(w.brand_group[static_cast<std::size_t>(alt.brand)])]) {
        if (b != alt.brand) {
            expected.push_back(w.brands[static_cast<std::size_t>(b)]);
        }
    }
    CHECK(cot == expected);
    CHECK(cot == cot_oracle(w, alt, 0.0, rng));  // order-stable

    const auto neg = find_query(queries, QueryCategory::negative);
    const auto neg_cot = cot_oracle(w, neg, 0.0, rng);
    // category token overlaps the query text, so it is dropped; the excluded
    // attribute never appears
    for (const auto& tok : neg_cot) {
        CHECK(tok != w.categories[static_cast<std::size_t>(neg.cat)]);
        CHECK(tok != w.attr_token({neg.cat, neg.attr_slot}));
    }
    CHECK(neg_cot.size() ==
          w.category_attrs[static_cast<std::size_t>(neg.cat)].size() - 1);
}

TEST_CASE("oracle post-processing rules hold under heavy noise") {
    const World w = gen_world(9);
    const auto corpus = gen_corpus(w, 800);
    const auto queries = gen_queries(w, corpus, 10, 4);
    std::unordered_set<std::string> prohibited(w.prohibited.begin(),
                                               w.prohibited.end());
    Rng rng(55);
    int noise_kept = 0;
    for (int trial = 0; trial < 400; ++trial) {
        const auto& q = queries[trial % queries.size()];
        const auto cot = cot_oracle(w, q, 0.6, rng, 16);
        CHECK(cot.size() <= 16);
        std::unordered_set<std::string> seen;
        std::unordered_set<std::string> qtok(q.tokens.begin(), q.tokens.end());
        for (const auto& tok : cot) {
            CHECK(seen.insert(tok).second);      // no duplicates
            CHECK(qtok.count(tok) == 0);         // no query overlap
            CHECK(prohibited.count(tok) == 0);   // no prohibited keywords
        }
        noise_kept += static_cast<int>(cot.size());
    }
    CHECK(noise_kept > 0);
}

TEST_CASE("lexical retrieval") {
    const World w = gen_world(7);
    const auto corpus = gen_corpus(w, 500);

    SUBCASE("an exact title match ranks first") {
        const auto& target = corpus[123];
        const auto ranked = lexical_retrieve(corpus, target.title, 5);
        REQUIRE_FALSE(ranked.empty());
        CHECK(ranked[0] == target.id);
    }
    SUBCASE("disjoint tokens fall back to id order") {
        const auto ranked = lexical_retrieve(corpus, {"<nosuchtoken>"}, 4);
        CHECK(ranked == std::vector<std::int64_t>{0, 1, 2, 3});
    }
    SUBCASE("matches a full-sort oracle") {
        Rng rng(3);
        const auto pool = w.surface_tokens();
        for (int trial = 0; trial < 40; ++trial) {
            std::vector<std::string> qtoks;
            const int n = 1 + static_cast<int>(rng() % 4);
            for (int i = 0; i < n; ++i) {
                qtoks.push_back(pool[rng() % pool.size()]);
            }
            const int k = 1 + static_cast<int>(rng() % 30);
            const auto fast = lexical_retrieve(corpus, qtoks, k);

            std::unordered_map<std::string, int> qc;
            for (const auto& t : qtoks) ++qc[t];
            double qn = 0;
            for (auto& [t, c] : qc) qn += double(c) * c;
            qn = std::sqrt(qn);
            std::vector<std::pair<double, std::int64_t>> scored;
            for (const auto& d : corpus) {
                std::unordered_map<std::string, int> tc;
                for (const auto& t : d.title) ++tc[t];
                double dot = 0, tn = 0;
                for (auto& [t, c] : tc) {
                    tn += double(c) * c;
                    if (qc.count(t)) dot += double(c) * qc[t];
                }
                scored.push_back({qn > 0 ? dot / (qn * std::sqrt(tn)) : 0.0,
                                  d.id});
            }
            std::sort(scored.begin(), scored.end(), [](auto& a, auto& b) {
                if (a.first != b.first) return a.first > b.first;
                return a.second < b.second;
            });
            REQUIRE(fast.size() == static_cast<std::size_t>(k));
            for (int i = 0; i < k; ++i) {
                CHECK(fast[static_cast<std::size_t>(i)] ==
                      scored[static_cast<std::size_t>(i)].second);
            }
        }
    }
}

TEST_CASE("triplet construction") {
    const World w = gen_world(7);
    const auto corpus = gen_corpus(w, 1000);
    const auto queries = gen_queries(w, corpus, 25, 11);
    PipelineConfig cfg;
    cfg.split_seed = 17;
    const auto res = build_triplets(w, corpus, queries, cfg);

    std::unordered_map<std::int64_t, const ItemDoc*> by_id;
    for (const auto& d : corpus) {
        by_id[d.id] = &d;
    }
    std::unordered_map<std::int64_t, const QuerySpec*> by_qid;
    for (const auto& q : queries) {
        by_qid[q.id] = &q;
    }

    SUBCASE("soundness: emitted items pass the judge") {
        CHECK_FALSE(res.triplets.empty());
        for (const auto& t : res.triplets) {
            CHECK(relevance_judge(w, *by_qid.at(t.query_id),
                                  *by_id.at(t.item_id)));
        }
        for (const auto& p : res.rl_pairs) {
            CHECK(relevance_judge(w, *by_qid.at(p.query_id),
                                  *by_id.at(p.item_id)));
        }
    }
    SUBCASE("discarded queries have an empty difference set at zero noise") {
        CHECK(res.stats.discarded_no_relevant == 0);
        CHECK(res.stats.discarded == res.stats.discarded_empty_diff);
        CHECK(res.stats.emitted_queries + res.stats.discarded ==
              static_cast<int>(queries.size()));
    }
    SUBCASE("stage split is disjoint at the query level") {
        std::unordered_set<std::int64_t> cold_q, rl_q;
        for (const auto& t : res.triplets) {
            cold_q.insert(t.query_id);
        }
        for (const auto& p : res.rl_pairs) {
            rl_q.insert(p.query_id);
        }
        for (std::int64_t id : rl_q) {
            CHECK(cold_q.count(id) == 0);
        }
    }
    SUBCASE("emitted reasoning keeps the compactness rules") {
        std::unordered_set<std::string> prohibited(w.prohibited.begin(),
                                                   w.prohibited.end());
        for (const auto& t : res.triplets) {
            std::istringstream ss(t.cot);
            std::vector<std::string> toks;
            std::string tok;
            while (ss >> tok) toks.push_back(tok);
            CHECK(toks.size() <= 16);
            std::unordered_set<std::string> seen;
            for (const auto& x : toks) {
                CHECK(seen.insert(x).second);
                CHECK(prohibited.count(x) == 0);
                CHECK(t.query.find(x) == std::string::npos);
            }
        }
    }
    SUBCASE("rerun is identical") {
        const auto res2 = build_triplets(w, corpus, queries, cfg);
        REQUIRE(res.triplets.size() == res2.triplets.size());
        for (std::size_t i = 0; i < res.triplets.size(); ++i) {
            CHECK(res.triplets[i].query == res2.triplets[i].query);
            CHECK(res.triplets[i].cot == res2.triplets[i].cot);
            CHECK(res.triplets[i].item_id == res2.triplets[i].item_id);
        }
    }
}

TEST_CASE("pipeline files round trip and are byte-stable") {
    const World w = gen_world(5);
    const auto corpus = gen_corpus(w, 300);
    const auto queries = gen_queries(w, corpus, 8, 2);
    PipelineConfig cfg;
    const auto res = build_triplets(w, corpus, queries, cfg);

    const fs::path dir = fs::temp_directory_path() / "lrem_pipeline_test";
    fs::create_directories(dir);
    write_corpus_file((dir / "corpus.jsonl").string(), corpus);
    write_triplets_file((dir / "triplets.jsonl").string(), res.triplets);
    write_rl_pairs_file((dir / "rl_pairs.jsonl").string(), res.rl_pairs);
    write_eval_queries_file((dir / "queries.jsonl").string(), queries);
    write_stats_file((dir / "stats.json").string(), res.stats);

    const auto corpus2 = read_corpus_file((dir / "corpus.jsonl").string());
    REQUIRE(corpus2.size() == corpus.size());
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        CHECK(corpus2[i].id == corpus[i].id);
    }
    const auto trip2 = read_triplets_file((dir / "triplets.jsonl").string());
    REQUIRE(trip2.size() == res.triplets.size());
    const auto pairs2 = read_rl_pairs_file((dir / "rl_pairs.jsonl").string());
    REQUIRE(pairs2.size() == res.rl_pairs.size());
    const auto eq = read_eval_queries_file((dir / "queries.jsonl").string());
    REQUIRE(eq.size() == queries.size());
    for (std::size_t i = 0; i < eq.size(); ++i) {
        auto sorted_gt = queries[i].ground_truth;
        std::sort(sorted_gt.begin(), sorted_gt.end());
        CHECK(eq[i].gt_ids == sorted_gt);
    }

    const auto h1 = sha256_file((dir / "triplets.jsonl").string());
    write_triplets_file((dir / "triplets.jsonl").string(), res.triplets);
    CHECK(sha256_file((dir / "triplets.jsonl").string()) == h1);
    fs::remove_all(dir);
}
