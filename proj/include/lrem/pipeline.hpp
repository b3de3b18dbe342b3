#pragma once

// Data construction: a rule oracle stands in for the teacher LLM (bridging
// keywords + dedup/overlap/prohibited post-processing), a token-count lexical
// retriever produces the with/without-CoT candidate sets, and the difference
// set is filtered by the exact relevance judge. Surviving queries split
// 90/10 into cold-start triplets and RL query-item pairs.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "lrem/util.hpp"
#include "lrem/world.hpp"

namespace lrem {

/// Teacher stand-in. Emits the relation's bridging keywords in table order,
/// optionally injects noise tokens (probability eta per slot), then applies
/// the post-processing rules: drop duplicates, drop tokens that appear in the
/// query, drop prohibited tokens, truncate to cot_limit.
std::vector<std::string> cot_oracle(const World& world, const QuerySpec& query,
                                    double eta, Rng& rng, int cot_limit = 16);

/// Cosine over token-count vectors; ties break by ascending item id.
std::vector<std::int64_t> lexical_retrieve(const std::vector<ItemDoc>& corpus,
                                           const std::vector<std::string>& tokens,
                                           int k);

bool relevance_judge(const World& world, const QuerySpec& query,
                     const ItemDoc& item);

struct TripletRecord {
    std::int64_t query_id = 0;
    std::string query;
    std::string cot;
    std::int64_t item_id = 0;
};

struct RlPairRecord {
    std::int64_t query_id = 0;
    std::string query;
    std::int64_t item_id = 0;
};

struct CategoryStats {
    int queries = 0;
    int discarded = 0;
    int emitted_triplets = 0;
    int rl_pairs = 0;
};

struct PipelineStats {
    int discarded = 0;
    int discarded_empty_diff = 0;
    int discarded_no_relevant = 0;
    int emitted_queries = 0;
    int emitted_triplets = 0;
    int rl_queries = 0;
    int rl_pairs = 0;
    std::map<std::string, CategoryStats> per_category;
};

struct PipelineConfig {
    int retrieve_k = 20;
    double eta = 0.0;
    int cot_limit = 16;
    double rl_fraction = 0.10;
    std::uint64_t split_seed = 1;
};

struct BuildResult {
    std::vector<TripletRecord> triplets;
    std::vector<RlPairRecord> rl_pairs;
    PipelineStats stats;
};

BuildResult build_triplets(const World& world,
                           const std::vector<ItemDoc>& corpus,
                           const std::vector<QuerySpec>& queries,
                           const PipelineConfig& cfg);

// Line-delimited JSON writers; each is byte-deterministic for fixed inputs.
void write_corpus_file(const std::string& path,
                       const std::vector<ItemDoc>& corpus);
void write_triplets_file(const std::string& path,
                         const std::vector<TripletRecord>& triplets);
void write_rl_pairs_file(const std::string& path,
                         const std::vector<RlPairRecord>& pairs);
void write_eval_queries_file(const std::string& path,
                             const std::vector<QuerySpec>& queries);
void write_stats_file(const std::string& path, const PipelineStats& stats);

struct CorpusEntry {
    std::int64_t id;
    std::string title;
};
std::vector<CorpusEntry> read_corpus_file(const std::string& path);
std::vector<TripletRecord> read_triplets_file(const std::string& path);
std::vector<RlPairRecord> read_rl_pairs_file(const std::string& path);

struct EvalQuery {
    std::int64_t id = 0;
    std::string query;
    std::string category;
    std::vector<std::int64_t> gt_ids;
};
std::vector<EvalQuery> read_eval_queries_file(const std::string& path);

}  // namespace lrem
