#include "lrem/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_map>
#include <unordered_set>

#include "json.hpp"

namespace lrem {

using nlohmann::json;

std::vector<std::string> cot_oracle(const World& world, const QuerySpec& query,
                                    double eta, Rng& rng, int cot_limit) {
    if (cot_limit < 1) {
        throw std::invalid_argument("cot limit must be >= 1");
    }
    std::vector<std::string> bridging;
    switch (query.category) {
        case QueryCategory::alternative: {
            const auto& group =
                world.peer_groups[static_cast<std::size_t>(
                    world.brand_group[static_cast<std::size_t>(query.brand)])];
            for (int b : group) {
                if (b != query.brand) {
                    bridging.push_back(
                        world.brands[static_cast<std::size_t>(b)]);
                }
            }
            break;
        }
        case QueryCategory::qa:
            for (const AttrRef& a :
                 world.activity_gear[static_cast<std::size_t>(query.activity)]) {
                bridging.push_back(world.attr_token(a));
            }
            break;
        case QueryCategory::knowledge:
            for (const AttrRef& a :
                 world.month_produce[static_cast<std::size_t>(query.month)]) {
                bridging.push_back(world.attr_token(a));
            }
            break;
        case QueryCategory::negative: {
            bridging.push_back(
                world.categories[static_cast<std::size_t>(query.cat)]);
            const auto& attrs =
                world.category_attrs[static_cast<std::size_t>(query.cat)];
            for (int s = 0; s < static_cast<int>(attrs.size()); ++s) {
                if (s != query.attr_slot) {
                    bridging.push_back(attrs[static_cast<std::size_t>(s)]);
                }
            }
            break;
        }
    }

    std::vector<std::string> noisy;
    if (eta > 0.0) {
        const std::vector<std::string> pool = world.surface_tokens();
        std::unordered_set<std::string> bridge_set(bridging.begin(),
                                                   bridging.end());
        for (const auto& tok : bridging) {
            noisy.push_back(tok);
            if (uniform01(rng) < eta) {
                for (int attempt = 0; attempt < 100; ++attempt) {
                    const auto& cand = pool[rng() % pool.size()];
                    if (!bridge_set.count(cand)) {
                        noisy.push_back(cand);
                        break;
                    }
                }
            }
        }
    } else {
        noisy = bridging;
    }

    // Post-processing: dedup, drop query overlap, drop prohibited, truncate.
    std::unordered_set<std::string> query_set(query.tokens.begin(),
                                              query.tokens.end());
    std::unordered_set<std::string> prohibited(world.prohibited.begin(),
                                               world.prohibited.end());
    std::unordered_set<std::string> seen;
    std::vector<std::string> out;
    for (const auto& tok : noisy) {
        if (seen.count(tok) || query_set.count(tok) || prohibited.count(tok)) {
            continue;
        }
        seen.insert(tok);
        out.push_back(tok);
        if (static_cast<int>(out.size()) == cot_limit) {
            break;
        }
    }
    return out;
}

std::vector<std::int64_t> lexical_retrieve(const std::vector<ItemDoc>& corpus,
                                           const std::vector<std::string>& tokens,
                                           int k) {
    if (k < 1) {
        throw std::invalid_argument("retrieval k must be >= 1");
    }
    std::unordered_map<std::string, int> qcount;
    for (const auto& t : tokens) {
        ++qcount[t];
    }
    double qnorm = 0.0;
    for (const auto& [t, c] : qcount) {
        qnorm += static_cast<double>(c) * c;
    }
    qnorm = std::sqrt(qnorm);

    std::vector<std::pair<double, std::int64_t>> scored;
    scored.reserve(corpus.size());
    std::unordered_map<std::string, int> tcount;
    for (const ItemDoc& d : corpus) {
        tcount.clear();
        for (const auto& t : d.title) {
            ++tcount[t];
        }
        double dot = 0.0, tnorm = 0.0;
        for (const auto& [t, c] : tcount) {
            tnorm += static_cast<double>(c) * c;
            auto it = qcount.find(t);
            if (it != qcount.end()) {
                dot += static_cast<double>(c) * it->second;
            }
        }
        const double denom = qnorm * std::sqrt(tnorm);
        scored.emplace_back(denom > 0.0 ? dot / denom : 0.0, d.id);
    }
    auto cmp = [](const auto& a, const auto& b) {
        if (a.first != b.first) {
            return a.first > b.first;
        }
        return a.second < b.second;
    };
    const std::size_t kk = std::min<std::size_t>(
        static_cast<std::size_t>(k), scored.size());
    std::partial_sort(scored.begin(), scored.begin() + kk, scored.end(), cmp);
    std::vector<std::int64_t> out;
    out.reserve(kk);
    for (std::size_t i = 0; i < kk; ++i) {
        out.push_back(scored[i].second);
    }
    return out;
}

bool relevance_judge(const World& world, const QuerySpec& query,
                     const ItemDoc& item) {
    return item_relevant(world, query, item);
}

BuildResult build_triplets(const World& world,
                           const std::vector<ItemDoc>& corpus,
                           const std::vector<QuerySpec>& queries,
                           const PipelineConfig& cfg) {
    if (cfg.rl_fraction < 0.0 || cfg.rl_fraction > 1.0) {
        throw std::invalid_argument("rl fraction must be in [0, 1]");
    }
    std::unordered_map<std::int64_t, const ItemDoc*> by_id;
    for (const ItemDoc& d : corpus) {
        by_id[d.id] = &d;
    }
    BuildResult res;
    for (const char* name : {"qa", "alternative", "negative", "knowledge"}) {
        res.stats.per_category[name] = CategoryStats{};
    }
    for (const QuerySpec& q : queries) {
        CategoryStats& cs = res.stats.per_category[category_name(q.category)];
        ++cs.queries;
        Rng rng(derive_seed(world.seed, 0x07,
                            static_cast<std::uint64_t>(q.id)));
        const auto cot =
            cot_oracle(world, q, cfg.eta, rng, cfg.cot_limit);
        std::vector<std::string> augmented = q.tokens;
        augmented.insert(augmented.end(), cot.begin(), cot.end());
        const auto set1 = lexical_retrieve(corpus, q.tokens, cfg.retrieve_k);
        const auto set2 = lexical_retrieve(corpus, augmented, cfg.retrieve_k);
        std::unordered_set<std::int64_t> in_set1(set1.begin(), set1.end());
        std::vector<std::int64_t> diff;
        for (std::int64_t id : set2) {
            if (!in_set1.count(id)) {
                diff.push_back(id);
            }
        }
        if (diff.empty()) {
            ++res.stats.discarded;
            ++res.stats.discarded_empty_diff;
            ++cs.discarded;
            continue;
        }
        std::vector<std::int64_t> kept;
        for (std::int64_t id : diff) {
            if (relevance_judge(world, q, *by_id.at(id))) {
                kept.push_back(id);
            }
        }
        if (kept.empty()) {
            ++res.stats.discarded;
            ++res.stats.discarded_no_relevant;
            ++cs.discarded;
            continue;
        }
        std::string query_text;
        for (std::size_t i = 0; i < q.tokens.size(); ++i) {
            if (i > 0) query_text += ' ';
            query_text += q.tokens[i];
        }
        Rng split_rng(derive_seed(cfg.split_seed, 0x5b,
                                  static_cast<std::uint64_t>(q.id)));
        const bool to_rl = uniform01(split_rng) < cfg.rl_fraction;
        ++res.stats.emitted_queries;
        if (to_rl) {
            ++res.stats.rl_queries;
            for (std::int64_t id : kept) {
                res.rl_pairs.push_back({q.id, query_text, id});
                ++res.stats.rl_pairs;
                ++cs.rl_pairs;
            }
        } else {
            std::string cot_text;
            for (std::size_t i = 0; i < cot.size(); ++i) {
                if (i > 0) cot_text += ' ';
                cot_text += cot[i];
            }
            for (std::int64_t id : kept) {
                res.triplets.push_back({q.id, query_text, cot_text, id});
                ++res.stats.emitted_triplets;
                ++cs.emitted_triplets;
            }
        }
    }
    return res;
}

namespace {

std::string join(const std::vector<std::string>& toks) {
    std::string out;
    for (std::size_t i = 0; i < toks.size(); ++i) {
        if (i > 0) out += ' ';
        out += toks[i];
    }
    return out;
}

void write_jsonl(const std::string& path, const std::vector<json>& rows) {
    std::string out;
    for (const auto& row : rows) {
        out += row.dump();
        out += '\n';
    }
    write_file(path, out);
}

std::vector<json> parse_jsonl(const std::string& path) {
    std::vector<json> rows;
    for (const auto& line : read_lines(path)) {
        if (!line.empty()) {
            rows.push_back(json::parse(line));
        }
    }
    return rows;
}

}  // namespace

void write_corpus_file(const std::string& path,
                       const std::vector<ItemDoc>& corpus) {
    std::vector<json> rows;
    rows.reserve(corpus.size());
    for (const ItemDoc& d : corpus) {
        rows.push_back({{"id", d.id}, {"title", join(d.title)}});
    }
    write_jsonl(path, rows);
}

void write_triplets_file(const std::string& path,
                         const std::vector<TripletRecord>& triplets) {
    std::vector<json> rows;
    rows.reserve(triplets.size());
    for (const auto& t : triplets) {
        rows.push_back({{"query_id", t.query_id},
                        {"query", t.query},
                        {"cot", t.cot},
                        {"item_id", t.item_id}});
    }
    write_jsonl(path, rows);
}

void write_rl_pairs_file(const std::string& path,
                         const std::vector<RlPairRecord>& pairs) {
    std::vector<json> rows;
    rows.reserve(pairs.size());
    for (const auto& p : pairs) {
        rows.push_back({{"query_id", p.query_id},
                        {"query", p.query},
                        {"item_id", p.item_id}});
    }
    write_jsonl(path, rows);
}

void write_eval_queries_file(const std::string& path,
                             const std::vector<QuerySpec>& queries) {
    std::vector<json> rows;
    rows.reserve(queries.size());
    for (const auto& q : queries) {
        json gt = json::array();
        auto ids = q.ground_truth;
        std::sort(ids.begin(), ids.end());
        for (std::int64_t id : ids) {
            gt.push_back(id);
        }
        rows.push_back({{"query_id", q.id},
                        {"query", join(q.tokens)},
                        {"category", category_name(q.category)},
                        {"gt_ids", gt}});
    }
    write_jsonl(path, rows);
}

void write_stats_file(const std::string& path, const PipelineStats& s) {
    json per_cat = json::object();
    for (const auto& [name, cs] : s.per_category) {
        per_cat[name] = {{"queries", cs.queries},
                         {"discarded", cs.discarded},
                         {"emitted_triplets", cs.emitted_triplets},
                         {"rl_pairs", cs.rl_pairs}};
    }
    const json j = {{"discarded", s.discarded},
                    {"discarded_empty_diff", s.discarded_empty_diff},
                    {"discarded_no_relevant", s.discarded_no_relevant},
                    {"emitted", s.emitted_queries},
                    {"emitted_triplets", s.emitted_triplets},
                    {"rl_queries", s.rl_queries},
                    {"rl_pairs", s.rl_pairs},
                    {"per_category", per_cat}};
    write_file(path, j.dump(2) + "\n");
}

std::vector<CorpusEntry> read_corpus_file(const std::string& path) {
    std::vector<CorpusEntry> out;
    for (const auto& row : parse_jsonl(path)) {
        out.push_back({row.at("id").get<std::int64_t>(),
                       row.at("title").get<std::string>()});
    }
    return out;
}

std::vector<TripletRecord> read_triplets_file(const std::string& path) {
    std::vector<TripletRecord> out;
    for (const auto& row : parse_jsonl(path)) {
        out.push_back({row.at("query_id").get<std::int64_t>(),
                       row.at("query").get<std::string>(),
                       row.at("cot").get<std::string>(),
                       row.at("item_id").get<std::int64_t>()});
    }
    return out;
}

std::vector<RlPairRecord> read_rl_pairs_file(const std::string& path) {
    std::vector<RlPairRecord> out;
    for (const auto& row : parse_jsonl(path)) {
        out.push_back({row.at("query_id").get<std::int64_t>(),
                       row.at("query").get<std::string>(),
                       row.at("item_id").get<std::int64_t>()});
    }
    return out;
}

std::vector<EvalQuery> read_eval_queries_file(const std::string& path) {
    std::vector<EvalQuery> out;
    for (const auto& row : parse_jsonl(path)) {
        EvalQuery q;
        q.id = row.at("query_id").get<std::int64_t>();
        q.query = row.at("query").get<std::string>();
        q.category = row.at("category").get<std::string>();
        for (const auto& id : row.at("gt_ids")) {
            q.gt_ids.push_back(id.get<std::int64_t>());
        }
        out.push_back(std::move(q));
    }
    return out;
}

}  // namespace lrem
