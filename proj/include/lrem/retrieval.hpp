#pragma once

// Exact cosine retrieval over a unit-normalized item-embedding index, the
// HitRate@K / Precision@K evaluation harness, and the forced-CoT query modes
// used for content ablations.

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include "lrem/net.hpp"
#include "lrem/pipeline.hpp"
#include "lrem/reward.hpp"
#include "lrem/textcodec.hpp"

namespace lrem {

struct EmbIndex {
    std::vector<std::int64_t> ids;  // ascending, unique
    int dim = 0;
    std::vector<double> vecs;  // row-major [n, dim], unit rows
    std::array<unsigned char, 32> fingerprint{};

    int size() const { return static_cast<int>(ids.size()); }
    const double* row(int i) const {
        return &vecs[static_cast<std::size_t>(i) * dim];
    }
};

void save_index(const EmbIndex& index, const std::string& path);
EmbIndex load_index(const std::string& path);

/// Exact full-scan top-K by dot product; ties break by ascending id. Returns
/// min(K, n) results.
std::vector<std::pair<std::int64_t, double>> topk(
    const EmbIndex& index, const std::vector<double>& query_vec, int k);

double hitrate_at_k(const std::vector<std::int64_t>& retrieved,
                    const std::vector<std::int64_t>& ground_truth);
double precision_at_k(const std::vector<std::int64_t>& retrieved,
                      const std::function<bool(std::int64_t)>& judge, int kp);

enum class QueryMode { lrem, empty_cot, random_cot, query_cot };
const char* mode_name(QueryMode m);
QueryMode mode_from_name(const std::string& name);

struct CategoryMetrics {
    int queries = 0;
    double hitrate = 0.0;
    double precision = 0.0;
};

struct EvalReport {
    std::string mode;
    int k = 0;
    int kp = 0;
    int lrem_fallbacks = 0;  // generations without <emb>, embedded as empty
    std::map<std::string, CategoryMetrics> per_category;
    CategoryMetrics overall;
};

std::string report_to_json(const EvalReport& report);
EvalReport report_from_json(const std::string& text);

struct IndexBuildResult {
    EmbIndex index;
    int skipped = 0;  // titles that exceeded the context length
};

template <typename T>
IndexBuildResult build_index(ModelParams<T>& params, const Vocab& vocab,
                             const std::vector<CorpusEntry>& corpus,
                             const std::array<unsigned char, 32>& fingerprint) {
    IndexBuildResult res;
    res.index.dim = params.cfg.d_model;
    res.index.fingerprint = fingerprint;
    const int n = static_cast<int>(corpus.size());
    std::vector<std::vector<double>> rows(static_cast<std::size_t>(n));
    std::vector<std::uint8_t> ok(static_cast<std::size_t>(n), 0);
    parallel_for(n, [&](int i) {
        const auto& entry = corpus[static_cast<std::size_t>(i)];
        TokenSeq title = encode(vocab, entry.title);
        TokenSeq input;
        try {
            input = render_item_input(vocab, title, params.cfg.max_seq_len);
        } catch (const std::invalid_argument&) {
            return;  // overflow: skipped, counted below
        }
        rows[static_cast<std::size_t>(i)] =
            extract_unit_embedding(params, input);
        ok[static_cast<std::size_t>(i)] = 1;
    });
    std::vector<std::pair<std::int64_t, int>> order;
    order.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        if (ok[static_cast<std::size_t>(i)]) {
            order.emplace_back(corpus[static_cast<std::size_t>(i)].id, i);
        } else {
            ++res.skipped;
        }
    }
    std::sort(order.begin(), order.end());
    for (std::size_t j = 1; j < order.size(); ++j) {
        if (order[j].first == order[j - 1].first) {
            throw std::invalid_argument("duplicate item id in corpus");
        }
    }
    res.index.ids.reserve(order.size());
    res.index.vecs.reserve(order.size() *
                           static_cast<std::size_t>(res.index.dim));
    for (const auto& [id, i] : order) {
        res.index.ids.push_back(id);
        const auto& r = rows[static_cast<std::size_t>(i)];
        res.index.vecs.insert(res.index.vecs.end(), r.begin(), r.end());
    }
    return res;
}

/// Renders the query input for the requested mode, embeds it, and
/// L2-normalizes. In generated mode a continuation that never reaches <emb>
/// falls back to the empty-CoT rendering (reported via *fell_back).
template <typename T>
std::vector<double> embed_query(ModelParams<T>& params, const Vocab& vocab,
                                const TokenSeq& query, QueryMode mode,
                                int cot_limit, Rng& rng,
                                TokenSeq* generated_cot = nullptr,
                                bool* fell_back = nullptr) {
    const int max_len = params.cfg.max_seq_len;
    if (fell_back) {
        *fell_back = false;
    }
    TokenSeq input;
    switch (mode) {
        case QueryMode::empty_cot:
            input = render_query_input(vocab, query, TokenSeq{}, max_len);
            break;
        case QueryMode::query_cot:
            input = render_query_input(vocab, query, query, max_len);
            break;
        case QueryMode::random_cot: {
            TokenSeq cot;
            const int n_surface = vocab.size() - Vocab::kNumSpecials;
            if (n_surface <= 0) {
                throw std::invalid_argument("vocabulary has no surface tokens");
            }
            for (int i = 0; i < cot_limit; ++i) {
                cot.push_back(static_cast<TokenId>(
                    Vocab::kNumSpecials +
                    static_cast<TokenId>(rng() %
                                         static_cast<std::uint64_t>(n_surface))));
            }
            input = render_query_input(vocab, query, cot, max_len);
            break;
        }
        case QueryMode::lrem: {
            const TokenSeq prompt =
                render_query_input(vocab, query, std::nullopt, max_len);
            const int hard_cap = 2 * cot_limit + 2;
            SampledCot g = greedy_cot(params, prompt, hard_cap);
            if (generated_cot) {
                *generated_cot = g.new_tokens;
            }
            if (g.stop_reason == StopReason::emb_emitted) {
                input = prompt;
                input.insert(input.end(), g.new_tokens.begin(),
                             g.new_tokens.end());
            } else {
                if (fell_back) {
                    *fell_back = true;
                }
                input = render_query_input(vocab, query, TokenSeq{}, max_len);
            }
            break;
        }
    }
    return extract_unit_embedding(params, input);
}

template <typename T>
EvalReport eval_run(ModelParams<T>& params, const Vocab& vocab,
                    const EmbIndex& index,
                    const std::vector<EvalQuery>& queries, QueryMode mode,
                    int k, int kp, int cot_limit,
                    const std::array<unsigned char, 32>& ckpt_fingerprint,
                    std::uint64_t seed = 0) {
    if (index.fingerprint != ckpt_fingerprint) {
        throw std::runtime_error(
            "index fingerprint does not match the checkpoint");
    }
    if (queries.empty()) {
        throw std::invalid_argument("eval_run: no queries");
    }
    EvalReport report;
    report.mode = mode_name(mode);
    report.k = k;
    report.kp = kp;
    const int n = static_cast<int>(queries.size());
    std::vector<double> hits(static_cast<std::size_t>(n));
    std::vector<double> precs(static_cast<std::size_t>(n));
    std::vector<std::uint8_t> fallbacks(static_cast<std::size_t>(n), 0);
    parallel_for(n, [&](int i) {
        const EvalQuery& q = queries[static_cast<std::size_t>(i)];
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(q.id)));
        bool fell_back = false;
        const auto vec = embed_query(params, vocab, encode(vocab, q.query),
                                     mode, cot_limit, rng, nullptr,
                                     &fell_back);
        fallbacks[static_cast<std::size_t>(i)] = fell_back ? 1 : 0;
        const auto ranked = topk(index, vec, std::max(k, kp));
        std::vector<std::int64_t> top_ids;
        top_ids.reserve(ranked.size());
        for (const auto& [id, score] : ranked) {
            top_ids.push_back(id);
        }
        std::vector<std::int64_t> at_k(
            top_ids.begin(),
            top_ids.begin() + std::min<std::size_t>(top_ids.size(),
                                                    static_cast<std::size_t>(k)));
        hits[static_cast<std::size_t>(i)] = hitrate_at_k(at_k, q.gt_ids);
        std::unordered_set<std::int64_t> gt(q.gt_ids.begin(), q.gt_ids.end());
        precs[static_cast<std::size_t>(i)] = precision_at_k(
            top_ids, [&gt](std::int64_t id) { return gt.count(id) != 0; },
            kp);
    });
    for (int i = 0; i < n; ++i) {
        const EvalQuery& q = queries[static_cast<std::size_t>(i)];
        auto& cm = report.per_category[q.category];
        ++cm.queries;
        cm.hitrate += hits[static_cast<std::size_t>(i)];
        cm.precision += precs[static_cast<std::size_t>(i)];
        ++report.overall.queries;
        report.overall.hitrate += hits[static_cast<std::size_t>(i)];
        report.overall.precision += precs[static_cast<std::size_t>(i)];
        report.lrem_fallbacks += fallbacks[static_cast<std::size_t>(i)];
    }
    for (auto& [name, cm] : report.per_category) {
        cm.hitrate /= cm.queries;
        cm.precision /= cm.queries;
    }
    report.overall.hitrate /= report.overall.queries;
    report.overall.precision /= report.overall.queries;
    return report;
}

}  // namespace lrem
