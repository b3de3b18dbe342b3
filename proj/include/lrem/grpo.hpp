#pragma once

// Group rollout collection, group-normalized advantages, and the clipped
// policy-gradient objective. Importance ratios are token-level with the
// rollout's shared advantage; old log-probs are the ones recorded when the
// group was sampled.

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include "lrem/net.hpp"
#include "lrem/objectives.hpp"
#include "lrem/reward.hpp"
#include "lrem/tensor.hpp"
#include "lrem/textcodec.hpp"
#include "lrem/util.hpp"

namespace lrem {

struct GrpoConfig {
    int group_size = 8;
    double clip_eps = 0.2;
    double std_floor = 1e-6;
    int inner_epochs = 1;
    double temperature = 1.0;

    void validate() const {
        if (group_size < 2) {
            throw std::invalid_argument("group size must be >= 2");
        }
        if (!(clip_eps > 0.0) || clip_eps >= 1.0) {
            throw std::invalid_argument("clip radius must be in (0, 1)");
        }
        if (std_floor < 0.0) {
            throw std::invalid_argument("std floor must be non-negative");
        }
        if (inner_epochs < 1) {
            throw std::invalid_argument("inner epochs must be >= 1");
        }
        if (!(temperature > 0.0)) {
            throw std::invalid_argument("temperature must be positive");
        }
    }
};

/// (r - mean) / population std per group; all zeros when the std is below
/// the floor.
std::vector<double> advantages(const std::vector<double>& rewards,
                               double std_floor);

struct Rollout {
    SampledCot cot;
    RewardBreakdown reward;
    double advantage = 0.0;
    bool well_formed = false;
    int rank = 0;                   // against the batch items; 0 if malformed
    std::vector<double> embedding;  // query embedding; empty if malformed
};

struct RolloutGroup {
    TokenSeq query;
    int item_index = 0;  // ground-truth column among the batch items
    std::vector<Rollout> rollouts;
};

/// Per-token clipped surrogate, negated and averaged over every token of
/// every rollout. new_logps[i] is the differentiable [1, k_i] row for rollout
/// i; old_logps and advantages are fixed data from collection time.
template <typename T>
NodePtr<T> grpo_loss(const std::vector<NodePtr<T>>& new_logps,
                     const std::vector<std::vector<double>>& old_logps,
                     const std::vector<double>& advs, double clip_eps) {
    if (new_logps.size() != old_logps.size() ||
        new_logps.size() != advs.size() || new_logps.empty()) {
        throw std::invalid_argument("grpo_loss: misaligned rollout lists");
    }
    std::vector<NodePtr<T>> terms;
    terms.reserve(new_logps.size());
    for (std::size_t i = 0; i < new_logps.size(); ++i) {
        const auto& nl = new_logps[i];
        if (nl->rows != 1 ||
            nl->cols != static_cast<int>(old_logps[i].size())) {
            throw std::invalid_argument("grpo_loss: token count mismatch");
        }
        std::vector<T> old_cast(old_logps[i].begin(), old_logps[i].end());
        auto old_node = make_const<T>(1, nl->cols, std::move(old_cast), "old_logp");
        auto ratio = exp_elem(sub(nl, old_node));
        const T a = static_cast<T>(advs[i]);
        auto unclipped = scale(ratio, a);
        auto clipped = scale(
            clamp(ratio, T(1.0 - clip_eps), T(1.0 + clip_eps)), a);
        terms.push_back(min_elem(unclipped, clipped));
    }
    return neg(mean_all(concat_cols(terms)));
}

/// Samples G CoTs for one query against a frozen parameter snapshot and fills
/// in rewards (ranked against the batch item embeddings) and advantages.
template <typename T>
RolloutGroup collect_group(ModelParams<T>& params, const Vocab& vocab,
                           const TokenSeq& query,
                           const std::vector<std::vector<double>>& item_embs,
                           int gt_index, const GrpoConfig& gcfg,
                           const RewardConfig& rcfg, std::uint64_t seed) {
    gcfg.validate();
    rcfg.validate();
    if (gt_index < 0 || gt_index >= static_cast<int>(item_embs.size())) {
        throw std::out_of_range("collect_group: gt index out of range");
    }
    const int hard_cap = 2 * rcfg.length_limit + 2;
    const TokenSeq prompt = render_query_input(vocab, query, std::nullopt,
                                               params.cfg.max_seq_len);
    RolloutGroup group;
    group.query = query;
    group.item_index = gt_index;
    group.rollouts.resize(static_cast<std::size_t>(gcfg.group_size));
    const int n_items = static_cast<int>(item_embs.size());
    for (int g = 0; g < gcfg.group_size; ++g) {
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(g)));
        Rollout& r = group.rollouts[static_cast<std::size_t>(g)];
        r.cot = sample_cot(params, prompt, gcfg.temperature, rng, hard_cap);
        const int fmt = format_reward(r.cot.new_tokens);
        const int len = length_reward(r.cot.new_tokens, rcfg.length_limit);
        double acc = 0.0;
        r.well_formed = fmt == 1;
        if (r.well_formed) {
            NoGradGuard ng;
            TokenSeq full = prompt;
            full.insert(full.end(), r.cot.new_tokens.begin(),
                        r.cot.new_tokens.end());
            auto trace = forward(params, full, {}, LogitsMode::none);
            auto emb = embed_at(trace, static_cast<int>(full.size()) - 1);
            r.embedding.assign(emb->val.begin(), emb->val.end());
            std::vector<double> sims(static_cast<std::size_t>(n_items));
            for (int j = 0; j < n_items; ++j) {
                sims[static_cast<std::size_t>(j)] =
                    cosine_sim(r.embedding, item_embs[static_cast<std::size_t>(j)]);
            }
            r.rank = rank_of(sims, gt_index);
            acc = accuracy_reward(r.rank, n_items);
        }
        r.reward = total_reward(fmt, len, acc, rcfg);
    }
    std::vector<double> rewards;
    rewards.reserve(group.rollouts.size());
    for (const auto& r : group.rollouts) {
        rewards.push_back(r.reward.total);
    }
    const auto advs = advantages(rewards, gcfg.std_floor);
    for (std::size_t i = 0; i < advs.size(); ++i) {
        group.rollouts[i].advantage = advs[i];
    }
    return group;
}

}  // namespace lrem
