#pragma once

// Training objectives: next-token SFT loss over the reasoning span, in-batch
// InfoNCE (single query per item pair, or grouped rollouts sharing one item),
// and the weighted stage totals.

#include <cmath>
#include <stdexcept>
#include <vector>

#include "lrem/tensor.hpp"

namespace lrem {

struct LossWeights {
    double lambda1 = 0.1;  // cold start: SFT coefficient
    double lambda2 = 1.0;  // cold start: InfoNCE coefficient
    double gamma1 = 1.0;   // RL: policy-loss coefficient
    double gamma2 = 0.1;   // RL: InfoNCE coefficient
    double tau = 0.05;     // contrastive temperature

    void validate() const {
        if (!(tau > 0.0)) {
            throw std::invalid_argument("tau must be positive");
        }
        if (lambda1 < 0 || lambda2 < 0 || gamma1 < 0 || gamma2 < 0) {
            throw std::invalid_argument("loss weights must be non-negative");
        }
    }
};

/// Plain cosine similarity; throws on a zero-norm input.
double cosine_sim(const std::vector<double>& q, const std::vector<double>& d);

/// cos(q_i, d_j) for all pairs: [Nq, Nd], rows/cols L2-normalized first.
template <typename T>
NodePtr<T> cosine_matrix(const NodePtr<T>& queries, const NodePtr<T>& items) {
    return matmul_nt(l2_normalize_rows(queries), l2_normalize_rows(items));
}

/// Mean negative log-likelihood over the masked positions. `targets[k]`
/// is predicted from the logits row `positions[k]`.
template <typename T>
NodePtr<T> sft_loss(const NodePtr<T>& logits, const std::vector<int>& positions,
                    const std::vector<int>& targets) {
    if (positions.empty() || positions.size() != targets.size()) {
        throw std::invalid_argument("sft_loss: empty or misaligned mask");
    }
    auto ls = log_softmax_rows(logits);
    std::vector<std::pair<int, int>> at;
    at.reserve(positions.size());
    for (std::size_t k = 0; k < positions.size(); ++k) {
        at.emplace_back(positions[k], targets[k]);
    }
    return neg(mean_all(gather_elems(ls, std::move(at))));
}

/// InfoNCE over a cosine-similarity batch. `pairing[i]` is the positive item
/// column for query row i; the denominator runs over all item columns.
template <typename T>
NodePtr<T> info_nce(const NodePtr<T>& queries, const NodePtr<T>& items,
                    const std::vector<int>& pairing, double tau) {
    if (!(tau > 0.0)) {
        throw std::invalid_argument("info_nce: tau must be positive");
    }
    if (static_cast<int>(pairing.size()) != queries->rows) {
        throw std::invalid_argument("info_nce: pairing size mismatch");
    }
    for (int p : pairing) {
        if (p < 0 || p >= items->rows) {
            throw std::invalid_argument("info_nce: pairing index out of range");
        }
    }
    auto sims = scale(cosine_matrix(queries, items), T(1.0 / tau));
    auto ls = log_softmax_rows(sims);
    std::vector<std::pair<int, int>> at;
    at.reserve(pairing.size());
    for (std::size_t i = 0; i < pairing.size(); ++i) {
        at.emplace_back(static_cast<int>(i), pairing[i]);
    }
    return neg(mean_all(gather_elems(ls, std::move(at))));
}

/// Grouped form: G rollout embeddings per query, all paired with that
/// query's item; flattens to the same contrastive objective.
template <typename T>
NodePtr<T> rl_info_nce(const std::vector<std::vector<NodePtr<T>>>& groups,
                       const NodePtr<T>& items, double tau) {
    std::vector<NodePtr<T>> rows;
    std::vector<int> pairing;
    for (std::size_t i = 0; i < groups.size(); ++i) {
        for (const auto& q : groups[i]) {
            rows.push_back(q);
            pairing.push_back(static_cast<int>(i));
        }
    }
    if (rows.empty()) {
        throw std::invalid_argument("rl_info_nce: no query embeddings");
    }
    return info_nce(stack_rows(rows), items, pairing, tau);
}

template <typename T>
NodePtr<T> cold_total(const NodePtr<T>& sft, const NodePtr<T>& nce,
                      const LossWeights& w) {
    return add(scale(sft, T(w.lambda1)), scale(nce, T(w.lambda2)));
}

template <typename T>
NodePtr<T> rl_total(const NodePtr<T>& grpo, const NodePtr<T>& nce,
                    const LossWeights& w) {
    return add(scale(grpo, T(w.gamma1)), scale(nce, T(w.gamma2)));
}

}  // namespace lrem
