#include "lrem/reward.hpp"

#include <cmath>

namespace lrem {

int format_reward(const TokenSeq& generated) {
    int n_close = 0;
    int first_close = -1;
    for (std::size_t i = 0; i < generated.size(); ++i) {
        if (generated[i] == Vocab::kThinkClose) {
            ++n_close;
            if (first_close < 0) {
                first_close = static_cast<int>(i);
            }
        }
    }
    if (n_close != 1) {
        return 0;
    }
    // </think> must be immediately followed by <emb> as the final token.
    if (first_close + 2 != static_cast<int>(generated.size()) ||
        generated.back() != Vocab::kEmb) {
        return 0;
    }
    for (int i = 0; i < first_close; ++i) {
        if (Vocab::is_special(generated[static_cast<std::size_t>(i)])) {
            return 0;
        }
    }
    return 1;
}

int cot_length(const TokenSeq& generated) {
    for (std::size_t i = 0; i < generated.size(); ++i) {
        if (generated[i] == Vocab::kThinkClose) {
            return static_cast<int>(i);
        }
    }
    return static_cast<int>(generated.size());
}

int length_reward(const TokenSeq& generated, int length_limit) {
    return cot_length(generated) <= length_limit ? 1 : 0;
}

int rank_of(const std::vector<double>& sims, int gt_index) {
    if (gt_index < 0 || gt_index >= static_cast<int>(sims.size())) {
        throw std::out_of_range("rank_of: ground-truth index out of range");
    }
    const double gt = sims[static_cast<std::size_t>(gt_index)];
    int rank = 1;
    for (std::size_t j = 0; j < sims.size(); ++j) {
        if (static_cast<int>(j) != gt_index && sims[j] > gt) {
            ++rank;
        }
    }
    return rank;
}

double accuracy_reward(int rank, int n) {
    if (n < 2) {
        throw std::invalid_argument("accuracy_reward: batch size must be >= 2");
    }
    if (rank < 1 || rank > n) {
        throw std::invalid_argument("accuracy_reward: rank out of range");
    }
    return 1.0 - std::log(static_cast<double>(rank)) /
                     std::log(static_cast<double>(n));
}

RewardBreakdown total_reward(int format, int length, double accuracy,
                             const RewardConfig& cfg) {
    RewardBreakdown b;
    b.format = format;
    b.length = length;
    b.accuracy = accuracy;
    b.total = cfg.beta1 * format + cfg.beta2 * length + cfg.beta3 * accuracy;
    return b;
}

}  // namespace lrem
