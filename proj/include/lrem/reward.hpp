#pragma once

// Rollout scoring: binary format and length rewards plus the rank-based
// retrieval-accuracy reward, combined as a weighted sum.

#include <stdexcept>
#include <vector>

#include "lrem/textcodec.hpp"

namespace lrem {

struct RewardConfig {
    double beta1 = 0.5;  // format
    double beta2 = 0.2;  // length
    double beta3 = 1.0;  // retrieval accuracy
    int length_limit = 16;

    void validate() const {
        if (beta1 < 0 || beta2 < 0 || beta3 < 0) {
            throw std::invalid_argument("reward weights must be non-negative");
        }
        if (length_limit < 1) {
            throw std::invalid_argument("length limit must be >= 1");
        }
    }
};

struct RewardBreakdown {
    int format = 0;
    int length = 0;
    double accuracy = 0.0;
    double total = 0.0;
};

/// 1 iff the generated continuation is exactly
///   tok* </think> <emb>
/// with no control token among the leading tokens, a single </think>, and
/// <emb> as the final token.
int format_reward(const TokenSeq& generated);

/// Tokens before the first </think>; if no terminator was produced, the whole
/// continuation counts.
int cot_length(const TokenSeq& generated);
int length_reward(const TokenSeq& generated, int length_limit);

/// 1 + |{j != gt : sims[j] > sims[gt]}|. Ties do not worsen the rank.
int rank_of(const std::vector<double>& sims, int gt_index);

/// 1 - log(rank)/log(N); requires 2 <= N and 1 <= rank <= N.
double accuracy_reward(int rank, int n);

RewardBreakdown total_reward(int format, int length, double accuracy,
                             const RewardConfig& cfg);

}  // namespace lrem
