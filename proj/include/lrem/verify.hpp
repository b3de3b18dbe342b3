#pragma once

// Numeric verification suites behind `lrem verify` and the acceptance tests:
// finite-difference gradient checks on micro configs, reward-system
// exactness, advantage normalization, the brute-force retrieval oracle, and
// closed-form loss values.

#include <string>
#include <vector>

namespace lrem {

struct VerifyResult {
    bool ok = true;
    std::vector<std::string> lines;

    void check(bool cond, const std::string& what) {
        ok = ok && cond;
        lines.push_back(std::string(cond ? "pass" : "FAIL") + "  " + what);
    }
};

VerifyResult verify_gradcheck();
VerifyResult verify_reward_exactness();
VerifyResult verify_advantage_normalization();
VerifyResult verify_rewards();  // exactness + advantage normalization
VerifyResult verify_retrieval();
VerifyResult verify_losses();

}  // namespace lrem
