#include <cmath>

#include "doctest.h"
#include "lrem/reward.hpp"
#include "lrem/util.hpp"

using namespace lrem;

namespace {
const TokenId k1 = Vocab::kNumSpecials;
const TokenId k2 = Vocab::kNumSpecials + 1;
const TokenId kClose = Vocab::kThinkClose;
const TokenId kEmb = Vocab::kEmb;
}  // namespace

TEST_CASE("format reward") {
    CHECK(format_reward({k1, k2, kClose, kEmb}) == 1);
    CHECK(format_reward({kClose, kEmb}) == 1);
    CHECK(format_reward({k1, k2}) == 0);
    CHECK(format_reward({k1, Vocab::kThinkOpen, k2, kClose, kEmb}) == 0);
    CHECK(format_reward({k1, kClose, k2, kEmb}) == 0);
    CHECK(format_reward({k1, kClose, kEmb, k2}) == 0);
    CHECK(format_reward({k1, kClose, kClose, kEmb}) == 0);
    CHECK(format_reward({Vocab::kPad, kClose, kEmb}) == 0);
    CHECK(format_reward({Vocab::kBos, kClose, kEmb}) == 0);
    CHECK(format_reward({kEmb}) == 0);
    CHECK(format_reward({}) == 0);
}

TEST_CASE("length reward") {
    TokenSeq sixteen(16, k1);
    sixteen.insert(sixteen.end(), {kClose, kEmb});
    TokenSeq seventeen(17, k1);
    seventeen.insert(seventeen.end(), {kClose, kEmb});
    CHECK(length_reward(sixteen, 16) == 1);
    CHECK(length_reward(seventeen, 16) == 0);
    CHECK(length_reward({kClose, kEmb}, 16) == 1);
    // no terminator: every generated token counts
    CHECK(cot_length(TokenSeq(20, k1)) == 20);
    CHECK(length_reward(TokenSeq(20, k1), 16) == 0);
    CHECK(length_reward(TokenSeq(3, k1), 16) == 1);
}

TEST_CASE("rank") {
    CHECK(rank_of({0.2, 0.9, 0.4}, 1) == 1);
    CHECK(rank_of({0.5, 0.5, 0.5, 0.5}, 2) == 1);
    CHECK(rank_of({0.90, 0.95, 0.80, 0.99}, 0) == 3);
    CHECK_THROWS_AS(rank_of({0.1}, 3), std::out_of_range);
}

TEST_CASE("rank is invariant under strictly increasing transforms") {
    Rng rng(17);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> sims(8);
        for (double& s : sims) {
            s = uniform01(rng) * 2 - 1;
        }
        const int gt = static_cast<int>(rng() % sims.size());
        std::vector<double> warped(sims.size());
        for (std::size_t i = 0; i < sims.size(); ++i) {
            warped[i] = std::exp(3.0 * sims[i]) + 5.0;
        }
        CHECK(rank_of(sims, gt) == rank_of(warped, gt));
    }
}

TEST_CASE("accuracy reward") {
    CHECK(accuracy_reward(1, 256) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(accuracy_reward(256, 256) == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(accuracy_reward(16, 256) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK_THROWS_AS(accuracy_reward(1, 1), std::invalid_argument);
    CHECK_THROWS_AS(accuracy_reward(0, 8), std::invalid_argument);
    CHECK_THROWS_AS(accuracy_reward(9, 8), std::invalid_argument);
}

TEST_CASE("accuracy reward strictly decreases in rank") {
    for (int n : {2, 5, 32, 256}) {
        double prev = accuracy_reward(1, n);
        for (int rank = 2; rank <= n; ++rank) {
            const double cur = accuracy_reward(rank, n);
            CHECK(cur < prev);
            prev = cur;
        }
    }
}

TEST_CASE("total reward") {
    RewardConfig cfg;
    CHECK(total_reward(1, 1, 1.0, cfg).total ==
          doctest::Approx(1.7).epsilon(1e-15));
    CHECK(total_reward(1, 1, 0.5, cfg).total ==
          doctest::Approx(1.2).epsilon(1e-15));
    CHECK(total_reward(0, 0, 0.0, cfg).total == 0.0);

    // monotone in each component, bounded by the weight sum
    Rng rng(23);
    for (int trial = 0; trial < 50; ++trial) {
        const int f = static_cast<int>(rng() % 2);
        const int l = static_cast<int>(rng() % 2);
        const double a = uniform01(rng);
        const auto b = total_reward(f, l, a, cfg);
        CHECK(b.total >= 0.0);
        CHECK(b.total <= cfg.beta1 + cfg.beta2 + cfg.beta3 + 1e-12);
        CHECK(total_reward(1, l, a, cfg).total >= b.total);
        CHECK(total_reward(f, 1, a, cfg).total >= b.total);
        CHECK(total_reward(f, l, std::min(1.0, a + 0.1), cfg).total >=
              b.total);
    }
}

TEST_CASE("reward config validation") {
    RewardConfig cfg;
    cfg.beta2 = -0.1;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = RewardConfig{};
    cfg.length_limit = 0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}
