#include <cmath>

#include "doctest.h"
#include "lrem/grpo.hpp"
#include "lrem/trainer.hpp"

using namespace lrem;

TEST_CASE("advantage normalization") {
    const auto a = advantages({2.0, 0.0}, 1e-6);
    CHECK(a[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(a[1] == doctest::Approx(-1.0).epsilon(1e-12));

    const auto flat = advantages({0.7, 0.7, 0.7, 0.7}, 1e-6);
    for (double x : flat) {
        CHECK(x == 0.0);
    }

    const auto b = advantages({1.0, 2.0, 3.0}, 1e-6);
    CHECK(b[0] == doctest::Approx(-1.2247449).epsilon(1e-6));
    CHECK(b[1] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(b[2] == doctest::Approx(1.2247449).epsilon(1e-6));

    CHECK_THROWS_AS(advantages({1.0}, 1e-6), std::invalid_argument);
}

TEST_CASE("clipped policy objective values") {
    SUBCASE("ratio one everywhere with centered advantages is zero") {
        auto lp = make_const<double>(1, 2, {-1.5, -0.25});
        const std::vector<std::vector<double>> old = {{-1.5, -0.25},
                                                      {-0.9, -2.0}};
        auto lp2 = make_const<double>(1, 2, {-0.9, -2.0});
        const double loss =
            scalar_value(grpo_loss<double>({lp, lp2}, old, {1.0, -1.0}, 0.2));
        CHECK(loss == doctest::Approx(0.0).epsilon(1e-12));
    }
    SUBCASE("upper clip engages") {
        auto lp = make_const<double>(1, 1, {std::log(2.0)});
        const double loss =
            scalar_value(grpo_loss<double>({lp}, {{0.0}}, {1.0}, 0.2));
        CHECK(loss == doctest::Approx(-1.2).epsilon(1e-12));
    }
    SUBCASE("negative advantage takes the smaller branch") {
        auto lp = make_const<double>(1, 1, {std::log(0.5)});
        const double loss =
            scalar_value(grpo_loss<double>({lp}, {{0.0}}, {-1.0}, 0.2));
        CHECK(loss == doctest::Approx(0.8).epsilon(1e-12));
    }
    SUBCASE("misaligned lengths are rejected") {
        auto lp = make_const<double>(1, 2, {0.0, 0.0});
        CHECK_THROWS_AS(grpo_loss<double>({lp}, {{0.0}}, {1.0}, 0.2),
                        std::invalid_argument);
    }
}

TEST_CASE("zero-advantage rollouts contribute no gradient") {
    auto p = make_param<double>(1, 2, "logits");
    p->val = {-0.7, -1.1};
    auto r0 = slice_cols(p, 0, 1);
    auto r1 = slice_cols(p, 1, 1);
    auto loss = grpo_loss<double>({r0, r1}, {{-0.8}, {-1.0}}, {0.0, 1.4}, 0.2);
    p->zero_grad();
    backward(loss);
    CHECK(p->grad[0] == 0.0);
    CHECK(p->grad[1] != 0.0);
}

namespace {

ModelConfig tiny_config() {
    ModelConfig cfg;
    cfg.n_layers = 1;
    cfg.d_model = 8;
    cfg.n_heads = 2;
    cfg.d_ff = 16;
    cfg.max_seq_len = 24;
    cfg.vocab_size = 16;
    return cfg;
}

}  // namespace

TEST_CASE("with unit ratios the policy gradient matches the plain form") {
    // When every importance ratio is 1 and all rollouts share a token count,
    // the clipped objective has the same gradient as
    //   -mean_i( A_i * mean_t logp_it ).
    auto params = init_params<double>(tiny_config(), 5);
    const TokenSeq prompt = {Vocab::kBos, 6, Vocab::kThinkOpen};
    const std::vector<TokenSeq> gens = {{7, Vocab::kThinkClose, Vocab::kEmb},
                                        {9, Vocab::kThinkClose, Vocab::kEmb}};
    const std::vector<double> advs = {1.0, -1.0};
    std::vector<std::vector<double>> old;
    for (const auto& g : gens) {
        old.push_back(log_prob_of(params, prompt, g));
    }

    params.zero_grads();
    {
        std::vector<NodePtr<double>> rows;
        for (const auto& g : gens) {
            rows.push_back(log_prob_graph(params, prompt, g));
        }
        backward(grpo_loss(rows, old, advs, 0.2));
    }
    std::vector<std::vector<double>> clipped_grads;
    params.for_each([&](const std::string&, NodePtr<double>& p) {
        clipped_grads.push_back(p->grad);
    });

    params.zero_grads();
    {
        NodePtr<double> acc;
        for (std::size_t i = 0; i < gens.size(); ++i) {
            auto term = scale(mean_all(log_prob_graph(params, prompt, gens[i])),
                              advs[i]);
            acc = acc ? add(acc, term) : term;
        }
        backward(scale(acc, -1.0 / static_cast<double>(gens.size())));
    }
    std::size_t ti = 0;
    params.for_each([&](const std::string&, NodePtr<double>& p) {
        const auto& expect = clipped_grads[ti++];
        for (std::size_t i = 0; i < p->grad.size(); ++i) {
            CHECK(p->grad[i] ==
                  doctest::Approx(expect[i]).epsilon(1e-9));
        }
    });
}

TEST_CASE("group collection") {
    auto params = init_params<double>(tiny_config(), 6);
    const Vocab vocab = Vocab::build({"q0", "q1", "t0", "t1", "t2", "t3", "t4",
                                      "t5", "t6", "t7", "t8"});
    REQUIRE(vocab.size() == 16);
    std::vector<std::vector<double>> item_embs;
    for (const char* title : {"t0 t1", "t2 t3"}) {
        item_embs.push_back(extract_unit_embedding(
            params,
            render_item_input(vocab, encode(vocab, title), 24)));
    }
    GrpoConfig gcfg;
    gcfg.group_size = 4;
    RewardConfig rcfg;
    rcfg.length_limit = 4;

    SUBCASE("same seed gives an identical group") {
        auto a = collect_group(params, vocab, encode(vocab, "q0"), item_embs,
                               0, gcfg, rcfg, 31337);
        auto b = collect_group(params, vocab, encode(vocab, "q0"), item_embs,
                               0, gcfg, rcfg, 31337);
        REQUIRE(a.rollouts.size() == b.rollouts.size());
        for (std::size_t i = 0; i < a.rollouts.size(); ++i) {
            CHECK(a.rollouts[i].cot.new_tokens == b.rollouts[i].cot.new_tokens);
            CHECK(a.rollouts[i].reward.total == b.rollouts[i].reward.total);
            CHECK(a.rollouts[i].advantage == b.rollouts[i].advantage);
        }
    }
    SUBCASE("reward structure and advantage normalization hold") {
        auto g = collect_group(params, vocab, encode(vocab, "q1"), item_embs,
                               1, gcfg, rcfg, 99);
        double mean = 0.0;
        bool any_nonzero = false;
        for (const auto& r : g.rollouts) {
            mean += r.advantage;
            any_nonzero = any_nonzero || r.advantage != 0.0;
            if (!r.well_formed) {
                CHECK(r.reward.accuracy == 0.0);
                CHECK(r.embedding.empty());
                CHECK(r.reward.total ==
                      doctest::Approx(rcfg.beta2 * r.reward.length)
                          .epsilon(1e-12));
            } else {
                CHECK(r.rank >= 1);
                CHECK(r.reward.total >= rcfg.beta1);
            }
        }
        if (any_nonzero) {
            CHECK(std::abs(mean) <= 1e-9);
        }
    }
    SUBCASE("a unique rank-1 rollout earns the largest advantage") {
        std::vector<double> rewards;
        RewardConfig rc;
        rewards.push_back(total_reward(1, 1, accuracy_reward(1, 32), rc).total);
        for (int i = 1; i < 8; ++i) {
            rewards.push_back(
                total_reward(1, 1, accuracy_reward(32, 32), rc).total);
        }
        const auto a = advantages(rewards, 1e-6);
        for (std::size_t i = 1; i < a.size(); ++i) {
            CHECK(a[0] > a[i]);
        }
    }
}

TEST_CASE("rl step determinism and ratio identity") {
    auto params_a = init_params<double>(tiny_config(), 8);
    auto params_b = init_params<double>(tiny_config(), 8);
    const Vocab vocab = Vocab::build({"q0", "q1", "t0", "t1", "t2", "t3", "t4",
                                      "t5", "t6", "t7", "t8"});
    TrainConfig cfg;
    cfg.grpo.group_size = 2;
    cfg.reward.length_limit = 3;
    cfg.batch_rl = 2;
    std::vector<RlBatchEntry> batch = {
        {encode(vocab, "q0"), encode(vocab, "t0 t1")},
        {encode(vocab, "q1"), encode(vocab, "t2 t3")}};

    // Sampling-time log-probs must be reproduced exactly by teacher forcing
    // before any update, which makes the first-step importance ratios 1.
    std::vector<std::vector<double>> item_embs;
    for (const auto& e : batch) {
        item_embs.push_back(extract_unit_embedding(
            params_a, render_item_input(vocab, e.title, 24)));
    }
    auto group = collect_group(params_a, vocab, batch[0].query, item_embs, 0,
                               cfg.grpo, cfg.reward, 7);
    for (const auto& r : group.rollouts) {
        const TokenSeq prompt =
            render_query_input(vocab, batch[0].query, std::nullopt, 24);
        const auto fresh = log_prob_of(params_a, prompt, r.cot.new_tokens);
        REQUIRE(fresh.size() == r.cot.token_logprobs.size());
        for (std::size_t i = 0; i < fresh.size(); ++i) {
            CHECK(std::exp(fresh[i] - r.cot.token_logprobs[i]) == 1.0);
        }
    }

    const auto ma = rl_step(params_a, vocab, batch, cfg, 1e-3, 1234);
    const auto mb = rl_step(params_b, vocab, batch, cfg, 1e-3, 1234);
    CHECK(ma.loss_total == mb.loss_total);
    CHECK(ma.mean_reward == mb.mean_reward);
    bool identical = true;
    params_a.for_each([&](const std::string& name, NodePtr<double>& pa) {
        params_b.for_each([&](const std::string& nb, NodePtr<double>& pb) {
            if (nb == name) {
                identical = identical && pa->val == pb->val;
            }
        });
    });
    CHECK(identical);
}
