#include "lrem/verify.hpp"

#include <chrono>
#include <cmath>
#include <sstream>

#include "lrem/grpo.hpp"
#include "lrem/net.hpp"
#include "lrem/objectives.hpp"
#include "lrem/retrieval.hpp"
#include "lrem/reward.hpp"
#include "lrem/trainer.hpp"

namespace lrem {

namespace {

Vocab micro_vocab() {
    std::vector<std::string> words;
    for (int i = 0; i < 11; ++i) {
        words.push_back("w" + std::string(i < 10 ? "0" : "") +
                        std::to_string(i));
    }
    return Vocab::build(words);  // 16 ids with the specials
}

ModelConfig micro_config() {
    ModelConfig cfg;
    cfg.n_layers = 1;
    cfg.d_model = 8;
    cfg.n_heads = 2;
    cfg.d_ff = 16;
    cfg.max_seq_len = 24;
    cfg.vocab_size = 16;
    cfg.float_width = 64;
    return cfg;
}

/// Central finite differences over every parameter entry; returns the
/// largest |analytic - fd| / max(1, |analytic|, |fd|).
template <typename F>
double max_fd_rel_error(ModelParams<double>& params, F&& closure, double h) {
    params.zero_grads();
    auto loss = closure();
    backward(loss);
    std::vector<std::vector<double>> analytic;
    params.for_each([&](const std::string&, NodePtr<double>& p) {
        analytic.push_back(p->grad);
    });
    double worst = 0.0;
    std::size_t tensor_idx = 0;
    params.for_each([&](const std::string&, NodePtr<double>& p) {
        for (std::size_t i = 0; i < p->val.size(); ++i) {
            const double saved = p->val[i];
            double plus = 0.0, minus = 0.0;
            {
                NoGradGuard ng;
                p->val[i] = saved + h;
                plus = scalar_value(closure());
                p->val[i] = saved - h;
                minus = scalar_value(closure());
                p->val[i] = saved;
            }
            const double fd = (plus - minus) / (2.0 * h);
            const double a = analytic[tensor_idx][i];
            const double rel = std::abs(a - fd) /
                               std::max({1.0, std::abs(a), std::abs(fd)});
            worst = std::max(worst, rel);
        }
        ++tensor_idx;
    });
    return worst;
}

std::string fmt_err(double v) {
    std::ostringstream ss;
    ss.precision(3);
    ss << std::scientific << v;
    return ss.str();
}

}  // namespace

VerifyResult verify_gradcheck() {
    VerifyResult res;
    const auto t0 = std::chrono::steady_clock::now();
    const Vocab vocab = micro_vocab();
    const ModelConfig cfg = micro_config();
    constexpr double kTol = 1e-5;
    constexpr double kH = 1e-5;

    // Stage-1 objective on a two-triplet batch.
    {
        auto params = init_params<double>(cfg, 11);
        std::vector<EncodedTriplet> batch(2);
        batch[0].query = encode(vocab, "w00 w01");
        batch[0].cot = encode(vocab, "w02 w03");
        batch[0].title = encode(vocab, "w04 w05");
        batch[1].query = encode(vocab, "w06");
        batch[1].cot = encode(vocab, "w07 w08 w09");
        batch[1].title = encode(vocab, "w10 w00");
        LossWeights w;
        const double err = max_fd_rel_error(
            params,
            [&]() { return cold_batch_loss(params, vocab, batch, w).total; },
            kH);
        res.check(err <= kTol,
                  "cold-start objective gradients vs central differences, "
                  "max rel err " + fmt_err(err));
    }

    // Stage-2 objective: two groups of two rollouts, one rollout per group
    // forced well-formed so both the policy and the contrastive paths carry
    // gradient.
    {
        auto params = init_params<double>(cfg, 12);
        TrainConfig tcfg;
        tcfg.grpo.group_size = 2;
        tcfg.reward.length_limit = 4;
        std::vector<RlBatchEntry> batch(2);
        batch[0].query = encode(vocab, "w00 w03");
        batch[0].title = encode(vocab, "w04 w05");
        batch[1].query = encode(vocab, "w06");
        batch[1].title = encode(vocab, "w01 w02");
        std::vector<std::vector<double>> item_embs(2);
        for (int i = 0; i < 2; ++i) {
            item_embs[static_cast<std::size_t>(i)] = extract_unit_embedding(
                params, render_item_input(vocab, batch[static_cast<std::size_t>(i)].title,
                                          cfg.max_seq_len));
        }
        std::vector<RolloutGroup> groups(2);
        for (int qi = 0; qi < 2; ++qi) {
            RolloutGroup& grp = groups[static_cast<std::size_t>(qi)];
            grp.query = batch[static_cast<std::size_t>(qi)].query;
            grp.item_index = qi;
            const TokenSeq prompt = render_query_input(vocab, grp.query,
                                                       std::nullopt,
                                                       cfg.max_seq_len);
            Rollout crafted;
            crafted.cot.new_tokens = {vocab.id_of("w02"), Vocab::kThinkClose,
                                      Vocab::kEmb};
            crafted.cot.token_logprobs =
                log_prob_of(params, prompt, crafted.cot.new_tokens);
            crafted.cot.stop_reason = StopReason::emb_emitted;
            crafted.well_formed = true;
            TokenSeq full = prompt;
            full.insert(full.end(), crafted.cot.new_tokens.begin(),
                        crafted.cot.new_tokens.end());
            crafted.embedding = extract_unit_embedding(params, full);
            std::vector<double> sims(2);
            for (int j = 0; j < 2; ++j) {
                sims[static_cast<std::size_t>(j)] = cosine_sim(
                    crafted.embedding, item_embs[static_cast<std::size_t>(j)]);
            }
            crafted.rank = rank_of(sims, qi);
            crafted.reward = total_reward(
                1, 1, accuracy_reward(crafted.rank, 2), tcfg.reward);

            Rng rng(derive_seed(99, static_cast<std::uint64_t>(qi)));
            Rollout sampled;
            sampled.cot = sample_cot(params, prompt, 1.0, rng,
                                     2 * tcfg.reward.length_limit + 2);
            const int fmt = format_reward(sampled.cot.new_tokens);
            sampled.well_formed = fmt == 1;
            double acc = 0.0;
            if (sampled.well_formed) {
                TokenSeq sf = prompt;
                sf.insert(sf.end(), sampled.cot.new_tokens.begin(),
                          sampled.cot.new_tokens.end());
                sampled.embedding = extract_unit_embedding(params, sf);
                std::vector<double> ssims(2);
                for (int j = 0; j < 2; ++j) {
                    ssims[static_cast<std::size_t>(j)] = cosine_sim(
                        sampled.embedding,
                        item_embs[static_cast<std::size_t>(j)]);
                }
                sampled.rank = rank_of(ssims, qi);
                acc = accuracy_reward(sampled.rank, 2);
            }
            sampled.reward = total_reward(
                fmt, length_reward(sampled.cot.new_tokens, tcfg.reward.length_limit),
                acc, tcfg.reward);
            grp.rollouts = {crafted, sampled};
            const auto advs = advantages(
                {crafted.reward.total, sampled.reward.total},
                tcfg.grpo.std_floor);
            grp.rollouts[0].advantage = advs[0];
            grp.rollouts[1].advantage = advs[1];
        }
        const double err = max_fd_rel_error(
            params,
            [&]() {
                return rl_batch_loss(params, vocab, batch, groups, tcfg).total;
            },
            kH);
        res.check(err <= kTol,
                  "rl objective gradients vs central differences, max rel err " +
                      fmt_err(err));
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    res.check(secs < 60.0, "gradcheck runtime " +
                               std::to_string(secs).substr(0, 5) + " s < 60 s");
    return res;
}

VerifyResult verify_reward_exactness() {
    VerifyResult res;
    constexpr double kTol = 1e-12;
    res.check(std::abs(accuracy_reward(1, 256) - 1.0) <= kTol,
              "accuracy reward at rank 1 of 256 = 1");
    res.check(std::abs(accuracy_reward(256, 256) - 0.0) <= kTol,
              "accuracy reward at rank 256 of 256 = 0");
    res.check(std::abs(accuracy_reward(16, 256) - 0.5) <= kTol,
              "accuracy reward at rank 16 of 256 = 0.5");
    RewardConfig rc;
    res.check(std::abs(total_reward(1, 1, 1.0, rc).total - 1.7) <= kTol,
              "total reward (1, 1, 1) = 1.7");
    res.check(std::abs(total_reward(1, 1, 0.5, rc).total - 1.2) <= kTol,
              "total reward (1, 1, 0.5) = 1.2");

    const TokenId k1 = Vocab::kNumSpecials;      // arbitrary surface ids
    const TokenId k2 = Vocab::kNumSpecials + 1;
    res.check(format_reward({k1, k2, Vocab::kThinkClose, Vocab::kEmb}) == 1,
              "well-formed continuation accepted");
    res.check(format_reward({k1, k2}) == 0, "missing terminator rejected");
    res.check(format_reward({k1, Vocab::kThinkOpen, k2, Vocab::kThinkClose,
                             Vocab::kEmb}) == 0,
              "nested control token rejected");
    TokenSeq sixteen(16, k1), seventeen(17, k1);
    sixteen.push_back(Vocab::kThinkClose);
    sixteen.push_back(Vocab::kEmb);
    seventeen.push_back(Vocab::kThinkClose);
    seventeen.push_back(Vocab::kEmb);
    res.check(length_reward(sixteen, 16) == 1, "16 tokens within limit 16");
    res.check(length_reward(seventeen, 16) == 0, "17 tokens beyond limit 16");
    res.check(length_reward({Vocab::kThinkClose, Vocab::kEmb}, 16) == 1,
              "empty reasoning span within limit");

    res.check(rank_of({0.90, 0.95, 0.80, 0.99}, 0) == 3,
              "two strictly larger similarities give rank 3");
    res.check(rank_of({0.5, 0.5, 0.5}, 1) == 1, "full tie keeps rank 1");
    return res;
}

VerifyResult verify_advantage_normalization() {
    VerifyResult res;
    Rng rng(424242);
    bool norm_ok = true, degenerate_ok = true;
    for (int trial = 0; trial < 1000; ++trial) {
        std::vector<double> rewards(8);
        for (double& r : rewards) {
            r = uniform01(rng) * 1.7;
        }
        const auto a = advantages(rewards, 1e-6);
        double mean = 0.0, var = 0.0;
        for (double x : a) {
            mean += x;
        }
        mean /= 8.0;
        for (double x : a) {
            var += (x - mean) * (x - mean);
        }
        var /= 8.0;
        double rstd = 0.0, rmean = 0.0;
        for (double r : rewards) {
            rmean += r;
        }
        rmean /= 8.0;
        for (double r : rewards) {
            rstd += (r - rmean) * (r - rmean);
        }
        rstd = std::sqrt(rstd / 8.0);
        if (rstd >= 1e-6) {
            norm_ok = norm_ok && std::abs(mean) <= 1e-9 &&
                      std::abs(std::sqrt(var) - 1.0) <= 1e-9;
        }
    }
    const auto flat = advantages({0.3, 0.3, 0.3, 0.3, 0.3, 0.3, 0.3, 0.3}, 1e-6);
    for (double x : flat) {
        degenerate_ok = degenerate_ok && x == 0.0;
    }
    res.check(norm_ok,
              "1000 random groups: advantage mean 0 and population std 1 "
              "within 1e-9");
    res.check(degenerate_ok, "degenerate group yields exactly zero advantages");
    return res;
}

VerifyResult verify_rewards() {
    VerifyResult res = verify_reward_exactness();
    VerifyResult adv = verify_advantage_normalization();
    res.ok = res.ok && adv.ok;
    res.lines.insert(res.lines.end(), adv.lines.begin(), adv.lines.end());
    return res;
}

VerifyResult verify_retrieval() {
    VerifyResult res;
    Rng rng(777);
    const int n = 2000, dim = 16, n_queries = 1000;
    EmbIndex index;
    index.dim = dim;
    index.ids.resize(static_cast<std::size_t>(n));
    index.vecs.resize(static_cast<std::size_t>(n) * dim);
    std::normal_distribution<double> nd(0.0, 1.0);
    for (int i = 0; i < n; ++i) {
        index.ids[static_cast<std::size_t>(i)] = i;
        double norm = 0.0;
        for (int j = 0; j < dim; ++j) {
            const double v = nd(rng);
            index.vecs[static_cast<std::size_t>(i) * dim + j] = v;
            norm += v * v;
        }
        norm = std::sqrt(norm);
        for (int j = 0; j < dim; ++j) {
            index.vecs[static_cast<std::size_t>(i) * dim + j] /= norm;
        }
    }
    // Duplicate a strip of vectors so score ties actually occur.
    for (int i = 0; i < 50; ++i) {
        for (int j = 0; j < dim; ++j) {
            index.vecs[static_cast<std::size_t>(n - 1 - i) * dim + j] =
                index.vecs[static_cast<std::size_t>(i) * dim + j];
        }
    }
    bool all_ok = true;
    for (int q = 0; q < n_queries && all_ok; ++q) {
        std::vector<double> query(dim);
        for (double& v : query) {
            v = nd(rng);
        }
        const int k = 1 + static_cast<int>(rng() % 64);
        const auto fast = topk(index, query, k);
        // Brute force: score everything, full sort, take the prefix.
        std::vector<std::pair<double, std::int64_t>> scored(
            static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            double dot = 0.0;
            for (int j = 0; j < dim; ++j) {
                dot += index.vecs[static_cast<std::size_t>(i) * dim + j] *
                       query[static_cast<std::size_t>(j)];
            }
            scored[static_cast<std::size_t>(i)] = {
                dot, index.ids[static_cast<std::size_t>(i)]};
        }
        std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
            if (a.first != b.first) {
                return a.first > b.first;
            }
            return a.second < b.second;
        });
        if (fast.size() != static_cast<std::size_t>(k)) {
            all_ok = false;
            break;
        }
        for (int i = 0; i < k; ++i) {
            if (fast[static_cast<std::size_t>(i)].first !=
                    scored[static_cast<std::size_t>(i)].second ||
                fast[static_cast<std::size_t>(i)].second !=
                    scored[static_cast<std::size_t>(i)].first) {
                all_ok = false;
                break;
            }
        }
    }
    res.check(all_ok,
              "top-k equals the brute-force full-sort oracle on 1000 queries "
              "over 2000 items, ids and tie order exact");
    return res;
}

VerifyResult verify_losses() {
    VerifyResult res;
    constexpr double kTol = 1e-9;
    for (int n : {2, 4, 8}) {
        std::vector<double> qv = {1.0, 2.0, 3.0};
        std::vector<double> dv = {-1.0, 0.5, 0.25};
        std::vector<double> qall, dall;
        std::vector<int> pairing;
        for (int i = 0; i < n; ++i) {
            qall.insert(qall.end(), qv.begin(), qv.end());
            dall.insert(dall.end(), dv.begin(), dv.end());
            pairing.push_back(i);
        }
        auto Q = make_const<double>(n, 3, qall);
        auto D = make_const<double>(n, 3, dall);
        const double loss =
            scalar_value(info_nce(Q, D, pairing, 0.05));
        res.check(std::abs(loss - std::log(double(n))) <= kTol,
                  "equal-similarity batch of " + std::to_string(n) +
                      " gives ln N");
    }
    {
        auto Q = make_const<double>(1, 3, {1.0, 0.0, 2.0});
        auto D = make_const<double>(1, 3, {0.5, 0.5, 0.5});
        const double loss = scalar_value(info_nce(Q, D, {0}, 0.05));
        res.check(std::abs(loss) <= kTol, "single-pair batch gives 0");
    }
    {
        const int v = 16, l = 6;
        auto logits = make_const<double>(
            l, v, std::vector<double>(static_cast<std::size_t>(l * v), 0.0));
        std::vector<int> positions = {0, 1, 2, 3, 4};
        std::vector<int> targets = {3, 1, 15, 0, 7};
        const double loss =
            scalar_value(sft_loss(logits, positions, targets));
        res.check(std::abs(loss - std::log(16.0)) <= kTol,
                  "uniform logits give ln |V| per supervised token");
    }
    return res;
}

}  // namespace lrem
