#pragma once

// Two-stage training: cold start on query-CoT-item triplets (SFT + InfoNCE),
// then GRPO with a retained InfoNCE term on query-item pairs. Plain SGD with
// linear-warmup/cosine-decay schedule; both stages share one parameter set.

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "lrem/grpo.hpp"
#include "lrem/net.hpp"
#include "lrem/objectives.hpp"
#include "lrem/pipeline.hpp"
#include "lrem/reward.hpp"
#include "lrem/tensor.hpp"
#include "lrem/textcodec.hpp"
#include "lrem/util.hpp"

namespace lrem {

struct TrainConfig {
    LossWeights weights;       // lambda1/lambda2, gamma1/gamma2, tau
    RewardConfig reward;       // beta1/beta2/beta3, length limit l
    GrpoConfig grpo;           // G, clip eps, std floor, inner epochs, temp
    int batch_cold = 32;
    int batch_rl = 32;
    double lr_cold = 3e-3;
    double lr_rl = 3e-4;
    double warmup_ratio = 0.03;
    int epochs_cold = 1;
    int epochs_rl = 1;
    std::uint64_t seed = 42;
    int max_triplets_per_query = 0;  // 0 = keep all

    void validate() const {
        weights.validate();
        reward.validate();
        grpo.validate();
        if (batch_cold < 2 || batch_rl < 2) {
            throw std::invalid_argument("batch sizes must be >= 2");
        }
        if (!(lr_cold > 0.0) || !(lr_rl > 0.0)) {
            throw std::invalid_argument("learning rates must be positive");
        }
        if (warmup_ratio < 0.0 || warmup_ratio >= 1.0) {
            throw std::invalid_argument("warmup ratio must be in [0, 1)");
        }
        if (epochs_cold < 0 || epochs_rl < 0) {
            throw std::invalid_argument("epochs must be non-negative");
        }
        if (max_triplets_per_query < 0) {
            throw std::invalid_argument("max triplets per query must be >= 0");
        }
    }
};

/// Linear warmup to the peak over ceil(warmup_ratio * total) steps, then
/// cosine decay to zero at total_steps.
double lr_schedule(int step, int total_steps, double peak_lr,
                   double warmup_ratio);

nlohmann::json train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);

// ----------------------------------------------------------------------
// checkpoints

template <typename T>
struct Checkpoint {
    ModelParams<T> params;
    TrainConfig train;
    std::int64_t step = 0;
    std::string rng_state;
    std::array<unsigned char, 32> fingerprint{};  // hash of the saved bytes
};

constexpr char kCheckpointMagic[] = "LREM1\n";

template <typename T>
void save_checkpoint(ModelParams<T>& params, const TrainConfig& train,
                     std::int64_t step, const Rng& rng,
                     const std::string& path) {
    std::ostringstream header;
    header << kCheckpointMagic;
    std::ostringstream rng_text;
    rng_text << rng;
    nlohmann::json meta = {
        {"model",
         {{"n_layers", params.cfg.n_layers},
          {"d_model", params.cfg.d_model},
          {"n_heads", params.cfg.n_heads},
          {"d_ff", params.cfg.d_ff},
          {"max_seq_len", params.cfg.max_seq_len},
          {"vocab_size", params.cfg.vocab_size},
          {"float_width", params.cfg.float_width}}},
        {"train", train_config_to_json(train)},
        {"step", step},
        {"rng", rng_text.str()}};
    header << "meta " << meta.dump() << "\n";
    const char* dtype = sizeof(T) == 4 ? "f32" : "f64";
    std::size_t offset = 0;
    std::string blob;
    params.for_each([&](const std::string& name, NodePtr<T>& p) {
        header << "tensor " << name << " " << dtype << " " << p->rows << " "
               << p->cols << " " << offset << "\n";
        const std::size_t nbytes = p->size() * sizeof(T);
        blob.append(reinterpret_cast<const char*>(p->val.data()), nbytes);
        offset += nbytes;
    });
    header << "data " << blob.size() << "\n";
    write_file(path, header.str() + blob);
}

/// Reads just enough of the header to learn the stored scalar width.
inline int checkpoint_float_width(const std::string& path) {
    const std::string bytes = read_file(path);
    const std::size_t magic_len = sizeof(kCheckpointMagic) - 1;
    if (bytes.size() < magic_len ||
        bytes.compare(0, magic_len, kCheckpointMagic) != 0) {
        throw std::runtime_error("bad checkpoint magic in " + path);
    }
    const std::size_t nl = bytes.find('\n', magic_len);
    if (nl == std::string::npos || bytes.compare(magic_len, 5, "meta ") != 0) {
        throw std::runtime_error("checkpoint missing meta line");
    }
    const auto meta = nlohmann::json::parse(
        bytes.substr(magic_len + 5, nl - magic_len - 5));
    return meta.at("model").at("float_width").get<int>();
}

template <typename T>
Checkpoint<T> load_checkpoint(const std::string& path) {
    const std::string bytes = read_file(path);
    const std::size_t magic_len = sizeof(kCheckpointMagic) - 1;
    if (bytes.size() < magic_len ||
        bytes.compare(0, magic_len, kCheckpointMagic) != 0) {
        throw std::runtime_error("bad checkpoint magic in " + path);
    }
    std::size_t pos = magic_len;
    auto next_line = [&]() {
        const std::size_t nl = bytes.find('\n', pos);
        if (nl == std::string::npos) {
            throw std::runtime_error("truncated checkpoint header");
        }
        std::string line = bytes.substr(pos, nl - pos);
        pos = nl + 1;
        return line;
    };
    std::string meta_line = next_line();
    if (meta_line.rfind("meta ", 0) != 0) {
        throw std::runtime_error("checkpoint missing meta line");
    }
    const nlohmann::json meta = nlohmann::json::parse(meta_line.substr(5));
    ModelConfig cfg;
    const auto& jm = meta.at("model");
    cfg.n_layers = jm.at("n_layers").get<int>();
    cfg.d_model = jm.at("d_model").get<int>();
    cfg.n_heads = jm.at("n_heads").get<int>();
    cfg.d_ff = jm.at("d_ff").get<int>();
    cfg.max_seq_len = jm.at("max_seq_len").get<int>();
    cfg.vocab_size = jm.at("vocab_size").get<int>();
    cfg.float_width = jm.at("float_width").get<int>();
    const int expect_width = sizeof(T) == 4 ? 32 : 64;
    if (cfg.float_width != expect_width) {
        throw std::runtime_error("checkpoint float width mismatch");
    }
    Checkpoint<T> ck;
    ck.params = init_params<T>(cfg, 0);
    ck.train = train_config_from_json(meta.at("train"));
    ck.step = meta.at("step").get<std::int64_t>();
    ck.rng_state = meta.at("rng").get<std::string>();

    struct TensorEntry {
        std::string name, dtype;
        int rows, cols;
        std::size_t offset;
    };
    std::vector<TensorEntry> entries;
    std::size_t data_bytes = 0;
    for (;;) {
        std::string line = next_line();
        std::istringstream ss(line);
        std::string kind;
        ss >> kind;
        if (kind == "tensor") {
            TensorEntry e;
            ss >> e.name >> e.dtype >> e.rows >> e.cols >> e.offset;
            if (!ss) {
                throw std::runtime_error("bad tensor line in checkpoint");
            }
            entries.push_back(e);
        } else if (kind == "data") {
            ss >> data_bytes;
            break;
        } else {
            throw std::runtime_error("unexpected checkpoint header line");
        }
    }
    if (pos + data_bytes != bytes.size()) {
        throw std::runtime_error("checkpoint data size mismatch");
    }
    const char* expect_dtype = sizeof(T) == 4 ? "f32" : "f64";
    std::size_t cursor = 0;
    ck.params.for_each([&](const std::string& name, NodePtr<T>& p) {
        if (cursor >= entries.size()) {
            throw std::runtime_error("checkpoint missing tensor " + name);
        }
        const TensorEntry& e = entries[cursor++];
        if (e.name != name || e.dtype != expect_dtype || e.rows != p->rows ||
            e.cols != p->cols) {
            throw std::runtime_error("checkpoint tensor mismatch at " + name);
        }
        const std::size_t nbytes = p->size() * sizeof(T);
        if (pos + e.offset + nbytes > bytes.size()) {
            throw std::runtime_error("checkpoint tensor out of bounds");
        }
        std::memcpy(p->val.data(), bytes.data() + pos + e.offset, nbytes);
    });
    if (cursor != entries.size()) {
        throw std::runtime_error("checkpoint has extra tensors");
    }
    ck.fingerprint = sha256(bytes.data(), bytes.size());
    return ck;
}

// ----------------------------------------------------------------------
// cold start

struct CurveWriter {
    std::ofstream out;
    explicit CurveWriter(const std::string& path) {
        if (!path.empty()) {
            out.open(path, std::ios::trunc);
            if (!out.is_open()) {
                throw std::runtime_error("cannot write curve file: " + path);
            }
        }
    }
    void write(const nlohmann::json& j) {
        if (out.is_open()) {
            out << j.dump() << "\n";
        }
    }
};

struct ColdStats {
    int steps = 0;
    double initial_loss = 0.0;
    double final_loss = 0.0;
};

struct EncodedTriplet {
    TokenSeq query;
    TokenSeq cot;
    TokenSeq title;
};

/// One cold-start batch: teacher-forced sequences on the query side, plain
/// title inputs on the item side, SFT over the reasoning span plus in-batch
/// InfoNCE between the <emb> states.
template <typename T>
struct ColdBatchGraph {
    NodePtr<T> sft;
    NodePtr<T> nce;
    NodePtr<T> total;
};

template <typename T>
ColdBatchGraph<T> cold_batch_loss(ModelParams<T>& params, const Vocab& vocab,
                                  const std::vector<EncodedTriplet>& batch,
                                  const LossWeights& weights) {
    const int n = static_cast<int>(batch.size());
    std::vector<NodePtr<T>> q_embs(static_cast<std::size_t>(n));
    std::vector<NodePtr<T>> d_embs(static_cast<std::size_t>(n));
    std::vector<NodePtr<T>> sft_terms(static_cast<std::size_t>(n));
    std::vector<int> sft_counts(static_cast<std::size_t>(n));
    parallel_for(n, [&](int i) {
        const EncodedTriplet& t = batch[static_cast<std::size_t>(i)];
        const TokenSeq q_input = render_query_input(vocab, t.query, t.cot,
                                                    params.cfg.max_seq_len);
        auto q_trace = forward(params, q_input, {}, LogitsMode::all);
        const int emb_pos = static_cast<int>(q_input.size()) - 1;
        q_embs[static_cast<std::size_t>(i)] = embed_at(q_trace, emb_pos);
        // Supervise the generated span: CoT tokens, </think>, <emb>.
        const int think_pos = static_cast<int>(t.query.size()) + 1;
        std::vector<int> positions;
        std::vector<int> targets;
        for (int p = think_pos; p < emb_pos; ++p) {
            positions.push_back(p);
            targets.push_back(q_input[static_cast<std::size_t>(p) + 1]);
        }
        sft_counts[static_cast<std::size_t>(i)] =
            static_cast<int>(positions.size());
        auto ls = log_softmax_rows(q_trace.logits);
        std::vector<std::pair<int, int>> at;
        for (std::size_t k = 0; k < positions.size(); ++k) {
            at.emplace_back(positions[k], targets[k]);
        }
        sft_terms[static_cast<std::size_t>(i)] =
            sum_all(gather_elems(ls, std::move(at)));

        const TokenSeq d_input = render_item_input(vocab, t.title,
                                                   params.cfg.max_seq_len);
        auto d_trace = forward(params, d_input, {}, LogitsMode::none);
        d_embs[static_cast<std::size_t>(i)] =
            embed_at(d_trace, static_cast<int>(d_input.size()) - 1);
    });
    int total_tokens = 0;
    for (int c : sft_counts) {
        total_tokens += c;
    }
    ColdBatchGraph<T> g;
    NodePtr<T> sft_sum = sft_terms[0];
    for (int i = 1; i < n; ++i) {
        sft_sum = add(sft_sum, sft_terms[static_cast<std::size_t>(i)]);
    }
    g.sft = scale(sft_sum, T(-1.0 / total_tokens));
    std::vector<int> pairing(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        pairing[static_cast<std::size_t>(i)] = i;
    }
    g.nce = info_nce(stack_rows(q_embs), stack_rows(d_embs), pairing,
                     weights.tau);
    g.total = cold_total(g.sft, g.nce, weights);
    return g;
}

template <typename T>
void sgd_update(ModelParams<T>& params, double lr) {
    params.for_each([lr](const std::string&, NodePtr<T>& p) {
        for (std::size_t i = 0; i < p->val.size(); ++i) {
            p->val[i] -= static_cast<T>(lr) * p->grad[i];
        }
    });
}

template <typename T>
ColdStats cold_start_run(ModelParams<T>& params, const Vocab& vocab,
                         const std::vector<TripletRecord>& triplets,
                         const std::vector<CorpusEntry>& corpus,
                         const TrainConfig& cfg, CurveWriter& curve) {
    cfg.validate();
    if (triplets.empty()) {
        throw std::invalid_argument("cold start: no triplets");
    }
    std::unordered_map<std::int64_t, TokenSeq> titles;
    for (const auto& e : corpus) {
        titles[e.id] = encode(vocab, e.title);
    }
    std::vector<EncodedTriplet> data;
    std::unordered_map<std::int64_t, int> per_query;
    data.reserve(triplets.size());
    for (const auto& t : triplets) {
        if (cfg.max_triplets_per_query > 0 &&
            per_query[t.query_id] >= cfg.max_triplets_per_query) {
            continue;
        }
        ++per_query[t.query_id];
        EncodedTriplet e;
        e.query = encode(vocab, t.query);
        e.cot = encode(vocab, t.cot);
        if (static_cast<int>(e.cot.size()) > cfg.reward.length_limit) {
            e.cot.resize(static_cast<std::size_t>(cfg.reward.length_limit));
        }
        e.title = titles.at(t.item_id);
        data.push_back(std::move(e));
    }

    Rng rng(derive_seed(cfg.seed, 0xc01d));
    std::vector<int> order(data.size());
    const int steps_per_epoch =
        static_cast<int>(data.size()) / cfg.batch_cold +
        (static_cast<int>(data.size()) % cfg.batch_cold >= 2 ? 1 : 0);
    const int total_steps = cfg.epochs_cold * std::max(1, steps_per_epoch);
    ColdStats stats;
    int step = 0;
    for (int epoch = 0; epoch < cfg.epochs_cold; ++epoch) {
        for (std::size_t i = 0; i < order.size(); ++i) {
            order[i] = static_cast<int>(i);
        }
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(cfg.batch_cold)) {
            const std::size_t end = std::min(
                order.size(), start + static_cast<std::size_t>(cfg.batch_cold));
            if (end - start < 2) {
                break;  // a single-triplet tail has no in-batch negatives
            }
            std::vector<EncodedTriplet> batch;
            batch.reserve(end - start);
            for (std::size_t i = start; i < end; ++i) {
                batch.push_back(data[static_cast<std::size_t>(order[i])]);
            }
            params.zero_grads();
            auto g = cold_batch_loss(params, vocab, batch, cfg.weights);
            const double loss = static_cast<double>(scalar_value(g.total));
            if (!std::isfinite(loss)) {
                throw std::runtime_error("cold start: non-finite loss");
            }
            backward(g.total);
            const double lr =
                lr_schedule(step, total_steps, cfg.lr_cold, cfg.warmup_ratio);
            sgd_update(params, lr);
            curve.write({{"stage", "cold"},
                         {"step", step},
                         {"lr", lr},
                         {"loss_total", loss},
                         {"loss_sft", static_cast<double>(scalar_value(g.sft))},
                         {"loss_nce", static_cast<double>(scalar_value(g.nce))}});
            if (step == 0) {
                stats.initial_loss = loss;
            }
            stats.final_loss = loss;
            ++step;
        }
    }
    stats.steps = step;
    return stats;
}

// ----------------------------------------------------------------------
// reinforcement learning

struct RlStats {
    int steps = 0;
    double probe_reward_start = 0.0;
    double probe_reward_end = 0.0;
    double final_format_rate = 0.0;
};

struct RlBatchEntry {
    TokenSeq query;
    TokenSeq title;
};

/// Mean total reward of `pairs` under the sampling policy, scored against
/// the batch's own items. Seeds are fixed per (pair, draw), so the value is
/// a deterministic function of the parameters; the RL stage optimizes
/// exactly this expectation.
template <typename T>
double probe_mean_reward(ModelParams<T>& params, const Vocab& vocab,
                         const std::vector<RlBatchEntry>& pairs,
                         const RewardConfig& rcfg, double temperature,
                         std::uint64_t probe_seed, int draws_per_pair = 4) {
    const int n = static_cast<int>(pairs.size());
    std::vector<std::vector<double>> item_embs(static_cast<std::size_t>(n));
    parallel_for(n, [&](int i) {
        item_embs[static_cast<std::size_t>(i)] = extract_unit_embedding(
            params, render_item_input(vocab, pairs[static_cast<std::size_t>(i)].title,
                                      params.cfg.max_seq_len));
    });
    std::vector<double> rewards(static_cast<std::size_t>(n), 0.0);
    parallel_for(n, [&](int i) {
        const auto& entry = pairs[static_cast<std::size_t>(i)];
        const TokenSeq prompt = render_query_input(vocab, entry.query,
                                                   std::nullopt,
                                                   params.cfg.max_seq_len);
        double acc_total = 0.0;
        for (int d = 0; d < draws_per_pair; ++d) {
            Rng rng(derive_seed(probe_seed, static_cast<std::uint64_t>(i),
                                static_cast<std::uint64_t>(d)));
            SampledCot g = sample_cot(params, prompt, temperature, rng,
                                      2 * rcfg.length_limit + 2);
            const int fmt = format_reward(g.new_tokens);
            const int len = length_reward(g.new_tokens, rcfg.length_limit);
            double acc = 0.0;
            if (fmt == 1) {
                TokenSeq full = prompt;
                full.insert(full.end(), g.new_tokens.begin(),
                            g.new_tokens.end());
                const auto emb = extract_unit_embedding(params, full);
                std::vector<double> sims(static_cast<std::size_t>(n));
                for (int j = 0; j < n; ++j) {
                    sims[static_cast<std::size_t>(j)] =
                        cosine_sim(emb, item_embs[static_cast<std::size_t>(j)]);
                }
                acc = accuracy_reward(rank_of(sims, i), n);
            }
            acc_total += total_reward(fmt, len, acc, rcfg).total;
        }
        rewards[static_cast<std::size_t>(i)] = acc_total / draws_per_pair;
    });
    double mean = 0.0;
    for (double r : rewards) {
        mean += r;
    }
    return mean / n;
}

struct RlStepMetrics {
    double loss_total = 0.0;
    double loss_grpo = 0.0;
    double loss_nce = 0.0;
    double mean_reward = 0.0;
    double format_rate = 0.0;
    double mean_rank = 0.0;
};

template <typename T>
struct RlLossGraph {
    NodePtr<T> policy;
    NodePtr<T> nce;
    NodePtr<T> total;
};

/// Differentiable RL objective for a batch of collected groups: fresh
/// teacher-forced forwards give the current-policy log-probs and rollout
/// embeddings; rewards, old log-probs and advantages stay fixed collection
/// data. Malformed rollouts feed the policy term only.
template <typename T>
RlLossGraph<T> rl_batch_loss(ModelParams<T>& params, const Vocab& vocab,
                             const std::vector<RlBatchEntry>& batch,
                             const std::vector<RolloutGroup>& groups,
                             const TrainConfig& cfg) {
    const int n = static_cast<int>(batch.size());
    std::vector<NodePtr<T>> item_nodes(static_cast<std::size_t>(n));
    parallel_for(n, [&](int i) {
        const TokenSeq input = render_item_input(
            vocab, batch[static_cast<std::size_t>(i)].title,
            params.cfg.max_seq_len);
        auto trace = forward(params, input, {}, LogitsMode::none);
        item_nodes[static_cast<std::size_t>(i)] =
            embed_at(trace, static_cast<int>(input.size()) - 1);
    });
    const int G = cfg.grpo.group_size;
    std::vector<NodePtr<T>> new_logps(static_cast<std::size_t>(n * G));
    std::vector<NodePtr<T>> rollout_embs(static_cast<std::size_t>(n * G));
    parallel_for(n * G, [&](int idx) {
        const int qi = idx / G;
        const int g = idx % G;
        const RolloutGroup& group = groups[static_cast<std::size_t>(qi)];
        const Rollout& r = group.rollouts[static_cast<std::size_t>(g)];
        const TokenSeq prompt = render_query_input(vocab, group.query,
                                                   std::nullopt,
                                                   params.cfg.max_seq_len);
        TokenSeq full = prompt;
        full.insert(full.end(), r.cot.new_tokens.begin(),
                    r.cot.new_tokens.end());
        auto trace = forward(params, full, {}, LogitsMode::all);
        auto ls = log_softmax_rows(trace.logits);
        std::vector<std::pair<int, int>> at;
        const int p0 = static_cast<int>(prompt.size());
        for (std::size_t k = 0; k < r.cot.new_tokens.size(); ++k) {
            at.emplace_back(p0 + static_cast<int>(k) - 1,
                            static_cast<int>(r.cot.new_tokens[k]));
        }
        new_logps[static_cast<std::size_t>(idx)] =
            gather_elems(ls, std::move(at));
        if (r.well_formed) {
            rollout_embs[static_cast<std::size_t>(idx)] =
                embed_at(trace, static_cast<int>(full.size()) - 1);
        }
    });

    std::vector<NodePtr<T>> logp_rows;
    std::vector<std::vector<double>> old_rows;
    std::vector<double> advs;
    std::vector<std::vector<NodePtr<T>>> nce_groups(
        static_cast<std::size_t>(n));
    for (int qi = 0; qi < n; ++qi) {
        for (int g = 0; g < G; ++g) {
            const Rollout& r =
                groups[static_cast<std::size_t>(qi)].rollouts[static_cast<std::size_t>(g)];
            logp_rows.push_back(new_logps[static_cast<std::size_t>(qi * G + g)]);
            old_rows.push_back(r.cot.token_logprobs);
            advs.push_back(r.advantage);
            if (r.well_formed) {
                nce_groups[static_cast<std::size_t>(qi)].push_back(
                    rollout_embs[static_cast<std::size_t>(qi * G + g)]);
            }
        }
    }
    RlLossGraph<T> out;
    out.policy = grpo_loss(logp_rows, old_rows, advs, cfg.grpo.clip_eps);
    bool any_well_formed = false;
    for (const auto& grp : nce_groups) {
        if (!grp.empty()) {
            any_well_formed = true;
        }
    }
    out.nce = any_well_formed
                  ? rl_info_nce(nce_groups, stack_rows(item_nodes),
                                cfg.weights.tau)
                  : make_const<T>(1, 1, {T(0)}, "nce_empty");
    out.total = rl_total(out.policy, out.nce, cfg.weights);
    return out;
}

/// One GRPO update on a batch of query-item pairs: sample G rollouts per
/// query against the frozen snapshot, score them against the batch items,
/// then take one step on gamma1 * L_policy + gamma2 * L_InfoNCE.
template <typename T>
RlStepMetrics rl_step(ModelParams<T>& params, const Vocab& vocab,
                      const std::vector<RlBatchEntry>& batch,
                      const TrainConfig& cfg, double lr,
                      std::uint64_t step_seed) {
    const int n = static_cast<int>(batch.size());
    if (n < 2) {
        throw std::invalid_argument("rl_step: batch must hold >= 2 pairs");
    }
    // Frozen-snapshot item embeddings for reward ranking.
    std::vector<std::vector<double>> item_embs(static_cast<std::size_t>(n));
    parallel_for(n, [&](int i) {
        item_embs[static_cast<std::size_t>(i)] = extract_unit_embedding(
            params, render_item_input(vocab, batch[static_cast<std::size_t>(i)].title,
                                      params.cfg.max_seq_len));
    });
    std::vector<RolloutGroup> groups(static_cast<std::size_t>(n));
    parallel_for(n, [&](int i) {
        groups[static_cast<std::size_t>(i)] = collect_group(
            params, vocab, batch[static_cast<std::size_t>(i)].query, item_embs,
            i, cfg.grpo, cfg.reward,
            derive_seed(step_seed, static_cast<std::uint64_t>(i)));
    });

    RlStepMetrics metrics;
    int rollouts_total = 0, well_formed = 0, ranked = 0;
    for (const auto& g : groups) {
        for (const auto& r : g.rollouts) {
            metrics.mean_reward += r.reward.total;
            ++rollouts_total;
            if (r.well_formed) {
                ++well_formed;
                metrics.mean_rank += r.rank;
                ++ranked;
            }
        }
    }
    metrics.mean_reward /= rollouts_total;
    metrics.format_rate = static_cast<double>(well_formed) / rollouts_total;
    metrics.mean_rank = ranked > 0 ? metrics.mean_rank / ranked : 0.0;

    auto g = rl_batch_loss(params, vocab, batch, groups, cfg);
    metrics.loss_total = static_cast<double>(scalar_value(g.total));
    metrics.loss_grpo = static_cast<double>(scalar_value(g.policy));
    metrics.loss_nce = static_cast<double>(scalar_value(g.nce));
    if (!std::isfinite(metrics.loss_total)) {
        throw std::runtime_error("rl step: non-finite loss");
    }
    params.zero_grads();
    backward(g.total);
    sgd_update(params, lr);
    return metrics;
}

template <typename T>
RlStats rl_run(ModelParams<T>& params, const Vocab& vocab,
               const std::vector<RlPairRecord>& rl_pairs,
               const std::vector<CorpusEntry>& corpus, const TrainConfig& cfg,
               CurveWriter& curve) {
    cfg.validate();
    std::unordered_map<std::int64_t, TokenSeq> titles;
    for (const auto& e : corpus) {
        titles[e.id] = encode(vocab, e.title);
    }
    std::vector<RlBatchEntry> entries;
    entries.reserve(rl_pairs.size());
    for (const auto& p : rl_pairs) {
        entries.push_back({encode(vocab, p.query), titles.at(p.item_id)});
    }
    if (static_cast<int>(entries.size()) < 2 * cfg.batch_rl) {
        throw std::invalid_argument(
            "rl_run: need at least two batches of pairs (probe + train)");
    }
    Rng rng(derive_seed(cfg.seed, 0x51));
    std::vector<int> order(entries.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        order[i] = static_cast<int>(i);
    }
    std::shuffle(order.begin(), order.end(), rng);
    // Hold out the first shuffled batch as the probe set.
    std::vector<RlBatchEntry> probe;
    for (int i = 0; i < cfg.batch_rl; ++i) {
        probe.push_back(entries[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])]);
    }
    std::vector<int> train_order(order.begin() + cfg.batch_rl, order.end());

    RlStats stats;
    stats.probe_reward_start =
        probe_mean_reward(params, vocab, probe, cfg.reward,
                          cfg.grpo.temperature, derive_seed(cfg.seed, 0x9e0b));
    const int steps_per_epoch =
        static_cast<int>(train_order.size()) / cfg.batch_rl;
    const int total_steps = cfg.epochs_rl * std::max(1, steps_per_epoch);
    int step = 0;
    for (int epoch = 0; epoch < cfg.epochs_rl; ++epoch) {
        std::shuffle(train_order.begin(), train_order.end(), rng);
        for (int b = 0; b + cfg.batch_rl <=
                        static_cast<int>(train_order.size());
             b += cfg.batch_rl) {
            std::vector<RlBatchEntry> batch;
            batch.reserve(static_cast<std::size_t>(cfg.batch_rl));
            for (int i = b; i < b + cfg.batch_rl; ++i) {
                batch.push_back(
                    entries[static_cast<std::size_t>(train_order[static_cast<std::size_t>(i)])]);
            }
            const double lr =
                lr_schedule(step, total_steps, cfg.lr_rl, cfg.warmup_ratio);
            const auto metrics =
                rl_step(params, vocab, batch, cfg, lr,
                        derive_seed(cfg.seed, 0x4242,
                                    static_cast<std::uint64_t>(step)));
            curve.write({{"stage", "rl"},
                         {"step", step},
                         {"lr", lr},
                         {"loss_total", metrics.loss_total},
                         {"loss_grpo", metrics.loss_grpo},
                         {"loss_nce", metrics.loss_nce},
                         {"mean_reward", metrics.mean_reward},
                         {"format_rate", metrics.format_rate},
                         {"mean_rank", metrics.mean_rank}});
            stats.final_format_rate = metrics.format_rate;
            ++step;
        }
    }
    stats.steps = step;
    stats.probe_reward_end =
        probe_mean_reward(params, vocab, probe, cfg.reward,
                          cfg.grpo.temperature, derive_seed(cfg.seed, 0x9e0b));
    return stats;
}

}  // namespace lrem
