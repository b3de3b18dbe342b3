#pragma once

// Decoder-only causal transformer, small enough to train from scratch on a
// CPU: pre-norm blocks, learned positional embeddings, GELU MLP, untied LM
// head. Everything runs through the autodiff graph in tensor.hpp, so any
// scalar built from forward passes has exact reverse-mode gradients.

#include <cmath>
#include <functional>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "lrem/tensor.hpp"
#include "lrem/textcodec.hpp"
#include "lrem/util.hpp"

namespace lrem {

struct ModelConfig {
    int n_layers = 2;
    int d_model = 64;
    int n_heads = 4;
    int d_ff = 256;
    int max_seq_len = 64;
    int vocab_size = 0;
    int float_width = 64;  // 32 or 64; selects the scalar type at run time

    void validate() const {
        if (n_layers < 0 || d_model <= 0 || n_heads <= 0 || d_ff <= 0 ||
            max_seq_len <= 0 || vocab_size <= 0) {
            throw std::invalid_argument("model config: non-positive field");
        }
        if (d_model % n_heads != 0) {
            throw std::invalid_argument(
                "model config: d_model not divisible by n_heads");
        }
        if (float_width != 32 && float_width != 64) {
            throw std::invalid_argument("model config: float_width must be 32 or 64");
        }
    }
};

constexpr double kLayerNormEps = 1e-5;
constexpr double kInitStd = 0.02;

template <typename T>
struct LayerParams {
    NodePtr<T> ln1_g, ln1_b;
    NodePtr<T> wq, wk, wv, wo;
    NodePtr<T> ln2_g, ln2_b;
    NodePtr<T> fc1_w, fc1_b, fc2_w, fc2_b;
};

template <typename T>
struct ModelParams {
    ModelConfig cfg;
    NodePtr<T> tok_emb;  // [V, d]
    NodePtr<T> pos_emb;  // [max_seq_len, d]
    std::vector<LayerParams<T>> layers;
    NodePtr<T> final_g, final_b;
    NodePtr<T> lm_head;  // [V, d]

    template <typename F>
    void for_each(F&& f) {
        f("tok_emb", tok_emb);
        f("pos_emb", pos_emb);
        for (std::size_t li = 0; li < layers.size(); ++li) {
            const std::string p = "layer" + std::to_string(li) + ".";
            auto& l = layers[li];
            f(p + "ln1_g", l.ln1_g);
            f(p + "ln1_b", l.ln1_b);
            f(p + "wq", l.wq);
            f(p + "wk", l.wk);
            f(p + "wv", l.wv);
            f(p + "wo", l.wo);
            f(p + "ln2_g", l.ln2_g);
            f(p + "ln2_b", l.ln2_b);
            f(p + "fc1_w", l.fc1_w);
            f(p + "fc1_b", l.fc1_b);
            f(p + "fc2_w", l.fc2_w);
            f(p + "fc2_b", l.fc2_b);
        }
        f("final_g", final_g);
        f("final_b", final_b);
        f("lm_head", lm_head);
    }

    void zero_grads() {
        for_each([](const std::string&, NodePtr<T>& p) { p->zero_grad(); });
    }

    std::size_t num_params() {
        std::size_t n = 0;
        for_each([&n](const std::string&, NodePtr<T>& p) { n += p->size(); });
        return n;
    }
};

/// Deterministic init: weight matrices and embeddings ~ N(0, 0.02^2), norm
/// gains 1, all biases/offsets 0. Same (config, seed) gives identical params.
template <typename T>
ModelParams<T> init_params(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    ModelParams<T> p;
    p.cfg = cfg;
    Rng rng(seed);
    std::normal_distribution<double> nd(0.0, kInitStd);
    auto randmat = [&](int r, int c, const std::string& name) {
        auto n = make_param<T>(r, c, name);
        for (auto& x : n->val) {
            x = static_cast<T>(nd(rng));
        }
        return n;
    };
    auto ones = [&](int c, const std::string& name) {
        auto n = make_param<T>(1, c, name);
        std::fill(n->val.begin(), n->val.end(), T(1));
        return n;
    };
    auto zeros = [&](int c, const std::string& name) {
        return make_param<T>(1, c, name);
    };
    p.tok_emb = randmat(cfg.vocab_size, cfg.d_model, "tok_emb");
    p.pos_emb = randmat(cfg.max_seq_len, cfg.d_model, "pos_emb");
    p.layers.resize(static_cast<std::size_t>(cfg.n_layers));
    for (int li = 0; li < cfg.n_layers; ++li) {
        auto& l = p.layers[static_cast<std::size_t>(li)];
        const std::string pre = "layer" + std::to_string(li) + ".";
        l.ln1_g = ones(cfg.d_model, pre + "ln1_g");
        l.ln1_b = zeros(cfg.d_model, pre + "ln1_b");
        l.wq = randmat(cfg.d_model, cfg.d_model, pre + "wq");
        l.wk = randmat(cfg.d_model, cfg.d_model, pre + "wk");
        l.wv = randmat(cfg.d_model, cfg.d_model, pre + "wv");
        l.wo = randmat(cfg.d_model, cfg.d_model, pre + "wo");
        l.ln2_g = ones(cfg.d_model, pre + "ln2_g");
        l.ln2_b = zeros(cfg.d_model, pre + "ln2_b");
        l.fc1_w = randmat(cfg.d_model, cfg.d_ff, pre + "fc1_w");
        l.fc1_b = zeros(cfg.d_ff, pre + "fc1_b");
        l.fc2_w = randmat(cfg.d_ff, cfg.d_model, pre + "fc2_w");
        l.fc2_b = zeros(cfg.d_model, pre + "fc2_b");
    }
    p.final_g = ones(cfg.d_model, "final_g");
    p.final_b = zeros(cfg.d_model, "final_b");
    p.lm_head = randmat(cfg.vocab_size, cfg.d_model, "lm_head");
    return p;
}

enum class LogitsMode { none, last, all };

template <typename T>
struct ForwardTrace {
    TokenSeq tokens;
    NodePtr<T> hidden;  // [L, d] final-layer hidden states
    NodePtr<T> logits;  // [L, V], [1, V] or null depending on LogitsMode
};

template <typename T>
ForwardTrace<T> forward(ModelParams<T>& params, const TokenSeq& tokens,
                        const std::vector<std::uint8_t>& pad_mask = {},
                        LogitsMode logits_mode = LogitsMode::all) {
    const ModelConfig& cfg = params.cfg;
    const int L = static_cast<int>(tokens.size());
    if (L == 0) {
        throw std::invalid_argument("forward: empty input");
    }
    if (L > cfg.max_seq_len) {
        throw std::invalid_argument("forward: input exceeds max_seq_len");
    }
    if (!pad_mask.empty() && static_cast<int>(pad_mask.size()) != L) {
        throw std::invalid_argument("forward: pad mask length mismatch");
    }
    std::vector<int> ids(tokens.begin(), tokens.end());
    for (int id : ids) {
        if (id < 0 || id >= cfg.vocab_size) {
            throw std::invalid_argument("forward: token id out of vocab");
        }
    }
    std::vector<int> positions(static_cast<std::size_t>(L));
    for (int i = 0; i < L; ++i) {
        positions[static_cast<std::size_t>(i)] = i;
    }
    auto x = add(gather_rows(params.tok_emb, ids),
                 gather_rows(params.pos_emb, positions));

    const int hd = cfg.d_model / cfg.n_heads;
    const T att_scale = T(1) / static_cast<T>(std::sqrt(double(hd)));
    for (auto& l : params.layers) {
        auto h = layer_norm(x, l.ln1_g, l.ln1_b, T(kLayerNormEps));
        auto q = matmul(h, l.wq);
        auto k = matmul(h, l.wk);
        auto v = matmul(h, l.wv);
        std::vector<NodePtr<T>> head_outs;
        head_outs.reserve(static_cast<std::size_t>(cfg.n_heads));
        for (int hi = 0; hi < cfg.n_heads; ++hi) {
            auto qh = slice_cols(q, hi * hd, hd);
            auto kh = slice_cols(k, hi * hd, hd);
            auto vh = slice_cols(v, hi * hd, hd);
            auto scores = matmul_nt(qh, kh);
            auto probs = causal_masked_softmax(scores, pad_mask, att_scale);
            head_outs.push_back(matmul(probs, vh));
        }
        auto attn = matmul(concat_cols(head_outs), l.wo);
        x = add(x, attn);
        auto m = layer_norm(x, l.ln2_g, l.ln2_b, T(kLayerNormEps));
        auto ff = add_rowvec(
            matmul(gelu(add_rowvec(matmul(m, l.fc1_w), l.fc1_b)), l.fc2_w),
            l.fc2_b);
        x = add(x, ff);
    }
    ForwardTrace<T> trace;
    trace.tokens = tokens;
    trace.hidden = layer_norm(x, params.final_g, params.final_b,
                              T(kLayerNormEps));
    trace.hidden->tag = "final_hidden";
    switch (logits_mode) {
        case LogitsMode::none:
            break;
        case LogitsMode::last:
            trace.logits = matmul_nt(select_row(trace.hidden, L - 1),
                                     params.lm_head);
            trace.logits->tag = "logits";
            break;
        case LogitsMode::all:
            trace.logits = matmul_nt(trace.hidden, params.lm_head);
            trace.logits->tag = "logits";
            break;
    }
    return trace;
}

/// Last-layer hidden state at an <emb> position. The position must actually
/// hold the <emb> token.
template <typename T>
NodePtr<T> embed_at(const ForwardTrace<T>& trace, int emb_position) {
    if (emb_position < 0 ||
        emb_position >= static_cast<int>(trace.tokens.size())) {
        throw std::out_of_range("embed_at: position out of range");
    }
    if (trace.tokens[static_cast<std::size_t>(emb_position)] != Vocab::kEmb) {
        throw std::invalid_argument("embed_at: position does not hold <emb>");
    }
    return select_row(trace.hidden, emb_position);
}

enum class StopReason { emb_emitted, length_cap };

struct SampledCot {
    TokenSeq new_tokens;
    std::vector<double> token_logprobs;
    StopReason stop_reason = StopReason::length_cap;
};

namespace detail {

/// log softmax(logits/temperature) in double, plus argmax with lowest-id
/// tie-break.
inline void row_log_probs(const std::vector<double>& logits,
                          double temperature, std::vector<double>& out,
                          int* argmax) {
    const std::size_t n = logits.size();
    out.resize(n);
    double mx = -std::numeric_limits<double>::infinity();
    int best = 0;
    for (std::size_t j = 0; j < n; ++j) {
        const double y = logits[j] / temperature;
        out[j] = y;
        if (y > mx) {
            mx = y;
            best = static_cast<int>(j);
        }
    }
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        z += std::exp(out[j] - mx);
    }
    const double lse = mx + std::log(z);
    for (std::size_t j = 0; j < n; ++j) {
        out[j] -= lse;
    }
    if (argmax) {
        *argmax = best;
    }
}

inline int sample_from_logprobs(const std::vector<double>& logp, Rng& rng) {
    const double u = uniform01(rng);
    double cum = 0.0;
    int last = 0;
    for (std::size_t j = 0; j < logp.size(); ++j) {
        const double p = std::exp(logp[j]);
        if (p > 0.0) {
            last = static_cast<int>(j);
        }
        cum += p;
        if (u < cum) {
            return static_cast<int>(j);
        }
    }
    return last;  // guard against rounding in the final bucket
}

/// Generation loop shared by sampled and greedy decoding. next_logits must
/// return the logits row for the last position of the given prefix.
inline SampledCot generate_loop(
    const std::function<std::vector<double>(const TokenSeq&)>& next_logits,
    TokenSeq prefix, double temperature, int hard_cap, bool greedy, Rng* rng) {
    if (prefix.empty() || prefix.back() != Vocab::kThinkOpen) {
        throw std::invalid_argument("generation prompt must end with <think>");
    }
    if (!(temperature > 0.0)) {
        throw std::invalid_argument("temperature must be positive");
    }
    if (hard_cap < 1) {
        throw std::invalid_argument("hard cap must be >= 1");
    }
    SampledCot out;
    std::vector<double> logp;
    for (int step = 0; step < hard_cap; ++step) {
        const std::vector<double> logits = next_logits(prefix);
        int argmax = 0;
        row_log_probs(logits, greedy ? 1.0 : temperature, logp, &argmax);
        const int tok = greedy ? argmax : sample_from_logprobs(logp, *rng);
        out.new_tokens.push_back(static_cast<TokenId>(tok));
        out.token_logprobs.push_back(logp[static_cast<std::size_t>(tok)]);
        prefix.push_back(static_cast<TokenId>(tok));
        if (tok == Vocab::kEmb) {
            out.stop_reason = StopReason::emb_emitted;
            return out;
        }
    }
    out.stop_reason = StopReason::length_cap;
    return out;
}

template <typename T>
std::vector<double> last_logits(ModelParams<T>& params,
                                const TokenSeq& prefix) {
    NoGradGuard ng;
    auto trace = forward(params, prefix, {}, LogitsMode::last);
    std::vector<double> row(trace.logits->val.size());
    for (std::size_t j = 0; j < row.size(); ++j) {
        row[j] = static_cast<double>(trace.logits->val[j]);
    }
    return row;
}

}  // namespace detail

/// Autoregressive categorical sampling after a prompt that ends in <think>.
/// Stops once <emb> is emitted (the token is kept) or after hard_cap tokens.
template <typename T>
SampledCot sample_cot(ModelParams<T>& params, const TokenSeq& prompt,
                      double temperature, Rng& rng, int hard_cap) {
    return detail::generate_loop(
        [&params](const TokenSeq& p) { return detail::last_logits(params, p); },
        prompt, temperature, hard_cap, /*greedy=*/false, &rng);
}

/// Greedy decoding; argmax ties resolve to the lowest token id.
template <typename T>
SampledCot greedy_cot(ModelParams<T>& params, const TokenSeq& prompt,
                      int hard_cap) {
    return detail::generate_loop(
        [&params](const TokenSeq& p) { return detail::last_logits(params, p); },
        prompt, 1.0, hard_cap, /*greedy=*/true, nullptr);
}

/// Teacher-forced per-token log probabilities of `generated` after `prompt`.
template <typename T>
std::vector<double> log_prob_of(ModelParams<T>& params, const TokenSeq& prompt,
                                const TokenSeq& generated) {
    if (generated.empty()) {
        return {};
    }
    NoGradGuard ng;
    TokenSeq full = prompt;
    full.insert(full.end(), generated.begin(), generated.end());
    auto trace = forward(params, full, {}, LogitsMode::all);
    auto ls = log_softmax_rows(trace.logits);
    std::vector<double> out(generated.size());
    const int p0 = static_cast<int>(prompt.size());
    for (std::size_t k = 0; k < generated.size(); ++k) {
        out[k] = static_cast<double>(
            ls->at(p0 + static_cast<int>(k) - 1, generated[k]));
    }
    return out;
}

/// Differentiable version used in training graphs: [1, len(generated)].
template <typename T>
NodePtr<T> log_prob_graph(ModelParams<T>& params, const TokenSeq& prompt,
                          const TokenSeq& generated) {
    TokenSeq full = prompt;
    full.insert(full.end(), generated.begin(), generated.end());
    auto trace = forward(params, full, {}, LogitsMode::all);
    auto ls = log_softmax_rows(trace.logits);
    std::vector<std::pair<int, int>> at;
    at.reserve(generated.size());
    const int p0 = static_cast<int>(prompt.size());
    for (std::size_t k = 0; k < generated.size(); ++k) {
        at.emplace_back(p0 + static_cast<int>(k) - 1,
                        static_cast<int>(generated[k]));
    }
    return gather_elems(ls, std::move(at));
}

/// Forward pass without gradients, returning the L2-normalized <emb>-state
/// of an input that ends with <emb>, as plain doubles.
template <typename T>
std::vector<double> extract_unit_embedding(ModelParams<T>& params,
                                           const TokenSeq& input) {
    NoGradGuard ng;
    auto trace = forward(params, input, {}, LogitsMode::none);
    auto emb = embed_at(trace, static_cast<int>(input.size()) - 1);
    std::vector<double> v(emb->val.size());
    double norm = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        v[i] = static_cast<double>(emb->val[i]);
        norm += v[i] * v[i];
    }
    norm = std::sqrt(norm);
    if (!(norm > 0.0)) {
        throw std::runtime_error("embedding has zero norm");
    }
    for (double& x : v) {
        x /= norm;
    }
    return v;
}

/// Exact reverse-mode gradients of a scalar loss built from model ops.
template <typename T, typename F>
std::vector<std::pair<std::string, std::vector<T>>> grad(
    ModelParams<T>& params, F&& loss_closure) {
    params.zero_grads();
    NodePtr<T> loss = loss_closure();
    if (loss->rows != 1 || loss->cols != 1) {
        throw std::invalid_argument("grad: loss closure must return a scalar");
    }
    backward(loss);
    std::vector<std::pair<std::string, std::vector<T>>> out;
    params.for_each([&out](const std::string& name, NodePtr<T>& p) {
        out.emplace_back(name, p->grad);
    });
    return out;
}

}  // namespace lrem
