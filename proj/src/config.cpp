#include "lrem/config.hpp"

#include <functional>
#include <map>
#include <sstream>

namespace lrem {

void RunConfig::validate() const {
    ModelConfig m = model;
    if (m.vocab_size == 0) {
        m.vocab_size = 1;  // filled in from the vocabulary file later
    }
    m.validate();
    train.validate();
    if (items < 1) {
        throw std::invalid_argument("items must be >= 1");
    }
    if (queries_per_cat < 1 || eval_per_cat < 1) {
        throw std::invalid_argument("query counts must be >= 1");
    }
    if (noise < 0.0 || noise > 1.0) {
        throw std::invalid_argument("noise must be in [0, 1]");
    }
    if (retrieve_k < 1) {
        throw std::invalid_argument("retrieve_k must be >= 1");
    }
    if (rl_fraction < 0.0 || rl_fraction > 1.0) {
        throw std::invalid_argument("rl_fraction must be in [0, 1]");
    }
    if (eval_k < 1 || eval_kp < 1) {
        throw std::invalid_argument("eval cutoffs must be >= 1");
    }
}

namespace {

struct Field {
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

int to_int(const std::string& v) {
    std::size_t used = 0;
    const int out = std::stoi(v, &used);
    if (used != v.size()) {
        throw std::invalid_argument("bad integer: " + v);
    }
    return out;
}

double to_double(const std::string& v) {
    std::size_t used = 0;
    const double out = std::stod(v, &used);
    if (used != v.size()) {
        throw std::invalid_argument("bad number: " + v);
    }
    return out;
}

std::uint64_t to_u64(const std::string& v) {
    std::size_t used = 0;
    const unsigned long long out = std::stoull(v, &used);
    if (used != v.size()) {
        throw std::invalid_argument("bad integer: " + v);
    }
    return static_cast<std::uint64_t>(out);
}

std::string fmt(double v) {
    std::ostringstream ss;
    ss << v;
    return ss.str();
}

const std::map<std::string, Field>& fields() {
    static const std::map<std::string, Field> f = {
        {"n_layers",
         {[](RunConfig& c, const std::string& v) { c.model.n_layers = to_int(v); },
          [](const RunConfig& c) { return std::to_string(c.model.n_layers); }}},
        {"d_model",
         {[](RunConfig& c, const std::string& v) { c.model.d_model = to_int(v); },
          [](const RunConfig& c) { return std::to_string(c.model.d_model); }}},
        {"n_heads",
         {[](RunConfig& c, const std::string& v) { c.model.n_heads = to_int(v); },
          [](const RunConfig& c) { return std::to_string(c.model.n_heads); }}},
        {"d_ff",
         {[](RunConfig& c, const std::string& v) { c.model.d_ff = to_int(v); },
          [](const RunConfig& c) { return std::to_string(c.model.d_ff); }}},
        {"max_seq_len",
         {[](RunConfig& c, const std::string& v) { c.model.max_seq_len = to_int(v); },
          [](const RunConfig& c) { return std::to_string(c.model.max_seq_len); }}},
        {"float_width",
         {[](RunConfig& c, const std::string& v) { c.model.float_width = to_int(v); },
          [](const RunConfig& c) { return std::to_string(c.model.float_width); }}},
        {"lambda1",
         {[](RunConfig& c, const std::string& v) { c.train.weights.lambda1 = to_double(v); },
          [](const RunConfig& c) { return fmt(c.train.weights.lambda1); }}},
        {"lambda2",
         {[](RunConfig& c, const std::string& v) { c.train.weights.lambda2 = to_double(v); },
          [](const RunConfig& c) { return fmt(c.train.weights.lambda2); }}},
        {"gamma1",
         {[](RunConfig& c, const std::string& v) { c.train.weights.gamma1 = to_double(v); },
          [](const RunConfig& c) { return fmt(c.train.weights.gamma1); }}},
        {"gamma2",
         {[](RunConfig& c, const std::string& v) { c.train.weights.gamma2 = to_double(v); },
          [](const RunConfig& c) { return fmt(c.train.weights.gamma2); }}},
        {"tau",
         {[](RunConfig& c, const std::string& v) { c.train.weights.tau = to_double(v); },
          [](const RunConfig& c) { return fmt(c.train.weights.tau); }}},
        {"beta1",
         {[](RunConfig& c, const std::string& v) { c.train.reward.beta1 = to_double(v); },
          [](const RunConfig& c) { return fmt(c.train.reward.beta1); }}},
        {"beta2",
         {[](RunConfig& c, const std::string& v) { c.train.reward.beta2 = to_double(v); },
          [](const RunConfig& c) { return fmt(c.train.reward.beta2); }}},
        {"beta3",
         {[](RunConfig& c, const std::string& v) { c.train.reward.beta3 = to_double(v); },
          [](const RunConfig& c) { return fmt(c.train.reward.beta3); }}},
        {"cot_limit",
         {[](RunConfig& c, const std::string& v) { c.train.reward.length_limit = to_int(v); },
          [](const RunConfig& c) { return std::to_string(c.train.reward.length_limit); }}},
        {"group_size",
         {[](RunConfig& c, const std::string& v) { c.train.grpo.group_size = to_int(v); },
          [](const RunConfig& c) { return std::to_string(c.train.grpo.group_size); }}},
        {"clip_eps",
         {[](RunConfig& c, const std::string& v) { c.train.grpo.clip_eps = to_double(v); },
          [](const RunConfig& c) { return fmt(c.train.grpo.clip_eps); }}},
        {"std_floor",
         {[](RunConfig& c, const std::string& v) { c.train.grpo.std_floor = to_double(v); },
          [](const RunConfig& c) { return fmt(c.train.grpo.std_floor); }}},
        {"inner_epochs",
         {[](RunConfig& c, const std::string& v) { c.train.grpo.inner_epochs = to_int(v); },
          [](const RunConfig& c) { return std::to_string(c.train.grpo.inner_epochs); }}},
        {"rl_temperature",
         {[](RunConfig& c, const std::string& v) { c.train.grpo.temperature = to_double(v); },
          [](const RunConfig& c) { return fmt(c.train.grpo.temperature); }}},
        {"batch_cold",
         {[](RunConfig& c, const std::string& v) { c.train.batch_cold = to_int(v); },
          [](const RunConfig& c) { return std::to_string(c.train.batch_cold); }}},
        {"batch_rl",
         {[](RunConfig& c, const std::string& v) { c.train.batch_rl = to_int(v); },
          [](const RunConfig& c) { return std::to_string(c.train.batch_rl); }}},
        {"lr_cold",
         {[](RunConfig& c, const std::string& v) { c.train.lr_cold = to_double(v); },
          [](const RunConfig& c) { return fmt(c.train.lr_cold); }}},
        {"lr_rl",
         {[](RunConfig& c, const std::string& v) { c.train.lr_rl = to_double(v); },
          [](const RunConfig& c) { return fmt(c.train.lr_rl); }}},
        {"warmup_ratio",
         {[](RunConfig& c, const std::string& v) { c.train.warmup_ratio = to_double(v); },
          [](const RunConfig& c) { return fmt(c.train.warmup_ratio); }}},
        {"epochs_cold",
         {[](RunConfig& c, const std::string& v) { c.train.epochs_cold = to_int(v); },
          [](const RunConfig& c) { return std::to_string(c.train.epochs_cold); }}},
        {"epochs_rl",
         {[](RunConfig& c, const std::string& v) { c.train.epochs_rl = to_int(v); },
          [](const RunConfig& c) { return std::to_string(c.train.epochs_rl); }}},
        {"seed",
         {[](RunConfig& c, const std::string& v) { c.train.seed = to_u64(v); },
          [](const RunConfig& c) { return std::to_string(c.train.seed); }}},
        {"max_triplets_per_query",
         {[](RunConfig& c, const std::string& v) { c.train.max_triplets_per_query = to_int(v); },
          [](const RunConfig& c) { return std::to_string(c.train.max_triplets_per_query); }}},
        {"world_seed",
         {[](RunConfig& c, const std::string& v) { c.world_seed = to_u64(v); },
          [](const RunConfig& c) { return std::to_string(c.world_seed); }}},
        {"items",
         {[](RunConfig& c, const std::string& v) { c.items = to_int(v); },
          [](const RunConfig& c) { return std::to_string(c.items); }}},
        {"queries_per_cat",
         {[](RunConfig& c, const std::string& v) { c.queries_per_cat = to_int(v); },
          [](const RunConfig& c) { return std::to_string(c.queries_per_cat); }}},
        {"eval_per_cat",
         {[](RunConfig& c, const std::string& v) { c.eval_per_cat = to_int(v); },
          [](const RunConfig& c) { return std::to_string(c.eval_per_cat); }}},
        {"noise",
         {[](RunConfig& c, const std::string& v) { c.noise = to_double(v); },
          [](const RunConfig& c) { return fmt(c.noise); }}},
        {"retrieve_k",
         {[](RunConfig& c, const std::string& v) { c.retrieve_k = to_int(v); },
          [](const RunConfig& c) { return std::to_string(c.retrieve_k); }}},
        {"rl_fraction",
         {[](RunConfig& c, const std::string& v) { c.rl_fraction = to_double(v); },
          [](const RunConfig& c) { return fmt(c.rl_fraction); }}},
        {"eval_k",
         {[](RunConfig& c, const std::string& v) { c.eval_k = to_int(v); },
          [](const RunConfig& c) { return std::to_string(c.eval_k); }}},
        {"eval_kp",
         {[](RunConfig& c, const std::string& v) { c.eval_kp = to_int(v); },
          [](const RunConfig& c) { return std::to_string(c.eval_kp); }}},
    };
    return f;
}

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t");
    std::size_t b = s.find_last_not_of(" \t");
    if (a == std::string::npos) {
        return "";
    }
    return s.substr(a, b - a + 1);
}

}  // namespace

RunConfig parse_config_text(const std::string& text) {
    RunConfig cfg;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) {
            line = line.substr(0, hash);
        }
        line = trim(line);
        if (line.empty()) {
            continue;
        }
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw std::invalid_argument("config line " + std::to_string(lineno) +
                                        ": expected key = value");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        auto it = fields().find(key);
        if (it == fields().end()) {
            throw std::invalid_argument("unknown config key: " + key);
        }
        it->second.set(cfg, value);
    }
    cfg.validate();
    return cfg;
}

RunConfig load_config_file(const std::string& path) {
    return parse_config_text(read_file(path));
}

std::string config_to_text(const RunConfig& cfg) {
    std::string out;
    for (const auto& [key, field] : fields()) {
        out += key;
        out += " = ";
        out += field.get(cfg);
        out += "\n";
    }
    return out;
}

}  // namespace lrem
