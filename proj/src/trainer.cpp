#include "lrem/trainer.hpp"

#include <cmath>

namespace lrem {

double lr_schedule(int step, int total_steps, double peak_lr,
                   double warmup_ratio) {
    if (step < 0 || total_steps < 1 || step > total_steps) {
        throw std::invalid_argument("lr_schedule: step out of range");
    }
    const int warmup =
        static_cast<int>(std::ceil(warmup_ratio * total_steps));
    if (step < warmup) {
        return peak_lr * static_cast<double>(step) / warmup;
    }
    if (step >= total_steps) {
        return 0.0;
    }
    const double progress = static_cast<double>(step - warmup) /
                            static_cast<double>(total_steps - warmup);
    constexpr double kPi = 3.14159265358979323846;
    return peak_lr * 0.5 * (1.0 + std::cos(kPi * progress));
}

nlohmann::json train_config_to_json(const TrainConfig& cfg) {
    return {{"lambda1", cfg.weights.lambda1},
            {"lambda2", cfg.weights.lambda2},
            {"gamma1", cfg.weights.gamma1},
            {"gamma2", cfg.weights.gamma2},
            {"tau", cfg.weights.tau},
            {"beta1", cfg.reward.beta1},
            {"beta2", cfg.reward.beta2},
            {"beta3", cfg.reward.beta3},
            {"cot_limit", cfg.reward.length_limit},
            {"group_size", cfg.grpo.group_size},
            {"clip_eps", cfg.grpo.clip_eps},
            {"std_floor", cfg.grpo.std_floor},
            {"inner_epochs", cfg.grpo.inner_epochs},
            {"rl_temperature", cfg.grpo.temperature},
            {"batch_cold", cfg.batch_cold},
            {"batch_rl", cfg.batch_rl},
            {"lr_cold", cfg.lr_cold},
            {"lr_rl", cfg.lr_rl},
            {"warmup_ratio", cfg.warmup_ratio},
            {"epochs_cold", cfg.epochs_cold},
            {"epochs_rl", cfg.epochs_rl},
            {"seed", cfg.seed},
            {"max_triplets_per_query", cfg.max_triplets_per_query}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
    TrainConfig cfg;
    cfg.weights.lambda1 = j.at("lambda1").get<double>();
    cfg.weights.lambda2 = j.at("lambda2").get<double>();
    cfg.weights.gamma1 = j.at("gamma1").get<double>();
    cfg.weights.gamma2 = j.at("gamma2").get<double>();
    cfg.weights.tau = j.at("tau").get<double>();
    cfg.reward.beta1 = j.at("beta1").get<double>();
    cfg.reward.beta2 = j.at("beta2").get<double>();
    cfg.reward.beta3 = j.at("beta3").get<double>();
    cfg.reward.length_limit = j.at("cot_limit").get<int>();
    cfg.grpo.group_size = j.at("group_size").get<int>();
    cfg.grpo.clip_eps = j.at("clip_eps").get<double>();
    cfg.grpo.std_floor = j.at("std_floor").get<double>();
    cfg.grpo.inner_epochs = j.at("inner_epochs").get<int>();
    cfg.grpo.temperature = j.at("rl_temperature").get<double>();
    cfg.batch_cold = j.at("batch_cold").get<int>();
    cfg.batch_rl = j.at("batch_rl").get<int>();
    cfg.lr_cold = j.at("lr_cold").get<double>();
    cfg.lr_rl = j.at("lr_rl").get<double>();
    cfg.warmup_ratio = j.at("warmup_ratio").get<double>();
    cfg.epochs_cold = j.at("epochs_cold").get<int>();
    cfg.epochs_rl = j.at("epochs_rl").get<int>();
    cfg.seed = j.at("seed").get<std::uint64_t>();
    cfg.max_triplets_per_query = j.at("max_triplets_per_query").get<int>();
    return cfg;
}

}  // namespace lrem
