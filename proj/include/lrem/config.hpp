#pragma once

// Flat `key = value` run configuration shared by the CLI commands. Unknown
// keys are rejected; every value is validated against its module's
// constraints before any work starts.

#include <cstdint>
#include <string>

#include "lrem/net.hpp"
#include "lrem/pipeline.hpp"
#include "lrem/trainer.hpp"
#include "lrem/world.hpp"

namespace lrem {

struct RunConfig {
    ModelConfig model;
    TrainConfig train;

    // data generation
    std::uint64_t world_seed = 7;
    int items = 2000;
    int queries_per_cat = 150;
    int eval_per_cat = 25;
    double noise = 0.0;
    int retrieve_k = 20;
    double rl_fraction = 0.10;

    // evaluation
    int eval_k = 50;
    int eval_kp = 10;

    void validate() const;
};

RunConfig parse_config_text(const std::string& text);
RunConfig load_config_file(const std::string& path);
std::string config_to_text(const RunConfig& cfg);

}  // namespace lrem
