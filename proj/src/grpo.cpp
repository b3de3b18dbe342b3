#include "lrem/grpo.hpp"

#include <cmath>

namespace lrem {

std::vector<double> advantages(const std::vector<double>& rewards,
                               double std_floor) {
    const std::size_t g = rewards.size();
    if (g < 2) {
        throw std::invalid_argument("advantages: group size must be >= 2");
    }
    double mean = 0.0;
    for (double r : rewards) {
        mean += r;
    }
    mean /= static_cast<double>(g);
    double var = 0.0;
    for (double r : rewards) {
        var += (r - mean) * (r - mean);
    }
    var /= static_cast<double>(g);
    const double sd = std::sqrt(var);
    std::vector<double> out(g, 0.0);
    if (sd < std_floor) {
        return out;
    }
    for (std::size_t i = 0; i < g; ++i) {
        out[i] = (rewards[i] - mean) / sd;
    }
    return out;
}

}  // namespace lrem
