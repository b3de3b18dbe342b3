#include "lrem/objectives.hpp"

#include <cmath>

namespace lrem {

double cosine_sim(const std::vector<double>& q, const std::vector<double>& d) {
    if (q.size() != d.size() || q.empty()) {
        throw std::invalid_argument("cosine_sim: dimension mismatch");
    }
    double dot = 0.0, nq = 0.0, nd = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) {
        dot += q[i] * d[i];
        nq += q[i] * q[i];
        nd += d[i] * d[i];
    }
    if (!(nq > 0.0) || !(nd > 0.0)) {
        throw std::invalid_argument("cosine_sim: zero-norm input");
    }
    return dot / (std::sqrt(nq) * std::sqrt(nd));
}

}  // namespace lrem
