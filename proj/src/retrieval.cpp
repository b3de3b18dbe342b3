#include "lrem/retrieval.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <unordered_set>

#include "json.hpp"
#include "lrem/util.hpp"

namespace lrem {

using nlohmann::json;

namespace {
constexpr char kIndexMagic[] = "LREMIDX1\n";
constexpr std::size_t kMagicLen = sizeof(kIndexMagic) - 1;

static_assert(std::endian::native == std::endian::little,
              "index and checkpoint formats assume a little-endian host");
}  // namespace

void save_index(const EmbIndex& index, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out.is_open()) {
        throw std::runtime_error("cannot write index file: " + path);
    }
    out.write(kIndexMagic, static_cast<std::streamsize>(kMagicLen));
    const std::uint64_t count = index.ids.size();
    const std::uint64_t dim = static_cast<std::uint64_t>(index.dim);
    out.write(reinterpret_cast<const char*>(&count), sizeof(count));
    out.write(reinterpret_cast<const char*>(&dim), sizeof(dim));
    out.write(reinterpret_cast<const char*>(index.ids.data()),
              static_cast<std::streamsize>(count * sizeof(std::int64_t)));
    out.write(reinterpret_cast<const char*>(index.vecs.data()),
              static_cast<std::streamsize>(index.vecs.size() * sizeof(double)));
    out.write(reinterpret_cast<const char*>(index.fingerprint.data()),
              static_cast<std::streamsize>(index.fingerprint.size()));
    if (!out.good()) {
        throw std::runtime_error("index write failed: " + path);
    }
}

EmbIndex load_index(const std::string& path) {
    const std::string bytes = read_file(path);
    if (bytes.size() < kMagicLen ||
        std::memcmp(bytes.data(), kIndexMagic, kMagicLen) != 0) {
        throw std::runtime_error("bad index magic in " + path);
    }
    std::size_t off = kMagicLen;
    auto need = [&](std::size_t n) {
        if (off + n > bytes.size()) {
            throw std::runtime_error("truncated index file: " + path);
        }
    };
    EmbIndex idx;
    std::uint64_t count = 0, dim = 0;
    need(sizeof(count) + sizeof(dim));
    std::memcpy(&count, bytes.data() + off, sizeof(count));
    off += sizeof(count);
    std::memcpy(&dim, bytes.data() + off, sizeof(dim));
    off += sizeof(dim);
    idx.dim = static_cast<int>(dim);
    idx.ids.resize(count);
    need(count * sizeof(std::int64_t));
    std::memcpy(idx.ids.data(), bytes.data() + off,
                count * sizeof(std::int64_t));
    off += count * sizeof(std::int64_t);
    idx.vecs.resize(count * dim);
    need(count * dim * sizeof(double));
    std::memcpy(idx.vecs.data(), bytes.data() + off,
                count * dim * sizeof(double));
    off += count * dim * sizeof(double);
    need(idx.fingerprint.size());
    std::memcpy(idx.fingerprint.data(), bytes.data() + off,
                idx.fingerprint.size());
    return idx;
}

std::vector<std::pair<std::int64_t, double>> topk(
    const EmbIndex& index, const std::vector<double>& query_vec, int k) {
    if (k < 1) {
        throw std::invalid_argument("topk: k must be >= 1");
    }
    if (static_cast<int>(query_vec.size()) != index.dim) {
        throw std::invalid_argument("topk: dimension mismatch");
    }
    const int n = index.size();
    std::vector<std::pair<double, std::int64_t>> scored(
        static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const double* row = index.row(i);
        double dot = 0.0;
        for (int j = 0; j < index.dim; ++j) {
            dot += row[j] * query_vec[static_cast<std::size_t>(j)];
        }
        scored[static_cast<std::size_t>(i)] = {dot, index.ids[static_cast<std::size_t>(i)]};
    }
    auto cmp = [](const auto& a, const auto& b) {
        if (a.first != b.first) {
            return a.first > b.first;
        }
        return a.second < b.second;
    };
    const std::size_t kk =
        std::min<std::size_t>(static_cast<std::size_t>(k), scored.size());
    std::partial_sort(scored.begin(), scored.begin() + kk, scored.end(), cmp);
    std::vector<std::pair<std::int64_t, double>> out;
    out.reserve(kk);
    for (std::size_t i = 0; i < kk; ++i) {
        out.emplace_back(scored[i].second, scored[i].first);
    }
    return out;
}

double hitrate_at_k(const std::vector<std::int64_t>& retrieved,
                    const std::vector<std::int64_t>& ground_truth) {
    if (ground_truth.empty()) {
        throw std::invalid_argument("hitrate_at_k: empty ground truth");
    }
    std::unordered_set<std::int64_t> gt(ground_truth.begin(),
                                        ground_truth.end());
    int found = 0;
    for (std::int64_t id : retrieved) {
        if (gt.count(id)) {
            ++found;
        }
    }
    return static_cast<double>(found) / static_cast<double>(gt.size());
}

double precision_at_k(const std::vector<std::int64_t>& retrieved,
                      const std::function<bool(std::int64_t)>& judge, int kp) {
    if (kp < 1) {
        throw std::invalid_argument("precision_at_k: kp must be >= 1");
    }
    int relevant = 0;
    const int limit = std::min<int>(kp, static_cast<int>(retrieved.size()));
    for (int i = 0; i < limit; ++i) {
        if (judge(retrieved[static_cast<std::size_t>(i)])) {
            ++relevant;
        }
    }
    return static_cast<double>(relevant) / static_cast<double>(kp);
}

const char* mode_name(QueryMode m) {
    switch (m) {
        case QueryMode::lrem: return "lrem";
        case QueryMode::empty_cot: return "empty_cot";
        case QueryMode::random_cot: return "random_cot";
        case QueryMode::query_cot: return "query_cot";
    }
    return "?";
}

QueryMode mode_from_name(const std::string& name) {
    if (name == "lrem") return QueryMode::lrem;
    if (name == "empty_cot") return QueryMode::empty_cot;
    if (name == "random_cot") return QueryMode::random_cot;
    if (name == "query_cot") return QueryMode::query_cot;
    throw std::invalid_argument("unknown query mode: " + name);
}

std::string report_to_json(const EvalReport& r) {
    json per_cat = json::object();
    for (const auto& [name, cm] : r.per_category) {
        per_cat[name] = {{"queries", cm.queries},
                         {"hitrate", cm.hitrate},
                         {"precision", cm.precision}};
    }
    const json j = {{"mode", r.mode},
                    {"k", r.k},
                    {"kp", r.kp},
                    {"lrem_fallbacks", r.lrem_fallbacks},
                    {"per_category", per_cat},
                    {"overall",
                     {{"queries", r.overall.queries},
                      {"hitrate", r.overall.hitrate},
                      {"precision", r.overall.precision}}}};
    return j.dump(2) + "\n";
}

EvalReport report_from_json(const std::string& text) {
    const json j = json::parse(text);
    EvalReport r;
    r.mode = j.at("mode").get<std::string>();
    r.k = j.at("k").get<int>();
    r.kp = j.at("kp").get<int>();
    r.lrem_fallbacks = j.at("lrem_fallbacks").get<int>();
    for (const auto& [name, cm] : j.at("per_category").items()) {
        CategoryMetrics m;
        m.queries = cm.at("queries").get<int>();
        m.hitrate = cm.at("hitrate").get<double>();
        m.precision = cm.at("precision").get<double>();
        r.per_category[name] = m;
    }
    r.overall.queries = j.at("overall").at("queries").get<int>();
    r.overall.hitrate = j.at("overall").at("hitrate").get<double>();
    r.overall.precision = j.at("overall").at("precision").get<double>();
    return r;
}

}  // namespace lrem
