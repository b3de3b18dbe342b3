#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace lrem {

// Thread-local autodiff switch (see tensor.hpp). Lives here so parallel_for
// can propagate the caller's mode into its workers.
inline thread_local bool g_grad_enabled = true;

struct NoGradGuard {
    bool prev;
    NoGradGuard() : prev(g_grad_enabled) { g_grad_enabled = false; }
    ~NoGradGuard() { g_grad_enabled = prev; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;
};

// splitmix64 finalizer; used to derive independent rng streams from a base
// seed plus arbitrary tags (step, query index, rollout index, ...).
std::uint64_t mix64(std::uint64_t x);
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a,
                          std::uint64_t b = 0, std::uint64_t c = 0);

using Rng = std::mt19937_64;

// 53-bit uniform in [0,1); avoids implementation-defined distributions so
// sampled token streams are reproducible run-to-run.
inline double uniform01(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

std::array<unsigned char, 32> sha256(const void* data, std::size_t n);
std::string hex_of(const std::array<unsigned char, 32>& digest);
std::array<unsigned char, 32> sha256_file(const std::string& path);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);
std::vector<std::string> read_lines(const std::string& path);

// Static block partition over [0, n); worker exceptions are rethrown after
// join. Output slots must be disjoint per index, which also keeps results
// independent of the thread count.
void parallel_for(int n, const std::function<void(int)>& fn);

}  // namespace lrem
