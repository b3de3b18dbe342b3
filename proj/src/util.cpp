#include "lrem/util.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <exception>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace lrem {

std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b,
                          std::uint64_t c) {
    std::uint64_t s = mix64(base);
    s = mix64(s ^ mix64(a));
    s = mix64(s ^ mix64(b));
    s = mix64(s ^ mix64(c));
    return s;
}

std::array<unsigned char, 32> sha256(const void* data, std::size_t n) {
    std::array<unsigned char, 32> out{};
    unsigned int len = 0;
    if (EVP_Digest(data, n, out.data(), &len, EVP_sha256(), nullptr) != 1 ||
        len != out.size()) {
        throw std::runtime_error("sha256 digest failed");
    }
    return out;
}

std::string hex_of(const std::array<unsigned char, 32>& digest) {
    static const char* k = "0123456789abcdef";
    std::string s;
    s.reserve(64);
    for (unsigned char b : digest) {
        s.push_back(k[b >> 4]);
        s.push_back(k[b & 0xf]);
    }
    return s;
}

std::array<unsigned char, 32> sha256_file(const std::string& path) {
    const std::string bytes = read_file(path);
    return sha256(bytes.data(), bytes.size());
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in.is_open()) {
        throw std::runtime_error("cannot open file: " + path);
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out.is_open()) {
        throw std::runtime_error("cannot write file: " + path);
    }
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out.good()) {
        throw std::runtime_error("write failed: " + path);
    }
}

std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in.is_open()) {
        throw std::runtime_error("cannot open file: " + path);
    }
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        lines.push_back(line);
    }
    return lines;
}

void parallel_for(int n, const std::function<void(int)>& fn) {
    if (n <= 0) {
        return;
    }
    unsigned hw = std::thread::hardware_concurrency();
    int nthreads = static_cast<int>(hw == 0 ? 2 : hw);
    if (nthreads > n) {
        nthreads = n;
    }
    if (nthreads <= 1) {
        for (int i = 0; i < n; ++i) {
            fn(i);
        }
        return;
    }
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(nthreads));
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(nthreads));
    const int chunk = (n + nthreads - 1) / nthreads;
    const bool grad_mode = g_grad_enabled;
    for (int t = 0; t < nthreads; ++t) {
        const int lo = t * chunk;
        const int hi = std::min(n, lo + chunk);
        pool.emplace_back([&, t, lo, hi, grad_mode]() {
            g_grad_enabled = grad_mode;
            try {
                for (int i = lo; i < hi; ++i) {
                    fn(i);
                }
            } catch (...) {
                errors[static_cast<std::size_t>(t)] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) {
        th.join();
    }
    for (auto& e : errors) {
        if (e) {
            std::rethrow_exception(e);
        }
    }
}

}  // namespace lrem
