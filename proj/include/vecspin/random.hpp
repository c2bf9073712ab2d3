#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <mutex>
#include <random>
#include <thread>
#include <vector>

namespace vecspin {

// Counter-based seed derivation: every random stream is identified by
// (top-level seed, stream tag, task index) and seeded with
//   splitmix64(splitmix64(splitmix64(seed) ^ tag) ^ index).
// Parallel tasks therefore draw identical numbers regardless of scheduling.

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

enum class Stream : std::uint64_t {
    PhiMonteCarlo = 1,
    Cascade = 2,
    CascadeField = 3,
    Disorder = 4,
    PerturbationDisorder = 5,
    PerturbationU = 6,
    OptimizerStart = 7,
    Test = 99,
};

inline std::uint64_t derive_seed(std::uint64_t seed, Stream tag, std::uint64_t index) {
    return splitmix64(splitmix64(splitmix64(seed) ^ static_cast<std::uint64_t>(tag)) ^ index);
}

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed, Stream tag, std::uint64_t index) {
    return Rng(derive_seed(seed, tag, index));
}

/// Runs fn(i) for i in [0, n) on up to `threads` workers. Each index is
/// executed exactly once; callers write results into per-index slots.
inline void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
    const std::size_t workers = std::min<std::size_t>(n, threads > 1 ? static_cast<std::size_t>(threads) : 1);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    std::exception_ptr failure;
    std::mutex failure_mutex;
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (std::size_t i = w; i < n; i += workers) fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

/// Mean and standard error of the mean.
struct MeanError {
    double mean = 0.0;
    double std_error = 0.0;
};

inline MeanError mean_error(const std::vector<double>& xs) {
    MeanError out;
    if (xs.empty()) return out;
    double s = 0.0;
    for (double x : xs) s += x;
    out.mean = s / static_cast<double>(xs.size());
    if (xs.size() < 2) return out;
    double ss = 0.0;
    for (double x : xs) ss += (x - out.mean) * (x - out.mean);
    out.std_error = std::sqrt(ss / static_cast<double>(xs.size() - 1) / static_cast<double>(xs.size()));
    return out;
}

} // namespace vecspin
