#pragma once

// Deterministic random streams for reproducible Monte-Carlo runs.
//
// Every run derives its streams from (master_seed, lane, tag) through
// SplitMix64 mixing, so no two runs ever share an engine state. The engine is
// std::mt19937_64, whose output sequence is pinned by the standard. The
// floating-point and integer helpers below deliberately avoid
// std::uniform_*_distribution: those are implementation-defined, and the
// experiment harness promises bit-identical output for a given seed.

#include <cmath>
#include <cstdint>
#include <random>

namespace delaysched {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Stream tags. Scheduler and learner randomness are split by construction so
// that scheduling decisions can never depend on action draws and vice versa.
namespace stream_tag {
inline constexpr std::uint64_t scheduler = 0;
inline constexpr std::uint64_t learner = 1;
inline constexpr std::uint64_t instance = 2;
}  // namespace stream_tag

inline std::uint64_t derive_key(std::uint64_t master, std::uint64_t lane, std::uint64_t tag) {
    std::uint64_t k = splitmix64(master);
    k = splitmix64(k ^ (0x9e3779b97f4a7c15ULL * (lane + 1)));
    k = splitmix64(k ^ (0xd1b54a32d192ed03ULL * (tag + 1)));
    return k;
}

class RngStream {
public:
    explicit RngStream(std::uint64_t key) : engine_(key) {}

    RngStream(std::uint64_t master, std::uint64_t lane, std::uint64_t tag)
        : engine_(derive_key(master, lane, tag)) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1), 53-bit resolution.
    double u01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    // Uniform in (0, 1]; never returns zero, safe as a divisor.
    double u01_pos() { return static_cast<double>((engine_() >> 11) + 1) * 0x1.0p-53; }

    bool bernoulli(double p) { return u01() < p; }

    // Uniform integer in [0, n). Lemire's multiply-shift with rejection.
    std::uint64_t below(std::uint64_t n) {
        if (n <= 1) return 0;
        while (true) {
            std::uint64_t x = engine_();
            __uint128_t m = static_cast<__uint128_t>(x) * n;
            auto lo = static_cast<std::uint64_t>(m);
            if (lo >= n) return static_cast<std::uint64_t>(m >> 64);
            std::uint64_t thresh = (0 - n) % n;
            if (lo >= thresh) return static_cast<std::uint64_t>(m >> 64);
        }
    }

    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        return lo + static_cast<std::int64_t>(below(static_cast<std::uint64_t>(hi - lo + 1)));
    }

    // Geometric on {0, 1, 2, ...} with the given mean (success prob 1/(mean+1)).
    std::int64_t geometric(double mean) {
        if (mean <= 0.0) return 0;
        double q = 1.0 / (mean + 1.0);
        double u = u01();
        double g = std::floor(std::log1p(-u) / std::log1p(-q));
        return g < 0.0 ? 0 : static_cast<std::int64_t>(g);
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace delaysched
