#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace ynet {

using Rng = std::mt19937_64;

// Distribution sampling is hand-rolled on top of raw 64-bit draws so that
// results are identical across standard libraries and platforms. The
// reproducibility contract (same seed -> bit-identical run) depends on it.

inline double uniform01(Rng& rng) {
    // 53 random mantissa bits -> [0, 1)
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform(Rng& rng, double lo, double hi) {
    return lo + (hi - lo) * uniform01(rng);
}

inline double normal(Rng& rng) {
    // Box-Muller, sine branch discarded. Two draws per sample keeps the
    // stream position independent of call history.
    double u1 = uniform01(rng);
    double u2 = uniform01(rng);
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Derive an independent stream seed from (base, tags...). Used to decouple
// e.g. the dropout stream from the shuffle stream, and per-epoch reshuffles.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag) {
    return splitmix64(base ^ splitmix64(tag));
}

inline std::uint64_t derive_seed(std::uint64_t base, std::string_view tag) {
    std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
    for (char c : tag) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return derive_seed(base, h);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::string_view tag, std::uint64_t n) {
    return derive_seed(derive_seed(base, tag), n);
}

}  // namespace ynet
