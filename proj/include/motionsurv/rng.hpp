#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <utility>

namespace motionsurv {

/// Engine used for every random draw in the library.
using Engine = std::mt19937_64;

/// SplitMix64 finalizer; a bijective 64-bit mixer.
std::uint64_t mix64(std::uint64_t x) noexcept;

/// Stable 64-bit hash of a stream name (FNV-1a).
std::uint64_t hash_name(std::string_view name) noexcept;

/// Derive an independent child seed from a parent seed and a counter path.
///
/// Streams are addressed by (seed, a, b, c) instead of by draw order, so a
/// subject, replicate or particle always sees the same numbers regardless of
/// how work is scheduled across threads.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0,
                          std::uint64_t c = 0) noexcept;

/// Named sub-stream of a master seed ("generate", "train", "tune", ...).
std::uint64_t named_seed(std::uint64_t master, std::string_view name) noexcept;

inline Engine make_engine(std::uint64_t seed) { return Engine{seed}; }

/// Uniform draw in [0, 1) with 53 bits of precision.
inline double uniform01(Engine& eng) noexcept {
    return static_cast<double>(eng() >> 11) * 0x1.0p-53;
}

/// Standard normal draw (Box-Muller; one value per call, deterministic).
double standard_normal(Engine& eng) noexcept;

/// Unbiased integer in [0, n) by rejection. n must be positive.
std::uint64_t uniform_index(Engine& eng, std::uint64_t n) noexcept;

/// Fisher-Yates shuffle. Unlike std::shuffle the permutation does not depend
/// on the standard library in use.
template <class T>
void shuffle(std::span<T> items, Engine& eng) noexcept {
    for (std::size_t i = items.size(); i > 1; --i) {
        using std::swap;
        swap(items[i - 1], items[uniform_index(eng, i)]);
    }
}

}  // namespace motionsurv
