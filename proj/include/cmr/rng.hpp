#pragma once
// Deterministic, platform-independent pseudo-random primitives. Every
// stochastic choice in the project (parameter init, padding vectors,
// shuffles, synthetic data) flows through these so that a fixed seed gives
// bit-identical results across runs and machines. std::mt19937 plus the
// standard distributions is avoided on purpose: distribution output is
// implementation-defined.

#include <cmath>
#include <cstdint>
#include <vector>

namespace cmr {

// splitmix64 finalizer; also used as a general-purpose avalanche mix.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// FNV-1a over bytes, seeded. Stable across platforms.
inline std::uint64_t fnv1a64(const void* data, std::size_t size, std::uint64_t seed = 0) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = 0xcbf29ce484222325ULL ^ mix64(seed);
    for (std::size_t i = 0; i < size; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

class SplitMix64 {
  public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1) with 53 bits of precision.
    double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform in [0, bound). Rejection-free modulo is fine here: bound is
    // tiny relative to 2^64 so the bias is far below any observable effect,
    // and determinism is what matters.
    std::uint64_t next_below(std::uint64_t bound) { return bound == 0 ? 0 : next_u64() % bound; }

    // Standard normal via Box-Muller. Consumes two uniforms per pair.
    double next_gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = next_unit();
        while (u1 <= 0.0) u1 = next_unit();
        const double u2 = next_unit();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 6.283185307179586476925286766559 * u2;
        spare_ = radius * std::sin(angle);
        have_spare_ = true;
        return radius * std::cos(angle);
    }

  private:
    std::uint64_t state_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

// In-place Fisher-Yates with an explicit generator.
template <typename T>
void deterministic_shuffle(std::vector<T>& items, SplitMix64& rng) {
    for (std::size_t i = items.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng.next_below(i));
        std::swap(items[i - 1], items[j]);
    }
}

}  // namespace cmr
