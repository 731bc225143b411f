#pragma once

#include <cstdint>

namespace metabound {

/// Applies the SplitMix64 finalizer: a bijective 64-bit mix.
inline std::uint64_t mix64(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xbf58476d1ce4e5b9ULL;
    z ^= z >> 27;
    z *= 0x94d049bb133111ebULL;
    z ^= z >> 31;
    return z;
}

constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

/// Derives an independent stream seed from a base seed and one or more
/// coordinates. Each coordinate is folded in through the SplitMix64
/// finalizer, so nearby coordinates map to unrelated seeds.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a) {
    return mix64(mix64(base + kGolden) ^ (a + kGolden));
}
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b) {
    return mix64(derive_seed(base, a) ^ (b + kGolden));
}
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b,
                                 std::uint64_t c) {
    return mix64(derive_seed(base, a, b) ^ (c + kGolden));
}

/// Deterministic SplitMix64 generator. Self-contained so that streams are
/// bit-identical across compilers and standard libraries; the harness's
/// byte-exact reproducibility rests on this.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        state_ += kGolden;
        return mix64(state_);
    }

    /// Uniform double in [0, 1) with 53 random mantissa bits.
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    /// Uniform double in [lo, hi).
    double next_uniform(double lo, double hi) {
        return lo + (hi - lo) * next_double();
    }

    /// Uniform integer in [0, bound) by rejection, so the result is unbiased
    /// and consumes a deterministic-given-stream number of draws.
    std::uint64_t next_below(std::uint64_t bound) {
        const std::uint64_t threshold = (0 - bound) % bound;
        for (;;) {
            const std::uint64_t r = next_u64();
            if (r >= threshold) return r % bound;
        }
    }

private:
    std::uint64_t state_;
};

} // namespace metabound
