#pragma once

#include <cstdint>

namespace qmcfb {

/**
 * Counter-based generator: the i-th draw of stream `seed` is a fixed hash of
 * (seed, i), so sub-streams (seed + r) and draws are reproducible independently
 * of call order across streams.
 */
class CounterRng {
public:
    explicit CounterRng(std::uint64_t seed) : seed_(seed) {}

    std::uint64_t seed() const { return seed_; }
    std::uint64_t counter() const { return counter_; }

    std::uint64_t next_u64() { return at(counter_++); }

    /// Uniform on [0,1) with 53 random bits.
    double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    std::uint64_t at(std::uint64_t index) const {
        // splitmix64 finalizer over a Weyl-sequence key derived from the seed
        std::uint64_t z = mix(seed_ ^ 0x6a09e667f3bcc909ULL) + (index + 1) * 0x9e3779b97f4a7c15ULL;
        return mix(z);
    }

private:
    static std::uint64_t mix(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::uint64_t seed_;
    std::uint64_t counter_ = 0;
};

}  // namespace qmcfb
