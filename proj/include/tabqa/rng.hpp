// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>

namespace tabqa {

/// splitmix64; self-contained so that seeded streams are byte-identical
/// across platforms and standard library versions.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    /// Uniform in [0, n); n must be positive.
    std::uint64_t bounded(std::uint64_t n) {
        const std::uint64_t threshold = (0 - n) % n;
        for (;;) {
            const std::uint64_t value = next();
            if (value >= threshold) return value % n;
        }
    }

    /// Uniform in [0, 1) with 53 bits.
    double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  private:
    std::uint64_t state_ = 0;
};

} // namespace tabqa
