// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

namespace peta::numerics {

// SplitMix64 stream (Steele/Lea/Vigna mixing constants). Pure 64-bit integer
// arithmetic plus exact double conversion, so streams are identical on every
// platform. Gaussian draws use an Irwin-Hall sum of 12 uniforms, which keeps
// weight init bit-stable too (no libm involved).
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed) {}

    uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ull;
        uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Standard normal, Irwin-Hall(12) - 6. Mean 0, variance exactly 1.
    double normal() {
        double s = 0.0;
        for (int i = 0; i < 12; ++i) s += uniform();
        return s - 6.0;
    }

    // Uniform integer in [0, n). n must be positive.
    int64_t below(int64_t n) { return static_cast<int64_t>(next_u64() % static_cast<uint64_t>(n)); }

    // Derive an independent stream for a tagged sub-task; deterministic in
    // (current seed, tag) and does not advance this stream.
    Rng derive(uint64_t tag) const {
        Rng mixer(state_ ^ (0x6C62272E07BB0142ull + tag * 0x100000001b3ull));
        return Rng(mixer.next_u64());
    }

    // Fisher-Yates.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (int64_t i = static_cast<int64_t>(v.size()) - 1; i > 0; --i) {
            const int64_t j = below(i + 1);
            std::swap(v[static_cast<size_t>(i)], v[static_cast<size_t>(j)]);
        }
    }

    uint64_t state() const { return state_; }

private:
    uint64_t state_;
};

}  // namespace peta::numerics
