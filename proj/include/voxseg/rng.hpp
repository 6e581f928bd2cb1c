#pragma once

#include <cmath>
#include <cstdint>

namespace voxseg {

// Counter-based generator: every draw is a pure function of
// (seed, stream, counter), so results do not depend on call interleaving or
// scheduling. Streams are split per purpose (weight init, per-iteration
// sample slots, augmentation, ...) by hashing the key tuple.
class Rng {
public:
    explicit Rng(uint64_t seed, uint64_t s0 = 0, uint64_t s1 = 0, uint64_t s2 = 0)
        : state_(mix(mix(mix(mix(0x9e3779b97f4a7c15ull ^ seed) + s0) + s1) + s2)) {}

    Rng stream(uint64_t a, uint64_t b = 0, uint64_t c = 0) const {
        Rng r(0);
        r.state_ = mix(mix(mix(state_ + a) + b) + c);
        return r;
    }

    uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ull;
        return mix(state_);
    }

    // Unbiased enough for sampling indices: 128-bit multiply-shift reduction.
    uint64_t next_below(uint64_t n) {
        return static_cast<uint64_t>((static_cast<__uint128_t>(next_u64()) * n) >> 64);
    }

    int64_t next_in(int64_t lo, int64_t hi) { // inclusive range
        return lo + static_cast<int64_t>(next_below(static_cast<uint64_t>(hi - lo + 1)));
    }

    double next_unit() { // [0, 1)
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double next_range(double lo, double hi) { return lo + (hi - lo) * next_unit(); }

    // Box-Muller; one value per call, the pair's second half is discarded to
    // keep draws independent of call parity.
    double next_normal() {
        double u1 = next_unit();
        double u2 = next_unit();
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
    }

    bool next_bool() { return (next_u64() & 1ull) != 0; }

private:
    static uint64_t mix(uint64_t z) { // splitmix64 finalizer
        z += 0x9e3779b97f4a7c15ull;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    uint64_t state_;
};

} // namespace voxseg
