#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace whitenopt {

// Deterministic pseudo-random stream (xoshiro256++). The standard library's
// distributions are implementation-defined, so every draw the project needs
// is derived here from raw 64-bit outputs; identical seeds give identical
// streams on every build. State is four words, which keeps run checkpoints
// bit-exact.
class Rng {
public:
    explicit Rng(std::uint64_t seed) {
        // SplitMix64 expansion of the seed into the full state.
        std::uint64_t x = seed;
        for (auto& word : state_) word = splitmix(x);
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform in [0, 1), 53 random bits.
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Standard normal via Box-Muller (cosine branch only). Slightly wasteful
    // but stateless, so checkpoint/restore cannot desynchronise a cached
    // spare sample.
    double normal() {
        const double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;  // (0, 1]
        const double u2 = uniform01();
        constexpr double two_pi = 6.283185307179586476925286766559;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
    }

    // Unbiased integer in [0, bound) via rejection.
    std::uint64_t below(std::uint64_t bound) {
        const std::uint64_t limit = ~std::uint64_t{0} - ~std::uint64_t{0} % bound;
        std::uint64_t x;
        do {
            x = next_u64();
        } while (x >= limit);
        return x % bound;
    }

    std::array<std::uint64_t, 4> state() const { return state_; }
    void set_state(const std::array<std::uint64_t, 4>& s) { state_ = s; }

    // Deterministically derive an independent sub-stream seed, so model
    // construction, batch sampling etc. never consume from each other.
    static std::uint64_t derive(std::uint64_t seed, std::uint64_t tag) {
        std::uint64_t x = seed ^ (0x9e3779b97f4a7c15ULL * (tag + 1));
        return splitmix(x);
    }

private:
    static std::uint64_t rotl(std::uint64_t v, int k) { return (v << k) | (v >> (64 - k)); }

    static std::uint64_t splitmix(std::uint64_t& x) {
        x += 0x9e3779b97f4a7c15ULL;
        std::uint64_t z = x;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::array<std::uint64_t, 4> state_{};
};

}  // namespace whitenopt
