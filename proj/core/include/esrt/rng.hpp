#pragma once

#include <cmath>
#include <cstdint>

namespace esrt {

// xoshiro256** with splitmix64 seeding. Every learnable parameter and every
// sampling decision in the project draws from this generator, so a run is
// fully determined by its seed.
class Rng {
public:
    explicit Rng(uint64_t seed) {
        // splitmix64 expansion of the seed into the four state words
        uint64_t x = seed;
        for (auto& w : state_) {
            x += 0x9E3779B97F4A7C15ull;
            uint64_t z = x;
            z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
            z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
            w = z ^ (z >> 31);
        }
    }

    uint64_t next_u64() {
        const uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // uniform in [0, 1)
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    float next_float() { return static_cast<float>(next_double()); }

    // uniform integer in [0, n)
    uint64_t next_below(uint64_t n) { return next_u64() % n; }

    // standard normal via Box-Muller
    float next_gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = next_double();
        double u2 = next_double();
        while (u1 <= 1e-12) u1 = next_double();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 6.283185307179586 * u2;
        spare_ = static_cast<float>(r * std::sin(theta));
        have_spare_ = true;
        return static_cast<float>(r * std::cos(theta));
    }

private:
    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    uint64_t state_[4];
    float spare_ = 0.0f;
    bool have_spare_ = false;
};

} // namespace esrt
