// rng.hpp — counter-based random number generation (Philox4x32-10)
//
// A counter-based generator keeps trajectories reproducible from a single
// recorded 64-bit seed: the stream is a pure function of (seed, counter),
// independent of call history, platform word size or library version.

#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace phasescope {

// Philox4x32-10 (Salmon, Moraes, Dror, Shaw; SC'11 reference constants).
class PhiloxRng {
public:
    explicit PhiloxRng(std::uint64_t seed) : key0_(static_cast<std::uint32_t>(seed)),
                                             key1_(static_cast<std::uint32_t>(seed >> 32)) {}

    // Next uniform u32 from the stream.
    std::uint32_t next_u32() {
        if (avail_ == 0) {
            refill();
            avail_ = 4;
        }
        return block_[4 - avail_--];
    }

    // Uniform double in (0, 1]; never returns 0 so logs are safe.
    double next_open_unit() {
        return (static_cast<double>(next_u32()) + 1.0) * 0x1p-32;
    }

    // Uniform double in [0, 1).
    double next_unit() {
        return static_cast<double>(next_u32()) * 0x1p-32;
    }

    // Standard normal deviate via Box-Muller (deterministic, rejection-free).
    double next_normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        const double u1 = next_open_unit();
        const double u2 = next_unit();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double phi = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(phi);
        have_spare_ = true;
        return r * std::cos(phi);
    }

private:
    static std::uint32_t mulhi(std::uint32_t a, std::uint32_t b) {
        return static_cast<std::uint32_t>((static_cast<std::uint64_t>(a) * b) >> 32);
    }
    static std::uint32_t mullo(std::uint32_t a, std::uint32_t b) {
        return a * b;
    }

    void refill() {
        std::uint32_t x0 = ctr_[0], x1 = ctr_[1], x2 = ctr_[2], x3 = ctr_[3];
        std::uint32_t k0 = key0_, k1 = key1_;
        for (int round = 0; round < 10; ++round) {
            const std::uint32_t hi0 = mulhi(0xD2511F53u, x0), lo0 = mullo(0xD2511F53u, x0);
            const std::uint32_t hi1 = mulhi(0xCD9E8D57u, x2), lo1 = mullo(0xCD9E8D57u, x2);
            const std::uint32_t y0 = hi1 ^ x1 ^ k0;
            const std::uint32_t y1 = lo1;
            const std::uint32_t y2 = hi0 ^ x3 ^ k1;
            const std::uint32_t y3 = lo0;
            x0 = y0; x1 = y1; x2 = y2; x3 = y3;
            k0 += 0x9E3779B9u;
            k1 += 0xBB67AE85u;
        }
        block_[0] = x0; block_[1] = x1; block_[2] = x2; block_[3] = x3;
        // 128-bit counter increment
        if (++ctr_[0] == 0 && ++ctr_[1] == 0 && ++ctr_[2] == 0) ++ctr_[3];
    }

    std::uint32_t key0_, key1_;
    std::uint32_t ctr_[4] = {0, 0, 0, 0};
    std::uint32_t block_[4] = {0, 0, 0, 0};
    int avail_ = 0;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

} // namespace phasescope
