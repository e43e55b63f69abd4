#pragma once

// Counter-based random numbers. Every draw is a pure function of
// (seed, stream, a, b), so results do not depend on evaluation order or on
// how work is split across threads.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

namespace tclreg::rng {

enum class Stream : std::uint64_t {
    house_params = 1,
    initial_state = 2,
    dispatch = 3,
    ev_selection = 4,
    measurement_noise = 5,
    peak_scan = 6,
    trial_seed = 7,
};

constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

constexpr std::uint64_t key(std::uint64_t seed, Stream stream, std::uint64_t a,
                            std::uint64_t b = 0, std::uint64_t c = 0) noexcept {
    std::uint64_t h = mix64(seed ^ 0x6A09E667F3BCC908ULL);
    h = mix64(h ^ static_cast<std::uint64_t>(stream));
    h = mix64(h ^ a);
    h = mix64(h ^ (b + 0x3C6EF372FE94F82BULL));
    return mix64(h ^ (c + 0xA54FF53A5F1D36F1ULL));
}

/// Uniform double in [0, 1) with 53 random bits.
constexpr double to_unit(std::uint64_t bits) noexcept {
    return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

constexpr double uniform(std::uint64_t seed, Stream stream, std::uint64_t a,
                         std::uint64_t b = 0, std::uint64_t c = 0) noexcept {
    return to_unit(key(seed, stream, a, b, c));
}

/// Standard normal via Box-Muller on two independent counter draws.
inline double normal(std::uint64_t seed, Stream stream, std::uint64_t a, std::uint64_t b = 0) {
    const double u1 = 1.0 - uniform(seed, stream, a, b, 0);  // (0, 1]
    const double u2 = uniform(seed, stream, a, b, 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

/// FNV-1a, used to turn string identifiers into stable counter keys.
constexpr std::uint64_t hash_string(std::string_view s) noexcept {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 0x100000001B3ULL;
    }
    return h;
}

/// Sequential convenience wrapper: successive calls walk the counter.
class Sequence {
public:
    Sequence(std::uint64_t seed, Stream stream, std::uint64_t a, std::uint64_t b = 0)
        : seed_(seed), stream_(stream), a_(a), b_(b) {}

    double uniform() noexcept { return rng::uniform(seed_, stream_, a_, b_, counter_++); }
    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

private:
    std::uint64_t seed_;
    Stream stream_;
    std::uint64_t a_;
    std::uint64_t b_;
    std::uint64_t counter_ = 0;
};

}  // namespace tclreg::rng
