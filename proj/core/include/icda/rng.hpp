#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

#include "icda/check.hpp"

namespace icda {

// Counter-based generator (splitmix64 core). Every consumer in a run derives
// its own stream from one root seed via split(), so no two components ever
// share generator state and the whole run is reproducible from a single
// integer. Identical seeds give identical streams on every platform.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // Uniform on [0, 1), 53-bit resolution.
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform on (0, 1]; never returns 0, safe under log().
    double next_double_open() {
        return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    // Standard normal via Box-Muller. Draws two uniforms per call and keeps no
    // cached second value, so the mapping from stream position to output is
    // stateless and copying an Rng never changes what it produces next.
    double normal() {
        double u1 = next_double_open();
        double u2 = next_double();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
    }

    // Unbiased integer in [0, n) by rejection.
    std::uint64_t next_below(std::uint64_t n) {
        ICDA_REQUIRE(n > 0, "next_below needs n > 0");
        std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t r = next_u64();
        while (r >= limit) r = next_u64();
        return r % n;
    }

    // Child stream keyed by label. Pure in (current state, label): calling it
    // does not advance this generator, and the same label always yields the
    // same child, so consumers can be wired up in any order.
    Rng split(std::string_view label) const {
        std::uint64_t h = 0xCBF29CE484222325ULL;
        for (char c : label) {
            h ^= static_cast<std::uint64_t>(static_cast<unsigned char>(c));
            h *= 0x100000001B3ULL;
        }
        return split(h);
    }

    Rng split(std::uint64_t key) const {
        std::uint64_t z = state_ ^ (0x9E3779B97F4A7C15ULL * (key | 1ULL));
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return Rng(z ^ (z >> 31));
    }

  private:
    std::uint64_t state_;
};

// Fisher-Yates shuffle driven by the given stream.
template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(rng.next_below(i));
        std::swap(v[i - 1], v[j]);
    }
}

}  // namespace icda
