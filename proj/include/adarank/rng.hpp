#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace adarank {

// 64-bit FNV-1a. Used to derive per-stream seeds from string keys so that
// per-query randomness does not depend on execution order or platform.
inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

// Deterministic RNG wrapper. mt19937_64 raw output is fully specified by the
// standard; the distribution helpers below are hand-rolled because the
// standard <random> distributions are implementation-defined and would break
// golden tests across toolchains.
class DetRng {
public:
    explicit DetRng(std::uint64_t seed) : gen_(seed) {}

    // Sub-stream derived from a base seed and a string key (e.g. a query id).
    DetRng(std::uint64_t seed, std::string_view stream)
        : gen_(seed ^ (fnv1a64(stream) | 1ULL)) {}

    std::uint64_t next() { return gen_(); }

    // Uniform in [0,1) with 53 random bits.
    double uniform01() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    // Uniform integer in [0, bound). Modulo bias is ~bound/2^64, irrelevant here.
    std::uint64_t uniform_int(std::uint64_t bound) {
        return bound == 0 ? 0 : gen_() % bound;
    }

    bool bernoulli(double p) { return uniform01() < p; }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(uniform_int(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 gen_;
};

}  // namespace adarank
