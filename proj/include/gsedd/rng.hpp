#ifndef GSEDD_RNG_HPP
#define GSEDD_RNG_HPP

#include <cstdint>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string_view>

namespace gsedd {

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Derives an independent stream seed from (base seed, purpose label[, index]).
/// Adding a new consumer label never perturbs existing streams.
inline uint64_t derive_seed(uint64_t base, std::string_view label) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : label) {
        h ^= static_cast<uint8_t>(c);
        h *= 0x100000001b3ULL;
    }
    return splitmix64(base ^ splitmix64(h));
}

inline uint64_t derive_seed(uint64_t base, std::string_view label, uint64_t index) {
    return splitmix64(derive_seed(base, label) ^ splitmix64(index + 0x632be59bd9b4e019ULL));
}

/// xoshiro256** seeded via splitmix64. Hand-rolled draws so results do not
/// depend on the standard library's distribution implementations.
class Rng {
public:
    explicit Rng(uint64_t seed) {
        uint64_t x = seed;
        for (auto& si : s_) {
            x = splitmix64(x);
            si = x;
        }
        has_normal_ = false;
    }

    uint64_t next() {
        const uint64_t result = rotl(s_[1] * 5, 7) * 9;
        const uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    /// Uniform double in [0, 1).
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    /// Uniform integer in [0, n).
    int uniform_int(int n) {
        if (n <= 0) throw std::invalid_argument("uniform_int: n must be positive");
        // rejection sampling to avoid modulo bias
        const uint64_t limit = UINT64_MAX - UINT64_MAX % static_cast<uint64_t>(n);
        uint64_t v = next();
        while (v >= limit) v = next();
        return static_cast<int>(v % static_cast<uint64_t>(n));
    }

    double normal() {
        if (has_normal_) {
            has_normal_ = false;
            return cached_normal_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        cached_normal_ = r * std::sin(a);
        has_normal_ = true;
        return r * std::cos(a);
    }

    /// Draws an index from an unnormalized non-negative weight vector.
    int categorical(std::span<const double> weights) {
        double total = 0.0;
        for (double w : weights) total += w;
        if (!(total > 0.0)) throw std::invalid_argument("categorical: weights sum to zero");
        double u = uniform() * total;
        for (size_t i = 0; i + 1 < weights.size(); ++i) {
            u -= weights[i];
            if (u < 0.0) return static_cast<int>(i);
        }
        return static_cast<int>(weights.size() - 1);
    }

private:
    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    uint64_t s_[4];
    double cached_normal_ = 0.0;
    bool has_normal_ = false;
};

}  // namespace gsedd

#endif
