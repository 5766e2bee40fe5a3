#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace sad {

// Deterministic RNG with hand-rolled distributions. std:: distributions are
// implementation-defined, so results would not be stable across toolchains;
// everything here is pinned down to the bit.
class Rng {
public:
    explicit Rng(uint64_t seed) {
        // splitmix64 expansion of the seed into xoshiro256** state
        uint64_t x = seed;
        for (auto& s : state_) {
            x += 0x9e3779b97f4a7c15ULL;
            uint64_t z = x;
            z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
            z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
            s = z ^ (z >> 31);
        }
    }

    // Derives an independent stream, e.g. one per user or per job.
    Rng fork(uint64_t salt) const {
        return Rng(state_[0] ^ (salt * 0x9e3779b97f4a7c15ULL + 0x2545f4914f6cdd1dULL));
    }

    uint64_t next_u64() {
        uint64_t* s = state_;
        const uint64_t result = rotl(s[1] * 5, 7) * 9;
        const uint64_t t = s[1] << 17;
        s[2] ^= s[0];
        s[3] ^= s[1];
        s[1] ^= s[2];
        s[0] ^= s[3];
        s[2] ^= t;
        s[3] = rotl(s[3], 45);
        return result;
    }

    // Uniform in [0, 1) with 53 bits of mantissa.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n) by rejection, bias-free.
    uint64_t below(uint64_t n) {
        if (n == 0) throw std::invalid_argument("Rng::below: n must be positive");
        const uint64_t threshold = (0 - n) % n;
        for (;;) {
            uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

    // Exponential with the given rate, by inversion.
    double exponential(double rate) { return -std::log(1.0 - uniform()) / rate; }

    // Standard normal via Box-Muller with a cached spare.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // Fisher-Yates shuffle.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    // First k of a shuffled index range: a uniform sample without replacement.
    std::vector<size_t> sample_without_replacement(size_t n, size_t k) {
        if (k > n) throw std::invalid_argument("Rng::sample_without_replacement: k > n");
        std::vector<size_t> idx(n);
        for (size_t i = 0; i < n; ++i) idx[i] = i;
        for (size_t i = 0; i < k; ++i) {
            size_t j = i + static_cast<size_t>(below(n - i));
            std::swap(idx[i], idx[j]);
        }
        idx.resize(k);
        return idx;
    }

private:
    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    uint64_t state_[4]{};
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace sad
