#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace uniugg::core {

// splitmix64 step. Also used standalone to mix seeds.
inline uint64_t splitmix64_next(uint64_t& state) {
    uint64_t z = (state += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

// Deterministic seed derivation: hash a sequence of 64-bit words into one seed.
inline uint64_t mix_seed(std::initializer_list<uint64_t> words) {
    uint64_t s = 0x8f5c2e1ab39d447bull;
    for (uint64_t w : words) {
        s ^= w + 0x9e3779b97f4a7c15ull + (s << 6) + (s >> 2);
        splitmix64_next(s);
    }
    return s;
}

// Self-contained RNG so every draw is reproducible bit-for-bit across runs
// and platforms (std:: distributions are implementation-defined).
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed) {
        splitmix64_next(state_);
        splitmix64_next(state_);
    }

    uint64_t next_u64() { return splitmix64_next(state_); }

    // [0, 1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // inclusive range
    int64_t uniform_int(int64_t lo, int64_t hi) {
        uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
        return lo + static_cast<int64_t>(next_u64() % span);
    }

    // Box-Muller, pairs cached.
    double normal() {
        if (has_cached_) {
            has_cached_ = false;
            return cached_;
        }
        double u1 = 0.0;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        cached_ = r * std::sin(a);
        has_cached_ = true;
        return r * std::cos(a);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // k distinct indices from [0, n), deterministic partial Fisher-Yates.
    std::vector<int64_t> sample_without_replacement(int64_t n, int64_t k) {
        std::vector<int64_t> idx(static_cast<size_t>(n));
        for (int64_t i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = i;
        for (int64_t i = 0; i < k; ++i) {
            int64_t j = uniform_int(i, n - 1);
            std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(j)]);
        }
        idx.resize(static_cast<size_t>(k));
        return idx;
    }

private:
    uint64_t state_;
    bool has_cached_ = false;
    double cached_ = 0.0;
};

}  // namespace uniugg::core
