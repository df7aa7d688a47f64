#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

namespace bdlm {

// splitmix64. Hand-rolled so streams are identical across platforms and
// standard-library versions; every sample in the project derives from a named
// sub-seed of the single run seed.
struct Rng {
    uint64_t state;

    explicit Rng(uint64_t seed) : state(seed) {}

    uint64_t next() {
        state += 0x9e3779b97f4a7c15ULL;
        uint64_t z = state;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // [0,1) with 53 bits
    double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double normal(double mean = 0.0, double stddev = 1.0) {
        if (have_spare_) {
            have_spare_ = false;
            return mean + stddev * spare_;
        }
        double u1 = uniform01();
        while (u1 <= 0.0) u1 = uniform01();
        double u2 = uniform01();
        double r = std::sqrt(-2.0 * std::log(u1));
        constexpr double two_pi = 6.283185307179586476925286766559;
        spare_ = r * std::sin(two_pi * u2);
        have_spare_ = true;
        return mean + stddev * r * std::cos(two_pi * u2);
    }

    // unbiased integer in [0,n)
    int64_t uniform_int(int64_t n) {
        uint64_t un = static_cast<uint64_t>(n);
        uint64_t limit = UINT64_MAX - UINT64_MAX % un;
        uint64_t x = next();
        while (x >= limit) x = next();
        return static_cast<int64_t>(x % un);
    }

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (int64_t i = static_cast<int64_t>(v.size()) - 1; i > 0; --i) {
            int64_t j = uniform_int(i + 1);
            std::swap(v[i], v[j]);
        }
    }

  private:
    bool have_spare_ = false;
    double spare_ = 0.0;
};

// Named sub-seed derivation: FNV-1a over the label folded into the master
// seed, finalized through one splitmix step.
inline uint64_t derive_seed(uint64_t master, std::string_view name, uint64_t index = 0) {
    uint64_t h = 14695981039346656037ULL;
    auto mix = [&h](uint64_t v) {
        for (int b = 0; b < 8; ++b) {
            h ^= (v >> (8 * b)) & 0xffULL;
            h *= 1099511628211ULL;
        }
    };
    mix(master);
    for (char c : name) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ULL;
    }
    mix(index);
    Rng r(h);
    return r.next();
}

}  // namespace bdlm
