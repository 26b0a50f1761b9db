#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace ropnet::core {

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

// Derives an independent per-sample stream from a master seed, so parallel
// generation is order-independent.
inline uint64_t derive_seed(uint64_t master, uint64_t index) {
    return splitmix64(master ^ splitmix64(index + 1));
}

// mt19937_64 with explicit, platform-stable distributions (Box-Muller for
// normals) so regeneration from a recorded seed is bitwise reproducible.
class Rng {
  public:
    explicit Rng(uint64_t seed) : engine_(seed) {}

    uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1).
    double uniform01() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    long uniform_index(long n) {  // [0, n)
        return static_cast<long>(engine_() % static_cast<uint64_t>(n));
    }

    double normal(double sigma = 1.0) {
        if (have_spare_) {
            have_spare_ = false;
            return spare_ * sigma;
        }
        double u1 = uniform01();
        while (u1 <= 0.0) u1 = uniform01();
        double u2 = uniform01();
        double r = std::sqrt(-2.0 * std::log(u1));
        spare_ = r * std::sin(2.0 * M_PI * u2);
        have_spare_ = true;
        return r * std::cos(2.0 * M_PI * u2) * sigma;
    }

    // k distinct indices out of n, partial Fisher-Yates, order as drawn.
    std::vector<long> sample_without_replacement(long n, long k) {
        std::vector<long> pool(static_cast<size_t>(n));
        for (long i = 0; i < n; ++i) pool[static_cast<size_t>(i)] = i;
        std::vector<long> out(static_cast<size_t>(k));
        for (long i = 0; i < k; ++i) {
            long j = i + uniform_index(n - i);
            std::swap(pool[static_cast<size_t>(i)], pool[static_cast<size_t>(j)]);
            out[static_cast<size_t>(i)] = pool[static_cast<size_t>(i)];
        }
        return out;
    }

  private:
    std::mt19937_64 engine_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace ropnet::core
