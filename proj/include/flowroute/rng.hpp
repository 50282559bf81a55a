#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace flowroute {

// All randomness in the project flows through named sub-streams derived from
// one master seed, so toggling one consumer (dropout, shuffle, ...) does not
// perturb the draws seen by the others. Uniform/gaussian generation is done
// from raw mt19937_64 output rather than std distributions, which keeps the
// byte streams identical across standard libraries.
class Rng {
public:
    Rng(uint64_t master_seed, std::string_view stream, uint64_t index = 0)
        : engine_(derive_seed(master_seed, stream, index)) {}

    uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1) with 53-bit resolution.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n).
    uint64_t uniform_index(uint64_t n) {
        // rejection sampling to avoid modulo bias
        const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return x % n;
    }

    // Standard normal via Box-Muller.
    double gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            const size_t j = static_cast<size_t>(uniform_index(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    std::mt19937_64& engine() { return engine_; }

private:
    static uint64_t derive_seed(uint64_t master, std::string_view stream, uint64_t index) {
        // FNV-1a over the stream name, then splitmix64 finalization.
        uint64_t h = 14695981039346656037ull;
        for (const char c : stream) {
            h ^= static_cast<uint8_t>(c);
            h *= 1099511628211ull;
        }
        uint64_t z = master ^ h ^ (index * 0x9e3779b97f4a7c15ull);
        z += 0x9e3779b97f4a7c15ull;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    std::mt19937_64 engine_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace flowroute
