#pragma once

// Deterministic random streams. A stream is identified by (seed, name);
// the same seed, name, and draw sequence always yield the same values.
// Distribution math is hand-rolled so the sequences do not depend on the
// standard library's <random> distribution implementations.

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>

namespace clipvqa {

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

class RngState {
public:
    RngState() : RngState(0, "") {}
    RngState(std::uint64_t seed, std::string_view stream)
        : seed_(seed), stream_(stream), engine_(seed ^ fnv1a64(stream)) {}

    RngState substream(std::string_view name) const {
        return RngState(seed_, stream_ + "/" + std::string(name));
    }

    std::uint64_t seed() const { return seed_; }
    const std::string& stream() const { return stream_; }

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1)
    double uniform01() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Uniform integer in [0, n)
    int uniform_int(int n) {
        if (n <= 0) throw std::invalid_argument("uniform_int: n must be positive");
        // Rejection sampling keeps the distribution exact.
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % static_cast<std::uint64_t>(n);
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return static_cast<int>(x % static_cast<std::uint64_t>(n));
    }

    // Box-Muller with a cached spare.
    double normal(double mean = 0.0, double stddev = 1.0) {
        if (has_spare_) {
            has_spare_ = false;
            return mean + stddev * spare_;
        }
        double u1, u2;
        do {
            u1 = uniform01();
        } while (u1 <= 0.0);
        u2 = uniform01();
        const double mag = std::sqrt(-2.0 * std::log(u1));
        spare_ = mag * std::sin(2.0 * M_PI * u2);
        has_spare_ = true;
        return mean + stddev * mag * std::cos(2.0 * M_PI * u2);
    }

private:
    std::uint64_t seed_;
    std::string stream_;
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace clipvqa
