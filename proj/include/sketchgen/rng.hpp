#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>

namespace sketchgen {

// Seeded random source. Wraps std::mt19937_64 (whose output sequence is fully
// specified by the standard) and provides distribution helpers with fixed,
// implementation-independent algorithms, so streams replay identically across
// platforms and serialize losslessly.
class Rng {
public:
    Rng() : engine_(0) {}
    explicit Rng(uint64_t seed) : engine_(seed) {}

    uint64_t raw() { return engine_(); }

    // Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Unbiased integer in [0, n) by rejection.
    int64_t uniform_index(int64_t n) {
        if (n <= 0) return 0;
        const uint64_t un = static_cast<uint64_t>(n);
        const uint64_t limit = UINT64_MAX - UINT64_MAX % un;
        uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return static_cast<int64_t>(x % un);
    }

    // Standard normal via Box-Muller. Stateless: draws a fresh pair per call
    // and discards the second value, so the stream has no hidden cache to
    // serialize.
    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        return r * std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    template <typename It>
    void shuffle(It first, It last) {
        const int64_t n = static_cast<int64_t>(last - first);
        for (int64_t i = n - 1; i > 0; --i) {
            const int64_t j = uniform_index(i + 1);
            std::swap(first[i], first[j]);
        }
    }

    std::string serialize() const {
        std::ostringstream os;
        os << engine_;
        return os.str();
    }

    void deserialize(const std::string& s) {
        std::istringstream is(s);
        is >> engine_;
        if (!is) throw std::runtime_error("bad rng state string");
    }

    // Derives an independent stream from (seed, tags). FNV-1a style mixing.
    static Rng derive(uint64_t seed, uint64_t tag_a, uint64_t tag_b = 0, uint64_t tag_c = 0) {
        uint64_t h = 1469598103934665603ull;
        auto mix = [&h](uint64_t v) {
            for (int i = 0; i < 8; ++i) {
                h ^= (v >> (8 * i)) & 0xff;
                h *= 1099511628211ull;
            }
        };
        mix(seed);
        mix(tag_a);
        mix(tag_b);
        mix(tag_c);
        return Rng(h);
    }

private:
    std::mt19937_64 engine_;
};

} // namespace sketchgen
