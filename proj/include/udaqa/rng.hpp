#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace udaqa {

// Deterministic random source. std::normal_distribution and
// generate_canonical are implementation-defined, so the transforms live here
// to keep generated datasets and training runs byte-stable across toolchains.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    // uniform in [0, 1)
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Box-Muller, one value per call (the cached pair trick would make the
    // stream depend on call parity).
    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    std::uint64_t next_u64() { return engine_(); }

    // index in [0, n)
    std::size_t index(std::size_t n) {
        return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n;
    }

private:
    std::mt19937_64 engine_;
};

// FNV-1a, used to derive per-sample noise streams from (seed, sample id) so
// evaluation results are independent of iteration order.
inline std::uint64_t hash_combine(std::uint64_t seed, std::string_view s) {
    std::uint64_t h = 14695981039346656037ULL ^ seed;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ULL;
    }
    return h;
}

}  // namespace udaqa
