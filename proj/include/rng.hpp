#ifndef FRN_RNG_HPP
#define FRN_RNG_HPP

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

// Seeded RNG with explicit double mappings so corpora and parameter
// initializations are bit-identical across platforms (std::*_distribution
// is implementation-defined).

namespace rng {

struct Rng {
    explicit Rng(uint64_t seed) : gen(seed) {}

    double uniform() {  // [0, 1)
        return static_cast<double>(gen() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    int uniform_int(int n) { return static_cast<int>(gen() % static_cast<uint64_t>(n)); }

    double normal() {  // Box-Muller
        if (have_spare) {
            have_spare = false;
            return spare;
        }
        double u1 = uniform(), u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 2.0 * M_PI * u2;
        spare = r * std::sin(theta);
        have_spare = true;
        return r * std::cos(theta);
    }

    std::vector<double> unit_vector(int dim) {
        std::vector<double> v(static_cast<size_t>(dim));
        double norm2 = 0.0;
        do {
            norm2 = 0.0;
            for (double& x : v) {
                x = normal();
                norm2 += x * x;
            }
        } while (norm2 == 0.0);
        double inv = 1.0 / std::sqrt(norm2);
        for (double& x : v) x *= inv;
        return v;
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {  // Fisher-Yates
        for (size_t i = v.size(); i > 1; --i)
            std::swap(v[i - 1], v[static_cast<size_t>(uniform_int(static_cast<int>(i)))]);
    }

    std::mt19937_64 gen;
    bool have_spare = false;
    double spare = 0.0;
};

}  // namespace rng

#endif
