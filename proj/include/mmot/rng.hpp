#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace mmot {

// Deterministic random stream. Distributions are implemented explicitly
// (std:: distributions are implementation-defined), so a (seed, stream)
// pair reproduces the same draws everywhere.
class Rng {
   public:
    explicit Rng(std::uint64_t seed, std::uint64_t stream = 0)
        : eng_(mix(seed, stream)) {}

    double uniform() {
        // 53-bit mantissa uniform in (0, 1)
        std::uint64_t r = eng_();
        return (static_cast<double>(r >> 11) + 0.5) * (1.0 / 9007199254740992.0);
    }

    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        // Box-Muller on open-interval uniforms
        double u1 = uniform();
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * 3.141592653589793238462643 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    // Poisson by inversion; fine for the small lambda*dt used here.
    int poisson(double lambda) {
        if (lambda <= 0.0) return 0;
        double p = std::exp(-lambda);
        double cum = p;
        double u = uniform();
        int k = 0;
        while (u > cum && k < 10000) {
            ++k;
            p *= lambda / k;
            cum += p;
        }
        return k;
    }

    std::uint64_t next_u64() { return eng_(); }

   private:
    static std::uint64_t mix(std::uint64_t seed, std::uint64_t stream) {
        // splitmix64 step to decorrelate (seed, stream) pairs
        std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    std::mt19937_64 eng_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace mmot
