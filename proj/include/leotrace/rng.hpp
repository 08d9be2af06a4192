#ifndef LEOTRACE_RNG_HPP
#define LEOTRACE_RNG_HPP

#include <cmath>
#include <cstdint>
#include <random>

namespace leotrace::rng {

// All randomness in the toolkit flows through these helpers. std::mt19937_64
// has a portable bit stream, but the standard distributions do not, so the
// distributions are hand-rolled to keep outputs identical across platforms.
class Generator {
  public:
    explicit Generator(uint64_t seed) : engine_(seed) {}

    uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1) with 53 bits of mantissa.
    double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Uniform integer in [0, n), unbiased via rejection.
    uint64_t uniform_below(uint64_t n) {
        const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return x % n;
    }

    // Marsaglia polar method; consumes a deterministic number of uniforms
    // per accepted pair. The spare value is cached.
    double normal(double mean, double sigma) {
        if (have_spare_) {
            have_spare_ = false;
            return mean + sigma * spare_;
        }
        double u, v, s;
        do {
            u = 2.0 * uniform01() - 1.0;
            v = 2.0 * uniform01() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double m = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * m;
        have_spare_ = true;
        return mean + sigma * u * m;
    }

  private:
    std::mt19937_64 engine_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

} // namespace leotrace::rng

#endif
