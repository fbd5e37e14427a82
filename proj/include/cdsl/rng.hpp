#ifndef CDSL_RNG_HPP
#define CDSL_RNG_HPP

#include <cmath>
#include <cstdint>
#include <random>

namespace cdsl {

// mt19937 with hand-rolled distributions. std:: distributions are not pinned by
// the standard, so sampling through them would not reproduce across toolchains;
// the raw engine output is fully specified.
class Rng {
public:
    explicit Rng(std::uint32_t seed) : eng_(seed) {}

    std::uint32_t next_u32() { return eng_(); }

    // uniform integer in [0, n), rejection sampling (no modulo bias)
    std::uint32_t below(std::uint32_t n) {
        const std::uint32_t limit = UINT32_MAX - UINT32_MAX % n;
        std::uint32_t v;
        do {
            v = eng_();
        } while (v >= limit);
        return v % n;
    }

    // [0, 1)
    double uniform() { return next_u32() * (1.0 / 4294967296.0); }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // standard normal, Box-Muller
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = (next_u32() + 1.0) * (1.0 / 4294967296.0); // (0,1]
        const double u2 = next_u32() * (1.0 / 4294967296.0);
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double th = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(th);
        has_spare_ = true;
        return r * std::cos(th);
    }

    template <typename Vec>
    void shuffle(Vec& v) {
        if (v.size() < 2) return;
        for (std::size_t i = v.size() - 1; i > 0; --i) {
            const std::size_t j = below(static_cast<std::uint32_t>(i + 1));
            std::swap(v[i], v[j]);
        }
    }

private:
    std::mt19937 eng_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

} // namespace cdsl

#endif
