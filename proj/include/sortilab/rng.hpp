#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace sortilab {

// mt19937_64 with hand-written mappings; std distributions are
// implementation-defined and would make traces vary across standard libraries.
class Rng {
public:
    static constexpr std::string_view kName = "mt19937_64/v1";

    explicit Rng(std::uint64_t seed = 0) : eng_(seed) {}

    std::uint64_t next() { return eng_(); }

    // Uniform in [0, bound).
    std::uint64_t below(std::uint64_t bound) {
        if (bound <= 1) return 0;
        const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % bound);
        std::uint64_t x;
        do x = eng_();
        while (x >= limit);
        return x % bound;
    }

    // Uniform in [0,1) with 53 random bits.
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    bool bernoulli(double p) { return uniform() < p; }

    // Number of failures before the first success.
    std::uint64_t geometric(double success) {
        if (success >= 1.0) return 0;
        double u = uniform();
        return static_cast<std::uint64_t>(std::floor(std::log1p(-u) / std::log1p(-success)));
    }

    Rng fork(std::uint64_t salt) { return Rng(next() ^ (salt * 0x9e3779b97f4a7c15ULL)); }

private:
    std::mt19937_64 eng_;
};

}  // namespace sortilab
