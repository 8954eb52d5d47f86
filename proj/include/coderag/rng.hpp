#pragma once

#include <cstdint>
#include <string_view>

namespace coderag {

// Deterministic 64-bit generator (splitmix64). Used everywhere randomness is
// needed so that runs are reproducible across platforms and thread counts;
// std::uniform_int_distribution is implementation-defined and avoided.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Unbiased integer in [0, bound) via rejection sampling.
    std::uint64_t below(std::uint64_t bound) {
        if (bound <= 1) return 0;
        const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % bound);
        std::uint64_t x = next();
        while (x >= limit) x = next();
        return x % bound;
    }

    double unit() {  // [0, 1)
        return static_cast<double>(next() >> 11) * 0x1.0p-53;
    }

private:
    std::uint64_t state_;
};

// Stable seed derivation: subsystem seeds come from (root seed, label) so a
// single --seed flag drives every source of randomness independently.
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view label) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : label) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    Rng mix(seed ^ h);
    return mix.next();
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view label, std::uint64_t index) {
    Rng mix(derive_seed(seed, label) ^ (0x9e3779b97f4a7c15ULL * (index + 1)));
    return mix.next();
}

}  // namespace coderag
