#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace ubiq {

using Rng = std::mt19937_64;

/// Uniform integer in [0, bound) by rejection sampling. Unlike
/// std::uniform_int_distribution the sequence is identical on every standard
/// library, so seeded results can be pinned.
inline std::uint64_t uniform_below(Rng& rng, std::uint64_t bound) {
    if (bound == 0) {
        return 0;
    }
    const std::uint64_t limit = Rng::max() - (Rng::max() % bound + 1) % bound;
    std::uint64_t draw = rng();
    while (draw > limit) {
        draw = rng();
    }
    return draw % bound;
}

/// Uniform double in [0, 1) from the top 53 bits of one draw.
inline double uniform_unit(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline Rng seeded_from_device() {
    std::random_device device;
    std::seed_seq seq{device(), device(), device(), device()};
    return Rng(seq);
}

/// Random RFC 4122 version-4 UUID in canonical text form.
std::string make_uuid(Rng& rng);

} // namespace ubiq
