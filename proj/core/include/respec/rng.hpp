#pragma once

#include <cstdint>
#include <random>

namespace respec {

// Converts the top 53 bits of a 64-bit draw into a double in [0, 1).
// Done by hand so results do not depend on the standard library's
// uniform_real_distribution implementation.
inline double to_unit_double(uint64_t bits) {
    return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

inline uint64_t splitmix64(uint64_t & state) {
    uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Stateless one-shot mix of splitmix64, for deriving seeds from keys.
inline uint64_t mix64(uint64_t x) {
    return splitmix64(x);
}

// Per-trajectory randomness, split into two independent streams:
//  - draft:  token proposals (drafter sampling, naive target sampling)
//  - accept: verification decisions, residual and bonus draws
// Splitting the streams keeps chain and tree cycles comparable under a
// shared drafted-token stream and makes SD-on / SD-off runs
// independently seedable.
struct DecodeRng {
    std::mt19937_64 draft_rng;
    std::mt19937_64 accept_rng;

    static DecodeRng from_seed(uint64_t seed, uint64_t stream_id = 0) {
        uint64_t s = seed ^ (0x51ed270b8d2c7f13ULL * (stream_id + 1));
        DecodeRng r;
        r.draft_rng.seed(splitmix64(s));
        r.accept_rng.seed(splitmix64(s));
        return r;
    }

    double draft_uniform()  { return to_unit_double(draft_rng()); }
    double accept_uniform() { return to_unit_double(accept_rng()); }
};

} // namespace respec
