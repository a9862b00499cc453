#pragma once

#include <cstdint>

#include "qml/math.hpp"

namespace qml {

/// SplitMix64 finalizer, used as the mixing core of all randomness here.
inline uint64_t mix64(uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Derive an independent sub-seed from a seed and a salt.
inline uint64_t derive_seed(uint64_t seed, uint64_t salt) {
    return mix64(mix64(seed) ^ mix64(~salt));
}

/**
 * Counter-based random stream keyed by (master_seed, point_index).
 *
 * Sample i is a pure function of (master_seed, point_index, i), so
 *  - replaying a stream from the same state is bit-exact,
 *  - drawing n1 then n2 samples equals drawing n1+n2 in one call, and
 *  - distinct point indices give independent substreams, which keeps
 *    per-point simulation lineages reproducible under parallel
 *    macro-replications.
 */
class RngStream {
public:
    RngStream(uint64_t master_seed, uint64_t point_index, uint64_t counter = 0)
        : master_seed_(master_seed),
          point_index_(point_index),
          key_(mix64(mix64(master_seed) ^ (point_index * 0x9e3779b97f4a7c15ULL + 0x632be59bd9b4e019ULL))),
          counter_(counter) {}

    /// Uniform draw in the open interval (0, 1); advances the counter.
    double next_uniform() {
        uint64_t r = mix64(key_ ^ mix64(counter_++));
        return (static_cast<double>(r >> 11) + 0.5) * 0x1.0p-53;
    }

    /// Standard normal draw via the inverse CDF; one counter tick per draw.
    double next_normal() { return norm_ppf(next_uniform()); }

    uint64_t master_seed() const { return master_seed_; }
    uint64_t point_index() const { return point_index_; }
    uint64_t counter() const { return counter_; }
    void set_counter(uint64_t c) { counter_ = c; }

private:
    uint64_t master_seed_;
    uint64_t point_index_;
    uint64_t key_;
    uint64_t counter_;
};

/// Small stateful generator for design/search randomness (LHS grids,
/// perturbed starts). Same mixing core, sequential counter.
class Pcg {
public:
    explicit Pcg(uint64_t seed) : stream_(seed, 0) {}
    double uniform() { return stream_.next_uniform(); }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    double normal() { return stream_.next_normal(); }
    /// Integer in [0, n).
    uint64_t below(uint64_t n) { return static_cast<uint64_t>(uniform() * static_cast<double>(n)) % n; }

private:
    RngStream stream_;
};

}  // namespace qml
