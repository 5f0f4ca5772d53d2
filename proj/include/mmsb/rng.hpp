#pragma once

#include <cstdint>
#include <vector>

namespace mmsb {

// Splittable counter-style generator built on splitmix64.
//
// Every stream is keyed by (seed, stream kind, a, b, c); the key is hashed
// into the initial state, after which the stream advances sequentially.
// Stream-splitting rule used across the toolkit:
//   node_membership  : one stream per node p          -> (seed, kind, p)
//   pair_indicators  : one stream per (m, p, q) slot  -> (seed, kind, m, p*N+q)
//   fold_shuffle     : one stream per fold split call -> (seed, kind, stratum)
//   gamma_jitter     : one stream per fit             -> (seed, kind)
//   block_init       : one stream per fit             -> (seed, kind)
// Because a stream depends only on its key, draws for a given node or pair
// are independent of the order in which other streams are consumed, so
// sampling may be parallelized over pairs without changing results.
//
// All distributions are implemented in-house (no std::*_distribution) so the
// byte stream is identical across platforms and standard libraries.
class Rng {
public:
    enum class Stream : std::uint64_t {
        node_membership = 1,
        pair_indicators = 2,
        fold_shuffle = 3,
        gamma_jitter = 4,
        block_init = 5,
        generic = 6,
    };

    Rng(std::uint64_t seed, Stream kind, std::uint64_t a = 0, std::uint64_t b = 0,
        std::uint64_t c = 0);

    std::uint64_t next_u64();

    // Uniform on [0,1) with 53 random bits.
    double next_unit();
    // Uniform on (0,1); never returns exactly zero.
    double next_unit_open();
    // Unbiased integer in [0, n).
    std::uint64_t next_below(std::uint64_t n);
    // Standard normal via the polar method.
    double next_normal();
    // Gamma(shape, 1) via Marsaglia-Tsang; valid for any shape > 0.
    double next_gamma(double shape);
    // Dirichlet(alpha) onto `out` (resized to alpha.size()). Computed in log
    // space so tiny concentrations do not underflow to an all-zero vector.
    void next_dirichlet(const std::vector<double>& alpha, std::vector<double>& out);
    // Index draw from a probability vector (assumed to sum to ~1).
    int next_categorical(const double* probs, int k);
    bool next_bernoulli(double p);

private:
    std::uint64_t state_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace mmsb
