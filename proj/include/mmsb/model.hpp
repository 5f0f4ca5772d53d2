#pragma once

#include <cstdint>
#include <vector>

#include "mmsb/network.hpp"
#include "mmsb/types.hpp"

namespace mmsb {

// Model hyperparameters: K groups, Dirichlet concentration alpha, K x K
// Bernoulli rate matrix B, and the sparsity weight rho. The effective edge
// probability for a (g,h) indicator pair is (1-rho) * B(g,h).
struct Hyperparams {
    int k_groups = 1;
    std::vector<double> alpha;  // size K, all positive
    Matrix block_matrix;        // K x K, entries in [0,1]
    double rho = 0.0;           // in [0,1]

    Hyperparams() = default;
    Hyperparams(int k, std::vector<double> a, Matrix b, double r);
    // Scalar concentration broadcast to a symmetric K-vector.
    static Hyperparams symmetric(int k, double alpha_scalar, Matrix b, double r);

    void validate() const;
    double alpha_sum() const;
    // (1-rho) * B(g,h)
    double effective_rate(int g, int h) const {
        return (1.0 - rho) * block_matrix(g, h);
    }
};

// Ground truth retained by the sampler: memberships and the per-pair
// indicator draws (stored as group indices; slot (m,p,q) is unused when the
// pair is invalid).
struct SampleTruth {
    Matrix pi;                                  // N x K, rows on the simplex
    std::vector<std::vector<std::int8_t>> z_sender;    // [m][p*N+q]
    std::vector<std::vector<std::int8_t>> z_receiver;  // [m][p*N+q]
};

struct SampleOptions {
    int n_replicates = 1;
    DiagonalPolicy diagonal = DiagonalPolicy::excluded;
    // When set, pair (q,p) reuses the indicators of pair (p,q) with the
    // roles mirrored, for symmetric relations.
    bool enforce_symmetric_indicators = false;
};

struct SampleResult {
    NetworkSet networks;
    SampleTruth truth;
};

// Generative draw: pi_p ~ Dirichlet(alpha) per node; per valid pair and
// replicate, sender ~ Cat(pi_p), receiver ~ Cat(pi_q),
// R ~ Bernoulli((1-rho) * B(sender, receiver)). Deterministic given seed;
// every node and every (m,p,q) slot uses its own stream, so results do not
// depend on traversal order.
SampleResult sample_network(const Hyperparams& hyper, int n_nodes, std::uint64_t seed,
                            const SampleOptions& opts = {});

// (1-rho) * pi_p' B pi_q. Both vectors must lie on the simplex (1e-8 slack);
// off-simplex input is rejected, not renormalized.
double edge_prob_given_memberships(const std::vector<double>& pi_p,
                                   const std::vector<double>& pi_q,
                                   const Hyperparams& hyper);

}  // namespace mmsb
