#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mmsb/inference.hpp"
#include "mmsb/model.hpp"
#include "mmsb/network.hpp"
#include "mmsb/types.hpp"

namespace mmsb {

// Derivatives of the concentration objective
//   L(alpha) = N [lgamma(sum alpha) - sum lgamma(alpha_k)]
//            + sum_k (alpha_k - 1) sum_p E[log pi_pk].
// The Hessian is diagonal-plus-constant: H = diag(hessian_diag) +
// hessian_offdiag * 11', with hessian_diag[k] = -N psi'(alpha_k) and
// hessian_offdiag = N psi'(sum alpha). That structure gives O(K) Newton
// steps via the Sherman-Morrison identity.
struct AlphaDerivatives {
    std::vector<double> gradient;
    std::vector<double> hessian_diag;
    double hessian_offdiag = 0.0;
};

double alpha_objective(const std::vector<double>& alpha, const Matrix& gamma);
AlphaDerivatives alpha_gradient_hessian(const std::vector<double>& alpha, const Matrix& gamma);

// Newton-Raphson ascent on L(alpha) with step halving whenever a component
// would leave the positive orthant or the objective would decrease. The
// returned vector never scores below the start.
std::vector<double> mstep_alpha(std::vector<double> alpha0, const Matrix& gamma,
                                int max_nr = 50, double nr_tol = 1e-9);
// Same ascent restricted to alpha = a * 1 (one shared concentration).
std::vector<double> mstep_alpha_scalar(std::vector<double> alpha0, const Matrix& gamma,
                                       int max_nr = 50, double nr_tol = 1e-9);

// Sufficient statistics of the materialized phi over training pairs.
BlockStats block_stats(const VariationalState& state, const DataView& data);

struct BEstimate {
    Matrix b;
    // (g,h) blocks whose denominator vanished; their rate defaults to 0.5.
    std::vector<std::pair<int, int>> degenerate_blocks;
};

// Per-replicate ratio sum R phi phi / sum phi phi, averaged over replicates.
BEstimate finalize_b(const BlockStats& stats);
// Per-replicate weighted non-interaction fraction, averaged over replicates.
double finalize_rho(const BlockStats& stats);

BEstimate mstep_B(const VariationalState& state, const NetworkSet& data);
double mstep_rho(const VariationalState& state, const NetworkSet& data);

// 1 - density: attributes every non-interaction to global rarity.
double fixed_rho(const NetworkSet& data);

enum class RhoMode { estimate, fixed_from_density, fixed_value };
enum class AlphaMode { estimate_vector, estimate_scalar, fixed };
enum class BMode { estimate, fixed };
enum class Schedule { nested, naive };
// seeded: spectral embedding of the training adjacency + k-means, gamma
//         concentrated on the found groups. The near-symmetric uniform
//         start sits on saddles the coordinate ascent cannot leave, so this
//         is the default.
// uniform: gamma = 2N/K with optional jitter.
enum class InitMode { seeded, uniform };

struct FitConfig {
    int k_groups = 2;
    int max_em_iters = 500;
    double em_tol = 1e-5;
    InnerOptions inner;         // per-pair fixed point
    int estep_max_sweeps = 500; // full-sweep schedule only

    RhoMode rho_mode = RhoMode::fixed_value;
    double rho_value = 0.0;
    AlphaMode alpha_mode = AlphaMode::estimate_vector;
    std::vector<double> alpha_fixed;  // required when alpha_mode == fixed
    std::vector<double> alpha_init;   // optional Newton start, default 1/K
    BMode b_mode = BMode::estimate;
    Matrix b_fixed;                   // required when b_mode == fixed

    Schedule schedule = Schedule::nested;
    InitMode init_mode = InitMode::seeded;
    std::uint64_t seed = 0;
    bool init_jitter = true;  // +-5% multiplicative noise on gamma0
    int threads = 1;
    bool retain_phi = false;
    bool record_checkpoints = false;

    int alpha_max_nr = 50;
    double alpha_nr_tol = 1e-9;

    // Test instrumentation: observes every observation read made by the fit
    // (initialization included). Install only with threads == 1.
    PairAccessAudit audit_hook;

    void validate() const;
};

// One bound evaluation together with the hyperparameters it was scored at.
struct FitCheckpoint {
    double elbo = 0.0;
    Hyperparams hyper;
};

struct FitResult {
    Hyperparams hyper_hat;
    VariationalState state;
    Matrix pi_hat;  // gamma rows normalized
    std::vector<ElboBreakdown> elbo_iterations;  // one per EM iteration
    std::vector<FitCheckpoint> checkpoints;      // populated when recorded
    bool converged = false;
    int iterations = 0;
    double wall_time_s = 0.0;
    std::vector<std::string> warnings;
    int n_nodes = 0;
    DiagonalPolicy diagonal_policy = DiagonalPolicy::excluded;
    FitConfig config;

    double final_elbo() const { return elbo_iterations.back().total; }
    std::vector<double> elbo_trace() const;
};

// Variational EM: alternates the selected E-step schedule with the M-step
// (respecting the fixed/estimated mode of each hyperparameter) until the
// bound's relative change drops below em_tol. Held-out pairs in `mask` are
// excluded from every E- and M-step sum. Deterministic given (data, config).
FitResult fit(const NetworkSet& data, const FitConfig& config, const PairMask* mask = nullptr);

}  // namespace mmsb
