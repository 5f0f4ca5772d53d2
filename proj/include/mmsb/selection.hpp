#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mmsb/estimation.hpp"
#include "mmsb/network.hpp"

namespace mmsb {

enum class SelectionCriterion { bic, cv_heldout };

struct CandidateReport {
    int k = 0;
    double score = 0.0;               // BIC or mean held-out log-likelihood
    std::vector<double> per_fold;     // empty for BIC
    double mean_final_elbo = 0.0;
    bool all_converged = false;
    int max_iterations = 0;
    bool failed = false;
    std::string error;
};

struct SelectionReport {
    std::vector<CandidateReport> candidates;  // ascending K
    int chosen_k = 0;                         // argmax score, ties to smaller K
    SelectionCriterion criterion = SelectionCriterion::bic;
    int n_folds = 0;
    std::uint64_t seed = 0;
};

// 2 * log p(R | pi_hat, alpha_hat, B_hat) - |params| * log |R|, with the
// plug-in likelihood at posterior-expected memberships, |params| = K + K^2
// (+1 when rho was estimated), and |R| the number of positive relations.
double bic_score(const FitResult& fit, const NetworkSet& data);

// Sum over held-out pairs (all replicates) of
// log[ p_hat * R + (1 - p_hat) * (1 - R) ] with
// p_hat = (1 - rho_hat) * pi_p' B_hat pi_q. A mismatching degenerate
// prediction yields -inf, not a crash.
double heldout_loglik(const FitResult& fit, const NetworkSet& data, const PairMask& mask);

// The fold masks select_k trains against: a stratified split of the valid
// pairs, with a pair counting as an edge pair when any replicate observed it.
std::vector<PairMask> selection_folds(const NetworkSet& data, int n_folds,
                                      std::uint64_t seed);

// Argmax over non-failed candidates; exact score ties keep the smaller K.
// Returns 0 when every candidate failed.
int best_candidate_k(const std::vector<CandidateReport>& candidates);

// Fits every K in [k_min, k_max] (per fold for cv_heldout, with the fold's
// pairs excluded from training) and returns the scored report. A candidate
// whose fit aborts is marked failed and excluded from the argmax.
SelectionReport select_k(const NetworkSet& data, int k_min, int k_max,
                         SelectionCriterion criterion, int n_folds, std::uint64_t seed,
                         const FitConfig& config_template);

}  // namespace mmsb
