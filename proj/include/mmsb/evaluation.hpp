#pragma once

#include <vector>

#include "mmsb/estimation.hpp"
#include "mmsb/model.hpp"
#include "mmsb/network.hpp"
#include "mmsb/types.hpp"

namespace mmsb {

enum class PredictionMode { pi_based, phi_based };

struct PredictionMatrix {
    Matrix probs;  // N x N, diagonal zero when self-pairs are excluded
    PredictionMode mode = PredictionMode::pi_based;
};

// pi_based:  (1 - rho) * pi_p' B pi_q for every valid pair.
// phi_based: (1 - rho) * phi_s' B phi_r per pair (averaged over replicates);
//            requires the fit to have retained phi.
PredictionMatrix predict_matrix(const FitResult& fit, PredictionMode mode);

struct PRPoint {
    double threshold = 0.0;
    double precision = 0.0;
    double recall = 0.0;
};

struct PRCurve {
    std::vector<PRPoint> points;  // descending threshold, recall non-decreasing
    double area = 0.0;            // trapezoid over recall
};

// Thresholded precision/recall against a binary reference. The predicted set
// at threshold t is every valid pair with prob >= t; an empty predicted set
// scores precision 1 by convention. Default thresholds are the distinct
// predicted values, which yields the exact curve.
PRCurve precision_recall(const PredictionMatrix& pred, const Network& reference,
                         std::vector<double> thresholds = {});

struct AlignmentResult {
    std::vector<int> permutation;  // estimated group g plays truth group permutation[g]
    double ari = 0.0;
    double hard_accuracy = 0.0;
};

// Optimal matching of hard (argmax) labels between two membership matrices,
// plus the adjusted Rand index (which is relabeling-invariant).
AlignmentResult align_memberships(const Matrix& est, const Matrix& truth);

// Exact log marginal likelihood log p(R | alpha, B, rho) by full enumeration
// of the per-slot group assignments, with the membership vectors integrated
// analytically (Dirichlet-multinomial weights). Guarded: the assignment
// space K^(2 * M * pairs) must not exceed 2^24.
double exact_loglik_bruteforce(const NetworkSet& data, const Hyperparams& hyper,
                               int threads = 1);

}  // namespace mmsb
