#include "mmsb/selection.hpp"

#include <cmath>
#include <limits>

namespace mmsb {

namespace {

// log Bernoulli(r | p) without NaN: a degenerate mismatch gives -inf.
inline double log_bern(int r, double p) {
    const double q = r ? p : 1.0 - p;
    return q > 0.0 ? std::log(q) : -std::numeric_limits<double>::infinity();
}

double pair_prob(const FitResult& fit, int p, int q) {
    const int k = fit.hyper_hat.k_groups;
    double acc = 0.0;
    for (int g = 0; g < k; ++g) {
        double inner = 0.0;
        for (int h = 0; h < k; ++h) inner += fit.hyper_hat.block_matrix(g, h) * fit.pi_hat(q, h);
        acc += fit.pi_hat(p, g) * inner;
    }
    return (1.0 - fit.hyper_hat.rho) * acc;
}

}  // namespace

double bic_score(const FitResult& fit, const NetworkSet& data) {
    data.validate();
    require(fit.n_nodes == data.n_nodes(), "bic_score: fit/data node count mismatch");
    std::int64_t positives = 0;
    for (const auto& rep : data.replicates) positives += rep.edge_count();
    require(positives > 0, "bic_score: no positive relations observed");

    double loglik = 0.0;
    const Network& front = data.replicates.front();
    for (const auto& rep : data.replicates)
        front.for_each_pair([&](int p, int q) { loglik += log_bern(rep.at(p, q), pair_prob(fit, p, q)); });

    const int k = fit.hyper_hat.k_groups;
    double n_params = double(k) + double(k) * k;
    if (fit.config.rho_mode == RhoMode::estimate) n_params += 1.0;
    return 2.0 * loglik - n_params * std::log(double(positives));
}

double heldout_loglik(const FitResult& fit, const NetworkSet& data, const PairMask& mask) {
    data.validate();
    require(fit.n_nodes == data.n_nodes(), "heldout_loglik: fit/data node count mismatch");
    double total = 0.0;
    for (const auto& rep : data.replicates)
        for (auto [p, q] : mask.held_out) {
            require(rep.pair_valid(p, q), "heldout_loglik: mask contains an invalid pair");
            total += log_bern(rep.at(p, q), pair_prob(fit, p, q));
        }
    return total;
}

namespace {

// Stratification label for fold splitting: a pair counts as an edge pair if
// any replicate observed it.
Network union_network(const NetworkSet& data) {
    Network u(data.n_nodes(), data.diagonal_policy());
    for (const auto& rep : data.replicates)
        rep.for_each_pair([&](int p, int q) {
            if (rep.at(p, q)) u.set(p, q, true);
        });
    return u;
}

}  // namespace

std::vector<PairMask> selection_folds(const NetworkSet& data, int n_folds,
                                      std::uint64_t seed) {
    return split_folds(union_network(data), n_folds, seed, /*stratify=*/true);
}

SelectionReport select_k(const NetworkSet& data, int k_min, int k_max,
                         SelectionCriterion criterion, int n_folds, std::uint64_t seed,
                         const FitConfig& config_template) {
    data.validate();
    require(k_min >= 1 && k_max >= k_min, "select_k: empty K range");

    SelectionReport report;
    report.criterion = criterion;
    report.seed = seed;
    report.n_folds = criterion == SelectionCriterion::cv_heldout ? n_folds : 0;

    std::vector<PairMask> folds;
    if (criterion == SelectionCriterion::cv_heldout) {
        require(n_folds >= 2, "select_k: cross-validation needs at least 2 folds");
        folds = selection_folds(data, n_folds, seed);
    }

    for (int k = k_min; k <= k_max; ++k) {
        CandidateReport cand;
        cand.k = k;
        FitConfig cfg = config_template;
        cfg.k_groups = k;
        cfg.seed = seed;
        try {
            if (criterion == SelectionCriterion::bic) {
                FitResult f = fit(data, cfg);
                cand.score = bic_score(f, data);
                cand.mean_final_elbo = f.final_elbo();
                cand.all_converged = f.converged;
                cand.max_iterations = f.iterations;
            } else {
                double sum = 0.0, sum_elbo = 0.0;
                cand.all_converged = true;
                for (const auto& fold : folds) {
                    FitResult f = fit(data, cfg, &fold);
                    const double s = heldout_loglik(f, data, fold);
                    cand.per_fold.push_back(s);
                    sum += s;
                    sum_elbo += f.final_elbo();
                    cand.all_converged = cand.all_converged && f.converged;
                    cand.max_iterations = std::max(cand.max_iterations, f.iterations);
                }
                cand.score = sum / double(folds.size());
                cand.mean_final_elbo = sum_elbo / double(folds.size());
            }
        } catch (const std::exception& e) {
            cand.failed = true;
            cand.error = e.what();
        }
        report.candidates.push_back(std::move(cand));
    }

    report.chosen_k = best_candidate_k(report.candidates);
    require(report.chosen_k != 0, "select_k: every candidate failed");
    return report;
}

int best_candidate_k(const std::vector<CandidateReport>& candidates) {
    int chosen = 0;
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& c : candidates)
        if (!c.failed && c.score > best) {  // strict: ties keep the smaller K
            best = c.score;
            chosen = c.k;
        }
    return chosen;
}

}  // namespace mmsb
