#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mmsb/model.hpp"
#include "mmsb/network.hpp"
#include "mmsb/types.hpp"

namespace mmsb {

// Test instrumentation: invoked on every read of an observation during
// E/M sums, so held-out isolation can be proven rather than assumed.
using PairAccessAudit = std::function<void(int m, int p, int q)>;

// Read view of a NetworkSet with an optional held-out mask. Every E-step and
// M-step sum iterates training pairs through this view; held-out pairs are
// treated as missing, not as zeros.
class DataView {
public:
    explicit DataView(const NetworkSet& data, const PairMask* mask = nullptr);

    int n_nodes() const { return n_; }
    int n_replicates() const { return m_; }
    const NetworkSet& data() const { return *data_; }

    bool pair_valid(int p, int q) const { return p != q || diag_included_; }
    bool training(int p, int q) const {
        return pair_valid(p, q) && (heldout_.empty() || !heldout_[std::size_t(p) * n_ + q]);
    }
    int r(int m, int p, int q) const {
        if (audit_) audit_(m, p, q);
        return data_->replicates[m].at(p, q);
    }

    std::int64_t training_pairs_per_replicate() const { return training_pairs_; }
    // Slots enumerate (m, p, q) row-major over all p, q; workers skip
    // invalid and held-out slots. Keeps parallel chunking allocation-free.
    std::int64_t total_slots() const { return std::int64_t(m_) * n_ * n_; }
    void slot_to_mpq(std::int64_t slot, int& m, int& p, int& q) const {
        m = static_cast<int>(slot / (std::int64_t(n_) * n_));
        std::int64_t rem = slot % (std::int64_t(n_) * n_);
        p = static_cast<int>(rem / n_);
        q = static_cast<int>(rem % n_);
    }

    template <typename F>
    void for_each_training_pair(F&& f) const {
        for (int m = 0; m < m_; ++m)
            for (int p = 0; p < n_; ++p)
                for (int q = 0; q < n_; ++q)
                    if (training(p, q)) f(m, p, q);
    }

    void set_audit(PairAccessAudit audit) { audit_ = std::move(audit); }

private:
    const NetworkSet* data_;
    int n_;
    int m_;
    bool diag_included_;
    std::vector<char> heldout_;
    std::int64_t training_pairs_;
    PairAccessAudit audit_;
};

// Free variational parameters: one Dirichlet vector per node, and (optionally
// materialized) one pair of multinomials per valid pair and replicate.
struct VariationalState {
    Matrix gamma;  // N x K, strictly positive

    // Per-slot multinomials, flattened ((p*N+q)*K + k), one vector per
    // replicate. Empty when elided; they are recomputable from gamma.
    std::vector<std::vector<double>> phi_sender;
    std::vector<std::vector<double>> phi_receiver;

    bool has_phi() const { return !phi_sender.empty(); }
    void allocate_phi(int n, int k, int m);
    void drop_phi();

    double* phi_s(int m, int p, int q, int n, int k) {
        return phi_sender[m].data() + (std::size_t(p) * n + q) * k;
    }
    const double* phi_s(int m, int p, int q, int n, int k) const {
        return phi_sender[m].data() + (std::size_t(p) * n + q) * k;
    }
    double* phi_r(int m, int p, int q, int n, int k) {
        return phi_receiver[m].data() + (std::size_t(p) * n + q) * k;
    }
    const double* phi_r(int m, int p, int q, int n, int k) const {
        return phi_receiver[m].data() + (std::size_t(p) * n + q) * k;
    }
};

// Uniform start: gamma = 2N/K everywhere, phi elided.
VariationalState make_initial_state(int n_nodes, int k_groups);

// Additive decomposition of the likelihood bound. total is the plain sum of
// the seven terms; when it is -inf, offending_term names the culprit.
struct ElboBreakdown {
    double likelihood = 0.0;
    double sender_prior = 0.0;
    double receiver_prior = 0.0;
    double membership_prior = 0.0;
    double membership_entropy = 0.0;
    double sender_entropy = 0.0;
    double receiver_entropy = 0.0;
    double total = 0.0;
    std::string offending_term;

    double sum_terms() const {
        return likelihood + sender_prior + receiver_prior + membership_prior +
               membership_entropy + sender_entropy + receiver_entropy;
    }
    static const char* const* term_names();  // 7 entries, field order above
    double term(int i) const;
};

struct InnerOptions {
    double tol = 1e-8;   // max-abs phi change
    int max_inner = 100;
};

struct EstepOptions {
    InnerOptions inner;
    double tol = 1e-5;    // relative ELBO change between sweeps
    int max_sweeps = 500;
    int threads = 1;
};

// E_q[log pi_p] = psi(gamma_pk) - psi(sum_k gamma_pk), componentwise.
std::vector<double> expected_log_pi(const std::vector<double>& gamma_p);

struct PhiPairResult {
    std::vector<double> phi_sender;
    std::vector<double> phi_receiver;
    int n_iters = 0;
};

// Alternating closed-form updates for one pair's multinomials, run to the
// fixed point (max-abs change < tol) or max_inner rounds. r is the observed
// relation; rates are rho-adjusted inside.
PhiPairResult update_phi_pair(int r, const std::vector<double>& gamma_p,
                              const std::vector<double>& gamma_q, const Hyperparams& hyper,
                              double tol = 1e-8, int max_inner = 100);

// Closed-form Dirichlet update for one node from the materialized phi:
// gamma_pk = alpha_k + sum over training slots where p sends or receives.
std::vector<double> update_gamma(const VariationalState& state, const DataView& data,
                                 const std::vector<double>& alpha, int node);

// Bound evaluation. Uses the state's materialized phi when present;
// otherwise derives each pair's phi from gamma by running the inner fixed
// point (the canonical reconstruction of an elided state).
ElboBreakdown elbo(const VariationalState& state, const Hyperparams& hyper,
                   const DataView& data, const InnerOptions& inner = {}, int threads = 1);
ElboBreakdown elbo(const VariationalState& state, const Hyperparams& hyper,
                   const NetworkSet& data);

struct EstepResult {
    VariationalState state;
    std::vector<ElboBreakdown> trace;  // one checkpoint per sweep, plus baseline
    bool converged = false;
    int sweeps = 0;
    int max_inner_iters = 0;  // largest per-pair round count observed
};

// Full-sweep schedule: (i) all pair multinomials to their fixed points,
// (ii) all gamma, repeated until the bound stabilizes. Materializes phi.
EstepResult estep_naive(VariationalState state, const Hyperparams& hyper, const DataView& data,
                        const EstepOptions& opts);

// Block-rate sufficient statistics gathered during a nested sweep; the
// M-step turns them into per-replicate ratios averaged over replicates.
struct BlockStats {
    int k = 0;
    int m = 0;
    std::vector<double> b_num;  // [m][g*K+h]: sum of R * phi_s[g] * phi_r[h]
    std::vector<double> b_den;  // [m][g*K+h]: sum of phi_s[g] * phi_r[h]
    std::vector<double> rho_num;  // [m]: sum of (1-R) * (sum_gh phi phi)
    std::vector<double> rho_den;  // [m]: sum of (sum_gh phi phi)

    void reset(int k_groups, int replicates);
    void add(const BlockStats& other);
};

// Preallocated storage for nested sweeps. Beyond gamma itself the sweep
// touches only this workspace; a sweep performs no heap allocation.
class NestedWorkspace {
public:
    void configure(int n, int k, int m, int threads);
    std::size_t allocated_scalars() const;

    Matrix elog_pi;      // N x K, snapshot of E[log pi] at sweep start
    Matrix gamma_accum;  // N x K, fresh accumulation (starts at alpha)
    std::vector<double> log_b1, log_b0;      // K*K rho-adjusted log rates
    std::vector<double> pair_scratch;        // threads * 3K
    std::vector<double> thread_gamma;        // (threads-1) * N*K
    std::vector<BlockStats> thread_stats;    // threads
    std::vector<double> thread_elbo;         // threads * 5 partial pair terms
    std::vector<int> thread_inner;           // threads

    int n = 0, k = 0, m = 0, threads = 1;
};

// Test hook: observes each pair's converged phi during a nested sweep
// (sequential mode only).
using PhiObserver = std::function<void(int m, int p, int q, const double* phi_s,
                                       const double* phi_r)>;

struct NestedSweepResult {
    // Bound at (fresh phi, sweep-start gamma, current hyper): a valid
    // checkpoint of the objective.
    ElboBreakdown incoming_elbo;
    BlockStats stats;
    int max_inner_iters = 0;
};

// One nested sweep: every training pair's multinomials are driven to their
// fixed point against the sweep-start gamma snapshot; their contributions
// are accumulated into a fresh gamma (applied at sweep end) and into the
// block-rate statistics. Peak auxiliary memory is O(NK + K^2) per worker.
NestedSweepResult estep_nested_sweep(VariationalState& state, const Hyperparams& hyper,
                                     const DataView& data, NestedWorkspace& ws,
                                     const EstepOptions& opts,
                                     const PhiObserver& observer = nullptr);

}  // namespace mmsb
