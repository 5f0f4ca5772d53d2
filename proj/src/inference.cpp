#include "mmsb/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "mmsb/mathfn.hpp"

namespace mmsb {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// sum_i a[i] * b[i], treating 0 * (-inf) as 0 so impossible blocks carrying
// zero weight do not poison the bound.
inline double guarded_dot(const double* a, const double* b, int k) {
    double acc = 0.0;
    for (int i = 0; i < k; ++i)
        if (a[i] != 0.0) acc += a[i] * b[i];
    return acc;
}

inline double entropy_term(const double* phi, int k) {
    double acc = 0.0;
    for (int i = 0; i < k; ++i)
        if (phi[i] > 0.0) acc -= phi[i] * std::log(phi[i]);
    return acc;
}

void compute_elog_pi(const Matrix& gamma, Matrix& out) {
    const int n = gamma.rows(), k = gamma.cols();
    for (int p = 0; p < n; ++p) {
        double s = 0.0;
        for (int g = 0; g < k; ++g) s += gamma(p, g);
        const double psi_sum = digamma(s);
        for (int g = 0; g < k; ++g) out(p, g) = digamma(gamma(p, g)) - psi_sum;
    }
}

void build_log_rates(const Hyperparams& hyper, std::vector<double>& log_b1,
                     std::vector<double>& log_b0) {
    const int k = hyper.k_groups;
    log_b1.resize(std::size_t(k) * k);
    log_b0.resize(std::size_t(k) * k);
    for (int g = 0; g < k; ++g)
        for (int h = 0; h < k; ++h) {
            const double rate = hyper.effective_rate(g, h);
            log_b1[std::size_t(g) * k + h] = rate > 0.0 ? std::log(rate) : kNegInf;
            log_b0[std::size_t(g) * k + h] = rate < 1.0 ? std::log1p(-rate) : kNegInf;
        }
}

// Alternating closed-form updates for one pair, in log space. Returns the
// number of rounds used; phi_s/phi_r hold the fixed point. With warm_start
// the buffers' current contents seed the iteration (coordinate-ascent
// continuation); otherwise both start uniform.
int phi_fixed_point(int k, const double* elog_p, const double* elog_q, const double* logf,
                    double tol, int max_inner, double* phi_s, double* phi_r, double* lg,
                    bool warm_start = false) {
    if (k == 1) {
        phi_s[0] = 1.0;
        phi_r[0] = 1.0;
        return 1;
    }
    if (!warm_start) {
        const double inv_k = 1.0 / k;
        for (int i = 0; i < k; ++i) phi_s[i] = phi_r[i] = inv_k;
    }
    for (int it = 1; it <= max_inner; ++it) {
        double delta = 0.0;
        for (int g = 0; g < k; ++g)
            lg[g] = elog_p[g] + guarded_dot(phi_r, logf + std::size_t(g) * k, k);
        if (!softmax_inplace(lg, k))
            throw NumericError("phi update: normalization underflowed to zero (internal bug)");
        for (int g = 0; g < k; ++g) {
            delta = std::max(delta, std::abs(lg[g] - phi_s[g]));
            phi_s[g] = lg[g];
        }
        for (int h = 0; h < k; ++h) {
            double acc = 0.0;
            for (int g = 0; g < k; ++g)
                if (phi_s[g] != 0.0) acc += phi_s[g] * logf[std::size_t(g) * k + h];
            lg[h] = elog_q[h] + acc;
        }
        if (!softmax_inplace(lg, k))
            throw NumericError("phi update: normalization underflowed to zero (internal bug)");
        for (int h = 0; h < k; ++h) {
            delta = std::max(delta, std::abs(lg[h] - phi_r[h]));
            phi_r[h] = lg[h];
        }
        if (delta < tol) return it;
    }
    return max_inner;
}

struct PairTerms {
    double likelihood = 0.0;
    double sender_prior = 0.0;
    double receiver_prior = 0.0;
    double sender_entropy = 0.0;
    double receiver_entropy = 0.0;

    void add(const PairTerms& o) {
        likelihood += o.likelihood;
        sender_prior += o.sender_prior;
        receiver_prior += o.receiver_prior;
        sender_entropy += o.sender_entropy;
        receiver_entropy += o.receiver_entropy;
    }
};

inline void accumulate_pair(int k, const double* phi_s, const double* phi_r,
                            const double* elog_p, const double* elog_q, const double* logf,
                            PairTerms& acc) {
    double lik = 0.0;
    for (int g = 0; g < k; ++g) {
        if (phi_s[g] == 0.0) continue;
        lik += phi_s[g] * guarded_dot(phi_r, logf + std::size_t(g) * k, k);
    }
    acc.likelihood += lik;
    acc.sender_prior += guarded_dot(phi_s, elog_p, k);
    acc.receiver_prior += guarded_dot(phi_r, elog_q, k);
    acc.sender_entropy += entropy_term(phi_s, k);
    acc.receiver_entropy += entropy_term(phi_r, k);
}

// Dirichlet prior and entropy terms, evaluated at (gamma, elog_pi, alpha).
void membership_terms(const Matrix& gamma, const Matrix& elog, const std::vector<double>& alpha,
                      double& prior, double& entropy) {
    const int n = gamma.rows(), k = gamma.cols();
    double alpha_sum = 0.0, lg_alpha = 0.0;
    for (double a : alpha) {
        alpha_sum += a;
        lg_alpha += std::lgamma(a);
    }
    prior = n * (std::lgamma(alpha_sum) - lg_alpha);
    entropy = 0.0;
    for (int p = 0; p < n; ++p) {
        double gsum = 0.0, lg_gamma = 0.0, cross_a = 0.0, cross_g = 0.0;
        for (int g = 0; g < k; ++g) {
            const double gv = gamma(p, g);
            gsum += gv;
            lg_gamma += std::lgamma(gv);
            cross_a += (alpha[g] - 1.0) * elog(p, g);
            cross_g += (gv - 1.0) * elog(p, g);
        }
        prior += cross_a;
        entropy -= std::lgamma(gsum) - lg_gamma + cross_g;
    }
}

ElboBreakdown finish_breakdown(const PairTerms& pt, double m_prior, double m_entropy) {
    ElboBreakdown b;
    b.likelihood = pt.likelihood;
    b.sender_prior = pt.sender_prior;
    b.receiver_prior = pt.receiver_prior;
    b.membership_prior = m_prior;
    b.membership_entropy = m_entropy;
    b.sender_entropy = pt.sender_entropy;
    b.receiver_entropy = pt.receiver_entropy;
    b.total = b.sum_terms();
    if (b.total == kNegInf) {
        const char* const* names = ElboBreakdown::term_names();
        for (int i = 0; i < 7; ++i)
            if (b.term(i) == kNegInf) {
                b.offending_term = names[i];
                break;
            }
    } else if (!std::isfinite(b.total)) {
        throw NumericError("elbo: non-finite bound (NaN)");
    }
    return b;
}

int clamp_threads(int threads) {
#ifdef _OPENMP
    return std::max(1, threads);
#else
    (void)threads;
    return 1;
#endif
}

}  // namespace

DataView::DataView(const NetworkSet& data, const PairMask* mask)
    : data_(&data),
      n_(data.n_nodes()),
      m_(data.n_replicates()),
      diag_included_(data.diagonal_policy() == DiagonalPolicy::included) {
    data.validate();
    if (mask) {
        heldout_.assign(std::size_t(n_) * n_, 0);
        for (auto [p, q] : mask->held_out) {
            require(p >= 0 && p < n_ && q >= 0 && q < n_, "DataView: held-out pair out of range");
            heldout_[std::size_t(p) * n_ + q] = 1;
        }
    }
    training_pairs_ = 0;
    for (int p = 0; p < n_; ++p)
        for (int q = 0; q < n_; ++q)
            if (training(p, q)) ++training_pairs_;
}

void VariationalState::allocate_phi(int n, int k, int m) {
    phi_sender.assign(m, std::vector<double>(std::size_t(n) * n * k, 0.0));
    phi_receiver.assign(m, std::vector<double>(std::size_t(n) * n * k, 0.0));
}

void VariationalState::drop_phi() {
    phi_sender.clear();
    phi_receiver.clear();
}

VariationalState make_initial_state(int n_nodes, int k_groups) {
    VariationalState s;
    s.gamma = Matrix(n_nodes, k_groups, 2.0 * n_nodes / k_groups);
    return s;
}

const char* const* ElboBreakdown::term_names() {
    static const char* names[7] = {"likelihood",         "sender_prior",
                                   "receiver_prior",     "membership_prior",
                                   "membership_entropy", "sender_entropy",
                                   "receiver_entropy"};
    return names;
}

double ElboBreakdown::term(int i) const {
    switch (i) {
        case 0: return likelihood;
        case 1: return sender_prior;
        case 2: return receiver_prior;
        case 3: return membership_prior;
        case 4: return membership_entropy;
        case 5: return sender_entropy;
        case 6: return receiver_entropy;
        default: throw std::out_of_range("ElboBreakdown::term");
    }
}

std::vector<double> expected_log_pi(const std::vector<double>& gamma_p) {
    require(!gamma_p.empty(), "expected_log_pi: empty input");
    double s = 0.0;
    for (double g : gamma_p) {
        if (!(g > 0.0)) throw InputError("expected_log_pi: entries must be positive");
        s += g;
    }
    const double psi_sum = digamma(s);
    std::vector<double> out(gamma_p.size());
    for (std::size_t i = 0; i < gamma_p.size(); ++i) out[i] = digamma(gamma_p[i]) - psi_sum;
    return out;
}

PhiPairResult update_phi_pair(int r, const std::vector<double>& gamma_p,
                              const std::vector<double>& gamma_q, const Hyperparams& hyper,
                              double tol, int max_inner) {
    require(tol > 0.0, "update_phi_pair: tol must be positive");
    require(max_inner >= 1, "update_phi_pair: max_inner must be positive");
    require(r == 0 || r == 1, "update_phi_pair: r must be 0 or 1");
    const int k = hyper.k_groups;
    require(static_cast<int>(gamma_p.size()) == k && static_cast<int>(gamma_q.size()) == k,
            "update_phi_pair: gamma size must equal K");
    std::vector<double> elog_p = expected_log_pi(gamma_p);
    std::vector<double> elog_q = expected_log_pi(gamma_q);
    std::vector<double> log_b1, log_b0;
    build_log_rates(hyper, log_b1, log_b0);
    PhiPairResult res;
    res.phi_sender.resize(k);
    res.phi_receiver.resize(k);
    std::vector<double> scratch(k);
    res.n_iters = phi_fixed_point(k, elog_p.data(), elog_q.data(),
                                  (r ? log_b1 : log_b0).data(), tol, max_inner,
                                  res.phi_sender.data(), res.phi_receiver.data(),
                                  scratch.data());
    return res;
}

std::vector<double> update_gamma(const VariationalState& state, const DataView& data,
                                 const std::vector<double>& alpha, int node) {
    require(state.has_phi(), "update_gamma: state has no materialized phi");
    const int n = data.n_nodes();
    const int k = state.gamma.cols();
    require(static_cast<int>(alpha.size()) == k, "update_gamma: alpha size must equal K");
    std::vector<double> out(alpha);
    for (int m = 0; m < data.n_replicates(); ++m) {
        for (int q = 0; q < n; ++q) {
            if (data.training(node, q)) {
                const double* ps = state.phi_s(m, node, q, n, k);
                for (int g = 0; g < k; ++g) out[g] += ps[g];
            }
            if (data.training(q, node)) {
                const double* pr = state.phi_r(m, q, node, n, k);
                for (int g = 0; g < k; ++g) out[g] += pr[g];
            }
        }
    }
    return out;
}

namespace {

// Pass over all training slots computing phi fixed points, optionally
// storing them, and accumulating the pair-local bound terms. Thread partials
// are merged in thread order, so results are reproducible for a fixed count.
int phi_pass(const DataView& data, const Matrix& elog, const std::vector<double>& log_b1,
             const std::vector<double>& log_b0, const InnerOptions& inner, int threads,
             VariationalState* phi_store, PairTerms& terms, bool warm_start = false) {
    const int n = data.n_nodes();
    const int k = elog.cols();
    const std::int64_t slots = data.total_slots();
    threads = clamp_threads(threads);
    warm_start = warm_start && phi_store != nullptr;

    std::vector<PairTerms> terms_partial(threads);
    std::vector<int> inner_partial(threads, 0);
    std::vector<std::vector<double>> scratch(threads,
                                             std::vector<double>(std::size_t(k) * 3, 0.0));

    auto run_range = [&](int tid, std::int64_t lo, std::int64_t hi) {
        double* phi_s = scratch[tid].data();
        double* phi_r = phi_s + k;
        double* lg = phi_r + k;
        PairTerms local_terms;
        int local_inner = 0;

        for (std::int64_t slot = lo; slot < hi; ++slot) {
            int m, p, q;
            data.slot_to_mpq(slot, m, p, q);
            if (!data.training(p, q)) continue;
            const int r = data.r(m, p, q);
            const double* logf = (r ? log_b1 : log_b0).data();
            double* ps = phi_s;
            double* pr = phi_r;
            if (phi_store) {
                ps = phi_store->phi_s(m, p, q, n, k);
                pr = phi_store->phi_r(m, p, q, n, k);
            }
            int it = phi_fixed_point(k, elog.row(p), elog.row(q), logf, inner.tol,
                                     inner.max_inner, ps, pr, lg, warm_start);
            local_inner = std::max(local_inner, it);
            accumulate_pair(k, ps, pr, elog.row(p), elog.row(q), logf, local_terms);
        }
        terms_partial[tid] = local_terms;
        inner_partial[tid] = local_inner;
    };

#ifdef _OPENMP
    if (threads > 1) {
#pragma omp parallel num_threads(threads)
        {
            const int tid = omp_get_thread_num();
            const int nt = omp_get_num_threads();
            run_range(tid, slots * tid / nt, slots * (tid + 1) / nt);
        }
    } else {
        run_range(0, 0, slots);
    }
#else
    run_range(0, 0, slots);
#endif

    PairTerms total;
    for (int t = 0; t < threads; ++t) total.add(terms_partial[t]);
    terms = total;
    int max_inner = 0;
    for (int t = 0; t < threads; ++t) max_inner = std::max(max_inner, inner_partial[t]);
    return max_inner;
}

// Pair terms recomputed from a state with materialized phi (no fixed-point
// work), at the given elog snapshot.
PairTerms stored_phi_terms(const VariationalState& state, const DataView& data,
                           const Matrix& elog, const std::vector<double>& log_b1,
                           const std::vector<double>& log_b0, int threads) {
    const int n = data.n_nodes();
    const int k = elog.cols();
    threads = clamp_threads(threads);
    const std::int64_t slots = data.total_slots();
    std::vector<PairTerms> partial(threads);

    auto run_range = [&](int tid, std::int64_t lo, std::int64_t hi) {
        PairTerms local;
        for (std::int64_t slot = lo; slot < hi; ++slot) {
            int m, p, q;
            data.slot_to_mpq(slot, m, p, q);
            if (!data.training(p, q)) continue;
            const int r = data.r(m, p, q);
            accumulate_pair(k, state.phi_s(m, p, q, n, k), state.phi_r(m, p, q, n, k),
                            elog.row(p), elog.row(q), (r ? log_b1 : log_b0).data(), local);
        }
        partial[tid] = local;
    };

#ifdef _OPENMP
    if (threads > 1) {
#pragma omp parallel num_threads(threads)
        {
            const int tid = omp_get_thread_num();
            const int nt = omp_get_num_threads();
            run_range(tid, slots * tid / nt, slots * (tid + 1) / nt);
        }
    } else {
        run_range(0, 0, slots);
    }
#else
    run_range(0, 0, slots);
#endif

    PairTerms total;
    for (int t = 0; t < threads; ++t) total.add(partial[t]);
    return total;
}

void batch_gamma_update(VariationalState& state, const DataView& data,
                        const std::vector<double>& alpha, int threads) {
    const int n = data.n_nodes();
    const int k = state.gamma.cols();
    threads = clamp_threads(threads);
    // Each node is owned by exactly one iteration, with a fixed inner sum
    // order, so the result is identical for any thread count.
#ifdef _OPENMP
#pragma omp parallel for num_threads(threads) schedule(static)
#endif
    for (int p = 0; p < n; ++p) {
        double* row = state.gamma.row(p);
        for (int g = 0; g < k; ++g) row[g] = alpha[g];
        for (int m = 0; m < data.n_replicates(); ++m)
            for (int q = 0; q < n; ++q) {
                if (data.training(p, q)) {
                    const double* ps = state.phi_s(m, p, q, n, k);
                    for (int g = 0; g < k; ++g) row[g] += ps[g];
                }
                if (data.training(q, p)) {
                    const double* pr = state.phi_r(m, q, p, n, k);
                    for (int g = 0; g < k; ++g) row[g] += pr[g];
                }
            }
    }
}

double relative_change(double now, double before) {
    return std::abs(now - before) / std::max(std::abs(before), 1e-12);
}

}  // namespace

ElboBreakdown elbo(const VariationalState& state, const Hyperparams& hyper, const DataView& data,
                   const InnerOptions& inner, int threads) {
    hyper.validate();
    require(state.gamma.rows() == data.n_nodes(), "elbo: state/data node count mismatch");
    require(state.gamma.cols() == hyper.k_groups, "elbo: state/hyper K mismatch");
    const int k = hyper.k_groups;
    Matrix elog(state.gamma.rows(), k);
    compute_elog_pi(state.gamma, elog);
    std::vector<double> log_b1, log_b0;
    build_log_rates(hyper, log_b1, log_b0);

    PairTerms pt;
    if (state.has_phi()) {
        pt = stored_phi_terms(state, data, elog, log_b1, log_b0, threads);
    } else {
        phi_pass(data, elog, log_b1, log_b0, inner, threads, nullptr, pt);
    }
    double m_prior, m_entropy;
    membership_terms(state.gamma, elog, hyper.alpha, m_prior, m_entropy);
    return finish_breakdown(pt, m_prior, m_entropy);
}

ElboBreakdown elbo(const VariationalState& state, const Hyperparams& hyper,
                   const NetworkSet& data) {
    return elbo(state, hyper, DataView(data), InnerOptions{}, 1);
}

EstepResult estep_naive(VariationalState state, const Hyperparams& hyper, const DataView& data,
                        const EstepOptions& opts) {
    hyper.validate();
    const int n = data.n_nodes();
    const int k = hyper.k_groups;
    require(state.gamma.rows() == n && state.gamma.cols() == k,
            "estep_naive: state shape mismatch");
    require(opts.tol > 0.0 && opts.max_sweeps >= 1, "estep_naive: bad options");

    Matrix elog(n, k);
    std::vector<double> log_b1, log_b0;
    build_log_rates(hyper, log_b1, log_b0);

    EstepResult res;
    res.state = std::move(state);

    compute_elog_pi(res.state.gamma, elog);
    PairTerms pt;
    bool phi_fresh = false;
    if (res.state.has_phi()) {
        // Warm continuation: the baseline scores the carried-over phi
        // against the current gamma and rates.
        require(res.state.phi_sender.size() == std::size_t(data.n_replicates()) &&
                    res.state.phi_sender[0].size() == std::size_t(n) * n * k,
                "estep_naive: carried phi shape mismatch");
        pt = stored_phi_terms(res.state, data, elog, log_b1, log_b0, opts.threads);
    } else {
        res.state.allocate_phi(n, k, data.n_replicates());
        res.max_inner_iters = phi_pass(data, elog, log_b1, log_b0, opts.inner, opts.threads,
                                       &res.state, pt, /*warm_start=*/false);
        phi_fresh = true;
    }
    double m_prior, m_entropy;
    membership_terms(res.state.gamma, elog, hyper.alpha, m_prior, m_entropy);
    ElboBreakdown baseline = finish_breakdown(pt, m_prior, m_entropy);
    res.trace.push_back(baseline);
    double prev = baseline.total;

    for (int s = 1; s <= opts.max_sweeps; ++s) {
        if (!phi_fresh) {
            // Later sweeps continue each pair's fixed point from its stored
            // value: every half-update is then an exact coordinate ascent
            // step, which is what makes the trace provably non-decreasing.
            res.max_inner_iters = std::max(
                res.max_inner_iters, phi_pass(data, elog, log_b1, log_b0, opts.inner,
                                              opts.threads, &res.state, pt,
                                              /*warm_start=*/true));
        }
        phi_fresh = false;
        batch_gamma_update(res.state, data, hyper.alpha, opts.threads);
        compute_elog_pi(res.state.gamma, elog);
        PairTerms pt23 = stored_phi_terms(res.state, data, elog, log_b1, log_b0, opts.threads);
        membership_terms(res.state.gamma, elog, hyper.alpha, m_prior, m_entropy);
        ElboBreakdown e = finish_breakdown(pt23, m_prior, m_entropy);
        res.trace.push_back(e);
        res.sweeps = s;
        if (relative_change(e.total, prev) < opts.tol) {
            res.converged = true;
            break;
        }
        prev = e.total;
    }
    return res;
}

void BlockStats::reset(int k_groups, int replicates) {
    k = k_groups;
    m = replicates;
    b_num.assign(std::size_t(m) * k * k, 0.0);
    b_den.assign(std::size_t(m) * k * k, 0.0);
    rho_num.assign(m, 0.0);
    rho_den.assign(m, 0.0);
}

void BlockStats::add(const BlockStats& other) {
    for (std::size_t i = 0; i < b_num.size(); ++i) b_num[i] += other.b_num[i];
    for (std::size_t i = 0; i < b_den.size(); ++i) b_den[i] += other.b_den[i];
    for (int i = 0; i < m; ++i) {
        rho_num[i] += other.rho_num[i];
        rho_den[i] += other.rho_den[i];
    }
}

void NestedWorkspace::configure(int n_, int k_, int m_, int threads_) {
    threads_ = clamp_threads(threads_);
    if (n == n_ && k == k_ && m == m_ && threads == threads_) return;
    n = n_;
    k = k_;
    m = m_;
    threads = threads_;
    elog_pi = Matrix(n, k);
    gamma_accum = Matrix(n, k);
    log_b1.assign(std::size_t(k) * k, 0.0);
    log_b0.assign(std::size_t(k) * k, 0.0);
    pair_scratch.assign(std::size_t(threads) * 3 * k, 0.0);
    thread_gamma.assign(std::size_t(std::max(0, threads - 1)) * n * k, 0.0);
    thread_stats.assign(threads, BlockStats{});
    for (auto& s : thread_stats) s.reset(k, m);
    thread_elbo.assign(std::size_t(threads) * 5, 0.0);
    thread_inner.assign(threads, 0);
}

std::size_t NestedWorkspace::allocated_scalars() const {
    std::size_t total = elog_pi.data().size() + gamma_accum.data().size() + log_b1.size() +
                        log_b0.size() + pair_scratch.size() + thread_gamma.size() +
                        thread_elbo.size() + thread_inner.size();
    for (const auto& s : thread_stats)
        total += s.b_num.size() + s.b_den.size() + s.rho_num.size() + s.rho_den.size();
    return total;
}

NestedSweepResult estep_nested_sweep(VariationalState& state, const Hyperparams& hyper,
                                     const DataView& data, NestedWorkspace& ws,
                                     const EstepOptions& opts, const PhiObserver& observer) {
    hyper.validate();
    const int n = data.n_nodes();
    const int k = hyper.k_groups;
    require(state.gamma.rows() == n && state.gamma.cols() == k,
            "estep_nested_sweep: state shape mismatch");
    const int threads = observer ? 1 : clamp_threads(opts.threads);
    ws.configure(n, k, data.n_replicates(), threads);

    // Snapshot of E[log pi] at sweep start; every pair in the sweep reads it.
    compute_elog_pi(state.gamma, ws.elog_pi);
    build_log_rates(hyper, ws.log_b1, ws.log_b0);

    for (int p = 0; p < n; ++p) {
        double* row = ws.gamma_accum.row(p);
        for (int g = 0; g < k; ++g) row[g] = hyper.alpha[g];
    }
    std::fill(ws.thread_gamma.begin(), ws.thread_gamma.end(), 0.0);

    NestedSweepResult res;
    PairTerms pt;
    const std::int64_t slots = data.total_slots();

    auto run_range = [&](int tid, std::int64_t lo, std::int64_t hi) {
        double* phi_s = ws.pair_scratch.data() + std::size_t(tid) * 3 * k;
        double* phi_r = phi_s + k;
        double* lg = phi_r + k;
        double* eterms = ws.thread_elbo.data() + std::size_t(tid) * 5;
        std::fill(eterms, eterms + 5, 0.0);
        BlockStats& stats = ws.thread_stats[tid];
        std::fill(stats.b_num.begin(), stats.b_num.end(), 0.0);
        std::fill(stats.b_den.begin(), stats.b_den.end(), 0.0);
        std::fill(stats.rho_num.begin(), stats.rho_num.end(), 0.0);
        std::fill(stats.rho_den.begin(), stats.rho_den.end(), 0.0);
        double* gamma_buf =
            tid == 0 ? ws.gamma_accum.data().data()
                     : ws.thread_gamma.data() + std::size_t(tid - 1) * n * k;
        int local_inner = 0;

        for (std::int64_t slot = lo; slot < hi; ++slot) {
            int m, p, q;
            data.slot_to_mpq(slot, m, p, q);
            if (!data.training(p, q)) continue;
            const int r = data.r(m, p, q);
            const double* logf = (r ? ws.log_b1 : ws.log_b0).data();
            int it = phi_fixed_point(k, ws.elog_pi.row(p), ws.elog_pi.row(q), logf,
                                     opts.inner.tol, opts.inner.max_inner, phi_s, phi_r, lg);
            local_inner = std::max(local_inner, it);

            PairTerms tmp;
            accumulate_pair(k, phi_s, phi_r, ws.elog_pi.row(p), ws.elog_pi.row(q), logf, tmp);
            eterms[0] += tmp.likelihood;
            eterms[1] += tmp.sender_prior;
            eterms[2] += tmp.receiver_prior;
            eterms[3] += tmp.sender_entropy;
            eterms[4] += tmp.receiver_entropy;

            double* gp = gamma_buf + std::size_t(p) * k;
            double* gq = gamma_buf + std::size_t(q) * k;
            for (int g = 0; g < k; ++g) gp[g] += phi_s[g];
            for (int g = 0; g < k; ++g) gq[g] += phi_r[g];

            double* bn = stats.b_num.data() + std::size_t(m) * k * k;
            double* bd = stats.b_den.data() + std::size_t(m) * k * k;
            double sum_s = 0.0, sum_r = 0.0;
            for (int g = 0; g < k; ++g) sum_s += phi_s[g];
            for (int h = 0; h < k; ++h) sum_r += phi_r[h];
            for (int g = 0; g < k; ++g) {
                const double w = phi_s[g];
                if (w == 0.0) continue;
                for (int h = 0; h < k; ++h) {
                    const double ww = w * phi_r[h];
                    bd[std::size_t(g) * k + h] += ww;
                    if (r) bn[std::size_t(g) * k + h] += ww;
                }
            }
            const double mass = sum_s * sum_r;
            stats.rho_den[m] += mass;
            if (!r) stats.rho_num[m] += mass;

            if (observer) observer(m, p, q, phi_s, phi_r);
        }
        ws.thread_inner[tid] = local_inner;
    };

#ifdef _OPENMP
    if (threads > 1) {
#pragma omp parallel num_threads(threads)
        {
            const int tid = omp_get_thread_num();
            const int nt = omp_get_num_threads();
            run_range(tid, slots * tid / nt, slots * (tid + 1) / nt);
        }
    } else {
        run_range(0, 0, slots);
    }
#else
    run_range(0, 0, slots);
#endif

    // Ordered merge of thread partials.
    for (int t = 1; t < threads; ++t) {
        const double* g = ws.thread_gamma.data() + std::size_t(t - 1) * n * k;
        double* dst = ws.gamma_accum.data().data();
        for (std::size_t i = 0; i < std::size_t(n) * k; ++i) dst[i] += g[i];
    }
    res.stats.reset(k, data.n_replicates());
    for (int t = 0; t < threads; ++t) res.stats.add(ws.thread_stats[t]);
    pt = PairTerms{};
    for (int t = 0; t < threads; ++t) {
        const double* e = ws.thread_elbo.data() + std::size_t(t) * 5;
        pt.likelihood += e[0];
        pt.sender_prior += e[1];
        pt.receiver_prior += e[2];
        pt.sender_entropy += e[3];
        pt.receiver_entropy += e[4];
    }
    res.max_inner_iters = 0;
    for (int t = 0; t < threads; ++t)
        res.max_inner_iters = std::max(res.max_inner_iters, ws.thread_inner[t]);

    // Membership terms belong to the sweep-start gamma: the returned bound
    // is L(fresh phi, old gamma, current hyper).
    double m_prior, m_entropy;
    membership_terms(state.gamma, ws.elog_pi, hyper.alpha, m_prior, m_entropy);
    res.incoming_elbo = finish_breakdown(pt, m_prior, m_entropy);

    std::swap(state.gamma, ws.gamma_accum);
    state.drop_phi();
    return res;
}

}  // namespace mmsb
