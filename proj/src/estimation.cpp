#include "mmsb/estimation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "mmsb/mathfn.hpp"
#include "mmsb/rng.hpp"

namespace mmsb {

namespace {

// Column sums of E[log pi] under the variational Dirichlet rows.
std::vector<double> elog_pi_colsums(const Matrix& gamma) {
    const int n = gamma.rows(), k = gamma.cols();
    std::vector<double> s(k, 0.0);
    for (int p = 0; p < n; ++p) {
        double gsum = 0.0;
        for (int g = 0; g < k; ++g) gsum += gamma(p, g);
        const double psi_sum = digamma(gsum);
        for (int g = 0; g < k; ++g) s[g] += digamma(gamma(p, g)) - psi_sum;
    }
    return s;
}

double alpha_objective_from_sums(const std::vector<double>& alpha,
                                 const std::vector<double>& elog_sums, int n) {
    double asum = 0.0, lg = 0.0, cross = 0.0;
    for (std::size_t i = 0; i < alpha.size(); ++i) {
        asum += alpha[i];
        lg += std::lgamma(alpha[i]);
        cross += (alpha[i] - 1.0) * elog_sums[i];
    }
    return n * (std::lgamma(asum) - lg) + cross;
}

bool all_positive(const std::vector<double>& v) {
    for (double x : v)
        if (!(x > 0.0)) return false;
    return true;
}

double grad_inf_norm(const std::vector<double>& g) {
    double m = 0.0;
    for (double x : g) m = std::max(m, std::abs(x));
    return m;
}

}  // namespace

double alpha_objective(const std::vector<double>& alpha, const Matrix& gamma) {
    require(static_cast<int>(alpha.size()) == gamma.cols(),
            "alpha_objective: alpha size must equal gamma columns");
    require(all_positive(alpha), "alpha_objective: alpha must be positive");
    return alpha_objective_from_sums(alpha, elog_pi_colsums(gamma), gamma.rows());
}

AlphaDerivatives alpha_gradient_hessian(const std::vector<double>& alpha, const Matrix& gamma) {
    const int k = static_cast<int>(alpha.size());
    require(k == gamma.cols(), "alpha_gradient_hessian: alpha size must equal gamma columns");
    require(all_positive(alpha), "alpha_gradient_hessian: alpha must be positive");
    const int n = gamma.rows();
    const std::vector<double> elog_sums = elog_pi_colsums(gamma);

    double asum = 0.0;
    for (double a : alpha) asum += a;
    const double psi_asum = digamma(asum);

    AlphaDerivatives d;
    d.gradient.resize(k);
    d.hessian_diag.resize(k);
    for (int i = 0; i < k; ++i) {
        d.gradient[i] = n * (psi_asum - digamma(alpha[i])) + elog_sums[i];
        d.hessian_diag[i] = -n * trigamma(alpha[i]);
    }
    d.hessian_offdiag = n * trigamma(asum);
    return d;
}

namespace {

// Shared Newton loop; `project` restricts the step to the symmetric
// subspace when estimating a single shared concentration.
std::vector<double> newton_alpha(std::vector<double> alpha, const Matrix& gamma, int max_nr,
                                 double nr_tol, bool scalar) {
    require(!alpha.empty() && all_positive(alpha), "mstep_alpha: start must be positive");
    require(static_cast<int>(alpha.size()) == gamma.cols(),
            "mstep_alpha: alpha size must equal gamma columns");
    const int k = static_cast<int>(alpha.size());
    const int n = gamma.rows();
    const std::vector<double> elog_sums = elog_pi_colsums(gamma);

    double value = alpha_objective_from_sums(alpha, elog_sums, n);
    if (!std::isfinite(value)) throw NumericError("mstep_alpha: non-finite objective at start");

    std::vector<double> step(k), trial(k);
    for (int it = 0; it < max_nr; ++it) {
        AlphaDerivatives d = alpha_gradient_hessian(alpha, gamma);
        if (scalar) {
            double g1 = 0.0;
            for (double g : d.gradient) g1 += g;
            if (std::abs(g1) < nr_tol) break;
            double h1 = double(k) * k * d.hessian_offdiag;
            for (double h : d.hessian_diag) h1 += h;
            const double delta = g1 / h1;
            for (int i = 0; i < k; ++i) step[i] = delta;
        } else {
            if (grad_inf_norm(d.gradient) < nr_tol) break;
            // (diag(h) + z 11')^{-1} g  via Sherman-Morrison.
            double sum_gh = 0.0, sum_inv_h = 0.0;
            for (int i = 0; i < k; ++i) {
                sum_gh += d.gradient[i] / d.hessian_diag[i];
                sum_inv_h += 1.0 / d.hessian_diag[i];
            }
            const double c = sum_gh / (1.0 / d.hessian_offdiag + sum_inv_h);
            for (int i = 0; i < k; ++i) step[i] = (d.gradient[i] - c) / d.hessian_diag[i];
        }

        double scale = 1.0;
        bool accepted = false;
        for (int half = 0; half < 60; ++half) {
            bool ok = true;
            for (int i = 0; i < k; ++i) {
                trial[i] = alpha[i] - scale * step[i];
                if (!(trial[i] > 0.0)) {
                    ok = false;
                    break;
                }
            }
            if (ok) {
                const double v = alpha_objective_from_sums(trial, elog_sums, n);
                if (std::isfinite(v) && v >= value) {
                    alpha = trial;
                    value = v;
                    accepted = true;
                    break;
                }
            }
            scale *= 0.5;
        }
        if (!accepted) break;  // no ascent direction left at this scale
    }
    return alpha;
}

}  // namespace

std::vector<double> mstep_alpha(std::vector<double> alpha0, const Matrix& gamma, int max_nr,
                                double nr_tol) {
    return newton_alpha(std::move(alpha0), gamma, max_nr, nr_tol, /*scalar=*/false);
}

std::vector<double> mstep_alpha_scalar(std::vector<double> alpha0, const Matrix& gamma,
                                       int max_nr, double nr_tol) {
    double mean = 0.0;
    for (double a : alpha0) mean += a;
    mean /= alpha0.empty() ? 1.0 : double(alpha0.size());
    std::vector<double> sym(alpha0.size(), mean);
    return newton_alpha(std::move(sym), gamma, max_nr, nr_tol, /*scalar=*/true);
}

BlockStats block_stats(const VariationalState& state, const DataView& data) {
    require(state.has_phi(), "block_stats: state has no materialized phi");
    const int n = data.n_nodes();
    const int k = state.gamma.cols();
    BlockStats stats;
    stats.reset(k, data.n_replicates());
    data.for_each_training_pair([&](int m, int p, int q) {
        const double* ps = state.phi_s(m, p, q, n, k);
        const double* pr = state.phi_r(m, p, q, n, k);
        const int r = data.r(m, p, q);
        double* bn = stats.b_num.data() + std::size_t(m) * k * k;
        double* bd = stats.b_den.data() + std::size_t(m) * k * k;
        double sum_s = 0.0, sum_r = 0.0;
        for (int g = 0; g < k; ++g) sum_s += ps[g];
        for (int h = 0; h < k; ++h) sum_r += pr[h];
        for (int g = 0; g < k; ++g) {
            if (ps[g] == 0.0) continue;
            for (int h = 0; h < k; ++h) {
                const double ww = ps[g] * pr[h];
                bd[std::size_t(g) * k + h] += ww;
                if (r) bn[std::size_t(g) * k + h] += ww;
            }
        }
        const double mass = sum_s * sum_r;
        stats.rho_den[m] += mass;
        if (!r) stats.rho_num[m] += mass;
    });
    return stats;
}

BEstimate finalize_b(const BlockStats& stats) {
    const int k = stats.k;
    BEstimate est;
    est.b = Matrix(k, k);
    for (int g = 0; g < k; ++g)
        for (int h = 0; h < k; ++h) {
            double acc = 0.0;
            bool degenerate = false;
            for (int m = 0; m < stats.m; ++m) {
                const double num = stats.b_num[std::size_t(m) * k * k + std::size_t(g) * k + h];
                const double den = stats.b_den[std::size_t(m) * k * k + std::size_t(g) * k + h];
                if (den <= 0.0) {
                    degenerate = true;
                    break;
                }
                acc += num / den;
            }
            if (degenerate) {
                est.b(g, h) = 0.5;  // maximum-entropy default for empty blocks
                est.degenerate_blocks.emplace_back(g, h);
            } else {
                est.b(g, h) = acc / stats.m;
            }
        }
    return est;
}

double finalize_rho(const BlockStats& stats) {
    double acc = 0.0;
    for (int m = 0; m < stats.m; ++m) {
        require(stats.rho_den[m] > 0.0, "finalize_rho: no training pairs");
        acc += stats.rho_num[m] / stats.rho_den[m];
    }
    return acc / stats.m;
}

BEstimate mstep_B(const VariationalState& state, const NetworkSet& data) {
    return finalize_b(block_stats(state, DataView(data)));
}

double mstep_rho(const VariationalState& state, const NetworkSet& data) {
    return finalize_rho(block_stats(state, DataView(data)));
}

double fixed_rho(const NetworkSet& data) { return 1.0 - density(data); }

void FitConfig::validate() const {
    require(k_groups >= 1, "FitConfig: K must be positive");
    require(max_em_iters >= 1, "FitConfig: max_em_iters must be positive");
    require(em_tol > 0.0, "FitConfig: em_tol must be positive");
    require(inner.tol > 0.0 && inner.max_inner >= 1, "FitConfig: bad inner options");
    require(estep_max_sweeps >= 1, "FitConfig: estep_max_sweeps must be positive");
    if (rho_mode == RhoMode::fixed_value)
        require(rho_value >= 0.0 && rho_value <= 1.0, "FitConfig: rho_value must lie in [0,1]");
    if (alpha_mode == AlphaMode::fixed) {
        require(static_cast<int>(alpha_fixed.size()) == k_groups,
                "FitConfig: alpha_fixed must have K entries");
        for (double a : alpha_fixed) require(a > 0.0, "FitConfig: alpha_fixed must be positive");
    }
    if (!alpha_init.empty()) {
        require(static_cast<int>(alpha_init.size()) == k_groups,
                "FitConfig: alpha_init must have K entries");
        for (double a : alpha_init) require(a > 0.0, "FitConfig: alpha_init must be positive");
    }
    if (b_mode == BMode::fixed) {
        require(b_fixed.rows() == k_groups && b_fixed.cols() == k_groups,
                "FitConfig: b_fixed must be K x K");
        for (double b : b_fixed.data())
            require(b >= 0.0 && b <= 1.0, "FitConfig: b_fixed entries must lie in [0,1]");
    }
    require(threads >= 1, "FitConfig: threads must be positive");
}

std::vector<double> FitResult::elbo_trace() const {
    std::vector<double> t;
    t.reserve(elbo_iterations.size());
    for (const auto& e : elbo_iterations) t.push_back(e.total);
    return t;
}

namespace {

constexpr double kBClampLo = 1e-9;
constexpr double kBClampHi = 1.0 - 1e-9;

double training_density(const DataView& view) {
    std::int64_t edges = 0;
    view.for_each_training_pair([&](int m, int p, int q) { edges += view.r(m, p, q); });
    const double slots =
        double(view.training_pairs_per_replicate()) * view.n_replicates();
    require(slots > 0, "fit: no training pairs");
    return double(edges) / slots;
}

Hyperparams initial_hyper(const FitConfig& cfg, const DataView& view) {
    const int k = cfg.k_groups;
    Hyperparams h;
    h.k_groups = k;

    if (cfg.alpha_mode == AlphaMode::fixed)
        h.alpha = cfg.alpha_fixed;
    else if (!cfg.alpha_init.empty())
        h.alpha = cfg.alpha_init;
    else
        h.alpha.assign(k, 1.0 / k);

    if (cfg.b_mode == BMode::fixed) {
        // Rates exactly 0 or 1 make the opposing observation impossible and
        // the multinomial updates degenerate; floor them like estimated ones.
        h.block_matrix = cfg.b_fixed;
        for (double& b : h.block_matrix.data()) b = std::clamp(b, kBClampLo, kBClampHi);
    } else {
        // Random start; symmetry of the objective makes a constant start a
        // stationary point, so the rates must differ from the outset.
        h.block_matrix = Matrix(k, k);
        Rng rng(cfg.seed, Rng::Stream::block_init);
        for (int g = 0; g < k; ++g)
            for (int hh = 0; hh < k; ++hh)
                h.block_matrix(g, hh) = 0.05 + 0.9 * rng.next_unit();
    }

    switch (cfg.rho_mode) {
        case RhoMode::fixed_value: h.rho = cfg.rho_value; break;
        case RhoMode::fixed_from_density:
        case RhoMode::estimate: h.rho = 1.0 - training_density(view); break;
    }
    h.validate();
    return h;
}

// Hard group guesses from a spectral embedding of the symmetrized training
// adjacency: top-K eigenvectors by block orthogonal iteration, then k-means
// (++-style seeding) with restarts. Reads observations only through the
// view, so held-out pairs never inform the start.
std::vector<int> spectral_groups(const DataView& view, int k, std::uint64_t seed) {
    const int n = view.n_nodes();
    Matrix s(n, n, 0.0);
    view.for_each_training_pair([&](int m, int p, int q) {
        const double r = view.r(m, p, q);
        s(p, q) += r;
        s(q, p) += r;
    });

    Rng rng(seed, Rng::Stream::block_init, 0x5eedULL);
    Matrix x(n, k), y(n, k);
    for (int i = 0; i < n; ++i)
        for (int c = 0; c < k; ++c) x(i, c) = rng.next_normal();

    auto orthonormalize = [&](Matrix& m) {
        for (int c = 0; c < k; ++c) {
            for (int prev = 0; prev < c; ++prev) {
                double dot = 0.0;
                for (int i = 0; i < n; ++i) dot += m(i, c) * m(i, prev);
                for (int i = 0; i < n; ++i) m(i, c) -= dot * m(i, prev);
            }
            double norm = 0.0;
            for (int i = 0; i < n; ++i) norm += m(i, c) * m(i, c);
            norm = std::sqrt(norm);
            if (norm < 1e-12) {
                for (int i = 0; i < n; ++i) m(i, c) = rng.next_normal();
                double nn = 0.0;
                for (int i = 0; i < n; ++i) nn += m(i, c) * m(i, c);
                nn = std::sqrt(nn);
                for (int i = 0; i < n; ++i) m(i, c) /= nn;
            } else {
                for (int i = 0; i < n; ++i) m(i, c) /= norm;
            }
        }
    };
    orthonormalize(x);
    for (int it = 0; it < 200; ++it) {
        for (int i = 0; i < n; ++i)
            for (int c = 0; c < k; ++c) {
                double acc = 0.0;
                for (int j = 0; j < n; ++j) acc += s(i, j) * x(j, c);
                y(i, c) = acc;
            }
        std::swap(x, y);
        orthonormalize(x);
    }
    const Matrix& embed = x;

    std::vector<int> best_labels(n, 0);
    double best_ss = std::numeric_limits<double>::infinity();
    std::vector<int> labels(n);
    std::vector<double> dist2(n);
    Matrix centers(k, k);
    for (int restart = 0; restart < 12; ++restart) {
        // ++-style seeding: next center drawn proportional to squared distance
        int first = static_cast<int>(rng.next_below(n));
        for (int d = 0; d < k; ++d) centers(0, d) = embed(first, d);
        for (int c = 1; c < k; ++c) {
            double total = 0.0;
            for (int i = 0; i < n; ++i) {
                double best = std::numeric_limits<double>::infinity();
                for (int prev = 0; prev < c; ++prev) {
                    double dd = 0.0;
                    for (int d = 0; d < k; ++d) {
                        const double diff = embed(i, d) - centers(prev, d);
                        dd += diff * diff;
                    }
                    best = std::min(best, dd);
                }
                dist2[i] = best;
                total += best;
            }
            int pick = 0;
            if (total > 0.0) {
                double u = rng.next_unit() * total, cum = 0.0;
                for (int i = 0; i < n; ++i) {
                    cum += dist2[i];
                    if (u < cum) {
                        pick = i;
                        break;
                    }
                }
            } else {
                pick = static_cast<int>(rng.next_below(n));
            }
            for (int d = 0; d < k; ++d) centers(c, d) = embed(pick, d);
        }
        for (int it = 0; it < 50; ++it) {
            for (int i = 0; i < n; ++i) {
                int arg = 0;
                double best = std::numeric_limits<double>::infinity();
                for (int c = 0; c < k; ++c) {
                    double dd = 0.0;
                    for (int d = 0; d < k; ++d) {
                        const double diff = embed(i, d) - centers(c, d);
                        dd += diff * diff;
                    }
                    if (dd < best) {
                        best = dd;
                        arg = c;
                    }
                }
                labels[i] = arg;
            }
            for (int c = 0; c < k; ++c) {
                double count = 0.0;
                std::vector<double> mean(k, 0.0);
                for (int i = 0; i < n; ++i)
                    if (labels[i] == c) {
                        count += 1.0;
                        for (int d = 0; d < k; ++d) mean[d] += embed(i, d);
                    }
                if (count > 0.0)
                    for (int d = 0; d < k; ++d) centers(c, d) = mean[d] / count;
            }
        }
        double ss = 0.0;
        for (int i = 0; i < n; ++i)
            for (int d = 0; d < k; ++d) {
                const double diff = embed(i, d) - centers(labels[i], d);
                ss += diff * diff;
            }
        if (ss < best_ss) {
            best_ss = ss;
            best_labels = labels;
        }
    }
    return best_labels;
}

VariationalState initial_state(const FitConfig& cfg, const DataView& view) {
    const int n = view.n_nodes();
    const int k = cfg.k_groups;
    VariationalState state = make_initial_state(n, k);
    if (cfg.init_mode == InitMode::seeded && k > 1 && k <= n) {
        const std::vector<int> groups = spectral_groups(view, k, cfg.seed);
        const double base = 2.0 * n / k;
        const double concentration = 0.6;
        for (int p = 0; p < n; ++p) {
            for (int g = 0; g < k; ++g) state.gamma(p, g) = base * (1.0 - concentration);
            state.gamma(p, groups[p]) += base * k * concentration;
        }
    }
    if (cfg.init_jitter) {
        Rng rng(cfg.seed, Rng::Stream::gamma_jitter);
        for (int p = 0; p < n; ++p)
            for (int g = 0; g < k; ++g)
                state.gamma(p, g) *= 1.0 + 0.05 * (2.0 * rng.next_unit() - 1.0);
    }
    return state;
}

void apply_mstep(Hyperparams& hyper, const BlockStats& stats, const Matrix& gamma,
                 const FitConfig& cfg, std::vector<std::string>& warnings) {
    if (cfg.b_mode == BMode::estimate) {
        BEstimate est = finalize_b(stats);
        for (auto [g, h] : est.degenerate_blocks)
            warnings.push_back("degenerate block (" + std::to_string(g) + "," +
                               std::to_string(h) + "): no pair mass, rate defaulted to 0.5");
        for (double& b : est.b.data()) b = std::clamp(b, kBClampLo, kBClampHi);
        hyper.block_matrix = std::move(est.b);
    }
    if (cfg.rho_mode == RhoMode::estimate) hyper.rho = finalize_rho(stats);
    switch (cfg.alpha_mode) {
        case AlphaMode::estimate_vector:
            hyper.alpha = mstep_alpha(hyper.alpha, gamma, cfg.alpha_max_nr, cfg.alpha_nr_tol);
            break;
        case AlphaMode::estimate_scalar:
            hyper.alpha =
                mstep_alpha_scalar(hyper.alpha, gamma, cfg.alpha_max_nr, cfg.alpha_nr_tol);
            break;
        case AlphaMode::fixed: break;
    }
}

void check_finite(const ElboBreakdown& e) {
    if (!std::isfinite(e.total))
        throw NumericError("fit: bound is non-finite; offending term: " +
                           (e.offending_term.empty() ? std::string("unknown")
                                                     : e.offending_term));
}

double relative_change(double now, double before) {
    return std::abs(now - before) / std::max(std::abs(before), 1e-12);
}

}  // namespace

FitResult fit(const NetworkSet& data, const FitConfig& config, const PairMask* mask) {
    const auto t0 = std::chrono::steady_clock::now();
    config.validate();
    data.validate();
    DataView view(data, mask);
    if (config.audit_hook) view.set_audit(config.audit_hook);
    const int n = view.n_nodes();
    const int k = config.k_groups;

    FitResult res;
    res.config = config;
    res.n_nodes = n;
    res.diagonal_policy = data.diagonal_policy();

    Hyperparams hyper = initial_hyper(config, view);
    res.state = initial_state(config, view);

    auto record = [&](const ElboBreakdown& e) {
        check_finite(e);
        res.elbo_iterations.push_back(e);
        if (config.record_checkpoints) res.checkpoints.push_back({e.total, hyper});
    };

    if (config.schedule == Schedule::naive) {
        EstepOptions eopts;
        eopts.inner = config.inner;
        eopts.tol = config.em_tol;
        eopts.max_sweeps = config.estep_max_sweeps;
        eopts.threads = config.threads;

        double prev = 0.0;
        for (int t = 1; t <= config.max_em_iters; ++t) {
            if (t > 1) {
                BlockStats stats = block_stats(res.state, view);
                apply_mstep(hyper, stats, res.state.gamma, config, res.warnings);
            }
            EstepResult er = estep_naive(std::move(res.state), hyper, view, eopts);
            res.state = std::move(er.state);
            if (config.record_checkpoints)
                for (const auto& e : er.trace) res.checkpoints.push_back({e.total, hyper});
            const ElboBreakdown& e = er.trace.back();
            check_finite(e);
            res.elbo_iterations.push_back(e);
            res.iterations = t;
            if (t > 1 && relative_change(e.total, prev) < config.em_tol) {
                res.converged = true;
                break;
            }
            prev = e.total;
        }
        // The full-sweep schedule materializes phi as a matter of course;
        // keeping it makes the recorded bound exactly reproducible.
    } else {
        EstepOptions eopts;
        eopts.inner = config.inner;
        eopts.threads = config.threads;

        NestedWorkspace ws;
        BlockStats pending_stats;
        bool have_stats = false;
        double prev = 0.0;
        Matrix gamma_before;
        for (int t = 1; t <= config.max_em_iters; ++t) {
            if (t > 1 && have_stats)
                apply_mstep(hyper, pending_stats, res.state.gamma, config, res.warnings);
            gamma_before = res.state.gamma;
            NestedSweepResult sr = estep_nested_sweep(res.state, hyper, view, ws, eopts);
            pending_stats = std::move(sr.stats);
            have_stats = true;
            record(sr.incoming_elbo);
            res.iterations = t;
            if (t > 1 && sr.incoming_elbo.total <
                             prev - 1e-10 * std::abs(prev)) {
                // The synchronized sweep can settle into a two-phase cycle;
                // averaging with the pre-sweep gamma collapses it without
                // moving the fixed points.
                double* cur = res.state.gamma.data().data();
                const double* old = gamma_before.data().data();
                for (std::size_t i = 0; i < res.state.gamma.data().size(); ++i)
                    cur[i] = 0.5 * (cur[i] + old[i]);
                continue;  // keep the high-water mark in prev
            }
            if (t > 1 && relative_change(sr.incoming_elbo.total, prev) < config.em_tol) {
                res.converged = true;
                break;
            }
            prev = sr.incoming_elbo.total;
        }
        // Close the trace with the bound of the state actually returned
        // (fresh phi against the final gamma and hyperparameters).
        if (config.retain_phi) {
            // One evaluation pass that also materializes phi; its baseline
            // entry is L(fresh phi, final gamma, final hyper).
            VariationalState snapshot;
            snapshot.gamma = res.state.gamma;
            EstepOptions nopts;
            nopts.inner = config.inner;
            nopts.threads = config.threads;
            nopts.max_sweeps = 1;
            nopts.tol = std::numeric_limits<double>::infinity();
            EstepResult er = estep_naive(std::move(snapshot), hyper, view, nopts);
            res.state.phi_sender = std::move(er.state.phi_sender);
            res.state.phi_receiver = std::move(er.state.phi_receiver);
            record(er.trace.front());
        } else {
            record(elbo(res.state, hyper, view, config.inner, config.threads));
        }
    }

    res.hyper_hat = hyper;
    res.pi_hat = Matrix(n, k);
    for (int p = 0; p < n; ++p) {
        double s = 0.0;
        for (int g = 0; g < k; ++g) s += res.state.gamma(p, g);
        for (int g = 0; g < k; ++g) res.pi_hat(p, g) = res.state.gamma(p, g) / s;
    }
    res.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return res;
}

}  // namespace mmsb
