#include "mmsb/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace mmsb {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}

PredictionMatrix predict_matrix(const FitResult& fit, PredictionMode mode) {
    const int n = fit.n_nodes;
    const int k = fit.hyper_hat.k_groups;
    const bool skip_diag = fit.diagonal_policy == DiagonalPolicy::excluded;
    const double scale = 1.0 - fit.hyper_hat.rho;
    const Matrix& b = fit.hyper_hat.block_matrix;

    PredictionMatrix out;
    out.mode = mode;
    out.probs = Matrix(n, n, 0.0);

    if (mode == PredictionMode::pi_based) {
        // Bpi(q, g) = sum_h B(g,h) pi_q(h), then probs(p,q) = pi_p . Bpi(q).
        Matrix bpi(n, k);
        for (int q = 0; q < n; ++q)
            for (int g = 0; g < k; ++g) {
                double acc = 0.0;
                for (int h = 0; h < k; ++h) acc += b(g, h) * fit.pi_hat(q, h);
                bpi(q, g) = acc;
            }
        for (int p = 0; p < n; ++p)
            for (int q = 0; q < n; ++q) {
                if (skip_diag && p == q) continue;
                double acc = 0.0;
                for (int g = 0; g < k; ++g) acc += fit.pi_hat(p, g) * bpi(q, g);
                out.probs(p, q) = scale * acc;
            }
    } else {
        if (!fit.state.has_phi())
            throw InputError("predict_matrix: phi-based prediction requires retained phi "
                             "(refit with retain_phi)");
        const int m_reps = static_cast<int>(fit.state.phi_sender.size());
        for (int p = 0; p < n; ++p)
            for (int q = 0; q < n; ++q) {
                if (skip_diag && p == q) continue;
                double acc = 0.0;
                for (int m = 0; m < m_reps; ++m) {
                    const double* ps = fit.state.phi_s(m, p, q, n, k);
                    const double* pr = fit.state.phi_r(m, p, q, n, k);
                    for (int g = 0; g < k; ++g) {
                        double inner = 0.0;
                        for (int h = 0; h < k; ++h) inner += b(g, h) * pr[h];
                        acc += ps[g] * inner;
                    }
                }
                out.probs(p, q) = scale * acc / m_reps;
            }
    }
    return out;
}

PRCurve precision_recall(const PredictionMatrix& pred, const Network& reference,
                         std::vector<double> thresholds) {
    const int n = reference.n_nodes();
    require(pred.probs.rows() == n && pred.probs.cols() == n,
            "precision_recall: prediction/reference dimension mismatch");

    std::vector<std::pair<double, int>> scored;  // (prob, is_edge)
    std::int64_t edges = 0;
    reference.for_each_pair([&](int p, int q) {
        const int e = reference.at(p, q);
        edges += e;
        scored.emplace_back(pred.probs(p, q), e);
    });
    require(edges > 0, "precision_recall: reference network has no edges");

    std::sort(scored.begin(), scored.end(),
              [](const auto& a, const auto& b) { return a.first > b.first; });
    std::vector<std::int64_t> tp_prefix(scored.size() + 1, 0);
    for (std::size_t i = 0; i < scored.size(); ++i)
        tp_prefix[i + 1] = tp_prefix[i] + scored[i].second;

    if (thresholds.empty()) {
        for (std::size_t i = 0; i < scored.size(); ++i)
            if (i == 0 || scored[i].first != scored[i - 1].first)
                thresholds.push_back(scored[i].first);
    } else {
        std::sort(thresholds.begin(), thresholds.end(), std::greater<double>());
    }

    PRCurve curve;
    for (double t : thresholds) {
        // count of pairs with prob >= t on the descending-sorted array
        auto it = std::partition_point(scored.begin(), scored.end(),
                                       [t](const auto& s) { return s.first >= t; });
        const std::int64_t predicted = it - scored.begin();
        const std::int64_t tp = tp_prefix[predicted];
        PRPoint pt;
        pt.threshold = t;
        pt.precision = predicted == 0 ? 1.0 : double(tp) / double(predicted);
        pt.recall = double(tp) / double(edges);
        curve.points.push_back(pt);
    }

    // Trapezoid over recall, anchored at (recall 0, first precision).
    double area = 0.0;
    double prev_r = 0.0;
    double prev_p = curve.points.empty() ? 1.0 : curve.points.front().precision;
    for (const auto& pt : curve.points) {
        area += (pt.recall - prev_r) * 0.5 * (pt.precision + prev_p);
        prev_r = pt.recall;
        prev_p = pt.precision;
    }
    curve.area = area;
    return curve;
}

namespace {

std::vector<int> hard_labels(const Matrix& memb) {
    std::vector<int> lab(memb.rows());
    for (int p = 0; p < memb.rows(); ++p) {
        int best = 0;
        for (int g = 1; g < memb.cols(); ++g)
            if (memb(p, g) > memb(p, best)) best = g;  // ties keep the lower index
        lab[p] = best;
    }
    return lab;
}

// Max-weight perfect matching on a K x K score matrix (Hungarian with
// potentials, O(K^3)); returns column assigned to each row.
std::vector<int> hungarian_max(const Matrix& score) {
    const int k = score.rows();
    const double big = 1e18;
    // Convert to min-cost.
    std::vector<double> u(k + 1, 0.0), v(k + 1, 0.0);
    std::vector<int> match(k + 1, 0);  // match[col 1..k] = row
    for (int i = 1; i <= k; ++i) {
        match[0] = i;
        int j0 = 0;
        std::vector<double> minv(k + 1, big);
        std::vector<int> way(k + 1, 0);
        std::vector<char> used(k + 1, 0);
        do {
            used[j0] = 1;
            int i0 = match[j0], j1 = 0;
            double delta = big;
            for (int j = 1; j <= k; ++j)
                if (!used[j]) {
                    const double cur = -score(i0 - 1, j - 1) - u[i0] - v[j];
                    if (cur < minv[j]) {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if (minv[j] < delta) {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            for (int j = 0; j <= k; ++j) {
                if (used[j]) {
                    u[match[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (match[j0] != 0);
        do {
            int j1 = way[j0];
            match[j0] = match[j1];
            j0 = j1;
        } while (j0);
    }
    std::vector<int> row_to_col(k, -1);
    for (int j = 1; j <= k; ++j)
        if (match[j] >= 1) row_to_col[match[j] - 1] = j - 1;
    return row_to_col;
}

double comb2(double x) { return x * (x - 1.0) / 2.0; }

}  // namespace

AlignmentResult align_memberships(const Matrix& est, const Matrix& truth) {
    require(est.rows() == truth.rows(), "align_memberships: node count mismatch");
    require(est.cols() == truth.cols(), "align_memberships: group count mismatch");
    const int n = est.rows();
    const int k = est.cols();

    const std::vector<int> le = hard_labels(est);
    const std::vector<int> lt = hard_labels(truth);
    Matrix confusion(k, k, 0.0);
    for (int p = 0; p < n; ++p) confusion(le[p], lt[p]) += 1.0;

    AlignmentResult res;
    res.permutation = hungarian_max(confusion);
    double agree = 0.0;
    for (int g = 0; g < k; ++g) agree += confusion(g, res.permutation[g]);
    res.hard_accuracy = agree / n;

    // Adjusted Rand index straight from the contingency table.
    double sum_ij = 0.0, sum_a = 0.0, sum_b = 0.0;
    for (int g = 0; g < k; ++g) {
        double row = 0.0;
        for (int h = 0; h < k; ++h) {
            sum_ij += comb2(confusion(g, h));
            row += confusion(g, h);
        }
        sum_a += comb2(row);
    }
    for (int h = 0; h < k; ++h) {
        double col = 0.0;
        for (int g = 0; g < k; ++g) col += confusion(g, h);
        sum_b += comb2(col);
    }
    const double total = comb2(double(n));
    const double expected = sum_a * sum_b / total;
    const double max_index = 0.5 * (sum_a + sum_b);
    res.ari = max_index == expected ? 1.0 : (sum_ij - expected) / (max_index - expected);
    return res;
}

namespace {

struct LogSumAcc {
    double mx = kNegInf;
    double acc = 0.0;

    void add(double lw) {
        if (lw == kNegInf) return;
        if (lw <= mx) {
            acc += std::exp(lw - mx);
        } else {
            acc = acc * std::exp(mx - lw) + 1.0;
            mx = lw;
        }
    }
    void merge(const LogSumAcc& o) {
        if (o.mx == kNegInf) return;
        if (o.mx <= mx) {
            acc += o.acc * std::exp(o.mx - mx);
        } else {
            acc = acc * std::exp(mx - o.mx) + o.acc;
            mx = o.mx;
        }
    }
    double log_total() const { return acc > 0.0 ? mx + std::log(acc) : kNegInf; }
};

struct Unit {
    int m, a, b;
};

struct Enumerator {
    int k;
    int n;
    const std::vector<Unit>& units;
    const std::vector<std::vector<double>>& logf;  // per unit, K*K
    const std::vector<std::vector<double>>& lognum;  // per group, slot count
    const std::vector<double>& logden;               // shared, by node total
    std::vector<int> cnt;     // n * k
    std::vector<int> scount;  // n
    LogSumAcc acc;

    void run(std::size_t u, double lw) {
        if (u == units.size()) {
            acc.add(lw);
            return;
        }
        const Unit& un = units[u];
        const double* f = logf[u].data();
        for (int g = 0; g < k; ++g) {
            const double dg = lognum[g][cnt[un.a * k + g]] - logden[scount[un.a]];
            ++cnt[un.a * k + g];
            ++scount[un.a];
            for (int h = 0; h < k; ++h) {
                const double w = f[g * k + h];
                if (w == kNegInf) continue;
                const double dh = lognum[h][cnt[un.b * k + h]] - logden[scount[un.b]];
                ++cnt[un.b * k + h];
                ++scount[un.b];
                run(u + 1, lw + w + dg + dh);
                --cnt[un.b * k + h];
                --scount[un.b];
            }
            --cnt[un.a * k + g];
            --scount[un.a];
        }
    }
};

}  // namespace

double exact_loglik_bruteforce(const NetworkSet& data, const Hyperparams& hyper, int threads) {
    data.validate();
    hyper.validate();
    const int n = data.n_nodes();
    const int k = hyper.k_groups;
    require(static_cast<int>(hyper.alpha.size()) == k, "oracle: alpha size mismatch");

    std::vector<Unit> units;
    const Network& front = data.replicates.front();
    for (int m = 0; m < data.n_replicates(); ++m)
        front.for_each_pair([&](int p, int q) { units.push_back({m, p, q}); });

    // Guard: K^(2 * units) <= 2^24.
    const double log2_space = 2.0 * double(units.size()) * std::log2(double(std::max(k, 1)));
    require(log2_space <= 24.0 + 1e-9,
            "oracle: assignment space exceeds the 2^24 enumeration guard");

    // Per-unit Bernoulli log-probabilities on the rho-adjusted rates.
    std::vector<std::vector<double>> logf(units.size(), std::vector<double>(std::size_t(k) * k));
    for (std::size_t u = 0; u < units.size(); ++u) {
        const Unit& un = units[u];
        const int r = data.replicates[un.m].at(un.a, un.b);
        for (int g = 0; g < k; ++g)
            for (int h = 0; h < k; ++h) {
                const double rate = hyper.effective_rate(g, h);
                const double pr = r ? rate : 1.0 - rate;
                logf[u][std::size_t(g) * k + h] = pr > 0.0 ? std::log(pr) : kNegInf;
            }
    }

    // Polya-urn predictive tables: each slot assigned to group k of a node
    // with c prior slots in k and s prior slots total contributes
    // log((alpha_k + c) / (alpha0 + s)); the product telescopes to the
    // Dirichlet-multinomial weight.
    const int max_slots = 2 * data.n_replicates() * n + 1;
    std::vector<std::vector<double>> lognum(k, std::vector<double>(max_slots));
    std::vector<double> logden(max_slots);
    const double alpha0 = hyper.alpha_sum();
    for (int g = 0; g < k; ++g)
        for (int c = 0; c < max_slots; ++c) lognum[g][c] = std::log(hyper.alpha[g] + c);
    for (int s = 0; s < max_slots; ++s) logden[s] = std::log(alpha0 + s);

    // Enumerate the first few units serially into prefix states, then scan
    // each prefix independently; merging in prefix order keeps the result
    // identical for any thread count.
    int prefix_units = 0;
    std::int64_t n_prefixes = 1;
    while (prefix_units < static_cast<int>(units.size()) && n_prefixes < 64 && k > 1) {
        n_prefixes *= std::int64_t(k) * k;
        ++prefix_units;
    }

    struct Prefix {
        double lw;
        std::vector<int> cnt;
        std::vector<int> scount;
    };
    std::vector<Prefix> prefixes;
    {
        Prefix root;
        root.lw = 0.0;
        root.cnt.assign(std::size_t(n) * k, 0);
        root.scount.assign(n, 0);
        std::vector<Prefix> frontier{root};
        for (int u = 0; u < prefix_units; ++u) {
            std::vector<Prefix> next;
            for (const Prefix& pre : frontier) {
                const Unit& un = units[u];
                for (int g = 0; g < k; ++g)
                    for (int h = 0; h < k; ++h) {
                        const double w = logf[u][std::size_t(g) * k + h];
                        if (w == kNegInf) continue;
                        Prefix ext = pre;
                        ext.lw += w + lognum[g][ext.cnt[un.a * k + g]] - logden[ext.scount[un.a]];
                        ++ext.cnt[un.a * k + g];
                        ++ext.scount[un.a];
                        ext.lw += lognum[h][ext.cnt[un.b * k + h]] - logden[ext.scount[un.b]];
                        ++ext.cnt[un.b * k + h];
                        ++ext.scount[un.b];
                        next.push_back(std::move(ext));
                    }
            }
            frontier = std::move(next);
        }
        prefixes = std::move(frontier);
    }
    if (prefixes.empty()) return kNegInf;

    std::vector<LogSumAcc> partial(prefixes.size());
#ifdef _OPENMP
#pragma omp parallel for num_threads(std::max(1, threads)) schedule(dynamic)
#endif
    for (std::size_t i = 0; i < prefixes.size(); ++i) {
        Enumerator en{k, n, units, logf, lognum, logden, prefixes[i].cnt, prefixes[i].scount, {}};
        en.run(static_cast<std::size_t>(prefix_units), prefixes[i].lw);
        partial[i] = en.acc;
    }
    LogSumAcc total;
    for (const auto& p : partial) total.merge(p);
    return total.log_total();
}

}  // namespace mmsb
