#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mmsb/estimation.hpp"
#include "mmsb/model.hpp"
#include "mmsb/rng.hpp"

using namespace mmsb;

namespace {

NetworkSet make_random_set(int n, int m, double dens, Rng& rng) {
    std::vector<Network> reps;
    for (int r = 0; r < m; ++r) {
        Network net(n);
        for (int p = 0; p < n; ++p)
            for (int q = 0; q < n; ++q)
                if (p != q && rng.next_unit() < dens) net.set(p, q, true);
        reps.push_back(std::move(net));
    }
    return NetworkSet(std::move(reps));
}

VariationalState state_with_phi(const NetworkSet& data, int k, Rng& rng) {
    const int n = data.n_nodes();
    VariationalState st;
    st.gamma = Matrix(n, k, 1.0);
    st.allocate_phi(n, k, data.n_replicates());
    std::vector<double> alpha(k, 0.8), row;
    for (int m = 0; m < data.n_replicates(); ++m)
        data.replicates[m].for_each_pair([&](int p, int q) {
            rng.next_dirichlet(alpha, row);
            for (int g = 0; g < k; ++g) st.phi_s(m, p, q, n, k)[g] = row[g];
            rng.next_dirichlet(alpha, row);
            for (int g = 0; g < k; ++g) st.phi_r(m, p, q, n, k)[g] = row[g];
        });
    return st;
}

Matrix random_gamma(int n, int k, Rng& rng) {
    Matrix g(n, k);
    for (auto& v : g.data()) v = 0.3 + 20.0 * rng.next_unit();
    return g;
}

}  // namespace

TEST_CASE("alpha gradient vanishes at the single-row fixed point") {
    // N=1 and gamma_1 = alpha makes the two digamma differences cancel.
    Matrix gamma(1, 3);
    std::vector<double> alpha{0.7, 1.3, 2.2};
    for (int g = 0; g < 3; ++g) gamma(0, g) = alpha[g];
    auto d = alpha_gradient_hessian(alpha, gamma);
    for (double g : d.gradient) CHECK(g == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("alpha gradient matches central finite differences") {
    Rng rng(21, Rng::Stream::generic);
    for (int t = 0; t < 20; ++t) {
        const int k = 2 + int(rng.next_below(3));
        const int n = 1 + int(rng.next_below(6));
        Matrix gamma = random_gamma(n, k, rng);
        std::vector<double> alpha(k);
        for (auto& a : alpha) a = 0.2 + 3.0 * rng.next_unit();
        auto d = alpha_gradient_hessian(alpha, gamma);
        const double h = 1e-5;
        for (int c = 0; c < k; ++c) {
            auto hi = alpha, lo = alpha;
            hi[c] += h;
            lo[c] -= h;
            const double fd =
                (alpha_objective(hi, gamma) - alpha_objective(lo, gamma)) / (2 * h);
            CHECK(std::abs(d.gradient[c] - fd) <=
                  1e-5 * std::max(1.0, std::abs(d.gradient[c])));
        }
    }
}

TEST_CASE("alpha Hessian structure matches finite differences of the gradient") {
    Rng rng(22, Rng::Stream::generic);
    Matrix gamma = random_gamma(4, 3, rng);
    std::vector<double> alpha{0.5, 1.0, 1.8};
    auto d = alpha_gradient_hessian(alpha, gamma);
    const double h = 1e-6;
    for (int c = 0; c < 3; ++c)
        for (int e = 0; e < 3; ++e) {
            auto hi = alpha, lo = alpha;
            hi[e] += h;
            lo[e] -= h;
            const double fd = (alpha_gradient_hessian(hi, gamma).gradient[c] -
                               alpha_gradient_hessian(lo, gamma).gradient[c]) /
                              (2 * h);
            const double analytic = d.hessian_offdiag + (c == e ? d.hessian_diag[c] : 0.0);
            CHECK(fd == doctest::Approx(analytic).epsilon(1e-4));
        }
}

TEST_CASE("symmetric inputs give a symmetric gradient") {
    Matrix gamma(5, 3, 2.4);
    std::vector<double> alpha(3, 0.9);
    auto d = alpha_gradient_hessian(alpha, gamma);
    CHECK(d.gradient[0] == doctest::Approx(d.gradient[1]).epsilon(1e-14));
    CHECK(d.gradient[1] == doctest::Approx(d.gradient[2]).epsilon(1e-14));
}

TEST_CASE("mstep_alpha leaves a zero-gradient start unchanged") {
    Matrix gamma(1, 2);
    std::vector<double> alpha{1.4, 0.6};
    gamma(0, 0) = 1.4;
    gamma(0, 1) = 0.6;
    auto out = mstep_alpha(alpha, gamma);
    CHECK(out[0] == doctest::Approx(1.4).epsilon(1e-9));
    CHECK(out[1] == doctest::Approx(0.6).epsilon(1e-9));
}

TEST_CASE("mstep_alpha agrees with a grid search on the symmetric objective") {
    // N=1, gamma = (3,3): maximize over alpha = (a,a) by brute force.
    Matrix gamma(1, 2, 3.0);
    auto out = mstep_alpha_scalar({1.0, 1.0}, gamma, 200, 1e-12);
    double best_a = 0.0, best_v = -1e300;
    for (int i = 1; i <= 100000; ++i) {
        const double a = 0.01 + (10.0 - 0.01) * i / 100000.0;
        const double v = alpha_objective({a, a}, gamma);
        if (v > best_v) {
            best_v = v;
            best_a = a;
        }
    }
    CHECK(out[0] == doctest::Approx(out[1]).epsilon(1e-12));
    CHECK(std::abs(out[0] - best_a) <= 2.0 * (10.0 - 0.01) / 100000.0);
    CHECK(alpha_objective(out, gamma) >= best_v - 1e-9);
}

TEST_CASE("mstep_alpha never decreases the objective and stays positive") {
    Rng rng(23, Rng::Stream::generic);
    for (int t = 0; t < 20; ++t) {
        const int k = 2 + int(rng.next_below(3));
        Matrix gamma = random_gamma(3 + int(rng.next_below(5)), k, rng);
        std::vector<double> start(k);
        for (auto& a : start) a = 0.05 + 4.0 * rng.next_unit();
        const double before = alpha_objective(start, gamma);
        auto out = mstep_alpha(start, gamma);
        for (double a : out) CHECK(a > 0.0);
        CHECK(alpha_objective(out, gamma) >= before - 1e-10);
    }
}

TEST_CASE("mstep_B: one-hot phis put the edge density in one block") {
    Rng rng(24, Rng::Stream::generic);
    NetworkSet data = make_random_set(6, 1, 0.4, rng);
    VariationalState st;
    st.gamma = Matrix(6, 2, 1.0);
    st.allocate_phi(6, 2, 1);
    data.replicates[0].for_each_pair([&](int p, int q) {
        st.phi_s(0, p, q, 6, 2)[0] = 1.0;
        st.phi_r(0, p, q, 6, 2)[0] = 1.0;
    });
    auto est = mstep_B(st, data);
    CHECK(est.b(0, 0) == doctest::Approx(density(data)).epsilon(1e-12));
    CHECK(est.b(0, 1) == 0.5);
    CHECK(est.b(1, 0) == 0.5);
    CHECK(est.b(1, 1) == 0.5);
    CHECK(est.degenerate_blocks.size() == 3);
}

TEST_CASE("mstep_B: complete graph gives rate one in every defined block") {
    Network complete(5);
    complete.for_each_pair([&](int p, int q) { complete.set(p, q, true); });
    NetworkSet data(complete);
    Rng rng(25, Rng::Stream::generic);
    VariationalState st = state_with_phi(data, 3, rng);
    auto est = mstep_B(st, data);
    CHECK(est.degenerate_blocks.empty());
    for (double b : est.b.data()) CHECK(b == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("mstep_B and mstep_rho match direct summation on random fixtures") {
    Rng rng(26, Rng::Stream::generic);
    for (int t = 0; t < 30; ++t) {
        const int n = 3 + int(rng.next_below(5));
        const int k = 1 + int(rng.next_below(3));
        const int m = 1 + int(rng.next_below(2));
        NetworkSet data = make_random_set(n, m, 0.5, rng);
        VariationalState st = state_with_phi(data, k, rng);

        auto est = mstep_B(st, data);
        const double rho = mstep_rho(st, data);

        // direct transcription: per-replicate ratios averaged over m
        for (int g = 0; g < k; ++g)
            for (int h = 0; h < k; ++h) {
                double acc = 0.0;
                for (int mm = 0; mm < m; ++mm) {
                    double num = 0.0, den = 0.0;
                    data.replicates[mm].for_each_pair([&](int p, int q) {
                        const double w =
                            st.phi_s(mm, p, q, n, k)[g] * st.phi_r(mm, p, q, n, k)[h];
                        den += w;
                        if (data.replicates[mm].at(p, q)) num += w;
                    });
                    acc += num / den;
                }
                CHECK(est.b(g, h) == doctest::Approx(acc / m).epsilon(1e-12));
            }
        double rho_acc = 0.0;
        for (int mm = 0; mm < m; ++mm) {
            double num = 0.0, den = 0.0;
            data.replicates[mm].for_each_pair([&](int p, int q) {
                double w = 0.0;
                for (int g = 0; g < k; ++g)
                    for (int h = 0; h < k; ++h)
                        w += st.phi_s(mm, p, q, n, k)[g] * st.phi_r(mm, p, q, n, k)[h];
                den += w;
                if (!data.replicates[mm].at(p, q)) num += w;
            });
            rho_acc += num / den;
        }
        CHECK(rho == doctest::Approx(rho_acc / m).epsilon(1e-12));
    }
}

TEST_CASE("mstep_rho: empty and complete graphs") {
    Rng rng(27, Rng::Stream::generic);
    Network empty(4);
    NetworkSet empty_set(empty);
    VariationalState st_e = state_with_phi(empty_set, 2, rng);
    CHECK(mstep_rho(st_e, empty_set) == doctest::Approx(1.0).epsilon(1e-12));

    Network complete(4);
    complete.for_each_pair([&](int p, int q) { complete.set(p, q, true); });
    NetworkSet complete_set(complete);
    VariationalState st_c = state_with_phi(complete_set, 2, rng);
    CHECK(mstep_rho(st_c, complete_set) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("single-membership phis make mstep_rho equal fixed_rho exactly") {
    Rng rng(28, Rng::Stream::generic);
    NetworkSet data = make_random_set(7, 2, 0.35, rng);
    const int n = 7, k = 3;
    VariationalState st;
    st.gamma = Matrix(n, k, 1.0);
    st.allocate_phi(n, k, 2);
    for (int m = 0; m < 2; ++m)
        data.replicates[m].for_each_pair([&](int p, int q) {
            st.phi_s(m, p, q, n, k)[int(rng.next_below(k))] = 1.0;
            st.phi_r(m, p, q, n, k)[int(rng.next_below(k))] = 1.0;
        });
    CHECK(std::abs(mstep_rho(st, data) - fixed_rho(data)) <= 1e-12);
}

TEST_CASE("fixed_rho is one minus the density") {
    Rng rng(29, Rng::Stream::generic);
    NetworkSet data = make_random_set(10, 1, 0.1, rng);
    CHECK(fixed_rho(data) == doctest::Approx(1.0 - density(data)).epsilon(1e-14));
    Network empty(4);
    CHECK(fixed_rho(NetworkSet(empty)) == 1.0);
    Network complete(4);
    complete.for_each_pair([&](int p, int q) { complete.set(p, q, true); });
    CHECK(fixed_rho(NetworkSet(std::vector<Network>{complete, Network(4)})) == 0.5);
}

TEST_CASE("fit on K=1 data recovers the density and all-ones memberships") {
    Rng rng(30, Rng::Stream::generic);
    NetworkSet data = make_random_set(12, 1, 0.3, rng);
    FitConfig cfg;
    cfg.k_groups = 1;
    cfg.seed = 4;
    FitResult res = fit(data, cfg);
    CHECK(res.converged);
    CHECK(res.hyper_hat.block_matrix(0, 0) == doctest::Approx(density(data)).epsilon(1e-9));
    for (int p = 0; p < 12; ++p) CHECK(res.pi_hat(p, 0) == 1.0);
}

TEST_CASE("fit is bitwise deterministic in sequential mode") {
    Matrix b(3, 3, 0.02);
    for (int g = 0; g < 3; ++g) b(g, g) = 0.35;
    Hyperparams truth = Hyperparams::symmetric(3, 0.1, b, 0.0);
    auto sample = sample_network(truth, 30, 77);
    FitConfig cfg;
    cfg.k_groups = 3;
    cfg.seed = 9;
    FitResult a = fit(sample.networks, cfg);
    FitResult b2 = fit(sample.networks, cfg);
    CHECK(a.elbo_trace() == b2.elbo_trace());
    CHECK(a.state.gamma.data() == b2.state.gamma.data());
    CHECK(a.hyper_hat.alpha == b2.hyper_hat.alpha);
    CHECK(a.hyper_hat.block_matrix.data() == b2.hyper_hat.block_matrix.data());
}

TEST_CASE("fixed-B and scalar-alpha modes are respected") {
    Rng rng(31, Rng::Stream::generic);
    NetworkSet data = make_random_set(15, 1, 0.25, rng);
    FitConfig cfg;
    cfg.k_groups = 3;
    cfg.b_mode = BMode::fixed;
    cfg.b_fixed = Matrix(3, 3, 0.0);
    for (int g = 0; g < 3; ++g) cfg.b_fixed(g, g) = 1.0;
    cfg.alpha_mode = AlphaMode::estimate_scalar;
    cfg.rho_mode = RhoMode::estimate;
    cfg.seed = 2;
    FitResult res = fit(data, cfg);
    // B unchanged up to the numeric floor applied inside the bound
    for (int g = 0; g < 3; ++g)
        for (int h = 0; h < 3; ++h)
            CHECK(std::abs(res.hyper_hat.block_matrix(g, h) - cfg.b_fixed(g, h)) <= 2e-9);
    // scalar mode keeps the concentration symmetric
    CHECK(res.hyper_hat.alpha[0] == doctest::Approx(res.hyper_hat.alpha[1]).epsilon(1e-12));
    CHECK(res.hyper_hat.alpha[1] == doctest::Approx(res.hyper_hat.alpha[2]).epsilon(1e-12));
    // rho was estimated (large for a sparse graph)
    CHECK(res.hyper_hat.rho > 0.5);
}

TEST_CASE("alpha-fixed mode keeps the requested concentration") {
    Rng rng(32, Rng::Stream::generic);
    NetworkSet data = make_random_set(10, 1, 0.3, rng);
    FitConfig cfg;
    cfg.k_groups = 2;
    cfg.alpha_mode = AlphaMode::fixed;
    cfg.alpha_fixed = {0.058, 0.058};
    cfg.seed = 3;
    FitResult res = fit(data, cfg);
    CHECK(res.hyper_hat.alpha == cfg.alpha_fixed);
}

TEST_CASE("final trace entry equals the bound of the returned state") {
    Rng rng(33, Rng::Stream::generic);
    NetworkSet data = make_random_set(14, 1, 0.3, rng);
    for (Schedule sched : {Schedule::nested, Schedule::naive}) {
        FitConfig cfg;
        cfg.k_groups = 2;
        cfg.schedule = sched;
        cfg.seed = 5;
        FitResult res = fit(data, cfg);
        const double reported = res.final_elbo();
        const double recomputed = elbo(res.state, res.hyper_hat, data).total;
        CHECK(std::abs(reported - recomputed) <= 1e-9 * std::max(1.0, std::abs(reported)));
        for (int p = 0; p < 14; ++p) {
            double s = 0.0;
            for (int g = 0; g < 2; ++g) s += res.pi_hat(p, g);
            CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
        }
    }
}

TEST_CASE("EM trace is non-decreasing for both schedules with rho fixed") {
    Rng rng(34, Rng::Stream::generic);
    NetworkSet data = make_random_set(16, 1, 0.3, rng);
    for (Schedule sched : {Schedule::nested, Schedule::naive}) {
        FitConfig cfg;
        cfg.k_groups = 3;
        cfg.schedule = sched;
        cfg.seed = 6;
        FitResult res = fit(data, cfg);
        auto trace = res.elbo_trace();
        for (std::size_t i = 1; i < trace.size(); ++i)
            CHECK(trace[i] >= trace[i - 1] - 1e-9 * std::abs(trace[i - 1]));
    }
}

TEST_CASE("fit aborts with a diagnostic when the bound is -inf") {
    Network net(3);
    net.set(0, 1, true);
    NetworkSet data(net);
    FitConfig cfg;
    cfg.k_groups = 1;
    cfg.b_mode = BMode::fixed;
    cfg.b_fixed = Matrix(1, 1, 0.5);
    cfg.rho_mode = RhoMode::fixed_value;
    cfg.rho_value = 1.0;  // every observed edge becomes impossible
    CHECK_THROWS_WITH_AS(fit(data, cfg), doctest::Contains("likelihood"), NumericError);
}

TEST_CASE("training kernels never read held-out pairs (instrumented audit)") {
    Rng rng(35, Rng::Stream::generic);
    NetworkSet data = make_random_set(10, 1, 0.4, rng);
    auto folds = split_folds(data.replicates[0], 5, 11, true);
    const PairMask& mask = folds[2];

    DataView view(data, &mask);
    std::vector<std::pair<int, int>> seen;
    view.set_audit([&](int, int p, int q) { seen.emplace_back(p, q); });

    VariationalState st = make_initial_state(10, 2);
    Hyperparams h = Hyperparams::symmetric(2, 0.5, Matrix(2, 2, 0.3), 0.0);
    NestedWorkspace ws;
    EstepOptions eopts;
    estep_nested_sweep(st, h, view, ws, eopts);
    EstepResult er = estep_naive(std::move(st), h, view, eopts);
    block_stats(er.state, view);
    CHECK_FALSE(seen.empty());
    for (auto [p, q] : seen) CHECK_FALSE(mask.contains(p, q));
}
