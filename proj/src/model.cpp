#include "mmsb/model.hpp"

#include <cmath>

#include "mmsb/rng.hpp"

namespace mmsb {

Hyperparams::Hyperparams(int k, std::vector<double> a, Matrix b, double r)
    : k_groups(k), alpha(std::move(a)), block_matrix(std::move(b)), rho(r) {
    validate();
}

Hyperparams Hyperparams::symmetric(int k, double alpha_scalar, Matrix b, double r) {
    return Hyperparams(k, std::vector<double>(k, alpha_scalar), std::move(b), r);
}

void Hyperparams::validate() const {
    require(k_groups >= 1, "Hyperparams: K must be positive");
    require(static_cast<int>(alpha.size()) == k_groups, "Hyperparams: alpha size must equal K");
    for (double a : alpha)
        require(a > 0.0 && std::isfinite(a), "Hyperparams: alpha entries must be positive");
    require(block_matrix.rows() == k_groups && block_matrix.cols() == k_groups,
            "Hyperparams: B must be K x K");
    for (double b : block_matrix.data())
        require(b >= 0.0 && b <= 1.0, "Hyperparams: B entries must lie in [0,1]");
    require(rho >= 0.0 && rho <= 1.0, "Hyperparams: rho must lie in [0,1]");
}

double Hyperparams::alpha_sum() const {
    double s = 0.0;
    for (double a : alpha) s += a;
    return s;
}

SampleResult sample_network(const Hyperparams& hyper, int n_nodes, std::uint64_t seed,
                            const SampleOptions& opts) {
    hyper.validate();
    require(n_nodes >= 2, "sample_network: need at least 2 nodes");
    require(opts.n_replicates >= 1, "sample_network: need at least 1 replicate");

    const int n = n_nodes;
    const int k = hyper.k_groups;
    const int m_reps = opts.n_replicates;

    SampleResult out;
    out.truth.pi = Matrix(n, k);
    std::vector<double> row;
    for (int p = 0; p < n; ++p) {
        Rng rng(seed, Rng::Stream::node_membership, static_cast<std::uint64_t>(p));
        rng.next_dirichlet(hyper.alpha, row);
        for (int g = 0; g < k; ++g) out.truth.pi(p, g) = row[g];
    }

    out.truth.z_sender.assign(m_reps, std::vector<std::int8_t>(std::size_t(n) * n, -1));
    out.truth.z_receiver.assign(m_reps, std::vector<std::int8_t>(std::size_t(n) * n, -1));

    std::vector<Network> reps;
    reps.reserve(m_reps);
    for (int m = 0; m < m_reps; ++m) {
        Network net(n, opts.diagonal);
        for (int p = 0; p < n; ++p) {
            for (int q = 0; q < n; ++q) {
                if (!net.pair_valid(p, q)) continue;
                const std::size_t slot = std::size_t(p) * n + q;
                Rng rng(seed, Rng::Stream::pair_indicators, static_cast<std::uint64_t>(m),
                        static_cast<std::uint64_t>(slot));
                int g, h;
                if (opts.enforce_symmetric_indicators && q < p) {
                    // Mirror the roles drawn for (q,p): this pair's sender is
                    // the other pair's receiver and vice versa.
                    g = out.truth.z_receiver[m][std::size_t(q) * n + p];
                    h = out.truth.z_sender[m][std::size_t(q) * n + p];
                } else {
                    g = rng.next_categorical(out.truth.pi.row(p), k);
                    h = rng.next_categorical(out.truth.pi.row(q), k);
                }
                out.truth.z_sender[m][slot] = static_cast<std::int8_t>(g);
                out.truth.z_receiver[m][slot] = static_cast<std::int8_t>(h);
                if (rng.next_bernoulli(hyper.effective_rate(g, h))) net.set(p, q, true);
            }
        }
        reps.push_back(std::move(net));
    }
    out.networks = NetworkSet(std::move(reps));
    return out;
}

namespace {
void check_simplex(const std::vector<double>& v, const char* name) {
    double s = 0.0;
    for (double x : v) {
        require(x >= -1e-12, std::string(name) + ": negative entry");
        s += x;
    }
    require(std::abs(s - 1.0) <= 1e-8, std::string(name) + ": entries must sum to 1");
}
}  // namespace

double edge_prob_given_memberships(const std::vector<double>& pi_p,
                                   const std::vector<double>& pi_q,
                                   const Hyperparams& hyper) {
    const int k = hyper.k_groups;
    require(static_cast<int>(pi_p.size()) == k && static_cast<int>(pi_q.size()) == k,
            "edge_prob_given_memberships: membership size must equal K");
    check_simplex(pi_p, "pi_p");
    check_simplex(pi_q, "pi_q");
    double acc = 0.0;
    for (int g = 0; g < k; ++g) {
        double inner = 0.0;
        for (int h = 0; h < k; ++h) inner += hyper.block_matrix(g, h) * pi_q[h];
        acc += pi_p[g] * inner;
    }
    return (1.0 - hyper.rho) * acc;
}

}  // namespace mmsb
