#include "mmsb/network.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "mmsb/rng.hpp"

namespace mmsb {

Network::Network(int n_nodes, DiagonalPolicy policy) : n_(n_nodes), policy_(policy) {
    require(n_nodes >= 1, "Network: n_nodes must be positive");
    adj_.assign(static_cast<std::size_t>(n_) * n_, 0);
}

void Network::set(int p, int q, bool value) {
    require(p >= 0 && p < n_ && q >= 0 && q < n_, "Network::set: node index out of range");
    if (p == q && policy_ == DiagonalPolicy::excluded && value)
        throw InputError("Network::set: self-pair (" + std::to_string(p) +
                         ") not allowed with excluded diagonal");
    adj_[idx(p, q)] = value ? 1 : 0;
}

std::int64_t Network::edge_count() const {
    std::int64_t c = 0;
    for (auto v : adj_) c += v;
    return c;
}

void Network::set_node_labels(std::vector<std::string> labels) {
    require(static_cast<int>(labels.size()) == n_,
            "Network::set_node_labels: label count must equal n_nodes");
    labels_ = std::move(labels);
}

NetworkSet::NetworkSet(std::vector<Network> reps) : replicates(std::move(reps)) { validate(); }

void NetworkSet::validate() const {
    require(!replicates.empty(), "NetworkSet: needs at least one replicate");
    const int n = replicates.front().n_nodes();
    const auto policy = replicates.front().diagonal_policy();
    for (const auto& r : replicates) {
        require(r.n_nodes() == n, "NetworkSet: replicates disagree on n_nodes");
        require(r.diagonal_policy() == policy,
                "NetworkSet: replicates disagree on diagonal policy");
    }
}

bool PairMask::contains(int p, int q) const {
    return std::binary_search(held_out.begin(), held_out.end(), std::make_pair(p, q));
}

namespace {

[[noreturn]] void parse_fail(const std::filesystem::path& path, int row, int col,
                             const std::string& what) {
    throw InputError(path.string() + ":" + std::to_string(row) + ":" + std::to_string(col) +
                     ": " + what);
}

Network load_dense_csv(const std::filesystem::path& path, DiagonalPolicy policy) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open " + path.string());
    std::vector<std::vector<std::uint8_t>> rows;
    std::string line;
    int row_no = 0;
    while (std::getline(in, line)) {
        ++row_no;
        if (line.empty() && in.eof()) break;
        std::vector<std::uint8_t> row;
        std::stringstream ss(line);
        std::string cell;
        int col_no = 0;
        while (std::getline(ss, cell, ',')) {
            ++col_no;
            // trim whitespace
            auto b = cell.find_first_not_of(" \t\r");
            auto e = cell.find_last_not_of(" \t\r");
            if (b == std::string::npos) parse_fail(path, row_no, col_no, "empty cell");
            cell = cell.substr(b, e - b + 1);
            if (cell == "0")
                row.push_back(0);
            else if (cell == "1")
                row.push_back(1);
            else
                parse_fail(path, row_no, col_no, "non-binary value '" + cell + "'");
        }
        if (row.empty()) parse_fail(path, row_no, 1, "empty row");
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw InputError(path.string() + ": empty matrix");
    const int n = static_cast<int>(rows.size());
    for (int r = 0; r < n; ++r)
        if (static_cast<int>(rows[r].size()) != n)
            parse_fail(path, r + 1, static_cast<int>(rows[r].size()),
                       "ragged matrix: expected " + std::to_string(n) + " columns, got " +
                           std::to_string(rows[r].size()));
    Network net(n, policy);
    for (int p = 0; p < n; ++p)
        for (int q = 0; q < n; ++q)
            if (rows[p][q]) {
                if (p == q && policy == DiagonalPolicy::excluded)
                    parse_fail(path, p + 1, q + 1,
                               "nonzero diagonal entry with excluded self-pairs");
                net.set(p, q, true);
            }
    return net;
}

Network load_edge_list(const std::filesystem::path& path, DiagonalPolicy policy) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw InputError(path.string() + ": missing header line");
    int n = 0;
    {
        std::stringstream ss(line);
        std::string head;
        ss >> head;
        if (head.rfind("N=", 0) != 0) parse_fail(path, 1, 1, "header must be 'N=<int>'");
        try {
            n = std::stoi(head.substr(2));
        } catch (const std::exception&) {
            parse_fail(path, 1, 1, "header must be 'N=<int>'");
        }
        if (n < 1) parse_fail(path, 1, 1, "declared N must be positive");
    }
    Network net(n, policy);
    int row_no = 1;
    while (std::getline(in, line)) {
        ++row_no;
        if (line.empty()) continue;
        std::stringstream ss(line);
        long src = -1, dst = -1;
        if (!(ss >> src >> dst)) parse_fail(path, row_no, 1, "expected '<src>\\t<dst>'");
        std::string extra;
        if (ss >> extra) parse_fail(path, row_no, 3, "unexpected trailing token '" + extra + "'");
        if (src < 0 || src >= n) parse_fail(path, row_no, 1, "node id out of range [0, N)");
        if (dst < 0 || dst >= n) parse_fail(path, row_no, 2, "node id out of range [0, N)");
        if (src == dst && policy == DiagonalPolicy::excluded)
            parse_fail(path, row_no, 1, "self-edge with excluded self-pairs");
        net.set(static_cast<int>(src), static_cast<int>(dst), true);
    }
    return net;
}

}  // namespace

Network load_network(const std::filesystem::path& path, NetFormat format,
                     DiagonalPolicy policy) {
    return format == NetFormat::dense_csv ? load_dense_csv(path, policy)
                                          : load_edge_list(path, policy);
}

void save_network(const Network& net, const std::filesystem::path& path, NetFormat format) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write " + path.string());
    const int n = net.n_nodes();
    if (format == NetFormat::dense_csv) {
        for (int p = 0; p < n; ++p) {
            for (int q = 0; q < n; ++q) {
                if (q) out << ',';
                out << int(net.at(p, q));
            }
            out << '\n';
        }
    } else {
        out << "N=" << n << '\n';
        for (int p = 0; p < n; ++p)
            for (int q = 0; q < n; ++q)
                if (net.at(p, q)) out << p << '\t' << q << '\n';
    }
    if (!out) throw InputError("write failed: " + path.string());
}

double density(const NetworkSet& nets) {
    nets.validate();
    std::int64_t edges = 0;
    for (const auto& r : nets.replicates) edges += r.edge_count();
    const double pairs = static_cast<double>(nets.replicates.front().valid_pair_count()) *
                         static_cast<double>(nets.n_replicates());
    return static_cast<double>(edges) / pairs;
}

std::vector<PairMask> split_folds(const Network& net, int n_folds, std::uint64_t seed,
                                  bool stratify) {
    require(n_folds >= 2, "split_folds: n_folds must be at least 2");
    require(net.valid_pair_count() >= n_folds,
            "split_folds: n_folds exceeds the number of valid pairs");

    std::vector<std::pair<int, int>> strata[2];  // [non-edges, edges]
    net.for_each_pair([&](int p, int q) {
        int s = stratify ? int(net.at(p, q)) : 0;
        strata[s].emplace_back(p, q);
    });

    std::vector<PairMask> folds(n_folds);
    for (int f = 0; f < n_folds; ++f) folds[f].fold_id = f;

    for (int s = 0; s < 2; ++s) {
        auto& pairs = strata[s];
        if (pairs.empty()) continue;
        Rng rng(seed, Rng::Stream::fold_shuffle, static_cast<std::uint64_t>(s));
        for (std::size_t i = pairs.size() - 1; i > 0; --i) {
            std::size_t j = static_cast<std::size_t>(rng.next_below(i + 1));
            std::swap(pairs[i], pairs[j]);
        }
        // Round-robin deal keeps per-stratum fold sizes within one of each other.
        for (std::size_t i = 0; i < pairs.size(); ++i)
            folds[i % n_folds].held_out.push_back(pairs[i]);
    }
    for (auto& f : folds) std::sort(f.held_out.begin(), f.held_out.end());
    return folds;
}

ReorderResult reorder_by_membership(const Network& net, const Matrix& memberships) {
    const int n = net.n_nodes();
    require(memberships.rows() == n, "reorder_by_membership: membership rows must equal n_nodes");
    const int k = memberships.cols();
    std::vector<int> group(n);
    for (int p = 0; p < n; ++p) {
        double sum = 0.0;
        int best = 0;
        for (int g = 0; g < k; ++g) {
            double v = memberships(p, g);
            require(v >= -1e-12, "reorder_by_membership: negative membership weight");
            sum += v;
            if (v > memberships(p, best)) best = g;  // ties keep the lower index
        }
        require(std::abs(sum - 1.0) <= 1e-8,
                "reorder_by_membership: membership row " + std::to_string(p) +
                    " does not sum to 1");
        group[p] = best;
    }
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::stable_sort(perm.begin(), perm.end(),
                     [&](int a, int b) { return group[a] < group[b]; });

    Network out(n, net.diagonal_policy());
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (net.at(perm[i], perm[j])) out.set(i, j, true);
    return ReorderResult{std::move(out), std::move(perm)};
}

}  // namespace mmsb
