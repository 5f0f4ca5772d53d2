#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mmsb/types.hpp"

namespace mmsb {

enum class DiagonalPolicy { excluded, included };
enum class NetFormat { dense_csv, edge_list_tsv };

// One directed binary relation over N nodes, stored dense. Self-pairs are
// excluded by default; with the excluded policy the diagonal must stay zero
// and every pair iterator skips it.
class Network {
public:
    Network() = default;
    Network(int n_nodes, DiagonalPolicy policy = DiagonalPolicy::excluded);

    int n_nodes() const { return n_; }
    DiagonalPolicy diagonal_policy() const { return policy_; }

    std::uint8_t at(int p, int q) const { return adj_[idx(p, q)]; }
    void set(int p, int q, bool value);

    bool pair_valid(int p, int q) const {
        return p != q || policy_ == DiagonalPolicy::included;
    }
    std::int64_t valid_pair_count() const {
        std::int64_t n = n_;
        return policy_ == DiagonalPolicy::excluded ? n * (n - 1) : n * n;
    }
    std::int64_t edge_count() const;

    // Fixed row-major traversal of valid ordered pairs; the canonical scan
    // order for every sequential kernel in the toolkit.
    template <typename F>
    void for_each_pair(F&& f) const {
        for (int p = 0; p < n_; ++p)
            for (int q = 0; q < n_; ++q)
                if (pair_valid(p, q)) f(p, q);
    }

    const std::optional<std::vector<std::string>>& node_labels() const { return labels_; }
    void set_node_labels(std::vector<std::string> labels);

private:
    std::size_t idx(int p, int q) const { return static_cast<std::size_t>(p) * n_ + q; }

    int n_ = 0;
    DiagonalPolicy policy_ = DiagonalPolicy::excluded;
    std::vector<std::uint8_t> adj_;
    std::optional<std::vector<std::string>> labels_;
};

// M independent replicates of the relation, dimension-consistent.
struct NetworkSet {
    std::vector<Network> replicates;

    NetworkSet() = default;
    explicit NetworkSet(Network single) { replicates.push_back(std::move(single)); }
    explicit NetworkSet(std::vector<Network> reps);

    int n_nodes() const { return replicates.front().n_nodes(); }
    int n_replicates() const { return static_cast<int>(replicates.size()); }
    DiagonalPolicy diagonal_policy() const { return replicates.front().diagonal_policy(); }
    void validate() const;
};

// Held-out ordered pairs for one cross-validation fold.
struct PairMask {
    std::vector<std::pair<int, int>> held_out;  // sorted row-major
    int fold_id = 0;

    bool contains(int p, int q) const;
};

Network load_network(const std::filesystem::path& path, NetFormat format,
                     DiagonalPolicy policy = DiagonalPolicy::excluded);
void save_network(const Network& net, const std::filesystem::path& path, NetFormat format);

// Mean edge indicator over valid pairs and replicates.
double density(const NetworkSet& nets);

// Partition of the valid ordered pairs into n_folds masks. With stratify,
// edge pairs and non-edge pairs are each dealt out near-evenly (fold sizes
// within a stratum differ by at most one). Deterministic given seed.
std::vector<PairMask> split_folds(const Network& net, int n_folds, std::uint64_t seed,
                                  bool stratify);

struct ReorderResult {
    Network net;
    // permutation[i] = original index of the node placed at position i,
    // so reordered(i, j) = original(permutation[i], permutation[j]).
    std::vector<int> permutation;
};

// Rows/columns permuted so nodes are grouped by argmax membership (groups in
// index order, ties to the lower group, stable within a group).
ReorderResult reorder_by_membership(const Network& net, const Matrix& memberships);

}  // namespace mmsb
