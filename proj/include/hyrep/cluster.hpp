// Hierarchical clustering: binary trees and the discrete Dasgupta cost, the
// continuous triplet relaxation trained on embeddings, tree decoding from
// embeddings, and the tree/class agreement measures.

#pragma once

#include "hyrep/ball.hpp"
#include "hyrep/model.hpp"
#include "hyrep/tape.hpp"

#include <json.hpp>

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace hyrep {

/// Rooted binary tree over integer item ids.
class ClusterTree {
public:
    struct Node {
        int left = -1;
        int right = -1;
        int item = -1;  ///< >= 0 for leaves
        [[nodiscard]] bool is_leaf() const noexcept { return item >= 0; }
    };

    int add_leaf(int item);
    int merge(int left, int right);
    void set_root(int node) { root_ = node; }

    [[nodiscard]] int root() const noexcept { return root_; }
    [[nodiscard]] const std::vector<Node>& nodes() const noexcept { return nodes_; }
    [[nodiscard]] const Node& node(int id) const { return nodes_.at(static_cast<std::size_t>(id)); }

    /// Leaf item ids in left-to-right order.
    [[nodiscard]] std::vector<int> items() const;
    [[nodiscard]] int leaf_count() const;
    /// Throws std::logic_error unless the tree is a single rooted binary tree
    /// with unique leaf ids and n - 1 internal nodes.
    void validate() const;

    /// Number of edges on the path between the leaves holding items a and b.
    [[nodiscard]] int hop_distance(int item_a, int item_b) const;
    /// Unordered sibling leaf pairs, as (smaller item, larger item).
    [[nodiscard]] std::vector<std::pair<int, int>> cherries() const;

    /// Newick text with quoted labels and no branch lengths.
    [[nodiscard]] std::string to_newick(const std::vector<std::string>& labels) const;
    /// Node list with children and per-leaf label and group annotations.
    [[nodiscard]] nlohmann::json to_json(const std::vector<std::string>& labels,
                                         const std::vector<std::string>& groups = {}) const;

private:
    std::vector<Node> nodes_;
    int root_ = -1;
};

/// Lowest-common-ancestor based view used by the cost computations.
struct TreeIndex {
    explicit TreeIndex(const ClusterTree& tree);

    std::vector<int> parent;
    std::vector<int> depth;
    std::vector<int> leaves_below;
    std::vector<int> leaf_of_item;  // indexed by item id, -1 if absent

    [[nodiscard]] int lca(int node_a, int node_b) const;
};

/// Sum over unordered pairs of w_ij times the leaf count under lca(i, j).
/// Items of the tree must be exactly 0..n-1 for an n x n matrix w.
[[nodiscard]] double dasgupta_cost(const ClusterTree& tree, const Mat& w);

struct BestTree {
    ClusterTree tree;
    double cost = 0.0;
};

/// Exhaustive search over all (2n-3)!! rooted binary trees; n <= 8.
[[nodiscard]] BestTree best_tree_bruteforce(const Mat& w);

/// e^{d_i/tau} / sum_j e^{d_j/tau}, with max subtraction.
[[nodiscard]] Vec scaled_softmax(const Vec& d, double tau);

/// Minimum distance to the origin over the geodesic segment between two points.
[[nodiscard]] double lca_depth(const BallPoint& x, const BallPoint& y);

enum class SimilaritySource { logits, latent, input };
[[nodiscard]] SimilaritySource parse_similarity_source(const std::string& name);
[[nodiscard]] std::string to_string(SimilaritySource s);

struct SimilarityConfig {
    double tau = 0.1;
    SimilaritySource source = SimilaritySource::logits;
    /// Use softmax(+d / tau) as printed instead of softmax(-d / tau).
    bool literal_sign = false;
};

struct Triplet {
    int i = 0;
    int j = 0;
    int k = 0;
};

/// Uniform random triples of distinct indices in [0, batch_size).
[[nodiscard]] std::vector<Triplet> sample_triplets(int batch_size, int count, std::mt19937_64& rng);

/// Geometry the tree loss is evaluated in.
struct TreeGeometry {
    Space space = Space::hyperbolic;
    double curvature = 1.0;
};

/// Records the mean triplet clustering loss over `points` (one node per batch
/// item). With `fixed_similarity` the triplet similarities are read from that
/// matrix instead of being derived from embedding distances.
tape::Var record_tree_loss(tape::Graph& graph, std::span<const tape::Var> points, std::span<const Triplet> triplets,
                           const SimilarityConfig& cfg, const TreeGeometry& geometry,
                           const Mat* fixed_similarity = nullptr);

struct TreeLossValue {
    double triplet_terms = 0.0;  ///< sum of (w_ij + w_ik + w_jk - w_ijk)
    double pair_terms = 0.0;     ///< sum of 2 (w_ij + w_ik + w_jk)
    double total = 0.0;          ///< (triplet_terms + pair_terms) / #triplets
};

[[nodiscard]] TreeLossValue tree_loss(const std::vector<BallPoint>& batch, std::span<const Triplet> triplets,
                                      const SimilarityConfig& cfg);

/// Averages embeddings per label in the tangent space, pushes each mean to the
/// boundary of the safe ball and merges bottom-up by minimum hyperbolic
/// distance. Leaves carry the label ids.
[[nodiscard]] ClusterTree decode_tree(const std::vector<BallPoint>& points, const std::vector<int>& labels);

/// Within-class over across-class sum of leaf hop distances. `classes` maps
/// item id to class; throws std::domain_error when every leaf shares a class.
[[nodiscard]] double distortion(const ClusterTree& tree, const std::vector<int>& classes);

/// Sum of hyperbolic distances over unordered pairs sharing a class.
[[nodiscard]] double distance_constraint(const std::vector<BallPoint>& points, const std::vector<int>& classes);

/// Uniform random rooted binary tree over the given items (sequential
/// insertion of each leaf at a uniformly chosen edge).
[[nodiscard]] ClusterTree random_tree(const std::vector<int>& items, std::mt19937_64& rng);

}  // namespace hyrep
