#include "hyrep/cluster.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

namespace hyrep {

int ClusterTree::add_leaf(int item)
{
    if (item < 0)
        throw std::invalid_argument("leaf item ids must be nonnegative");
    nodes_.push_back(Node{-1, -1, item});
    const int id = static_cast<int>(nodes_.size()) - 1;
    if (root_ < 0)
        root_ = id;
    return id;
}

int ClusterTree::merge(int left, int right)
{
    const int n = static_cast<int>(nodes_.size());
    if (left < 0 || right < 0 || left >= n || right >= n || left == right)
        throw std::invalid_argument("merge: invalid child ids");
    nodes_.push_back(Node{left, right, -1});
    root_ = n;
    return n;
}

std::vector<int> ClusterTree::items() const
{
    std::vector<int> out;
    if (root_ < 0)
        return out;
    std::vector<int> stack{root_};
    while (!stack.empty()) {
        const Node& nd = node(stack.back());
        stack.pop_back();
        if (nd.is_leaf()) {
            out.push_back(nd.item);
        } else {
            stack.push_back(nd.right);
            stack.push_back(nd.left);
        }
    }
    return out;
}

int ClusterTree::leaf_count() const
{
    return static_cast<int>(items().size());
}

void ClusterTree::validate() const
{
    if (root_ < 0)
        throw std::logic_error("tree is empty");
    std::vector<int> seen(nodes_.size(), 0);
    std::set<int> ids;
    int leaves = 0;
    int internal = 0;
    std::vector<int> stack{root_};
    while (!stack.empty()) {
        const int id = stack.back();
        stack.pop_back();
        if (id < 0 || id >= static_cast<int>(nodes_.size()))
            throw std::logic_error("tree references a missing node");
        if (seen[static_cast<std::size_t>(id)]++)
            throw std::logic_error("tree node reachable twice");
        const Node& nd = nodes_[static_cast<std::size_t>(id)];
        if (nd.is_leaf()) {
            if (nd.left >= 0 || nd.right >= 0)
                throw std::logic_error("leaf with children");
            if (!ids.insert(nd.item).second)
                throw std::logic_error("duplicate leaf id " + std::to_string(nd.item));
            ++leaves;
        } else {
            if (nd.left < 0 || nd.right < 0)
                throw std::logic_error("internal node without two children");
            ++internal;
            stack.push_back(nd.left);
            stack.push_back(nd.right);
        }
    }
    if (internal != leaves - 1)
        throw std::logic_error("internal node count is not leaves - 1");
    if (std::find(seen.begin(), seen.end(), 0) != seen.end())
        throw std::logic_error("tree has nodes unreachable from the root");
}

int ClusterTree::hop_distance(int item_a, int item_b) const
{
    const TreeIndex idx(*this);
    const auto find = [&](int item) {
        if (item < 0 || item >= static_cast<int>(idx.leaf_of_item.size()) ||
            idx.leaf_of_item[static_cast<std::size_t>(item)] < 0)
            throw std::invalid_argument("item " + std::to_string(item) + " is not a leaf");
        return idx.leaf_of_item[static_cast<std::size_t>(item)];
    };
    const int a = find(item_a);
    const int b = find(item_b);
    const int l = idx.lca(a, b);
    return idx.depth[static_cast<std::size_t>(a)] + idx.depth[static_cast<std::size_t>(b)] -
           2 * idx.depth[static_cast<std::size_t>(l)];
}

std::vector<std::pair<int, int>> ClusterTree::cherries() const
{
    std::vector<std::pair<int, int>> out;
    std::vector<int> stack;
    if (root_ >= 0)
        stack.push_back(root_);
    while (!stack.empty()) {
        const Node& nd = node(stack.back());
        stack.pop_back();
        if (nd.is_leaf())
            continue;
        const Node& l = node(nd.left);
        const Node& r = node(nd.right);
        if (l.is_leaf() && r.is_leaf())
            out.emplace_back(std::min(l.item, r.item), std::max(l.item, r.item));
        stack.push_back(nd.left);
        stack.push_back(nd.right);
    }
    std::sort(out.begin(), out.end());
    return out;
}

namespace {

std::string label_of(int item, const std::vector<std::string>& labels)
{
    if (item >= 0 && item < static_cast<int>(labels.size()))
        return labels[static_cast<std::size_t>(item)];
    return std::to_string(item);
}

std::string quote_newick(const std::string& s)
{
    std::string out = "'";
    for (char ch : s) {
        if (ch == '\'')
            out += "''";
        else
            out += ch;
    }
    return out + "'";
}

}  // namespace

std::string ClusterTree::to_newick(const std::vector<std::string>& labels) const
{
    if (root_ < 0)
        return ";";
    std::function<void(int, std::string&)> emit = [&](int id, std::string& out) {
        const Node& nd = node(id);
        if (nd.is_leaf()) {
            out += quote_newick(label_of(nd.item, labels));
            return;
        }
        out += '(';
        emit(nd.left, out);
        out += ',';
        emit(nd.right, out);
        out += ')';
    };
    std::string out;
    emit(root_, out);
    return out + ";";
}

nlohmann::json ClusterTree::to_json(const std::vector<std::string>& labels,
                                    const std::vector<std::string>& groups) const
{
    nlohmann::json nodes = nlohmann::json::array();
    for (std::size_t id = 0; id < nodes_.size(); ++id) {
        const Node& nd = nodes_[id];
        nlohmann::json j{{"id", id}};
        if (nd.is_leaf()) {
            j["item"] = nd.item;
            j["label"] = label_of(nd.item, labels);
            if (static_cast<std::size_t>(nd.item) < groups.size())
                j["group"] = groups[static_cast<std::size_t>(nd.item)];
        } else {
            j["children"] = {nd.left, nd.right};
        }
        nodes.push_back(std::move(j));
    }
    return {{"root", root_}, {"nodes", std::move(nodes)}};
}

TreeIndex::TreeIndex(const ClusterTree& tree)
{
    const auto& nodes = tree.nodes();
    const std::size_t n = nodes.size();
    parent.assign(n, -1);
    depth.assign(n, 0);
    leaves_below.assign(n, 0);
    int max_item = -1;
    for (const auto& nd : nodes)
        max_item = std::max(max_item, nd.item);
    leaf_of_item.assign(static_cast<std::size_t>(max_item + 1), -1);
    if (tree.root() < 0)
        return;

    std::vector<int> order;
    std::vector<int> stack{tree.root()};
    while (!stack.empty()) {
        const int id = stack.back();
        stack.pop_back();
        order.push_back(id);
        const auto& nd = nodes[static_cast<std::size_t>(id)];
        if (nd.is_leaf()) {
            leaf_of_item[static_cast<std::size_t>(nd.item)] = id;
            continue;
        }
        for (int ch : {nd.left, nd.right}) {
            parent[static_cast<std::size_t>(ch)] = id;
            depth[static_cast<std::size_t>(ch)] = depth[static_cast<std::size_t>(id)] + 1;
            stack.push_back(ch);
        }
    }
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        const auto& nd = nodes[static_cast<std::size_t>(*it)];
        leaves_below[static_cast<std::size_t>(*it)] =
            nd.is_leaf() ? 1
                         : leaves_below[static_cast<std::size_t>(nd.left)] +
                               leaves_below[static_cast<std::size_t>(nd.right)];
    }
}

int TreeIndex::lca(int a, int b) const
{
    while (depth[static_cast<std::size_t>(a)] > depth[static_cast<std::size_t>(b)])
        a = parent[static_cast<std::size_t>(a)];
    while (depth[static_cast<std::size_t>(b)] > depth[static_cast<std::size_t>(a)])
        b = parent[static_cast<std::size_t>(b)];
    while (a != b) {
        a = parent[static_cast<std::size_t>(a)];
        b = parent[static_cast<std::size_t>(b)];
    }
    return a;
}

namespace {

void check_similarity(const Mat& w)
{
    if (w.rows() != w.cols())
        throw std::invalid_argument("similarity matrix must be square");
}

}  // namespace

double dasgupta_cost(const ClusterTree& tree, const Mat& w)
{
    check_similarity(w);
    tree.validate();
    const TreeIndex idx(tree);
    const auto n = w.rows();
    if (tree.leaf_count() != n || static_cast<Eigen::Index>(idx.leaf_of_item.size()) != n)
        throw std::invalid_argument("tree leaves do not match the similarity matrix indices");
    double cost = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i + 1; j < n; ++j) {
            if (w(i, j) == 0.0)
                continue;
            const int l = idx.lca(idx.leaf_of_item[static_cast<std::size_t>(i)],
                                  idx.leaf_of_item[static_cast<std::size_t>(j)]);
            cost += w(i, j) * idx.leaves_below[static_cast<std::size_t>(l)];
        }
    }
    return cost;
}

namespace {

// Mutable tree for exhaustive enumeration by sequential leaf insertion.
struct EnumTree {
    std::vector<int> left, right, parent;
    std::vector<unsigned> mask;
    int root = 0;

    explicit EnumTree(int n)
    {
        const int total = 2 * n - 1;
        left.assign(total, -1);
        right.assign(total, -1);
        parent.assign(total, -1);
        mask.assign(total, 0);
        for (int i = 0; i < n; ++i)
            mask[i] = 1u << i;
    }
};

double pair_weight(const Mat& w, unsigned a, unsigned b)
{
    double s = 0.0;
    for (unsigned x = a; x; x &= x - 1) {
        const int i = std::countr_zero(x);
        for (unsigned y = b; y; y &= y - 1)
            s += w(i, std::countr_zero(y));
    }
    return s;
}

double enum_cost(const EnumTree& t, const Mat& w, int n)
{
    double cost = 0.0;
    for (int v = n; v < 2 * n - 1; ++v) {
        const double cross = pair_weight(w, t.mask[t.left[v]], t.mask[t.right[v]]);
        cost += cross * std::popcount(t.mask[v]);
    }
    return cost;
}

void refresh_masks(EnumTree& t, int v)
{
    while (v >= 0) {
        if (t.left[v] >= 0)
            t.mask[v] = t.mask[t.left[v]] | t.mask[t.right[v]];
        v = t.parent[v];
    }
}

}  // namespace

BestTree best_tree_bruteforce(const Mat& w)
{
    check_similarity(w);
    const int n = static_cast<int>(w.rows());
    if (n < 2)
        throw std::invalid_argument("best_tree_bruteforce needs at least 2 leaves");
    if (n > 8)
        throw std::invalid_argument("best_tree_bruteforce refuses more than 8 leaves");

    EnumTree t(n);
    // Start from the cherry (0, 1) held by internal node n.
    t.left[n] = 0;
    t.right[n] = 1;
    t.parent[0] = n;
    t.parent[1] = n;
    t.root = n;
    refresh_masks(t, n);

    double best = std::numeric_limits<double>::infinity();
    EnumTree best_tree = t;

    std::function<void(int)> insert = [&](int leaf) {
        if (leaf == n) {
            const double c = enum_cost(t, w, n);
            if (c < best - 1e-12) {
                best = c;
                best_tree = t;
            }
            return;
        }
        const int u = n + leaf - 1;  // new internal node
        const int live = n + leaf - 1;
        std::vector<int> edges;
        for (int v = 0; v < leaf; ++v)
            edges.push_back(v);
        for (int v = n; v < live; ++v)
            edges.push_back(v);
        for (int v : edges) {
            const int p = t.parent[v];
            t.left[u] = v;
            t.right[u] = leaf;
            t.parent[u] = p;
            t.parent[v] = u;
            t.parent[leaf] = u;
            const int old_root = t.root;
            if (p < 0) {
                t.root = u;
            } else if (t.left[p] == v) {
                t.left[p] = u;
            } else {
                t.right[p] = u;
            }
            refresh_masks(t, u);

            insert(leaf + 1);

            if (p < 0) {
                t.root = old_root;
            } else if (t.left[p] == u) {
                t.left[p] = v;
            } else {
                t.right[p] = v;
            }
            t.parent[v] = p;
            t.parent[leaf] = -1;
            t.left[u] = t.right[u] = t.parent[u] = -1;
            t.mask[u] = 0;
            refresh_masks(t, p);
        }
    };
    insert(2);

    ClusterTree out;
    std::function<int(int)> build = [&](int v) {
        if (v < n)
            return out.add_leaf(v);
        const int l = build(best_tree.left[v]);
        const int r = build(best_tree.right[v]);
        return out.merge(l, r);
    };
    out.set_root(build(best_tree.root));
    return {std::move(out), best};
}

Vec scaled_softmax(const Vec& d, double tau)
{
    if (!(tau > 0.0))
        throw std::invalid_argument("tau must be positive");
    if (d.size() == 0)
        return d;
    const Vec z = (d.array() - d.maxCoeff()) / tau;
    const Vec e = z.array().exp();
    return e / e.sum();
}

double lca_depth(const BallPoint& x, const BallPoint& y)
{
    if (!(x.curvature() == y.curvature()))
        throw std::invalid_argument("lca_depth: curvature mismatch");
    if (x.dim() != y.dim())
        throw DimensionError("lca_depth: dimension mismatch");
    const double c = x.curvature().value();
    const double t = kernel::geodesic_argmin_t(x.coords(), y.coords(), c);
    return dist_to_origin(geodesic_point(x, y, t));
}

SimilaritySource parse_similarity_source(const std::string& name)
{
    if (name == "logits")
        return SimilaritySource::logits;
    if (name == "latent")
        return SimilaritySource::latent;
    if (name == "input")
        return SimilaritySource::input;
    throw std::invalid_argument("unknown similarity source '" + name + "' (logits|latent|input)");
}

std::string to_string(SimilaritySource s)
{
    switch (s) {
    case SimilaritySource::logits: return "logits";
    case SimilaritySource::latent: return "latent";
    case SimilaritySource::input: return "input";
    }
    return "logits";
}

std::vector<Triplet> sample_triplets(int batch_size, int count, std::mt19937_64& rng)
{
    if (batch_size < 3)
        throw std::invalid_argument("sample_triplets needs batch_size >= 3");
    if (count < 1)
        throw std::invalid_argument("sample_triplets needs count >= 1");
    std::uniform_int_distribution<int> pick(0, batch_size - 1);
    std::vector<Triplet> out;
    out.reserve(static_cast<std::size_t>(count));
    while (static_cast<int>(out.size()) < count) {
        Triplet t{pick(rng), pick(rng), pick(rng)};
        if (t.i == t.j || t.i == t.k || t.j == t.k)
            continue;
        out.push_back(t);
    }
    return out;
}

tape::Var record_tree_loss(tape::Graph& g, std::span<const tape::Var> points, std::span<const Triplet> triplets,
                           const SimilarityConfig& cfg, const TreeGeometry& geometry, const Mat* fixed_similarity)
{
    if (triplets.empty())
        throw std::invalid_argument("tree loss needs at least one triplet");
    if (!(cfg.tau > 0.0))
        throw std::invalid_argument("tau must be positive");
    const int n = static_cast<int>(points.size());
    if (fixed_similarity && (fixed_similarity->rows() != n || fixed_similarity->cols() != n))
        throw std::invalid_argument("similarity matrix does not match the batch");

    const bool hyp = geometry.space == Space::hyperbolic;
    const double c = geometry.curvature;
    // Pairwise nodes are shared between the triplets that reuse a pair.
    std::map<std::pair<int, int>, std::pair<tape::Var, tape::Var>> pair_nodes;
    const auto pair = [&](int a, int b) {
        if (a > b)
            std::swap(a, b);
        auto it = pair_nodes.find({a, b});
        if (it != pair_nodes.end())
            return it->second;
        const tape::Var x = points[static_cast<std::size_t>(a)];
        const tape::Var y = points[static_cast<std::size_t>(b)];
        tape::Var d{};
        if (!fixed_similarity)
            d = hyp ? g.dist(x, y, c) : g.norm(g.sub(x, y));
        const tape::Var depth = hyp ? g.lca_depth(x, y, c) : g.segment_depth(x, y);
        return pair_nodes.emplace(std::pair{a, b}, std::pair{d, depth}).first->second;
    };

    std::vector<tape::Var> terms;
    terms.reserve(triplets.size());
    for (const Triplet& t : triplets) {
        if (t.i < 0 || t.j < 0 || t.k < 0 || t.i >= n || t.j >= n || t.k >= n)
            throw std::out_of_range("triplet index outside the batch");
        if (t.i == t.j || t.i == t.k || t.j == t.k)
            throw std::invalid_argument("triplet indices must be distinct");
        const auto [d_ij, lca_ij] = pair(t.i, t.j);
        const auto [d_ik, lca_ik] = pair(t.i, t.k);
        const auto [d_jk, lca_jk] = pair(t.j, t.k);
        tape::Var w{};
        if (fixed_similarity) {
            const Mat& s = *fixed_similarity;
            w = g.constant(Vec{{s(t.i, t.j), s(t.i, t.k), s(t.j, t.k)}});
        } else {
            const std::array<tape::Var, 3> ds{d_ij, d_ik, d_jk};
            tape::Var d = g.stack(ds);
            if (!cfg.literal_sign)
                d = g.neg(d);
            w = g.softmax(d, cfg.tau);
        }
        const std::array<tape::Var, 3> depths{lca_ij, lca_ik, lca_jk};
        const tape::Var s = g.softmax(g.stack(depths), cfg.tau);
        const tape::Var w_ijk = g.dot(w, s);
        terms.push_back(g.sub(g.scale(g.sum(w), 3.0), w_ijk));
    }
    return g.scale(g.add_n(terms), 1.0 / static_cast<double>(triplets.size()));
}

TreeLossValue tree_loss(const std::vector<BallPoint>& batch, std::span<const Triplet> triplets,
                        const SimilarityConfig& cfg)
{
    if (batch.empty())
        throw std::invalid_argument("tree loss needs a nonempty batch");
    const Curvature curv = batch.front().curvature();
    const Eigen::Index dim = batch.front().dim();
    tape::Graph g;
    std::vector<tape::Var> pts;
    for (const auto& p : batch) {
        if (!(p.curvature() == curv))
            throw std::invalid_argument("tree loss: curvature mismatch");
        if (p.dim() != dim)
            throw DimensionError("tree loss: dimension mismatch");
        pts.push_back(g.constant(p.coords()));
    }
    const tape::Var total = record_tree_loss(g, pts, triplets, cfg, {Space::hyperbolic, curv.value()});
    g.evaluate({});

    TreeLossValue out;
    out.total = g.value(total)[0];
    // Pair sums are 1 per triplet for softmax similarities.
    for (const Triplet& t : triplets) {
        Vec d{{dist(batch[static_cast<std::size_t>(t.i)], batch[static_cast<std::size_t>(t.j)]),
               dist(batch[static_cast<std::size_t>(t.i)], batch[static_cast<std::size_t>(t.k)]),
               dist(batch[static_cast<std::size_t>(t.j)], batch[static_cast<std::size_t>(t.k)])}};
        const Vec w = scaled_softmax(cfg.literal_sign ? d : Vec(-d), cfg.tau);
        out.pair_terms += 2.0 * w.sum();
    }
    out.triplet_terms = out.total * static_cast<double>(triplets.size()) - out.pair_terms;
    return out;
}

namespace {

Vec to_boundary(const Vec& v, double max_norm)
{
    const double n = v.norm();
    if (n == 0.0)
        return v;
    return v * (max_norm / n);
}

// Arccosh form without the clamp of the Mobius form, which saturates for
// points this close to the boundary.
double boundary_dist(const Vec& x, const Vec& y, double c)
{
    const double denom = (1.0 - c * x.squaredNorm()) * (1.0 - c * y.squaredNorm());
    return std::acosh(1.0 + 2.0 * c * (x - y).squaredNorm() / denom) / std::sqrt(c);
}

}  // namespace

ClusterTree decode_tree(const std::vector<BallPoint>& points, const std::vector<int>& labels)
{
    if (points.size() != labels.size())
        throw std::invalid_argument("decode_tree: points and labels differ in length");
    if (points.size() < 2)
        throw std::invalid_argument("decode_tree needs at least 2 points");
    const Curvature curv = points.front().curvature();
    const double c = curv.value();
    const double max_norm = curv.max_norm();

    std::map<int, std::pair<Vec, int>> sums;
    for (std::size_t i = 0; i < points.size(); ++i) {
        if (!(points[i].curvature() == curv))
            throw std::invalid_argument("decode_tree: curvature mismatch");
        const Vec v = kernel::log0(points[i].coords(), c);
        auto [it, fresh] = sums.try_emplace(labels[i], Vec::Zero(v.size()), 0);
        if (it->second.first.size() != v.size())
            throw DimensionError("decode_tree: dimension mismatch");
        it->second.first += v;
        it->second.second += 1;
    }
    if (sums.size() < 2)
        throw std::invalid_argument("decode_tree needs at least 2 labels");

    struct Active {
        int node;
        Vec rep;                  // boundary representative
        std::vector<Vec> leaves;  // tangent vectors of member leaf representatives
    };
    ClusterTree tree;
    std::vector<Active> active;
    for (const auto& [label, acc] : sums) {
        const Vec mean = kernel::exp0(acc.first / acc.second, c);
        const Vec rep = to_boundary(mean, max_norm);
        active.push_back({tree.add_leaf(label), rep, {kernel::log0(rep, c)}});
    }

    while (active.size() > 1) {
        std::size_t ba = 0, bb = 1;
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t a = 0; a < active.size(); ++a) {
            for (std::size_t b = a + 1; b < active.size(); ++b) {
                const double d = boundary_dist(active[a].rep, active[b].rep, c);
                if (d < best) {
                    best = d;
                    ba = a;
                    bb = b;
                }
            }
        }
        Active merged;
        merged.node = tree.merge(active[ba].node, active[bb].node);
        merged.leaves = std::move(active[ba].leaves);
        merged.leaves.insert(merged.leaves.end(), active[bb].leaves.begin(), active[bb].leaves.end());
        Vec mean = Vec::Zero(merged.leaves.front().size());
        for (const auto& v : merged.leaves)
            mean += v;
        mean /= static_cast<double>(merged.leaves.size());
        merged.rep = to_boundary(kernel::exp0(mean, c), max_norm);
        active.erase(active.begin() + static_cast<std::ptrdiff_t>(bb));
        active[ba] = std::move(merged);
    }
    return tree;
}

double distortion(const ClusterTree& tree, const std::vector<int>& classes)
{
    tree.validate();
    const TreeIndex idx(tree);
    const std::vector<int> items = tree.items();
    for (int it : items)
        if (it >= static_cast<int>(classes.size()))
            throw std::invalid_argument("distortion: no class for item " + std::to_string(it));
    double same = 0.0, diff = 0.0;
    for (std::size_t a = 0; a < items.size(); ++a) {
        for (std::size_t b = a + 1; b < items.size(); ++b) {
            const int na = idx.leaf_of_item[static_cast<std::size_t>(items[a])];
            const int nb = idx.leaf_of_item[static_cast<std::size_t>(items[b])];
            const int l = idx.lca(na, nb);
            const double hops = idx.depth[static_cast<std::size_t>(na)] + idx.depth[static_cast<std::size_t>(nb)] -
                                2 * idx.depth[static_cast<std::size_t>(l)];
            if (classes[static_cast<std::size_t>(items[a])] == classes[static_cast<std::size_t>(items[b])])
                same += hops;
            else
                diff += hops;
        }
    }
    if (diff == 0.0)
        throw std::domain_error("distortion needs at least 2 classes among the leaves");
    return same / diff;
}

double distance_constraint(const std::vector<BallPoint>& points, const std::vector<int>& classes)
{
    if (points.size() != classes.size())
        throw std::invalid_argument("distance_constraint: points and classes differ in length");
    double total = 0.0;
    for (std::size_t a = 0; a < points.size(); ++a)
        for (std::size_t b = a + 1; b < points.size(); ++b)
            if (classes[a] == classes[b])
                total += dist(points[a], points[b]);
    return total;
}

ClusterTree random_tree(const std::vector<int>& items, std::mt19937_64& rng)
{
    if (items.empty())
        throw std::invalid_argument("random_tree needs at least one item");
    // parent/children arrays, then rebuilt as a ClusterTree.
    const std::size_t n = items.size();
    std::vector<int> left(2 * n, -1), right(2 * n, -1), parent(2 * n, -1);
    std::vector<int> live{0};
    int root = 0;
    int next_internal = static_cast<int>(n);
    for (std::size_t leaf = 1; leaf < n; ++leaf) {
        std::uniform_int_distribution<std::size_t> pick(0, live.size() - 1);
        const int v = live[pick(rng)];
        const int u = next_internal++;
        const int p = parent[static_cast<std::size_t>(v)];
        left[static_cast<std::size_t>(u)] = v;
        right[static_cast<std::size_t>(u)] = static_cast<int>(leaf);
        parent[static_cast<std::size_t>(u)] = p;
        parent[static_cast<std::size_t>(v)] = u;
        parent[leaf] = u;
        if (p < 0)
            root = u;
        else if (left[static_cast<std::size_t>(p)] == v)
            left[static_cast<std::size_t>(p)] = u;
        else
            right[static_cast<std::size_t>(p)] = u;
        live.push_back(static_cast<int>(leaf));
        live.push_back(u);
    }
    ClusterTree out;
    std::function<int(int)> build = [&](int v) {
        if (v < static_cast<int>(n))
            return out.add_leaf(items[static_cast<std::size_t>(v)]);
        const int l = build(left[static_cast<std::size_t>(v)]);
        const int r = build(right[static_cast<std::size_t>(v)]);
        return out.merge(l, r);
    };
    out.set_root(build(root));
    return out;
}

}  // namespace hyrep
