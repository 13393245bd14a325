#include "doctest.h"

#include "hyrep/cluster.hpp"
#include "hyrep/data.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

using namespace hyrep;

namespace {

Vec vec(std::initializer_list<double> xs)
{
    Vec v(static_cast<Eigen::Index>(xs.size()));
    Eigen::Index i = 0;
    for (double x : xs)
        v[i++] = x;
    return v;
}

BallPoint pt(std::initializer_list<double> xs, double c = 1.0) { return BallPoint(vec(xs), Curvature(c)); }

// ((a, b), c) style trees from nested item pairs.
ClusterTree cherry_then(int a, int b, int c)
{
    ClusterTree t;
    const int ab = t.merge(t.add_leaf(a), t.add_leaf(b));
    t.set_root(t.merge(ab, t.add_leaf(c)));
    return t;
}

ClusterTree two_cherries(int a, int b, int c, int d)
{
    ClusterTree t;
    const int ab = t.merge(t.add_leaf(a), t.add_leaf(b));
    const int cd = t.merge(t.add_leaf(c), t.add_leaf(d));
    t.set_root(t.merge(ab, cd));
    return t;
}

// Leaf sets of every internal node, as sorted item lists.
std::set<std::vector<int>> clusters(const ClusterTree& t)
{
    std::set<std::vector<int>> out;
    std::function<std::vector<int>(int)> walk = [&](int id) -> std::vector<int> {
        const auto& nd = t.node(id);
        if (nd.is_leaf())
            return {nd.item};
        auto l = walk(nd.left);
        auto r = walk(nd.right);
        l.insert(l.end(), r.begin(), r.end());
        std::sort(l.begin(), l.end());
        out.insert(l);
        return l;
    };
    walk(t.root());
    return out;
}

Mat random_similarity(std::mt19937_64& rng, int n)
{
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Mat w = Mat::Zero(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            w(i, j) = w(j, i) = u(rng);
    return w;
}

}  // namespace

TEST_CASE("tree construction and validation")
{
    auto t = two_cherries(0, 1, 2, 3);
    t.validate();
    CHECK(t.leaf_count() == 4);
    CHECK(t.items() == std::vector<int>{0, 1, 2, 3});
    CHECK(t.hop_distance(0, 1) == 2);
    CHECK(t.hop_distance(0, 3) == 4);
    CHECK(t.hop_distance(2, 2) == 0);
    CHECK(t.cherries() == std::vector<std::pair<int, int>>{{0, 1}, {2, 3}});

    ClusterTree dup;
    dup.set_root(dup.merge(dup.add_leaf(1), dup.add_leaf(1)));
    CHECK_THROWS_AS(dup.validate(), std::logic_error);

    ClusterTree forest;
    forest.add_leaf(0);
    forest.set_root(forest.merge(forest.add_leaf(1), forest.add_leaf(2)));
    CHECK_THROWS_AS(forest.validate(), std::logic_error);
}

TEST_CASE("newick and json export")
{
    const auto t = cherry_then(0, 1, 2);
    CHECK(t.to_newick({"b", "p", "it's"}) == "(('b','p'),'it''s');");
    const auto j = t.to_json({"b", "p", "m"}, {"labial", "labial", "nasal"});
    CHECK(j["root"] == t.root());
    int leaves = 0;
    for (const auto& nd : j["nodes"]) {
        if (nd.contains("item")) {
            ++leaves;
            CHECK(nd.contains("label"));
            CHECK(nd.contains("group"));
        } else {
            CHECK(nd["children"].size() == 2);
        }
    }
    CHECK(leaves == 3);
}

TEST_CASE("dasgupta cost examples")
{
    Mat w = Mat::Zero(3, 3);
    w(0, 1) = w(1, 0) = 1.0;
    CHECK(dasgupta_cost(cherry_then(0, 1, 2), w) == doctest::Approx(2.0));
    CHECK(dasgupta_cost(cherry_then(0, 2, 1), w) == doctest::Approx(3.0));
    CHECK(dasgupta_cost(cherry_then(1, 2, 0), w) == doctest::Approx(3.0));
    CHECK(dasgupta_cost(cherry_then(0, 1, 2), Mat::Zero(3, 3)) == 0.0);
    CHECK_THROWS((void)dasgupta_cost(cherry_then(0, 1, 2), Mat::Zero(4, 4)));
}

TEST_CASE("dasgupta cost is invariant under child swaps and bounded below")
{
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 20; ++trial) {
        const Mat w = random_similarity(rng, 5);
        std::vector<int> items{0, 1, 2, 3, 4};
        const auto t = random_tree(items, rng);
        // Mirror image: rebuild with children swapped at every node.
        ClusterTree m;
        std::function<int(int)> mirror = [&](int id) {
            const auto& nd = t.node(id);
            if (nd.is_leaf())
                return m.add_leaf(nd.item);
            const int r = mirror(nd.right);
            const int l = mirror(nd.left);
            return m.merge(r, l);
        };
        m.set_root(mirror(t.root()));
        CHECK(dasgupta_cost(m, w) == doctest::Approx(dasgupta_cost(t, w)));
        CHECK(dasgupta_cost(t, w) >= w.sum() - 1e-12);  // 2 * sum over unordered pairs
    }
}

TEST_CASE("brute force search")
{
    Mat w = Mat::Zero(3, 3);
    w(0, 1) = w(1, 0) = 1.0;
    const auto best = best_tree_bruteforce(w);
    CHECK(best.cost == doctest::Approx(2.0));
    CHECK(best.tree.cherries() == std::vector<std::pair<int, int>>{{0, 1}});

    Mat blocks = Mat::Zero(4, 4);
    blocks(0, 1) = blocks(1, 0) = blocks(2, 3) = blocks(3, 2) = 1.0;
    const auto b4 = best_tree_bruteforce(blocks);
    CHECK(b4.cost == doctest::Approx(4.0));
    CHECK(b4.tree.cherries() == std::vector<std::pair<int, int>>{{0, 1}, {2, 3}});

    Mat two(2, 2);
    two << 0.0, 0.7, 0.7, 0.0;
    CHECK(best_tree_bruteforce(two).cost == doctest::Approx(1.4));

    CHECK_THROWS((void)best_tree_bruteforce(Mat::Zero(9, 9)));
}

TEST_CASE("brute force beats every random tree")
{
    std::mt19937_64 rng(17);
    for (int n = 4; n <= 6; ++n) {
        const Mat w = random_similarity(rng, n);
        const auto best = best_tree_bruteforce(w);
        best.tree.validate();
        CHECK(dasgupta_cost(best.tree, w) == doctest::Approx(best.cost));
        std::vector<int> items(static_cast<std::size_t>(n));
        std::iota(items.begin(), items.end(), 0);
        for (int k = 0; k < 200; ++k)
            CHECK(dasgupta_cost(random_tree(items, rng), w) >= best.cost - 1e-12);
    }
}

TEST_CASE("scaled softmax")
{
    const auto u = scaled_softmax(vec({0.3, 0.3, 0.3}), 0.5);
    for (Eigen::Index i = 0; i < 3; ++i)
        CHECK(u[i] == doctest::Approx(1.0 / 3.0));
    const auto s = scaled_softmax(vec({std::log(2.0), 0.0}), 1.0);
    CHECK(s[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(s[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    const auto sharp = scaled_softmax(vec({1.0, 0.0, 0.0}), 1e-3);
    CHECK(sharp[0] == doctest::Approx(1.0));
    CHECK(sharp[1] < 1e-12);
    const auto big = scaled_softmax(vec({1e4, 0.0}), 1e-2);
    CHECK(big.allFinite());
}

TEST_CASE("lca depth")
{
    const auto x = pt({0.3, 0.4});
    CHECK(lca_depth(x, x) == doctest::Approx(dist_to_origin(x)).epsilon(1e-9));
    CHECK(lca_depth(x, pt({-0.3, -0.4})) < 1e-7);

    // Dense sampling of the geodesic.
    const auto a = pt({0.5, 0.0});
    const auto b = pt({0.0, 0.5});
    double best = dist_to_origin(a);
    for (int i = 0; i <= 100000; ++i)
        best = std::min(best, dist_to_origin(geodesic_point(a, b, i / 100000.0)));
    const double v = lca_depth(a, b);
    CHECK(v < dist_to_origin(a));
    CHECK(v == doctest::Approx(best).epsilon(1e-7));
}

TEST_CASE("triplet sampling")
{
    std::mt19937_64 rng(4);
    const auto one = sample_triplets(3, 1, rng);
    REQUIRE(one.size() == 1);
    std::vector<int> idx{one[0].i, one[0].j, one[0].k};
    std::sort(idx.begin(), idx.end());
    CHECK(idx == std::vector<int>{0, 1, 2});

    for (const auto& t : sample_triplets(10, 500, rng)) {
        CHECK(t.i != t.j);
        CHECK(t.i != t.k);
        CHECK(t.j != t.k);
        CHECK(std::min({t.i, t.j, t.k}) >= 0);
        CHECK(std::max({t.i, t.j, t.k}) < 10);
    }

    std::mt19937_64 r1(99), r2(99);
    const auto s1 = sample_triplets(8, 50, r1);
    const auto s2 = sample_triplets(8, 50, r2);
    for (std::size_t n = 0; n < s1.size(); ++n)
        CHECK((s1[n].i == s2[n].i && s1[n].j == s2[n].j && s1[n].k == s2[n].k));

    CHECK_THROWS((void)sample_triplets(2, 1, rng));
    CHECK_THROWS((void)sample_triplets(5, 0, rng));
}

TEST_CASE("tree loss on coincident points")
{
    const std::vector<BallPoint> batch(3, pt({0.2, -0.1}));
    const std::vector<Triplet> triplets{{0, 1, 2}, {2, 0, 1}};
    const auto v = tree_loss(batch, triplets, {});
    CHECK(v.triplet_terms == doctest::Approx(2.0 * 2.0 / 3.0));
    CHECK(v.pair_terms == doctest::Approx(2.0 * 2.0));
    CHECK(v.total == doctest::Approx((v.triplet_terms + v.pair_terms) / 2.0));
    CHECK_THROWS((void)tree_loss(batch, {}, {}));
}

TEST_CASE("tree loss per-triplet bound")
{
    std::mt19937_64 rng(6);
    std::normal_distribution<double> gauss(0.0, 0.3);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<BallPoint> batch;
        std::vector<Vec> raw;
        for (int i = 0; i < 3; ++i) {
            Vec v(3);
            for (auto& x : v)
                x = gauss(rng);
            batch.push_back(project_to_ball(v, Curvature(1.0)));
        }
        SimilarityConfig cfg;
        cfg.tau = 0.3;
        const std::vector<Triplet> t{{0, 1, 2}};
        const auto v = tree_loss(batch, t, cfg);
        const Vec d = vec({dist(batch[0], batch[1]), dist(batch[0], batch[2]), dist(batch[1], batch[2])});
        const Vec w = scaled_softmax(-d, cfg.tau);
        CHECK(v.triplet_terms >= 1.0 - w.maxCoeff() - 1e-12);
        CHECK(v.triplet_terms <= 1.0 - w.minCoeff() + 1e-12);
        CHECK(v.pair_terms == doctest::Approx(2.0));
    }
}

TEST_CASE("tight pair with an outlier beats an equidistant triple")
{
    SimilarityConfig cfg;
    cfg.tau = 0.1;
    const std::vector<Triplet> t{{0, 1, 2}};
    const std::vector<BallPoint> tight{pt({0.9, 0.0}), pt({0.89, 0.05}), pt({-0.9, 0.0})};
    const double r = 0.4;
    std::vector<BallPoint> equi;
    for (int k = 0; k < 3; ++k)
        equi.push_back(pt({r * std::cos(2.0 * M_PI * k / 3.0), r * std::sin(2.0 * M_PI * k / 3.0)}));
    CHECK(tree_loss(tight, t, cfg).total < tree_loss(equi, t, cfg).total);
}

TEST_CASE("sharp temperature picks the nearest pair")
{
    std::mt19937_64 rng(12);
    std::normal_distribution<double> gauss(0.0, 0.4);
    int agree = 0;
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<BallPoint> p;
        for (int i = 0; i < 3; ++i)
            p.push_back(project_to_ball(vec({gauss(rng), gauss(rng)}), Curvature(1.0)));
        const Vec d = vec({dist(p[0], p[1]), dist(p[0], p[2]), dist(p[1], p[2])});
        Eigen::Index nearest = 0, top = 0;
        d.minCoeff(&nearest);
        scaled_softmax(-d, 1e-3).maxCoeff(&top);
        agree += nearest == top;
    }
    CHECK(agree == 100);
}

TEST_CASE("recorded tree loss matches the value and its gradient checks")
{
    std::mt19937_64 rng(31);
    std::normal_distribution<double> gauss(0.0, 0.25);
    const int n = 5;
    auto triplets = sample_triplets(n, 12, rng);
    for (Space space : {Space::hyperbolic, Space::euclidean}) {
        for (bool literal : {false, true}) {
            tape::Graph g;
            std::vector<tape::Var> pts;
            tape::Bindings b;
            std::vector<std::string> names;
            std::vector<BallPoint> batch;
            for (int i = 0; i < n; ++i) {
                const std::string name = "p" + std::to_string(i);
                pts.push_back(g.parameter(name, 3));
                b[name] = vec({gauss(rng), gauss(rng), gauss(rng)});
                names.push_back(name);
                batch.emplace_back(b[name], Curvature(1.0));
            }
            SimilarityConfig cfg;
            cfg.tau = 0.5;
            cfg.literal_sign = literal;
            g.set_output(record_tree_loss(g, pts, triplets, cfg, {space, 1.0}));
            const double recorded = g.forward(b);
            if (space == Space::hyperbolic)
                CHECK(recorded == doctest::Approx(tree_loss(batch, triplets, cfg).total).epsilon(1e-9));
            CHECK(tape::check_gradient(g, b, names) < 1e-5);
        }
    }
}

TEST_CASE("decode tree examples")
{
    const std::vector<BallPoint> two{pt({0.3, 0.0}), pt({0.0, 0.3}), pt({0.31, 0.01})};
    const auto t2 = decode_tree(two, {4, 7, 4});
    t2.validate();
    CHECK(t2.leaf_count() == 2);
    CHECK(t2.cherries() == std::vector<std::pair<int, int>>{{4, 7}});

    const std::vector<BallPoint> four{pt({0.5, 0.01}), pt({0.5, -0.01}), pt({-0.01, 0.5}), pt({0.01, 0.5})};
    const auto t4 = decode_tree(four, {0, 2, 1, 3});
    CHECK(t4.cherries() == std::vector<std::pair<int, int>>{{0, 2}, {1, 3}});

    CHECK_THROWS((void)decode_tree({pt({0.1, 0.1})}, {0}));
    CHECK_THROWS((void)decode_tree({pt({0.1, 0.1}), pt({0.2, 0.1})}, {0, 0}));
}

TEST_CASE("decode tree recovers a planted hierarchy")
{
    const auto tax = binary_taxonomy(3);
    // Planted tree over class ids: ((0,1),(2,3)),((4,5),(6,7)).
    std::set<std::vector<int>> planted{{0, 1}, {2, 3}, {4, 5}, {6, 7}, {0, 1, 2, 3}, {4, 5, 6, 7},
                                       {0, 1, 2, 3, 4, 5, 6, 7}};
    int hits = 0;
    for (int seed = 0; seed < 100; ++seed) {
        SyntheticSpec spec;
        spec.taxonomy = tax;
        spec.trials_per_class = 10;
        spec.feature_dim = 50;
        spec.level_scales = {1.0, 0.6, 0.4};
        spec.noise_sigma = 0.5;
        spec.seed = static_cast<std::uint64_t>(seed);
        const auto d = generate_synthetic(spec);
        std::vector<BallPoint> pts;
        for (const auto& f : d.features)
            pts.push_back(exp0(TangentVector{f}, Curvature(1.0)));
        hits += clusters(decode_tree(pts, d.labels)) == planted;
    }
    CHECK(hits >= 90);
}

TEST_CASE("distortion examples")
{
    const std::vector<int> classes{0, 0, 1, 1};
    CHECK(distortion(two_cherries(0, 1, 2, 3), classes) == doctest::Approx(0.25));
    CHECK(distortion(two_cherries(0, 2, 1, 3), classes) == doctest::Approx(2.0 / 3.0));
    CHECK_THROWS_AS((void)distortion(two_cherries(0, 1, 2, 3), {0, 0, 0, 0}), std::domain_error);
}

TEST_CASE("planted tree beats random trees on distortion")
{
    // Items 0..7 in classes of two: ((0,1),(2,3)),((4,5),(6,7)).
    ClusterTree t;
    std::vector<int> pairs;
    for (int k = 0; k < 4; ++k)
        pairs.push_back(t.merge(t.add_leaf(2 * k), t.add_leaf(2 * k + 1)));
    t.set_root(t.merge(t.merge(pairs[0], pairs[1]), t.merge(pairs[2], pairs[3])));
    const std::vector<int> classes{0, 0, 1, 1, 2, 2, 3, 3};
    const double planted = distortion(t, classes);
    std::mt19937_64 rng(40);
    int worse = 0;
    for (int k = 0; k < 100; ++k)
        worse += distortion(random_tree(t.items(), rng), classes) > planted;
    CHECK(worse >= 95);
}

TEST_CASE("random trees are valid and cover every shape")
{
    std::mt19937_64 rng(5);
    std::set<std::set<std::vector<int>>> shapes;
    for (int k = 0; k < 3000; ++k) {
        const auto t = random_tree({0, 1, 2, 3}, rng);
        t.validate();
        shapes.insert(clusters(t));
    }
    CHECK(shapes.size() == 15);
}

TEST_CASE("distance constraint")
{
    const auto o = pt({0.0, 0.0});
    CHECK(distance_constraint({o, o, o}, {1, 1, 1}) == 0.0);
    const auto x = pt({0.6, 0.0});
    CHECK(distance_constraint({o, x}, {2, 2}) == doctest::Approx(std::log(4.0)).epsilon(1e-12));
    CHECK(distance_constraint({o, x, pt({-0.5, 0.3})}, {2, 2, 3}) == doctest::Approx(std::log(4.0)).epsilon(1e-12));
    CHECK(distance_constraint({o, x}, {0, 1}) == 0.0);
}

TEST_CASE("similarity source names")
{
    for (auto s : {SimilaritySource::logits, SimilaritySource::latent, SimilaritySource::input})
        CHECK(parse_similarity_source(to_string(s)) == s);
    CHECK_THROWS((void)parse_similarity_source("hidden"));
}
