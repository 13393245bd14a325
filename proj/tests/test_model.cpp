#include "doctest.h"

#include "hyrep/model.hpp"
#include "hyrep/optim.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

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

FfnnParams linear_layer(const Mat& w)
{
    return {w, Vec::Zero(w.rows()), tape::Activation::identity};
}

MlrParams mlr_params(const std::vector<Vec>& p, const std::vector<Vec>& a, double c)
{
    MlrParams m;
    for (std::size_t k = 0; k < p.size(); ++k) {
        m.offsets.emplace_back(p[k], Curvature(c));
        m.normals.push_back({a[k]});
    }
    return m;
}

std::string read_file(const std::filesystem::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("identity layer is the identity on the ball")
{
    std::mt19937_64 rng(3);
    std::normal_distribution<double> gauss;
    for (double c : {0.5, 1.0, 2.0}) {
        for (int trial = 0; trial < 20; ++trial) {
            Vec v(5);
            for (auto& x : v)
                x = gauss(rng);
            v *= 0.8 / (std::sqrt(c) * v.norm());
            const BallPoint x(v, Curvature(c));
            const auto y = ffnn_forward(x, linear_layer(Mat::Identity(5, 5)));
            CHECK((y.coords() - v).lpNorm<Eigen::Infinity>() < 1e-9);
        }
    }
}

TEST_CASE("ffnn maps the origin to the origin")
{
    Mat w(3, 2);
    w << 1.0, -2.0, 0.5, 3.0, -1.0, 4.0;
    const auto y = ffnn_forward(BallPoint::origin(2, Curvature(1.0)), linear_layer(w));
    CHECK(y.coords().norm() == doctest::Approx(0.0));
    CHECK(y.dim() == 3);
}

TEST_CASE("doubling layer matches Mobius scalar multiplication")
{
    const BallPoint x(vec({0.5, 0.0}), Curvature(1.0));
    const auto y = ffnn_forward(x, linear_layer(2.0 * Mat::Identity(2, 2)));
    CHECK(y.coords()[0] == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(y.coords()[1] == doctest::Approx(0.0));
    CHECK(y.coords()[0] == doctest::Approx(mobius_scalar_mul(2.0, x).coords()[0]).epsilon(1e-12));
}

TEST_CASE("ffnn rejects a dimension mismatch")
{
    const BallPoint x(vec({0.1, 0.1, 0.1}), Curvature(1.0));
    CHECK_THROWS_AS((void)ffnn_forward(x, linear_layer(Mat::Identity(2, 2))), DimensionError);
}

TEST_CASE("mlr logit vanishes on the hyperplane")
{
    const auto m = mlr_params({vec({0.2, 0.1}), vec({0.0, 0.0})}, {vec({1.0, 0.0}), vec({0.0, 1.0})}, 1.0);
    // (-p) (+) x = 0 at x = p.
    const auto logits = mlr_logits(BallPoint(vec({0.2, 0.1}), Curvature(1.0)), m);
    CHECK(std::abs(logits[0]) < 1e-12);
    // Class 1 hyperplane through the origin is the x-axis.
    const auto on_axis = mlr_logits(BallPoint(vec({0.4, 0.0}), Curvature(1.0)), m);
    CHECK(std::abs(on_axis[1]) < 1e-12);
}

TEST_CASE("identical hyperplanes give a uniform softmax")
{
    const Vec p = vec({0.1, -0.2, 0.05});
    const Vec a = vec({0.3, 0.7, -0.2});
    const auto m = mlr_params({p, p, p, p}, {a, a, a, a}, 2.0);
    const auto probs = softmax(mlr_logits(BallPoint(vec({0.2, 0.1, 0.3}), Curvature(2.0)), m));
    for (Eigen::Index k = 0; k < 4; ++k)
        CHECK(probs[k] == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("negating a normal negates its logit")
{
    std::mt19937_64 rng(11);
    std::normal_distribution<double> gauss;
    for (int trial = 0; trial < 20; ++trial) {
        Vec p(3), a(3), x(3);
        for (Eigen::Index i = 0; i < 3; ++i) {
            p[i] = 0.2 * gauss(rng);
            a[i] = gauss(rng);
            x[i] = 0.2 * gauss(rng);
        }
        const BallPoint xp(x, Curvature(1.0));
        const auto l1 = mlr_logits(xp, mlr_params({p, p}, {a, vec({1.0, 0.0, 0.0})}, 1.0));
        const auto l2 = mlr_logits(xp, mlr_params({p, p}, {-a, vec({1.0, 0.0, 0.0})}, 1.0));
        CHECK(l2[0] == doctest::Approx(-l1[0]).epsilon(1e-12));
    }
}

TEST_CASE("degenerate normal gives a zero logit")
{
    const auto m = mlr_params({vec({0.1, 0.0}), vec({0.0, 0.0})}, {vec({0.0, 0.0}), vec({1.0, 1.0})}, 1.0);
    const auto logits = mlr_logits(BallPoint(vec({0.3, -0.4}), Curvature(1.0)), m);
    CHECK(logits[0] == 0.0);
    CHECK(std::isfinite(logits[1]));
}

TEST_CASE("logit changes sign exactly at the hyperplane crossing")
{
    const double c = 2.0;
    const Vec p = vec({0.15, -0.1});
    const Vec a = vec({1.0, 2.0});
    const auto m = mlr_params({p, vec({0.0, 0.0})}, {a, vec({1.0, 0.0})}, c);
    // Points x = p (+) u with <u, a> = s; the hyperplane is s = 0.
    const Vec dir = a.normalized();
    const Vec along = vec({-dir[1], dir[0]});
    int prev_sign = 0;
    int changes = 0;
    for (int i = -20; i <= 20; ++i) {
        if (i == 0)
            continue;
        const Vec u = 0.01 * i * dir + 0.05 * along;
        const auto x = mobius_add(BallPoint(p, Curvature(c)), BallPoint(u, Curvature(c)));
        const double l = mlr_logits(x, m)[0];
        const int sign = l > 0 ? 1 : -1;
        CHECK(sign == (i > 0 ? 1 : -1));
        if (prev_sign != 0 && sign != prev_sign)
            ++changes;
        prev_sign = sign;
    }
    CHECK(changes == 1);
}

TEST_CASE("cross entropy")
{
    CHECK(cross_entropy(Vec::Zero(21), 4) == doctest::Approx(std::log(21.0)).epsilon(1e-12));
    const double stable = cross_entropy(vec({1000.0, 0.0}), 0);
    CHECK(std::isfinite(stable));
    CHECK(stable < 1e-9);
    CHECK(cross_entropy(vec({0.0, 0.0, std::log(3.0)}), 2) == doctest::Approx(-std::log(0.6)).epsilon(1e-12));
    CHECK_THROWS_AS((void)cross_entropy(vec({0.0, 0.0}), 2), std::out_of_range);
    CHECK_THROWS_AS((void)cross_entropy(vec({0.0, 0.0}), -1), std::out_of_range);
}

TEST_CASE("mirrored two-class head")
{
    const Vec p = vec({0.1, 0.2});
    const Vec a = vec({0.5, -1.5});
    const auto m = mlr_params({p, p}, {a, -a}, 1.0);
    for (const Vec& x : {vec({0.3, 0.1}), vec({-0.2, 0.4}), vec({0.0, -0.5})}) {
        const auto logits = mlr_logits(BallPoint(x, Curvature(1.0)), m);
        const auto probs = softmax(logits);
        const double sigma = 1.0 / (1.0 + std::exp(-2.0 * logits[0]));
        CHECK(probs[0] == doctest::Approx(sigma).epsilon(1e-12));
        CHECK(probs[1] == doctest::Approx(1.0 - sigma).epsilon(1e-12));
    }
}

TEST_CASE("probabilities sum to one")
{
    for (Space space : {Space::hyperbolic, Space::euclidean}) {
        ModelConfig cfg;
        cfg.input_dim = 7;
        cfg.latent_dim = 16;
        cfg.num_classes = 5;
        cfg.space = space;
        const auto model = Model::init(cfg, 9);
        std::mt19937_64 rng(1);
        std::normal_distribution<double> gauss(0.0, 3.0);
        for (int trial = 0; trial < 30; ++trial) {
            Vec x(7);
            for (auto& v : x)
                v = gauss(rng);
            const auto pred = model.predict(x);
            CHECK(std::abs(pred.probabilities.sum() - 1.0) < 1e-12);
            CHECK(pred.probabilities.minCoeff() > 0.0);
            Eigen::Index best = 0;
            pred.probabilities.maxCoeff(&best);
            CHECK(pred.label == static_cast<int>(best));
        }
    }
}

TEST_CASE("initialization")
{
    ModelConfig cfg;
    cfg.input_dim = 9;
    cfg.latent_dim = 64;
    cfg.num_classes = 3;
    const auto m = Model::init(cfg, 5);
    const auto& w = m.params().at(param_names::layer_weight(0));
    CHECK(w.size() == 64 * 9);
    CHECK(w.cwiseAbs().maxCoeff() <= 1.0 / 3.0);
    CHECK(m.params().at(param_names::layer_bias(0)).isZero());
    CHECK(m.params().at(param_names::mlr_offsets).isZero());
    const auto mlr = m.mlr();
    for (const auto& a : mlr.normals)
        CHECK(a.coords.norm() > 0.0);
    CHECK(m.is_ball_param(param_names::mlr_offsets));
    CHECK_FALSE(m.is_ball_param(param_names::mlr_normals));
    CHECK_FALSE(m.is_ball_param(param_names::layer_weight(0)));

    const auto again = Model::init(cfg, 5);
    CHECK(again.params().at(param_names::mlr_normals) == m.params().at(param_names::mlr_normals));
}

TEST_CASE("config validation")
{
    ModelConfig cfg;
    cfg.input_dim = 0;
    CHECK_THROWS((void)Model::init(cfg, 0));
    cfg.input_dim = 3;
    cfg.num_classes = 1;
    CHECK_THROWS((void)Model::init(cfg, 0));
    cfg.num_classes = 2;
    cfg.curvature = 0.0;
    CHECK_THROWS((void)Model::init(cfg, 0));
    CHECK(parse_space("euclidean") == Space::euclidean);
    CHECK_THROWS((void)parse_space("spherical"));
}

TEST_CASE("predict rejects a wrong input size")
{
    ModelConfig cfg;
    cfg.input_dim = 4;
    cfg.latent_dim = 8;
    const auto m = Model::init(cfg, 0);
    CHECK_THROWS((void)m.predict(Vec::Zero(3)));
}

TEST_CASE("classification gradient passes the central-difference check")
{
    for (Space space : {Space::hyperbolic, Space::euclidean}) {
        for (int depth : {1, 2}) {
            ModelConfig cfg;
            cfg.input_dim = 5;
            cfg.latent_dim = 6;
            cfg.num_classes = 3;
            cfg.space = space;
            cfg.depth = depth;
            cfg.activation = tape::Activation::tanh;
            auto m = Model::init(cfg, 21);
            if (space == Space::hyperbolic) {
                std::mt19937_64 rng(4);
                std::uniform_real_distribution<double> u(-0.15, 0.15);
                for (auto& v : m.params()[param_names::mlr_offsets])
                    v = u(rng);
            }
            tape::Graph g;
            const auto x = g.input("x", 5);
            const auto nodes = m.record(g, x);
            g.set_output(g.cross_entropy(nodes.logits, 1));
            auto bindings = m.params();
            bindings["x"] = vec({0.3, -0.2, 0.5, 0.1, -0.4});
            const double err = tape::check_gradient(g, bindings, m.param_order());
            CHECK(err < 1e-3);
        }
    }
}

TEST_CASE("checkpoint round trip is byte-identical")
{
    const auto dir = std::filesystem::temp_directory_path() / "hyrep_test_model";
    std::filesystem::create_directories(dir);
    for (Space space : {Space::hyperbolic, Space::euclidean}) {
        ModelConfig cfg;
        cfg.input_dim = 6;
        cfg.latent_dim = 10;
        cfg.num_classes = 4;
        cfg.space = space;
        cfg.curvature = 1.5;
        const auto m = Model::init(cfg, 77);
        const auto a = dir / "a.json";
        const auto b = dir / "b.json";
        m.save(a);
        const auto loaded = Model::load(a);
        loaded.save(b);
        CHECK(read_file(a) == read_file(b));
        CHECK(loaded.seed() == 77);
        CHECK(loaded.config().curvature == 1.5);
        const Vec x = vec({1.0, -2.0, 0.5, 0.0, 3.0, 1.0});
        CHECK(loaded.logits(x) == m.logits(x));
    }
    std::filesystem::remove_all(dir);
}

TEST_CASE("toy model fits two separated Gaussian classes")
{
    Dataset d;
    d.n_units = 1;
    d.n_bins = 2;
    d.classes = {"a", "b"};
    std::mt19937_64 rng(8);
    std::normal_distribution<double> gauss(0.0, 0.5);
    for (int i = 0; i < 200; ++i) {
        const int label = i % 2;
        const double centre = label == 0 ? -2.0 : 2.0;
        d.features.push_back(vec({centre + gauss(rng), gauss(rng)}));
        d.labels.push_back(label);
    }
    for (Space space : {Space::hyperbolic, Space::euclidean}) {
        TrainConfig cfg;
        cfg.model.space = space;
        cfg.model.latent_dim = 16;
        cfg.epochs = 500;
        cfg.lr = 0.01;
        cfg.schedule.mode = ScheduleMode::fixed;
        cfg.schedule.start = {1.0, 0.0};
        const auto st = train(d, cfg);
        int correct = 0;
        for (std::size_t i = 0; i < d.size(); ++i)
            correct += st.model.predict(d.features[i]).label == d.labels[i];
        CAPTURE(to_string(space));
        CHECK(correct >= 198);
    }
}
