#include "doctest.h"

#include "hyrep/ball.hpp"

#include <cmath>
#include <random>

using namespace hyrep;

namespace {

const double kLn4 = std::log(4.0);

BallPoint pt(std::initializer_list<double> xs, double c = 1.0)
{
    Vec v(static_cast<Eigen::Index>(xs.size()));
    Eigen::Index i = 0;
    for (double x : xs)
        v[i++] = x;
    return BallPoint(v, Curvature(c));
}

// Uniform direction, radius uniform in [0, frac * max_norm].
BallPoint random_point(std::mt19937_64& rng, Eigen::Index dim, double c, double frac = 0.9)
{
    std::normal_distribution<double> gauss;
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    Vec v(dim);
    for (auto& x : v)
        x = gauss(rng);
    v.normalize();
    const Curvature curv(c);
    return BallPoint(v * unif(rng) * frac * curv.max_norm(), curv);
}

bool near(const Vec& a, const Vec& b, double tol) { return (a - b).lpNorm<Eigen::Infinity>() <= tol; }

}  // namespace

TEST_CASE("curvature must be positive and finite")
{
    CHECK_THROWS_AS(Curvature(0.0), std::invalid_argument);
    CHECK_THROWS_AS(Curvature(-1.0), std::invalid_argument);
    CHECK_THROWS_AS(Curvature(std::nan("")), std::invalid_argument);
    CHECK(Curvature(2.0).sqrt() == doctest::Approx(std::sqrt(2.0)));
}

TEST_CASE("mobius_add worked examples")
{
    CHECK(near(mobius_add(pt({0, 0}), pt({0.3, 0.1})).coords(), pt({0.3, 0.1}).coords(), 1e-15));
    CHECK(near(mobius_add(pt({0.4, 0}), pt({-0.4, 0})).coords(), Vec::Zero(2), 1e-15));
    // (1 + 2*0.25 + 0.25) * 0.5 + (1 - 0.25) * 0.5 over 1 + 2*0.25 + 0.0625 = 1.25 / 1.5625
    CHECK(near(mobius_add(pt({0.5, 0}), pt({0.5, 0})).coords(), pt({0.8, 0}).coords(), 1e-15));
}

TEST_CASE("mobius_add rejects mismatched operands")
{
    CHECK_THROWS_AS((void)mobius_add(pt({0.1, 0}), pt({0.1, 0, 0})), DimensionError);
    CHECK_THROWS_AS((void)mobius_add(pt({0.1, 0}, 1.0), pt({0.1, 0}, 2.0)), std::invalid_argument);
}

TEST_CASE("mobius_scalar_mul worked examples")
{
    CHECK(near(mobius_scalar_mul(1.0, pt({0.6, 0})).coords(), pt({0.6, 0}).coords(), 1e-15));
    CHECK(near(mobius_scalar_mul(0.0, pt({0.6, 0})).coords(), Vec::Zero(2), 1e-15));
    // tanh(2 atanh 0.5) = 2*0.5 / (1 + 0.25)
    CHECK(near(mobius_scalar_mul(2.0, pt({0.5, 0})).coords(), pt({0.8, 0}).coords(), 1e-14));
    CHECK(near(mobius_scalar_mul(3.0, pt({0, 0})).coords(), Vec::Zero(2), 0.0));
    CHECK(mobius_scalar_mul(-1.0, pt({0.3, 0.2})).coords()[0] == doctest::Approx(-0.3));
}

TEST_CASE("dist worked examples")
{
    CHECK(dist(pt({0.2, 0.7}), pt({0.2, 0.7})) == doctest::Approx(0.0).epsilon(1e-12));
    // arccosh(1 + 2 * 0.36 / 0.64) = arccosh(2.125) = ln(2.125 + 1.875)
    CHECK(dist(pt({0, 0}), pt({0.6, 0})) == doctest::Approx(kLn4).epsilon(1e-12));
    CHECK(dist_arccosh(pt({0, 0}), pt({0.6, 0})) == doctest::Approx(kLn4).epsilon(1e-12));
    CHECK_THROWS((void)dist_arccosh(pt({0, 0}, 2.0), pt({0.1, 0}, 2.0)));

    std::mt19937_64 rng(7);
    for (int i = 0; i < 1000; ++i) {
        const auto x = random_point(rng, 3, 1.0);
        const auto y = random_point(rng, 3, 1.0);
        CHECK(dist(x, y) == doctest::Approx(dist(y, x)).epsilon(1e-12));
    }
}

TEST_CASE("dist_to_origin")
{
    CHECK(dist_to_origin(pt({0, 0})) == 0.0);
    CHECK(dist_to_origin(pt({0.6, 0})) == doctest::Approx(kLn4).epsilon(1e-12));
    double prev = -1.0;
    for (double r = 0.0; r < 0.99; r += 0.01) {
        const double d = dist_to_origin(pt({0, r}));
        CHECK(d > prev);
        prev = d;
    }
}

TEST_CASE("exp0 and log0")
{
    const Curvature one(1.0);
    CHECK(exp0({Vec::Zero(2)}, one).coords().norm() == 0.0);
    Vec v(2);
    v << std::atanh(0.5), 0.0;
    CHECK(near(exp0({v}, one).coords(), pt({0.5, 0}).coords(), 1e-15));
    CHECK(log0(pt({0, 0})).coords.norm() == 0.0);
    CHECK(log0(pt({0.5, 0})).coords[0] == doctest::Approx(0.5493061443340549).epsilon(1e-12));

    std::mt19937_64 rng(11);
    std::normal_distribution<double> gauss;
    for (double c : {0.5, 1.0, 2.0}) {
        for (int i = 0; i < 1000; ++i) {
            Vec t(4);
            for (auto& x : t)
                x = gauss(rng);
            t *= 1e3;
            CHECK(exp0({t}, Curvature(c)).coords().norm() < 1.0 / std::sqrt(c));
        }
    }

    CHECK_THROWS_AS((void)kernel::log0(pt({0.6, 0.8}).coords() * 1.01, 1.0), std::domain_error);
}

TEST_CASE("log0 inverts exp0 for |v| <= 5")
{
    std::mt19937_64 rng(5);
    std::normal_distribution<double> gauss;
    std::uniform_real_distribution<double> unif(0.0, 5.0);
    for (int i = 0; i < 1000; ++i) {
        Vec v(3);
        for (auto& x : v)
            x = gauss(rng);
        v = v.normalized() * unif(rng);
        const Vec back = log0(exp0({v}, Curvature(1.0))).coords;
        CHECK(near(back, v, 1e-9));
    }
}

TEST_CASE("conformal factor")
{
    CHECK(conformal_factor(pt({0, 0})) == 2.0);
    CHECK(conformal_factor(pt({0.5, 0})) == doctest::Approx(2.0 / 0.75));
    CHECK(conformal_factor(pt({0.99, 0})) == doctest::Approx(2.0 / (1.0 - 0.9801)));
    CHECK(conformal_factor(pt({0.5, 0}, 2.0)) == doctest::Approx(2.0 / 0.5));
}

TEST_CASE("project_to_ball")
{
    const Curvature one(1.0);
    Vec a(2);
    a << 0.1, 0.1;
    CHECK(project_to_ball(a, one).coords() == a);
    Vec b(2);
    b << 2.0, 0.0;
    CHECK(project_to_ball(b, one).coords()[0] == doctest::Approx(0.99999).epsilon(1e-15));
    CHECK(project_to_ball(Vec::Zero(2), one).coords().norm() == 0.0);
    Vec bad(2);
    bad << std::nan(""), 0.0;
    CHECK_THROWS_AS((void)project_to_ball(bad, one), std::invalid_argument);
    CHECK_THROWS_AS(BallPoint(b, one), std::domain_error);
}

TEST_CASE("gyrogroup identities and distance properties")
{
    std::mt19937_64 rng(2024);
    for (Eigen::Index dim : {2, 16, 256}) {
        for (double c : {0.5, 1.0, 2.0}) {
            for (int i = 0; i < 200; ++i) {
                const auto x = random_point(rng, dim, c);
                const auto y = random_point(rng, dim, c);
                const auto z = random_point(rng, dim, c);
                const auto o = BallPoint::origin(dim, Curvature(c));
                CHECK(near(mobius_add(o, y).coords(), y.coords(), 1e-9));
                CHECK(near(mobius_add(x, mobius_neg(x)).coords(), Vec::Zero(dim), 1e-9));
                const double closed = 2.0 / std::sqrt(c) * std::atanh(std::sqrt(c) * x.coords().norm());
                CHECK(std::abs(dist(o, x) - closed) <= 1e-9);
                CHECK(dist(x, z) <= dist(x, y) + dist(y, z) + 1e-9);
                if (c == 1.0)
                    CHECK(std::abs(dist(x, y) - dist_arccosh(x, y)) <= 1e-9);
            }
        }
    }
}

TEST_CASE("mobius addition is not associative")
{
    const auto x = pt({0.5, 0.0});
    const auto y = pt({0.0, 0.5});
    const auto z = pt({-0.3, 0.4});
    const Vec lhs = mobius_add(mobius_add(x, y), z).coords();
    const Vec rhs = mobius_add(x, mobius_add(y, z)).coords();
    CHECK((lhs - rhs).norm() > 1e-3);
}

TEST_CASE("geodesic endpoints")
{
    const auto x = pt({0.3, -0.2});
    const auto y = pt({-0.1, 0.6});
    CHECK(near(geodesic_point(x, y, 0.0).coords(), x.coords(), 1e-12));
    CHECK(near(geodesic_point(x, y, 1.0).coords(), y.coords(), 1e-12));
    // constant speed
    CHECK(dist(x, geodesic_point(x, y, 0.25)) == doctest::Approx(0.25 * dist(x, y)).epsilon(1e-9));
}
