#include "hyrep/ball.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace hyrep {

namespace {

// Below this value of sqrt(c)*|x| the radial scale factors switch to their
// Taylor expansions to avoid 0/0.
constexpr double kSmallArg = 1e-6;
constexpr double kMinDenominator = 1e-15;

void require_same_space(const BallPoint& x, const BallPoint& y)
{
    if (x.dim() != y.dim())
        throw DimensionError("ball points have dimensions " + std::to_string(x.dim()) + " and " +
                             std::to_string(y.dim()));
    if (!(x.curvature() == y.curvature()))
        throw std::invalid_argument("ball points have different curvatures");
}

}  // namespace

Curvature::Curvature(double c) : c_(c), sqrt_c_(std::sqrt(c))
{
    if (!(c > 0.0) || !std::isfinite(c))
        throw std::invalid_argument("curvature magnitude must be positive and finite");
}

BallPoint::BallPoint(Vec coords, Curvature c) : coords_(std::move(coords)), c_(c)
{
    if (!coords_.allFinite())
        throw std::domain_error("ball point has non-finite coordinates");
    // Small slack for round-off in callers that computed the point themselves.
    if (coords_.norm() > c_.max_norm() * (1.0 + 1e-12))
        throw std::domain_error("point lies outside the safe Poincare ball");
}

BallPoint BallPoint::origin(Eigen::Index dim, Curvature c)
{
    return BallPoint(Vec::Zero(dim), c);
}

// ---------------------------------------------------------------------------
// kernels

namespace kernel {

Vec project(const Vec& x, double c)
{
    const double max_norm = (1.0 - kBallEps) / std::sqrt(c);
    const double n = x.norm();
    if (n <= max_norm)
        return x;
    return x * (max_norm / n);
}

bool project_active(const Vec& x, double c)
{
    return x.norm() > (1.0 - kBallEps) / std::sqrt(c);
}

Vec project_vjp(const Vec& x, double c, const Vec& g)
{
    const double max_norm = (1.0 - kBallEps) / std::sqrt(c);
    const double n = x.norm();
    if (n <= max_norm)
        return g;
    const Vec xhat = x / n;
    return (max_norm / n) * (g - xhat * xhat.dot(g));
}

Vec mobius_add(const Vec& x, const Vec& y, double c)
{
    const double xy = x.dot(y);
    const double xx = x.squaredNorm();
    const double yy = y.squaredNorm();
    const double a = 1.0 + 2.0 * c * xy + c * yy;
    const double b = 1.0 - c * xx;
    const double d = std::max(1.0 + 2.0 * c * xy + c * c * xx * yy, kMinDenominator);
    return (a * x + b * y) / d;
}

PairGrad mobius_add_vjp(const Vec& x, const Vec& y, double c, const Vec& g)
{
    const double xy = x.dot(y);
    const double xx = x.squaredNorm();
    const double yy = y.squaredNorm();
    const double a = 1.0 + 2.0 * c * xy + c * yy;
    const double b = 1.0 - c * xx;
    const double d = std::max(1.0 + 2.0 * c * xy + c * c * xx * yy, kMinDenominator);
    const Vec z = (a * x + b * y) / d;

    const Vec gn = g / d;
    const double s_a = gn.dot(x);
    const double s_b = gn.dot(y);
    const double s_d = -g.dot(z) / d;

    const double d_xx = -c * s_b + c * c * yy * s_d;
    const double d_yy = c * s_a + c * c * xx * s_d;
    const double d_xy = 2.0 * c * (s_a + s_d);

    PairGrad out;
    out.dx = a * gn + 2.0 * d_xx * x + d_xy * y;
    out.dy = b * gn + 2.0 * d_yy * y + d_xy * x;
    return out;
}

Vec mobius_scalar(double r, const Vec& x, double c)
{
    const double k = std::sqrt(c);
    const double n = x.norm();
    if (n == 0.0)
        return Vec::Zero(x.size());
    const double kn = std::min(k * n, 1.0 - 1e-16);
    return (std::tanh(r * std::atanh(kn)) / (k * n)) * x;
}

Vec mobius_scalar_vjp(double r, const Vec& x, double c, const Vec& g, double* dr)
{
    const double k = std::sqrt(c);
    const double n = x.norm();
    const double kn = std::min(k * n, 1.0 - 1e-16);
    if (kn < kSmallArg) {
        // m(n) ~ r (1 + (1 - r^2) c n^2 / 3)
        if (dr != nullptr)
            *dr = g.dot(x);
        const double dm_over_n = 2.0 * r * (1.0 - r * r) * c / 3.0;
        return r * g + dm_over_n * x.dot(g) * x;
    }
    const double alpha = std::atanh(kn);
    const double beta = std::tanh(r * alpha);
    const double m = beta / (k * n);
    const double one_minus_b2 = 1.0 - beta * beta;
    if (dr != nullptr)
        *dr = g.dot(x) / (k * n) * one_minus_b2 * alpha;
    const double dm_dn = one_minus_b2 * r / (n * (1.0 - kn * kn)) - beta / (k * n * n);
    return m * g + (dm_dn / n) * x.dot(g) * x;
}

Vec exp0(const Vec& v, double c)
{
    const double k = std::sqrt(c);
    const double n = v.norm();
    if (n == 0.0)
        return Vec::Zero(v.size());
    return (std::tanh(k * n) / (k * n)) * v;
}

Vec exp0_vjp(const Vec& v, double c, const Vec& g)
{
    const double k = std::sqrt(c);
    const double n = v.norm();
    const double kn = k * n;
    if (kn < kSmallArg)
        return g - (2.0 * c / 3.0) * v.dot(g) * v;
    const double th = std::tanh(kn);
    const double s = th / kn;
    const double ds_dn = (1.0 - th * th) / n - th / (k * n * n);
    return s * g + (ds_dn / n) * v.dot(g) * v;
}

Vec log0(const Vec& y, double c)
{
    const double k = std::sqrt(c);
    const double n = y.norm();
    if (!(k * n < 1.0))
        throw std::domain_error("log0: point at or outside the ball boundary");
    if (n == 0.0)
        return Vec::Zero(y.size());
    return (std::atanh(k * n) / (k * n)) * y;
}

Vec log0_vjp(const Vec& y, double c, const Vec& g)
{
    const double k = std::sqrt(c);
    const double n = y.norm();
    const double kn = k * n;
    if (kn < kSmallArg)
        return g + (2.0 * c / 3.0) * y.dot(g) * y;
    const double q = std::atanh(kn) / kn;
    const double dq_dn = 1.0 / (n * (1.0 - kn * kn)) - std::atanh(kn) / (k * n * n);
    return q * g + (dq_dn / n) * y.dot(g) * y;
}

double dist_to_origin(const Vec& x, double c)
{
    const double k = std::sqrt(c);
    const double kn = std::min(k * x.norm(), 1.0 - kBallEps);
    return 2.0 / k * std::atanh(kn);
}

Vec dist_to_origin_vjp(const Vec& x, double c, double g)
{
    const double k = std::sqrt(c);
    const double n = x.norm();
    if (n == 0.0 || k * n > 1.0 - kBallEps)
        return Vec::Zero(x.size());
    // d/dx (2/k) atanh(k|x|) = 2 / (1 - c|x|^2) * x/|x|
    return (g * 2.0 / ((1.0 - c * n * n) * n)) * x;
}

double dist(const Vec& x, const Vec& y, double c)
{
    return dist_to_origin(mobius_add(-x, y, c), c);
}

double mobius_add_sqnorm(double xx, double xu, double uu, double s, double c)
{
    // y = s*u: <x,y> = s*xu, |y|^2 = s^2*uu
    const double xy = s * xu;
    const double yy = s * s * uu;
    const double a = 1.0 + 2.0 * c * xy + c * yy;
    const double b = 1.0 - c * xx;
    const double d = std::max(1.0 + 2.0 * c * xy + c * c * xx * yy, kMinDenominator);
    return (a * a * xx + 2.0 * a * b * xy + b * b * yy) / (d * d);
}

double geodesic_argmin_t(const Vec& x, const Vec& y, double c, double tol)
{
    const Vec u = project(mobius_add(-x, y, c), c);
    const double un = u.norm();
    if (un == 0.0)
        return 0.0;
    const double k = std::sqrt(c);
    const double alpha = std::atanh(std::min(k * un, 1.0 - 1e-16));
    const double xx = x.squaredNorm();
    const double xu = x.dot(u);
    const double uu = u.squaredNorm();

    // With s = tanh(t * alpha) / (k * |u|), s runs over [0, 1] and the squared
    // norm is a rational function of s. The sign of its derivative is that of
    // slope(s); the norm is unimodal along a geodesic, so bisect on the sign.
    auto slope = [&](double s) {
        const double a = 1.0 + 2.0 * c * s * xu + c * s * s * uu;
        const double da = 2.0 * c * xu + 2.0 * c * s * uu;
        const double b = 1.0 - c * xx;
        const double n = a * a * xx + 2.0 * a * b * s * xu + b * b * s * s * uu;
        const double dn = 2.0 * a * da * xx + 2.0 * b * xu * (a + s * da) + 2.0 * b * b * s * uu;
        const double d = 1.0 + 2.0 * c * s * xu + c * c * s * s * xx * uu;
        const double dd = 2.0 * c * xu + 2.0 * c * c * s * xx * uu;
        return dn * d - 2.0 * n * dd;
    };
    if (slope(0.0) >= 0.0)
        return 0.0;
    if (slope(1.0) <= 0.0)
        return 1.0;
    double lo = 0.0;
    double hi = 1.0;
    while (hi - lo > tol) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi)
            break;
        (slope(mid) < 0.0 ? lo : hi) = mid;
    }
    const double s_min = 0.5 * (lo + hi);
    return std::clamp(std::atanh(std::min(s_min * k * un, 1.0 - 1e-16)) / alpha, 0.0, 1.0);
}

}  // namespace kernel

// ---------------------------------------------------------------------------
// point-level API

BallPoint project_to_ball(const Vec& x, Curvature c)
{
    if (!x.allFinite())
        throw std::invalid_argument("project_to_ball: non-finite input");
    return BallPoint(kernel::project(x, c.value()), c);
}

BallPoint mobius_add(const BallPoint& x, const BallPoint& y)
{
    require_same_space(x, y);
    const double c = x.curvature().value();
    return BallPoint(kernel::project(kernel::mobius_add(x.coords(), y.coords(), c), c), x.curvature());
}

BallPoint mobius_neg(const BallPoint& x)
{
    return BallPoint(-x.coords(), x.curvature());
}

BallPoint mobius_scalar_mul(double r, const BallPoint& x)
{
    const double c = x.curvature().value();
    return BallPoint(kernel::project(kernel::mobius_scalar(r, x.coords(), c), c), x.curvature());
}

double dist(const BallPoint& x, const BallPoint& y)
{
    require_same_space(x, y);
    const double c = x.curvature().value();
    return kernel::dist_to_origin(kernel::project(kernel::mobius_add(-x.coords(), y.coords(), c), c), c);
}

double dist_arccosh(const BallPoint& x, const BallPoint& y)
{
    require_same_space(x, y);
    if (x.curvature().value() != 1.0)
        throw std::invalid_argument("dist_arccosh is defined for c = 1 only");
    const double diff = (x.coords() - y.coords()).squaredNorm();
    const double denom = (1.0 - x.coords().squaredNorm()) * (1.0 - y.coords().squaredNorm());
    return std::acosh(1.0 + 2.0 * diff / denom);
}

double dist_to_origin(const BallPoint& x)
{
    return kernel::dist_to_origin(x.coords(), x.curvature().value());
}

BallPoint exp0(const TangentVector& v, Curvature c)
{
    if (!v.coords.allFinite())
        throw std::invalid_argument("exp0: non-finite tangent vector");
    return BallPoint(kernel::project(kernel::exp0(v.coords, c.value()), c.value()), c);
}

TangentVector log0(const BallPoint& y)
{
    return {kernel::log0(y.coords(), y.curvature().value())};
}

double conformal_factor(const BallPoint& x)
{
    return 2.0 / (1.0 - x.curvature().value() * x.coords().squaredNorm());
}

BallPoint geodesic_point(const BallPoint& x, const BallPoint& y, double t)
{
    require_same_space(x, y);
    const double c = x.curvature().value();
    const Vec u = kernel::project(kernel::mobius_add(-x.coords(), y.coords(), c), c);
    const Vec step = kernel::mobius_scalar(t, u, c);
    return BallPoint(kernel::project(kernel::mobius_add(x.coords(), step, c), c), x.curvature());
}

}  // namespace hyrep
