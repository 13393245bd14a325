// Poincare-ball arithmetic: Mobius gyrovector operations, origin exp/log maps,
// distances and the numerically safe projection every ball-valued result
// passes through.

#pragma once

#include <Eigen/Dense>

#include <stdexcept>

namespace hyrep {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Every ball-valued result is clipped to norm <= (1 - kBallEps) / sqrt(c).
inline constexpr double kBallEps = 1e-5;

/// Magnitude of the (negative) sectional curvature. The space has curvature -c.
class Curvature {
public:
    explicit Curvature(double c);

    [[nodiscard]] double value() const noexcept { return c_; }
    [[nodiscard]] double sqrt() const noexcept { return sqrt_c_; }
    /// Largest admissible Euclidean norm of a ball point.
    [[nodiscard]] double max_norm() const noexcept { return (1.0 - kBallEps) / sqrt_c_; }

    friend bool operator==(const Curvature&, const Curvature&) = default;

private:
    double c_;
    double sqrt_c_;
};

/// Element of the tangent space at the origin. No norm bound.
struct TangentVector {
    Vec coords;
};

/// A point strictly inside the ball of curvature -c.
class BallPoint {
public:
    /// Validates that `coords` lies inside the safe ball; throws std::domain_error otherwise.
    BallPoint(Vec coords, Curvature c);

    static BallPoint origin(Eigen::Index dim, Curvature c);

    [[nodiscard]] const Vec& coords() const noexcept { return coords_; }
    [[nodiscard]] Curvature curvature() const noexcept { return c_; }
    [[nodiscard]] Eigen::Index dim() const noexcept { return coords_.size(); }

private:
    Vec coords_;
    Curvature c_;
};

class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// ---------------------------------------------------------------------------
// Point-level API

[[nodiscard]] BallPoint project_to_ball(const Vec& x, Curvature c);
[[nodiscard]] BallPoint mobius_add(const BallPoint& x, const BallPoint& y);
[[nodiscard]] BallPoint mobius_neg(const BallPoint& x);
[[nodiscard]] BallPoint mobius_scalar_mul(double r, const BallPoint& x);
[[nodiscard]] double dist(const BallPoint& x, const BallPoint& y);
/// The c = 1 arccosh form of the distance. Throws unless both points have c = 1.
[[nodiscard]] double dist_arccosh(const BallPoint& x, const BallPoint& y);
[[nodiscard]] double dist_to_origin(const BallPoint& x);
[[nodiscard]] BallPoint exp0(const TangentVector& v, Curvature c);
[[nodiscard]] TangentVector log0(const BallPoint& y);
[[nodiscard]] double conformal_factor(const BallPoint& x);

/// Point at parameter t in [0, 1] of the geodesic from x to y.
[[nodiscard]] BallPoint geodesic_point(const BallPoint& x, const BallPoint& y, double t);

// ---------------------------------------------------------------------------
// Raw-vector kernels. These skip validation and are what the tape and the
// training loop call in their inner loops. Results of the ball-valued
// kernels are NOT clipped; callers compose with `project`.

namespace kernel {

[[nodiscard]] Vec project(const Vec& x, double c);
[[nodiscard]] bool project_active(const Vec& x, double c);
[[nodiscard]] Vec mobius_add(const Vec& x, const Vec& y, double c);
[[nodiscard]] Vec mobius_scalar(double r, const Vec& x, double c);
[[nodiscard]] Vec exp0(const Vec& v, double c);
/// Throws std::domain_error at or outside the ball boundary.
[[nodiscard]] Vec log0(const Vec& y, double c);
[[nodiscard]] double dist_to_origin(const Vec& x, double c);
[[nodiscard]] double dist(const Vec& x, const Vec& y, double c);

/// Squared norm of x (+) (s * u) from the scalars <x,x>, <x,u>, <u,u>.
[[nodiscard]] double mobius_add_sqnorm(double xx, double xu, double uu, double s, double c);

/// Geodesic parameter t in [0, 1] minimising the distance to the origin
/// along the geodesic from x to y, by bisection on the derivative sign.
[[nodiscard]] double geodesic_argmin_t(const Vec& x, const Vec& y, double c, double tol = 1e-14);

// Vector-Jacobian products. `g` is the upstream gradient of the output.

struct PairGrad {
    Vec dx;
    Vec dy;
};

[[nodiscard]] Vec project_vjp(const Vec& x, double c, const Vec& g);
[[nodiscard]] PairGrad mobius_add_vjp(const Vec& x, const Vec& y, double c, const Vec& g);
/// Gradient w.r.t. x; the gradient w.r.t. r is written to `dr` when non-null.
[[nodiscard]] Vec mobius_scalar_vjp(double r, const Vec& x, double c, const Vec& g, double* dr);
[[nodiscard]] Vec exp0_vjp(const Vec& v, double c, const Vec& g);
[[nodiscard]] Vec log0_vjp(const Vec& y, double c, const Vec& g);
/// d(dist_to_origin)/dx scaled by upstream scalar g.
[[nodiscard]] Vec dist_to_origin_vjp(const Vec& x, double c, double g);

}  // namespace kernel

}  // namespace hyrep
