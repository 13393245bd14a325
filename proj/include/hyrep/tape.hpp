// Reverse-mode differentiation over the fixed set of vector primitives used by
// the model and the losses.
//
// A Graph is recorded once (node constructors only check shapes), evaluated
// with `forward` against a set of bindings, and differentiated with
// `backward`. Nodes hold real vectors; scalars are vectors of size 1. Every
// ball-valued primitive clips its result with the projection onto the safe
// ball, and its gradient includes that rescaling map.

#pragma once

#include "hyrep/ball.hpp"

#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace hyrep::tape {

/// Handle to a node of a Graph.
struct Var {
    std::uint32_t id = 0;
};

enum class Activation { relu, tanh, identity };

[[nodiscard]] Activation parse_activation(const std::string& name);
[[nodiscard]] std::string to_string(Activation a);

/// Values for the named inputs and parameters of a graph.
using Bindings = std::unordered_map<std::string, Vec>;
/// d(output)/d(parameter), keyed by parameter name.
using GradientMap = std::map<std::string, Vec>;

class GraphError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

class Graph {
public:
    Graph() = default;

    // -- leaves
    Var input(const std::string& name, Eigen::Index size);
    /// Declaring the same parameter name twice returns the same node.
    Var parameter(const std::string& name, Eigen::Index size);
    Var constant(Vec value);
    Var scalar(double value);

    // -- linear algebra
    Var add(Var a, Var b);  ///< equal sizes, or either operand of size 1
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);  ///< elementwise, same broadcasting as add
    Var neg(Var a);
    Var scale(Var a, double s);
    Var dot(Var a, Var b);
    Var sum(Var a);
    Var add_n(std::span<const Var> terms);  ///< sum of equally sized nodes
    Var sq_norm(Var a);
    Var norm(Var a);
    /// a / |a|; the zero vector maps to itself with zero gradient.
    Var normalize(Var a);
    /// `weight` holds a rows x cols matrix in row-major order; cols = size of x.
    Var matvec(Var weight, Eigen::Index rows, Var x);
    Var stack(std::span<const Var> scalars);
    Var index(Var a, Eigen::Index i);

    // -- elementwise nonlinearities
    Var activation(Var a, Activation act);
    Var tanh(Var a);
    Var atanh(Var a);
    Var asinh(Var a);
    Var acosh(Var a);
    Var log(Var a);

    // -- probability
    Var softmax(Var a, double tau = 1.0);
    /// -log softmax(logits)[label], computed with max subtraction.
    Var cross_entropy(Var logits, Eigen::Index label);

    // -- Poincare ball (curvature magnitude c)
    Var project(Var x, double c);
    Var mobius_add(Var x, Var y, double c);
    /// r must be a size-1 node.
    Var mobius_scalar(Var r, Var x, double c);
    Var exp0(Var v, double c);
    Var log0(Var y, double c);
    Var dist(Var x, Var y, double c);
    Var dist_to_origin(Var x, double c);
    /// Minimum distance to the origin along the geodesic segment x -> y. The
    /// minimising geodesic parameter is held fixed in the backward pass.
    Var lca_depth(Var x, Var y, double c);
    /// Euclidean counterpart of lca_depth: distance from the origin to the segment.
    Var segment_depth(Var x, Var y);
    /// Hyperbolic MLR logits. `offsets` and `normals` hold K x dim(x) matrices
    /// row-major; row k is p_k and a_k.
    Var mlr_logits(Var x, Var offsets, Var normals, Eigen::Index classes, double c);

    // -- evaluation
    /// Marks the output node. Defaults to the last node recorded.
    void set_output(Var v);
    [[nodiscard]] Var output() const;

    /// Evaluates every node in order. Throws GraphError for unbound or
    /// mis-sized inputs and for a non-scalar output.
    double forward(const Bindings& bindings);
    /// Evaluates every node without requiring a scalar output (inference).
    void evaluate(const Bindings& bindings);
    /// Reverse accumulation from the output. Throws GraphError before forward.
    [[nodiscard]] GradientMap backward();

    [[nodiscard]] const Vec& value(Var v) const;
    [[nodiscard]] Eigen::Index size_of(Var v) const { return nodes_.at(v.id).size; }
    [[nodiscard]] std::size_t node_count() const noexcept { return nodes_.size(); }
    [[nodiscard]] std::vector<std::string> parameter_names() const;

private:
    enum class Op : std::uint8_t {
        input, parameter, constant,
        add, sub, mul, neg, scale, dot, sum, add_n, sq_norm, norm, normalize, matvec, stack, index,
        relu, tanh, atanh, asinh, acosh, log,
        softmax, cross_entropy,
        project, mobius_add, mobius_scalar, exp0, log0, dist, dist_to_origin, lca_depth,
        segment_depth, mlr_logits,
    };

    struct Node {
        Op op;
        std::uint32_t arg_begin = 0;
        std::uint32_t arg_count = 0;
        Eigen::Index size = 0;
        double p0 = 0.0;        // curvature, scale factor or temperature
        double cache = 0.0;     // forward-time scalar needed by backward
        std::int64_t iaux = 0;  // label, row count, index, name slot
        Vec value;
    };

    Var push(Op op, std::initializer_list<Var> args, Eigen::Index size, double p0 = 0.0,
             std::int64_t iaux = 0);
    Var push_span(Op op, std::span<const Var> args, Eigen::Index size);
    [[nodiscard]] const Vec& arg(const Node& n, std::uint32_t k) const
    {
        return nodes_[args_[n.arg_begin + k]].value;
    }
    [[nodiscard]] Eigen::Index broadcast_size(Var a, Var b, const char* what) const;
    void eval(Node& n);
    void accumulate(std::uint32_t id, const Vec& g);
    void accumulate_scaled(std::uint32_t id, const Vec& g, double s);
    void propagate(std::uint32_t id);

    std::vector<Node> nodes_;
    std::vector<std::uint32_t> args_;
    std::vector<std::string> names_;  // slot -> name for inputs and parameters
    std::unordered_map<std::string, std::uint32_t> param_ids_;
    std::vector<Vec> grads_;
    std::int64_t output_ = -1;
    bool evaluated_ = false;
};

/// Central-difference check of d(output)/d(params). Returns the maximum over
/// all coordinates of |analytic - numeric| / max(1, |numeric|).
double check_gradient(Graph& graph, const Bindings& bindings, const std::vector<std::string>& params,
                      double h = 1e-6);

}  // namespace hyrep::tape
