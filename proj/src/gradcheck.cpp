#include "hyrep/gradcheck.hpp"

#include "hyrep/model.hpp"
#include "hyrep/optim.hpp"
#include "hyrep/tape.hpp"

#include <algorithm>
#include <functional>
#include <random>

namespace hyrep {

namespace {

using tape::Bindings;
using tape::Graph;
using tape::Var;

struct Sampler {
    std::mt19937_64 rng;
    std::normal_distribution<double> gauss{0.0, 1.0};
    std::uniform_real_distribution<double> unif{0.0, 1.0};

    double uniform(double lo, double hi) { return lo + (hi - lo) * unif(rng); }

    Vec normal(Eigen::Index n)
    {
        Vec v(n);
        for (auto& x : v)
            x = gauss(rng);
        return v;
    }

    Vec uniform_vec(Eigen::Index n, double lo, double hi)
    {
        Vec v(n);
        for (auto& x : v)
            x = uniform(lo, hi);
        return v;
    }

    // Entries with |x| in [lo, hi] and random sign.
    Vec away_from_zero(Eigen::Index n, double lo, double hi)
    {
        Vec v = uniform_vec(n, lo, hi);
        for (auto& x : v)
            if (unif(rng) < 0.5)
                x = -x;
        return v;
    }

    // Ball point with norm in [1e-3, 0.9 * max_norm]: away from the origin
    // singularity of the radial factors and from the boundary.
    Vec ball(Eigen::Index n, double c)
    {
        const double max_norm = (1.0 - kBallEps) / std::sqrt(c);
        return normal(n).normalized() * uniform(1e-3, 0.9 * max_norm);
    }

    double curvature()
    {
        const double choices[] = {0.5, 1.0, 2.0};
        return choices[rng() % 3];
    }
};

// A primitive under test: builds the graph (parameters named p0, p1, ...)
// and draws a binding for each parameter.
struct Case {
    std::string name;
    std::function<void(Graph&, Sampler&, Bindings&)> build;
};

// Reduces a vector node to a scalar with fixed random weights so that every
// output coordinate influences the checked value.
Var reduce(Graph& g, Var v, Sampler& s)
{
    if (g.size_of(v) == 1)
        return v;
    return g.dot(v, g.constant(s.normal(g.size_of(v))));
}

Var param(Graph& g, Bindings& b, const std::string& name, Vec value)
{
    const auto n = value.size();
    b[name] = std::move(value);
    return g.parameter(name, n);
}

std::vector<Case> primitive_cases()
{
    std::vector<Case> cases;
    auto unary = [&cases](std::string name, std::function<Vec(Sampler&)> draw,
                          std::function<Var(Graph&, Var)> op) {
        cases.push_back({std::move(name), [draw, op](Graph& g, Sampler& s, Bindings& b) {
                             const Var x = param(g, b, "p0", draw(s));
                             reduce(g, op(g, x), s);
                         }});
    };
    auto binary = [&cases](std::string name, std::function<Vec(Sampler&)> draw_a,
                           std::function<Vec(Sampler&)> draw_b, std::function<Var(Graph&, Var, Var)> op) {
        cases.push_back({std::move(name), [draw_a, draw_b, op](Graph& g, Sampler& s, Bindings& b) {
                             const Var x = param(g, b, "p0", draw_a(s));
                             const Var y = param(g, b, "p1", draw_b(s));
                             reduce(g, op(g, x, y), s);
                         }});
    };
    auto vec4 = [](Sampler& s) { return s.normal(4); };
    auto scalar = [](Sampler& s) { return s.normal(1); };

    binary("add", vec4, vec4, [](Graph& g, Var a, Var b) { return g.add(a, b); });
    binary("add_broadcast", vec4, scalar, [](Graph& g, Var a, Var b) { return g.add(a, b); });
    binary("sub", vec4, vec4, [](Graph& g, Var a, Var b) { return g.sub(a, b); });
    binary("mul", vec4, vec4, [](Graph& g, Var a, Var b) { return g.mul(a, b); });
    binary("mul_broadcast", scalar, vec4, [](Graph& g, Var a, Var b) { return g.mul(a, b); });
    unary("neg", vec4, [](Graph& g, Var a) { return g.neg(a); });
    unary("scale", vec4, [](Graph& g, Var a) { return g.scale(a, -1.7); });
    binary("dot", vec4, vec4, [](Graph& g, Var a, Var b) { return g.dot(a, b); });
    unary("sum", vec4, [](Graph& g, Var a) { return g.sum(a); });
    binary("add_n", vec4, vec4, [](Graph& g, Var a, Var b) {
        const Var terms[] = {a, b, a};
        return g.add_n(terms);
    });
    unary("sq_norm", vec4, [](Graph& g, Var a) { return g.sq_norm(a); });
    unary("norm", [](Sampler& s) -> Vec { return s.normal(4).normalized() * s.uniform(1e-3, 3.0); },
          [](Graph& g, Var a) { return g.norm(a); });
    unary("normalize", [](Sampler& s) -> Vec { return s.normal(4).normalized() * s.uniform(0.1, 3.0); },
          [](Graph& g, Var a) { return g.normalize(a); });
    binary("matvec", [](Sampler& s) { return s.normal(12); }, [](Sampler& s) { return s.normal(4); },
           [](Graph& g, Var w, Var x) { return g.matvec(w, 3, x); });
    binary("stack", scalar, scalar, [](Graph& g, Var a, Var b) {
        const Var parts[] = {a, b, a};
        return g.stack(parts);
    });
    unary("index", vec4, [](Graph& g, Var a) { return g.index(a, 2); });
    unary("relu", [](Sampler& s) { return s.away_from_zero(4, 1e-3, 2.0); },
          [](Graph& g, Var a) { return g.activation(a, tape::Activation::relu); });
    unary("tanh", vec4, [](Graph& g, Var a) { return g.tanh(a); });
    unary("atanh", [](Sampler& s) { return s.uniform_vec(4, -0.9, 0.9); }, [](Graph& g, Var a) { return g.atanh(a); });
    unary("asinh", vec4, [](Graph& g, Var a) { return g.asinh(a); });
    unary("acosh", [](Sampler& s) { return s.uniform_vec(4, 1.1, 4.0); }, [](Graph& g, Var a) { return g.acosh(a); });
    unary("log", [](Sampler& s) { return s.uniform_vec(4, 0.1, 4.0); }, [](Graph& g, Var a) { return g.log(a); });
    unary("softmax", vec4, [](Graph& g, Var a) { return g.softmax(a, 0.7); });
    unary("cross_entropy", vec4, [](Graph& g, Var a) { return g.cross_entropy(a, 1); });

    // Ball primitives draw their curvature per evaluation point.
    auto ball_case = [&cases](std::string name, std::function<void(Graph&, Sampler&, Bindings&, double)> f) {
        cases.push_back({std::move(name), [f](Graph& g, Sampler& s, Bindings& b) { f(g, s, b, s.curvature()); }});
    };
    ball_case("project_inactive", [](Graph& g, Sampler& s, Bindings& b, double c) {
        reduce(g, g.project(param(g, b, "p0", s.ball(4, c)), c), s);
    });
    ball_case("project_active", [](Graph& g, Sampler& s, Bindings& b, double c) {
        const Vec x = s.normal(4).normalized() * s.uniform(1.05, 3.0) / std::sqrt(c);
        reduce(g, g.project(param(g, b, "p0", x), c), s);
    });
    ball_case("mobius_add", [](Graph& g, Sampler& s, Bindings& b, double c) {
        const Var x = param(g, b, "p0", s.ball(4, c));
        const Var y = param(g, b, "p1", s.ball(4, c));
        reduce(g, g.mobius_add(x, y, c), s);
    });
    ball_case("mobius_scalar", [](Graph& g, Sampler& s, Bindings& b, double c) {
        const Var r = param(g, b, "p0", Vec::Constant(1, s.uniform(-1.5, 1.5)));
        const Var x = param(g, b, "p1", s.ball(4, c) * 0.8);
        reduce(g, g.mobius_scalar(r, x, c), s);
    });
    ball_case("exp0", [](Graph& g, Sampler& s, Bindings& b, double c) {
        const Vec v = s.normal(4).normalized() * s.uniform(1e-3, 2.0) / std::sqrt(c);
        reduce(g, g.exp0(param(g, b, "p0", v), c), s);
    });
    ball_case("log0", [](Graph& g, Sampler& s, Bindings& b, double c) {
        reduce(g, g.log0(param(g, b, "p0", s.ball(4, c)), c), s);
    });
    ball_case("dist", [](Graph& g, Sampler& s, Bindings& b, double c) {
        const Var x = param(g, b, "p0", s.ball(4, c));
        const Var y = param(g, b, "p1", s.ball(4, c));
        reduce(g, g.dist(x, y, c), s);
    });
    ball_case("dist_to_origin", [](Graph& g, Sampler& s, Bindings& b, double c) {
        reduce(g, g.dist_to_origin(param(g, b, "p0", s.ball(4, c)), c), s);
    });
    ball_case("lca_depth", [](Graph& g, Sampler& s, Bindings& b, double c) {
        const Var x = param(g, b, "p0", s.ball(4, c));
        const Var y = param(g, b, "p1", s.ball(4, c));
        reduce(g, g.lca_depth(x, y, c), s);
    });
    ball_case("segment_depth", [](Graph& g, Sampler& s, Bindings& b, double) {
        const Var x = param(g, b, "p0", s.normal(4));
        const Var y = param(g, b, "p1", s.normal(4));
        reduce(g, g.segment_depth(x, y), s);
    });
    ball_case("mlr_logits", [](Graph& g, Sampler& s, Bindings& b, double c) {
        const Eigen::Index classes = 3;
        const Eigen::Index dim = 4;
        const Var x = param(g, b, "p0", s.ball(dim, c));
        Vec offsets(classes * dim);
        for (Eigen::Index k = 0; k < classes; ++k)
            offsets.segment(k * dim, dim) = s.ball(dim, c) * 0.5;
        const Var p = param(g, b, "p1", offsets);
        const Var a = param(g, b, "p2", s.normal(classes * dim));
        reduce(g, g.mlr_logits(x, p, a, classes, c), s);
    });
    return cases;
}

}  // namespace

std::vector<GradcheckResult> primitive_gradchecks(std::uint64_t seed, int points, double h)
{
    Sampler sampler{std::mt19937_64(seed)};
    std::vector<GradcheckResult> results;
    for (const auto& cs : primitive_cases()) {
        GradcheckResult r{cs.name, 0.0, points};
        for (int i = 0; i < points; ++i) {
            Graph g;
            Bindings b;
            cs.build(g, sampler, b);
            std::vector<std::string> names;
            for (const auto& [name, value] : b)
                names.push_back(name);
            std::sort(names.begin(), names.end());
            r.max_rel_error = std::max(r.max_rel_error, tape::check_gradient(g, b, names, h));
        }
        results.push_back(r);
    }
    return results;
}

std::vector<GradcheckResult> joint_loss_gradchecks(std::uint64_t seed, int batch, double h)
{
    Sampler sampler{std::mt19937_64(seed)};
    std::vector<GradcheckResult> results;
    const struct {
        Space space;
        SimilaritySource source;
        const char* name;
    } variants[] = {
        {Space::hyperbolic, SimilaritySource::logits, "joint_loss/hyperbolic/logits"},
        {Space::hyperbolic, SimilaritySource::latent, "joint_loss/hyperbolic/latent"},
        {Space::euclidean, SimilaritySource::logits, "joint_loss/euclidean/logits"},
    };
    for (const auto& v : variants) {
        ModelConfig mc;
        mc.input_dim = 6;
        mc.latent_dim = 8;
        mc.num_classes = 4;
        mc.curvature = sampler.curvature();
        mc.space = v.space;
        mc.activation = tape::Activation::tanh;
        Model model = Model::init(mc, sampler.rng());
        if (v.space == Space::hyperbolic) {
            Vec& offsets = model.params().at(param_names::mlr_offsets);
            for (Eigen::Index k = 0; k < mc.num_classes; ++k)
                offsets.segment(k * mc.latent_dim, mc.latent_dim) = sampler.ball(mc.latent_dim, mc.curvature) * 0.5;
        }

        std::vector<Vec> inputs;
        Batch b;
        for (int i = 0; i < batch; ++i)
            inputs.push_back(sampler.normal(mc.input_dim) * 0.3);
        for (int i = 0; i < batch; ++i) {
            b.inputs.push_back(&inputs[static_cast<std::size_t>(i)]);
            b.labels.push_back(i % mc.num_classes);
        }
        const auto triplets = sample_triplets(batch, 5 * batch, sampler.rng);
        SimilarityConfig sim;
        sim.tau = 0.5;
        sim.source = v.source;

        Graph g;
        record_joint_loss(g, model, b, LossWeights{0.5, 0.5}, sim, triplets);
        results.push_back({v.name, tape::check_gradient(g, model.params(), model.param_order(), h), 1});
    }
    return results;
}

}  // namespace hyrep
