#include "hyrep/tape.hpp"

#include <algorithm>
#include <cmath>

namespace hyrep::tape {

namespace kb = hyrep::kernel;

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Vec broadcast(const Vec& v, Eigen::Index size)
{
    if (v.size() == size)
        return v;
    return Vec::Constant(size, v[0]);
}

// Reduces an upstream gradient onto an operand that may have been broadcast.
Vec reduce_to(const Vec& g, Eigen::Index size)
{
    if (g.size() == size)
        return g;
    return Vec::Constant(1, g.sum());
}

Vec softmax_of(const Vec& x, double tau)
{
    const Vec z = x / tau;
    const Vec e = (z.array() - z.maxCoeff()).exp().matrix();
    return e / e.sum();
}

}  // namespace

Activation parse_activation(const std::string& name)
{
    if (name == "relu")
        return Activation::relu;
    if (name == "tanh")
        return Activation::tanh;
    if (name == "identity")
        return Activation::identity;
    throw std::invalid_argument("unknown activation '" + name + "'");
}

std::string to_string(Activation a)
{
    switch (a) {
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
    case Activation::identity: return "identity";
    }
    return "?";
}

// ---------------------------------------------------------------------------
// recording

Var Graph::push(Op op, std::initializer_list<Var> args, Eigen::Index size, double p0, std::int64_t iaux)
{
    const Var v = push_span(op, std::span<const Var>(args.begin(), args.size()), size);
    nodes_.back().p0 = p0;
    nodes_.back().iaux = iaux;
    return v;
}

Var Graph::push_span(Op op, std::span<const Var> args, Eigen::Index size)
{
    Node n;
    n.op = op;
    n.arg_begin = static_cast<std::uint32_t>(args_.size());
    n.arg_count = static_cast<std::uint32_t>(args.size());
    n.size = size;
    for (Var a : args) {
        if (a.id >= nodes_.size())
            throw GraphError("node argument refers to a node that does not precede it");
        args_.push_back(a.id);
    }
    nodes_.push_back(std::move(n));
    evaluated_ = false;
    return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Eigen::Index Graph::broadcast_size(Var a, Var b, const char* what) const
{
    const auto sa = nodes_.at(a.id).size;
    const auto sb = nodes_.at(b.id).size;
    if (sa == sb || sb == 1)
        return sa;
    if (sa == 1)
        return sb;
    throw DimensionError(std::string(what) + ": operand sizes " + std::to_string(sa) + " and " +
                         std::to_string(sb) + " do not broadcast");
}

Var Graph::input(const std::string& name, Eigen::Index size)
{
    names_.push_back(name);
    return push(Op::input, {}, size, 0.0, static_cast<std::int64_t>(names_.size() - 1));
}

Var Graph::parameter(const std::string& name, Eigen::Index size)
{
    if (auto it = param_ids_.find(name); it != param_ids_.end()) {
        if (nodes_[it->second].size != size)
            throw DimensionError("parameter '" + name + "' redeclared with a different size");
        return Var{it->second};
    }
    names_.push_back(name);
    Var v = push(Op::parameter, {}, size, 0.0, static_cast<std::int64_t>(names_.size() - 1));
    param_ids_.emplace(name, v.id);
    return v;
}

Var Graph::constant(Vec value)
{
    const auto size = value.size();
    Var v = push(Op::constant, {}, size);
    nodes_.back().value = std::move(value);
    return v;
}

Var Graph::scalar(double value)
{
    return constant(Vec::Constant(1, value));
}

Var Graph::add(Var a, Var b) { return push(Op::add, {a, b}, broadcast_size(a, b, "add")); }
Var Graph::sub(Var a, Var b) { return push(Op::sub, {a, b}, broadcast_size(a, b, "sub")); }
Var Graph::mul(Var a, Var b) { return push(Op::mul, {a, b}, broadcast_size(a, b, "mul")); }
Var Graph::neg(Var a) { return push(Op::neg, {a}, size_of(a)); }
Var Graph::scale(Var a, double s) { return push(Op::scale, {a}, size_of(a), s); }

Var Graph::dot(Var a, Var b)
{
    if (size_of(a) != size_of(b))
        throw DimensionError("dot: operand sizes differ");
    return push(Op::dot, {a, b}, 1);
}

Var Graph::sum(Var a) { return push(Op::sum, {a}, 1); }

Var Graph::add_n(std::span<const Var> terms)
{
    if (terms.empty())
        throw GraphError("add_n: no terms");
    const auto size = size_of(terms.front());
    for (Var t : terms)
        if (size_of(t) != size)
            throw DimensionError("add_n: terms differ in size");
    return push_span(Op::add_n, terms, size);
}

Var Graph::sq_norm(Var a) { return push(Op::sq_norm, {a}, 1); }
Var Graph::norm(Var a) { return push(Op::norm, {a}, 1); }
Var Graph::normalize(Var a) { return push(Op::normalize, {a}, size_of(a)); }

Var Graph::matvec(Var weight, Eigen::Index rows, Var x)
{
    if (rows < 1 || size_of(weight) != rows * size_of(x))
        throw DimensionError("matvec: weight size " + std::to_string(size_of(weight)) + " is not " +
                             std::to_string(rows) + " x " + std::to_string(size_of(x)));
    return push(Op::matvec, {weight, x}, rows, 0.0, rows);
}

Var Graph::stack(std::span<const Var> scalars)
{
    for (Var s : scalars)
        if (size_of(s) != 1)
            throw DimensionError("stack: operands must be scalars");
    return push_span(Op::stack, scalars, static_cast<Eigen::Index>(scalars.size()));
}

Var Graph::index(Var a, Eigen::Index i)
{
    if (i < 0 || i >= size_of(a))
        throw DimensionError("index: out of range");
    return push(Op::index, {a}, 1, 0.0, i);
}

Var Graph::activation(Var a, Activation act)
{
    switch (act) {
    case Activation::relu: return push(Op::relu, {a}, size_of(a));
    case Activation::tanh: return tanh(a);
    case Activation::identity: return a;
    }
    return a;
}

Var Graph::tanh(Var a) { return push(Op::tanh, {a}, size_of(a)); }
Var Graph::atanh(Var a) { return push(Op::atanh, {a}, size_of(a)); }
Var Graph::asinh(Var a) { return push(Op::asinh, {a}, size_of(a)); }
Var Graph::acosh(Var a) { return push(Op::acosh, {a}, size_of(a)); }
Var Graph::log(Var a) { return push(Op::log, {a}, size_of(a)); }

Var Graph::softmax(Var a, double tau)
{
    if (!(tau > 0.0))
        throw std::invalid_argument("softmax: temperature must be positive");
    return push(Op::softmax, {a}, size_of(a), tau);
}

Var Graph::cross_entropy(Var logits, Eigen::Index label)
{
    if (size_of(logits) < 2)
        throw DimensionError("cross_entropy: need at least two classes");
    if (label < 0 || label >= size_of(logits))
        throw std::out_of_range("cross_entropy: label " + std::to_string(label) + " out of range");
    return push(Op::cross_entropy, {logits}, 1, 0.0, label);
}

Var Graph::project(Var x, double c) { return push(Op::project, {x}, size_of(x), c); }

Var Graph::mobius_add(Var x, Var y, double c)
{
    if (size_of(x) != size_of(y))
        throw DimensionError("mobius_add: dimension mismatch");
    return push(Op::mobius_add, {x, y}, size_of(x), c);
}

Var Graph::mobius_scalar(Var r, Var x, double c)
{
    if (size_of(r) != 1)
        throw DimensionError("mobius_scalar: r must be a scalar");
    return push(Op::mobius_scalar, {r, x}, size_of(x), c);
}

Var Graph::exp0(Var v, double c) { return push(Op::exp0, {v}, size_of(v), c); }
Var Graph::log0(Var y, double c) { return push(Op::log0, {y}, size_of(y), c); }

Var Graph::dist(Var x, Var y, double c)
{
    if (size_of(x) != size_of(y))
        throw DimensionError("dist: dimension mismatch");
    return push(Op::dist, {x, y}, 1, c);
}

Var Graph::dist_to_origin(Var x, double c) { return push(Op::dist_to_origin, {x}, 1, c); }

Var Graph::lca_depth(Var x, Var y, double c)
{
    if (size_of(x) != size_of(y))
        throw DimensionError("lca_depth: dimension mismatch");
    return push(Op::lca_depth, {x, y}, 1, c);
}

Var Graph::segment_depth(Var x, Var y)
{
    if (size_of(x) != size_of(y))
        throw DimensionError("segment_depth: dimension mismatch");
    return push(Op::segment_depth, {x, y}, 1);
}

Var Graph::mlr_logits(Var x, Var offsets, Var normals, Eigen::Index classes, double c)
{
    const auto dim = size_of(x);
    if (classes < 1 || size_of(offsets) != classes * dim || size_of(normals) != classes * dim)
        throw DimensionError("mlr_logits: parameter shapes do not match K x dim(x)");
    return push(Op::mlr_logits, {x, offsets, normals}, classes, c, classes);
}

void Graph::set_output(Var v)
{
    if (v.id >= nodes_.size())
        throw GraphError("set_output: unknown node");
    output_ = v.id;
}

Var Graph::output() const
{
    if (nodes_.empty())
        throw GraphError("empty graph");
    return Var{static_cast<std::uint32_t>(output_ >= 0 ? output_ : static_cast<std::int64_t>(nodes_.size()) - 1)};
}

const Vec& Graph::value(Var v) const
{
    if (!evaluated_ && nodes_.at(v.id).op != Op::constant)
        throw GraphError("value requested before forward");
    return nodes_.at(v.id).value;
}

std::vector<std::string> Graph::parameter_names() const
{
    std::vector<std::string> out;
    out.reserve(param_ids_.size());
    for (const auto& [name, id] : param_ids_)
        out.push_back(name);
    std::sort(out.begin(), out.end());
    return out;
}

// ---------------------------------------------------------------------------
// forward

double Graph::forward(const Bindings& bindings)
{
    const Var out = output();
    if (nodes_[out.id].size != 1)
        throw GraphError("output node is not a scalar (size " + std::to_string(nodes_[out.id].size) + ")");
    evaluate(bindings);
    return nodes_[out.id].value[0];
}

void Graph::evaluate(const Bindings& bindings)
{
    for (auto& n : nodes_) {
        if (n.op == Op::input || n.op == Op::parameter) {
            const auto& name = names_[static_cast<std::size_t>(n.iaux)];
            auto it = bindings.find(name);
            if (it == bindings.end())
                throw GraphError("unbound graph input '" + name + "'");
            if (it->second.size() != n.size)
                throw GraphError("binding '" + name + "' has size " + std::to_string(it->second.size()) +
                                 ", expected " + std::to_string(n.size));
            n.value = it->second;
        } else if (n.op != Op::constant) {
            eval(n);
        }
    }
    evaluated_ = true;
}

void Graph::eval(Node& n)
{
    const double c = n.p0;
    switch (n.op) {
    case Op::input:
    case Op::parameter:
    case Op::constant:
        break;
    case Op::add: n.value = broadcast(arg(n, 0), n.size) + broadcast(arg(n, 1), n.size); break;
    case Op::sub: n.value = broadcast(arg(n, 0), n.size) - broadcast(arg(n, 1), n.size); break;
    case Op::mul:
        n.value = broadcast(arg(n, 0), n.size).cwiseProduct(broadcast(arg(n, 1), n.size));
        break;
    case Op::neg: n.value = -arg(n, 0); break;
    case Op::scale: n.value = n.p0 * arg(n, 0); break;
    case Op::dot: n.value = Vec::Constant(1, arg(n, 0).dot(arg(n, 1))); break;
    case Op::sum: n.value = Vec::Constant(1, arg(n, 0).sum()); break;
    case Op::add_n: {
        n.value = arg(n, 0);
        for (std::uint32_t k = 1; k < n.arg_count; ++k)
            n.value += arg(n, k);
        break;
    }
    case Op::sq_norm: n.value = Vec::Constant(1, arg(n, 0).squaredNorm()); break;
    case Op::norm: n.value = Vec::Constant(1, arg(n, 0).norm()); break;
    case Op::normalize: {
        const double nv = arg(n, 0).norm();
        n.cache = nv;
        n.value = nv > 0.0 ? Vec(arg(n, 0) / nv) : arg(n, 0);
        break;
    }
    case Op::matvec: {
        const Vec& w = arg(n, 0);
        const Vec& x = arg(n, 1);
        Eigen::Map<const RowMajor> m(w.data(), n.iaux, x.size());
        n.value = m * x;
        break;
    }
    case Op::stack: {
        n.value.resize(n.arg_count);
        for (std::uint32_t k = 0; k < n.arg_count; ++k)
            n.value[k] = arg(n, k)[0];
        break;
    }
    case Op::index: n.value = Vec::Constant(1, arg(n, 0)[n.iaux]); break;
    case Op::relu: n.value = arg(n, 0).cwiseMax(0.0); break;
    case Op::tanh: n.value = arg(n, 0).array().tanh().matrix(); break;
    case Op::atanh: n.value = arg(n, 0).unaryExpr([](double v) { return std::atanh(v); }); break;
    case Op::asinh: n.value = arg(n, 0).unaryExpr([](double v) { return std::asinh(v); }); break;
    case Op::acosh: n.value = arg(n, 0).unaryExpr([](double v) { return std::acosh(v); }); break;
    case Op::log: n.value = arg(n, 0).array().log().matrix(); break;
    case Op::softmax: n.value = softmax_of(arg(n, 0), n.p0); break;
    case Op::cross_entropy: {
        const Vec& z = arg(n, 0);
        const double m = z.maxCoeff();
        const double lse = m + std::log((z.array() - m).exp().sum());
        n.value = Vec::Constant(1, lse - z[n.iaux]);
        break;
    }
    case Op::project: n.value = kb::project(arg(n, 0), c); break;
    case Op::mobius_add: n.value = kb::project(kb::mobius_add(arg(n, 0), arg(n, 1), c), c); break;
    case Op::mobius_scalar: n.value = kb::project(kb::mobius_scalar(arg(n, 0)[0], arg(n, 1), c), c); break;
    case Op::exp0: n.value = kb::project(kb::exp0(arg(n, 0), c), c); break;
    case Op::log0: n.value = kb::log0(arg(n, 0), c); break;
    case Op::dist: {
        const Vec u = kb::project(kb::mobius_add(-arg(n, 0), arg(n, 1), c), c);
        n.value = Vec::Constant(1, kb::dist_to_origin(u, c));
        break;
    }
    case Op::dist_to_origin: n.value = Vec::Constant(1, kb::dist_to_origin(arg(n, 0), c)); break;
    case Op::lca_depth: {
        const Vec& x = arg(n, 0);
        const Vec& y = arg(n, 1);
        const double t = kb::geodesic_argmin_t(x, y, c);
        n.cache = t;
        const Vec u = kb::project(kb::mobius_add(-x, y, c), c);
        const Vec g = kb::project(kb::mobius_add(x, kb::mobius_scalar(t, u, c), c), c);
        n.value = Vec::Constant(1, kb::dist_to_origin(g, c));
        break;
    }
    case Op::segment_depth: {
        const Vec& x = arg(n, 0);
        const Vec d = arg(n, 1) - x;
        const double dd = d.squaredNorm();
        const double t = dd > 0.0 ? std::clamp(-x.dot(d) / dd, 0.0, 1.0) : 0.0;
        n.cache = t;
        n.value = Vec::Constant(1, (x + t * d).norm());
        break;
    }
    case Op::mlr_logits: {
        const Vec& x = arg(n, 0);
        const Vec& offsets = arg(n, 1);
        const Vec& normals = arg(n, 2);
        const Eigen::Index dim = x.size();
        const double k = std::sqrt(c);
        n.value.resize(n.iaux);
        for (Eigen::Index cls = 0; cls < n.iaux; ++cls) {
            const Vec p = offsets.segment(cls * dim, dim);
            const Vec a = normals.segment(cls * dim, dim);
            const double na = a.norm();
            if (na < 1e-12) {
                n.value[cls] = 0.0;
                continue;
            }
            const Vec u = kb::mobius_add(-p, x, c);
            const double lambda_p = 2.0 / (1.0 - c * p.squaredNorm());
            const double z = 2.0 * k * u.dot(a) / ((1.0 - c * u.squaredNorm()) * na);
            n.value[cls] = lambda_p * na / k * std::asinh(z);
        }
        break;
    }
    }
}

// ---------------------------------------------------------------------------
// backward

void Graph::accumulate(std::uint32_t id, const Vec& g)
{
    Vec& dst = grads_[id];
    if (dst.size() == 0)
        dst = g;
    else
        dst += g;
}

void Graph::accumulate_scaled(std::uint32_t id, const Vec& g, double s)
{
    Vec& dst = grads_[id];
    if (dst.size() == 0)
        dst = s * g;
    else
        dst += s * g;
}

GradientMap Graph::backward()
{
    if (!evaluated_)
        throw GraphError("backward called before forward");
    grads_.assign(nodes_.size(), Vec());
    const Var out = output();
    grads_[out.id] = Vec::Ones(1);
    for (std::int64_t i = out.id; i >= 0; --i) {
        if (grads_[static_cast<std::size_t>(i)].size() == 0)
            continue;
        propagate(static_cast<std::uint32_t>(i));
    }
    GradientMap result;
    for (const auto& [name, id] : param_ids_) {
        const Vec& g = grads_[id];
        result.emplace(name, g.size() == 0 ? Vec::Zero(nodes_[id].size) : g);
    }
    return result;
}

void Graph::propagate(std::uint32_t id)
{
    const Node& n = nodes_[id];
    const Vec g = grads_[id];
    auto a = [&](std::uint32_t k) { return args_[n.arg_begin + k]; };
    const double c = n.p0;

    switch (n.op) {
    case Op::input:
    case Op::parameter:
    case Op::constant:
        break;
    case Op::add:
        accumulate(a(0), reduce_to(g, nodes_[a(0)].size));
        accumulate(a(1), reduce_to(g, nodes_[a(1)].size));
        break;
    case Op::sub:
        accumulate(a(0), reduce_to(g, nodes_[a(0)].size));
        accumulate(a(1), reduce_to(-g, nodes_[a(1)].size));
        break;
    case Op::mul: {
        const Vec lhs = broadcast(arg(n, 0), n.size);
        const Vec rhs = broadcast(arg(n, 1), n.size);
        accumulate(a(0), reduce_to(g.cwiseProduct(rhs), nodes_[a(0)].size));
        accumulate(a(1), reduce_to(g.cwiseProduct(lhs), nodes_[a(1)].size));
        break;
    }
    case Op::neg: accumulate_scaled(a(0), g, -1.0); break;
    case Op::scale: accumulate_scaled(a(0), g, n.p0); break;
    case Op::dot:
        accumulate_scaled(a(0), arg(n, 1), g[0]);
        accumulate_scaled(a(1), arg(n, 0), g[0]);
        break;
    case Op::sum: accumulate(a(0), Vec::Constant(nodes_[a(0)].size, g[0])); break;
    case Op::add_n:
        for (std::uint32_t k = 0; k < n.arg_count; ++k)
            accumulate(a(k), g);
        break;
    case Op::sq_norm: accumulate_scaled(a(0), arg(n, 0), 2.0 * g[0]); break;
    case Op::norm: {
        const double nv = n.value[0];
        if (nv > 0.0)
            accumulate_scaled(a(0), arg(n, 0), g[0] / nv);
        break;
    }
    case Op::normalize:
        if (n.cache > 0.0)
            accumulate_scaled(a(0), g - g.dot(n.value) * n.value, 1.0 / n.cache);
        break;
    case Op::matvec: {
        const Vec& w = arg(n, 0);
        const Vec& x = arg(n, 1);
        Eigen::Map<const RowMajor> m(w.data(), n.iaux, x.size());
        Vec gw(w.size());
        Eigen::Map<RowMajor>(gw.data(), n.iaux, x.size()).noalias() = g * x.transpose();
        accumulate(a(0), gw);
        accumulate(a(1), m.transpose() * g);
        break;
    }
    case Op::stack:
        for (std::uint32_t k = 0; k < n.arg_count; ++k)
            accumulate(a(k), Vec::Constant(1, g[k]));
        break;
    case Op::index: {
        Vec gi = Vec::Zero(nodes_[a(0)].size);
        gi[n.iaux] = g[0];
        accumulate(a(0), gi);
        break;
    }
    case Op::relu:
        accumulate(a(0), (arg(n, 0).array() > 0.0).select(g, 0.0).matrix());
        break;
    case Op::tanh:
        accumulate(a(0), g.cwiseProduct((1.0 - n.value.array().square()).matrix()));
        break;
    case Op::atanh:
        accumulate(a(0), g.cwiseQuotient((1.0 - arg(n, 0).array().square()).matrix()));
        break;
    case Op::asinh:
        accumulate(a(0), g.cwiseQuotient((arg(n, 0).array().square() + 1.0).sqrt().matrix()));
        break;
    case Op::acosh:
        accumulate(a(0), g.cwiseQuotient((arg(n, 0).array().square() - 1.0).sqrt().matrix()));
        break;
    case Op::log: accumulate(a(0), g.cwiseQuotient(arg(n, 0))); break;
    case Op::softmax: {
        const Vec& y = n.value;
        accumulate(a(0), (y.cwiseProduct((g.array() - g.dot(y)).matrix())) / n.p0);
        break;
    }
    case Op::cross_entropy: {
        Vec p = softmax_of(arg(n, 0), 1.0);
        p[n.iaux] -= 1.0;
        accumulate_scaled(a(0), p, g[0]);
        break;
    }
    case Op::project: accumulate(a(0), kb::project_vjp(arg(n, 0), c, g)); break;
    case Op::mobius_add: {
        const Vec raw = kb::mobius_add(arg(n, 0), arg(n, 1), c);
        const auto pg = kb::mobius_add_vjp(arg(n, 0), arg(n, 1), c, kb::project_vjp(raw, c, g));
        accumulate(a(0), pg.dx);
        accumulate(a(1), pg.dy);
        break;
    }
    case Op::mobius_scalar: {
        const double r = arg(n, 0)[0];
        const Vec raw = kb::mobius_scalar(r, arg(n, 1), c);
        double dr = 0.0;
        const Vec dx = kb::mobius_scalar_vjp(r, arg(n, 1), c, kb::project_vjp(raw, c, g), &dr);
        accumulate(a(0), Vec::Constant(1, dr));
        accumulate(a(1), dx);
        break;
    }
    case Op::exp0: {
        const Vec raw = kb::exp0(arg(n, 0), c);
        accumulate(a(0), kb::exp0_vjp(arg(n, 0), c, kb::project_vjp(raw, c, g)));
        break;
    }
    case Op::log0: accumulate(a(0), kb::log0_vjp(arg(n, 0), c, g)); break;
    case Op::dist: {
        const Vec negx = -arg(n, 0);
        const Vec raw = kb::mobius_add(negx, arg(n, 1), c);
        const Vec u = kb::project(raw, c);
        const Vec gu = kb::project_vjp(raw, c, kb::dist_to_origin_vjp(u, c, g[0]));
        const auto pg = kb::mobius_add_vjp(negx, arg(n, 1), c, gu);
        accumulate_scaled(a(0), pg.dx, -1.0);
        accumulate(a(1), pg.dy);
        break;
    }
    case Op::dist_to_origin: accumulate(a(0), kb::dist_to_origin_vjp(arg(n, 0), c, g[0])); break;
    case Op::lca_depth: {
        const Vec& x = arg(n, 0);
        const Vec& y = arg(n, 1);
        const double t = n.cache;
        const Vec negx = -x;
        const Vec u_raw = kb::mobius_add(negx, y, c);
        const Vec u = kb::project(u_raw, c);
        const Vec v = kb::mobius_scalar(t, u, c);
        const Vec geo_raw = kb::mobius_add(x, v, c);
        const Vec geo = kb::project(geo_raw, c);
        const Vec g_geo = kb::project_vjp(geo_raw, c, kb::dist_to_origin_vjp(geo, c, g[0]));
        const auto outer = kb::mobius_add_vjp(x, v, c, g_geo);
        const Vec g_u = kb::project_vjp(u_raw, c, kb::mobius_scalar_vjp(t, u, c, outer.dy, nullptr));
        const auto inner = kb::mobius_add_vjp(negx, y, c, g_u);
        accumulate(a(0), outer.dx - inner.dx);
        accumulate(a(1), inner.dy);
        break;
    }
    case Op::segment_depth: {
        const Vec& x = arg(n, 0);
        const double t = n.cache;
        const Vec p = x + t * (arg(n, 1) - x);
        const double pn = p.norm();
        if (pn > 0.0) {
            const Vec gp = (g[0] / pn) * p;
            accumulate_scaled(a(0), gp, 1.0 - t);
            accumulate_scaled(a(1), gp, t);
        }
        break;
    }
    case Op::mlr_logits: {
        const Vec& x = arg(n, 0);
        const Vec& offsets = arg(n, 1);
        const Vec& normals = arg(n, 2);
        const Eigen::Index dim = x.size();
        const double k = std::sqrt(c);
        Vec gx = Vec::Zero(dim);
        Vec gp = Vec::Zero(offsets.size());
        Vec ga = Vec::Zero(normals.size());
        for (Eigen::Index cls = 0; cls < n.iaux; ++cls) {
            const double gk = g[cls];
            if (gk == 0.0)
                continue;
            const Vec p = offsets.segment(cls * dim, dim);
            const Vec a_k = normals.segment(cls * dim, dim);
            const double na = a_k.norm();
            const Vec negp = -p;
            const Vec u = kb::mobius_add(negp, x, c);
            const double uu = u.squaredNorm();
            const double one_minus = 1.0 - c * uu;
            const double pp = p.squaredNorm();
            const double lambda_p = 2.0 / (1.0 - c * pp);
            Vec g_u;
            if (na < 1e-12) {
                // Limit a -> 0 of the logit is linear in a.
                ga.segment(cls * dim, dim) += gk * lambda_p * 2.0 / one_minus * u;
                continue;
            }
            const double alpha = u.dot(a_k);
            const double z = 2.0 * k * alpha / (one_minus * na);
            const double ash = std::asinh(z);
            const double dlogit_dz = lambda_p * na / k / std::sqrt(1.0 + z * z);
            const double gz = gk * dlogit_dz;
            const double dz_dalpha = 2.0 * k / (one_minus * na);
            const double dz_duu = z * c / one_minus;
            const double d_na = gk * lambda_p * ash / k - gz * z / na;
            ga.segment(cls * dim, dim) += gz * dz_dalpha * u + (d_na / na) * a_k;
            g_u = gz * dz_dalpha * a_k + (2.0 * gz * dz_duu) * u;
            // d lambda_p / d|p|^2 = c lambda_p^2 / 2
            Vec gpk = (gk * na * ash / k * c * lambda_p * lambda_p) * p;
            const auto pg = kb::mobius_add_vjp(negp, x, c, g_u);
            gpk -= pg.dx;
            gp.segment(cls * dim, dim) += gpk;
            gx += pg.dy;
        }
        // Degenerate normals only contribute to ga; x and p see no gradient from them.
        accumulate(a(0), gx);
        accumulate(a(1), gp);
        accumulate(a(2), ga);
        break;
    }
    }
}

// ---------------------------------------------------------------------------

double check_gradient(Graph& graph, const Bindings& bindings, const std::vector<std::string>& params, double h)
{
    if (!(h > 0.0))
        throw std::invalid_argument("check_gradient: step must be positive");
    graph.forward(bindings);
    const GradientMap analytic = graph.backward();
    Bindings probe = bindings;
    double worst = 0.0;
    for (const auto& name : params) {
        auto it = analytic.find(name);
        if (it == analytic.end())
            throw GraphError("check_gradient: '" + name + "' is not a parameter of the graph");
        Vec& p = probe.at(name);
        for (Eigen::Index i = 0; i < p.size(); ++i) {
            const double orig = p[i];
            p[i] = orig + h;
            const double up = graph.forward(probe);
            p[i] = orig - h;
            const double down = graph.forward(probe);
            p[i] = orig;
            const double numeric = (up - down) / (2.0 * h);
            const double err = std::abs(it->second[i] - numeric) / std::max(1.0, std::abs(numeric));
            worst = std::max(worst, err);
        }
    }
    graph.forward(bindings);
    return worst;
}

}  // namespace hyrep::tape
