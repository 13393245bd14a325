#include "hyrep/model.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

namespace hyrep {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Mat unflatten(const Vec& v, Eigen::Index rows, Eigen::Index cols)
{
    return Eigen::Map<const RowMajor>(v.data(), rows, cols);
}

Vec apply_activation(const Vec& v, tape::Activation act)
{
    switch (act) {
    case tape::Activation::relu: return v.cwiseMax(0.0);
    case tape::Activation::tanh: return v.array().tanh().matrix();
    case tape::Activation::identity: return v;
    }
    return v;
}

}  // namespace

Space parse_space(const std::string& name)
{
    if (name == "hyperbolic")
        return Space::hyperbolic;
    if (name == "euclidean")
        return Space::euclidean;
    throw std::invalid_argument("unknown space '" + name + "'");
}

std::string to_string(Space s)
{
    return s == Space::hyperbolic ? "hyperbolic" : "euclidean";
}

void ModelConfig::validate() const
{
    if (input_dim < 1 || latent_dim < 1 || depth < 1)
        throw std::invalid_argument("model dimensions and depth must be >= 1");
    if (num_classes < 2)
        throw std::invalid_argument("model needs at least two classes");
    (void)Curvature(curvature);
}

// ---------------------------------------------------------------------------
// single-item operations

BallPoint ffnn_forward(const BallPoint& x_h, const FfnnParams& params)
{
    if (params.weight.cols() != x_h.dim() || params.bias.size() != params.weight.rows())
        throw DimensionError("ffnn_forward: weight is " + std::to_string(params.weight.rows()) + "x" +
                             std::to_string(params.weight.cols()) + " but input has dimension " +
                             std::to_string(x_h.dim()));
    const Vec u = log0(x_h).coords;
    const Vec h = apply_activation(params.weight * u + params.bias, params.activation);
    return exp0({h}, x_h.curvature());
}

Vec mlr_logits(const BallPoint& x_l, const MlrParams& params)
{
    if (params.offsets.size() != params.normals.size() || params.offsets.size() < 2)
        throw std::invalid_argument("mlr_logits: need matching offsets and normals for K >= 2 classes");
    const auto classes = static_cast<Eigen::Index>(params.offsets.size());
    const auto dim = x_l.dim();
    Vec offsets(classes * dim);
    Vec normals(classes * dim);
    for (Eigen::Index k = 0; k < classes; ++k) {
        const auto& p = params.offsets[static_cast<std::size_t>(k)];
        const auto& a = params.normals[static_cast<std::size_t>(k)];
        if (p.dim() != dim || a.coords.size() != dim)
            throw DimensionError("mlr_logits: hyperplane dimension differs from the input");
        if (!(p.curvature() == x_l.curvature()))
            throw std::invalid_argument("mlr_logits: curvature mismatch");
        offsets.segment(k * dim, dim) = p.coords();
        normals.segment(k * dim, dim) = a.coords;
    }
    tape::Graph g;
    const auto out = g.mlr_logits(g.constant(x_l.coords()), g.constant(offsets), g.constant(normals), classes,
                                  x_l.curvature().value());
    g.evaluate({});
    return g.value(out);
}

double cross_entropy(const Vec& logits, int label)
{
    if (logits.size() < 2)
        throw std::invalid_argument("cross_entropy: need at least two classes");
    if (label < 0 || label >= logits.size())
        throw std::out_of_range("cross_entropy: label " + std::to_string(label) + " out of range");
    const double m = logits.maxCoeff();
    return m + std::log((logits.array() - m).exp().sum()) - logits[label];
}

Vec softmax(const Vec& logits)
{
    const Vec e = (logits.array() - logits.maxCoeff()).exp().matrix();
    return e / e.sum();
}

// ---------------------------------------------------------------------------
// Model

std::string param_names::layer_weight(int layer)
{
    return "ffnn." + std::to_string(layer) + ".weight";
}

std::string param_names::layer_bias(int layer)
{
    return "ffnn." + std::to_string(layer) + ".bias";
}

Model Model::init(const ModelConfig& config, std::uint64_t seed)
{
    config.validate();
    Model m;
    m.config_ = config;
    m.seed_ = seed;
    std::mt19937_64 rng(seed);

    int fan_in = config.input_dim;
    for (int layer = 0; layer < config.depth; ++layer) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        std::uniform_real_distribution<double> unif(-bound, bound);
        Vec w(static_cast<Eigen::Index>(config.latent_dim) * fan_in);
        for (auto& x : w)
            x = unif(rng);
        m.params_[param_names::layer_weight(layer)] = std::move(w);
        m.params_[param_names::layer_bias(layer)] = Vec::Zero(config.latent_dim);
        fan_in = config.latent_dim;
    }

    const Eigen::Index head = static_cast<Eigen::Index>(config.num_classes) * config.latent_dim;
    std::normal_distribution<double> gauss(0.0, 1.0);
    Vec normals(head);
    for (auto& x : normals)
        x = gauss(rng) / std::sqrt(static_cast<double>(config.latent_dim));
    if (config.space == Space::hyperbolic) {
        m.params_[param_names::mlr_offsets] = Vec::Zero(head);
        m.params_[param_names::mlr_normals] = std::move(normals);
    } else {
        m.params_[param_names::out_weight] = std::move(normals);
        m.params_[param_names::out_bias] = Vec::Zero(config.num_classes);
    }
    return m;
}

std::vector<std::string> Model::param_order() const
{
    std::vector<std::string> names;
    for (int layer = 0; layer < config_.depth; ++layer) {
        names.push_back(param_names::layer_weight(layer));
        names.push_back(param_names::layer_bias(layer));
    }
    if (config_.space == Space::hyperbolic) {
        names.emplace_back(param_names::mlr_offsets);
        names.emplace_back(param_names::mlr_normals);
    } else {
        names.emplace_back(param_names::out_weight);
        names.emplace_back(param_names::out_bias);
    }
    return names;
}

bool Model::is_ball_param(const std::string& name) const
{
    return config_.space == Space::hyperbolic && name == param_names::mlr_offsets;
}

FfnnParams Model::ffnn_layer(int layer) const
{
    if (layer < 0 || layer >= config_.depth)
        throw std::out_of_range("ffnn layer index out of range");
    const int fan_in = layer == 0 ? config_.input_dim : config_.latent_dim;
    return {unflatten(params_.at(param_names::layer_weight(layer)), config_.latent_dim, fan_in),
            params_.at(param_names::layer_bias(layer)), config_.activation};
}

MlrParams Model::mlr() const
{
    if (config_.space != Space::hyperbolic)
        throw std::logic_error("the Euclidean variant has no hyperbolic MLR head");
    const Curvature c(config_.curvature);
    const Eigen::Index dim = config_.latent_dim;
    const Vec& offsets = params_.at(param_names::mlr_offsets);
    const Vec& normals = params_.at(param_names::mlr_normals);
    MlrParams out;
    for (Eigen::Index k = 0; k < config_.num_classes; ++k) {
        out.offsets.emplace_back(offsets.segment(k * dim, dim), c);
        out.normals.push_back({normals.segment(k * dim, dim)});
    }
    return out;
}

Model::Nodes Model::record(tape::Graph& g, tape::Var x_e) const
{
    if (g.size_of(x_e) != config_.input_dim)
        throw DimensionError("model input has dimension " + std::to_string(g.size_of(x_e)) + ", expected " +
                             std::to_string(config_.input_dim));
    const double c = config_.curvature;
    const bool hyperbolic = config_.space == Space::hyperbolic;

    tape::Var h = x_e;
    if (hyperbolic)
        h = g.log0(g.exp0(x_e, c), c);  // x^H, then back to the tangent space
    int fan_in = config_.input_dim;
    for (int layer = 0; layer < config_.depth; ++layer) {
        const auto w = g.parameter(param_names::layer_weight(layer),
                                   static_cast<Eigen::Index>(config_.latent_dim) * fan_in);
        const auto b = g.parameter(param_names::layer_bias(layer), config_.latent_dim);
        h = g.activation(g.add(g.matvec(w, config_.latent_dim, h), b), config_.activation);
        fan_in = config_.latent_dim;
    }

    const Eigen::Index head = static_cast<Eigen::Index>(config_.num_classes) * config_.latent_dim;
    if (hyperbolic) {
        const auto latent = g.exp0(h, c);
        const auto p = g.parameter(param_names::mlr_offsets, head);
        const auto a = g.parameter(param_names::mlr_normals, head);
        return {latent, g.mlr_logits(latent, p, a, config_.num_classes, c)};
    }
    const auto w = g.parameter(param_names::out_weight, head);
    const auto b = g.parameter(param_names::out_bias, config_.num_classes);
    return {h, g.add(g.matvec(w, config_.num_classes, h), b)};
}

Vec Model::logits(const Vec& x_e) const
{
    tape::Graph g;
    const auto nodes = record(g, g.constant(x_e));
    g.evaluate(params_);
    return g.value(nodes.logits);
}

Vec Model::latent(const Vec& x_e) const
{
    tape::Graph g;
    const auto nodes = record(g, g.constant(x_e));
    g.evaluate(params_);
    return g.value(nodes.latent);
}

Prediction Model::predict(const Vec& x_e) const
{
    Prediction p;
    p.probabilities = softmax(logits(x_e));
    Eigen::Index best = 0;
    p.probabilities.maxCoeff(&best);
    p.label = static_cast<int>(best);
    return p;
}

// ---------------------------------------------------------------------------
// checkpoints

nlohmann::json to_json(const ModelConfig& c)
{
    return {{"input_dim", c.input_dim},
            {"latent_dim", c.latent_dim},
            {"num_classes", c.num_classes},
            {"curvature", c.curvature},
            {"space", to_string(c.space)},
            {"activation", tape::to_string(c.activation)},
            {"depth", c.depth}};
}

ModelConfig model_config_from_json(const nlohmann::json& j)
{
    ModelConfig c;
    c.input_dim = j.at("input_dim").get<int>();
    c.latent_dim = j.at("latent_dim").get<int>();
    c.num_classes = j.at("num_classes").get<int>();
    c.curvature = j.at("curvature").get<double>();
    c.space = parse_space(j.at("space").get<std::string>());
    c.activation = tape::parse_activation(j.at("activation").get<std::string>());
    c.depth = j.at("depth").get<int>();
    c.validate();
    return c;
}

nlohmann::json Model::to_json() const
{
    nlohmann::json tensors = nlohmann::json::array();
    for (const auto& name : param_order()) {
        const Vec& v = params_.at(name);
        tensors.push_back({{"name", name}, {"data", std::vector<double>(v.data(), v.data() + v.size())}});
    }
    return {{"format", "hyrep-model"},
            {"version", 1},
            {"config", hyrep::to_json(config_)},
            {"curvature", config_.curvature},
            {"seed", seed_},
            {"params", tensors}};
}

Model Model::from_json(const nlohmann::json& j)
{
    if (j.value("format", "") != "hyrep-model")
        throw std::runtime_error("not a model checkpoint");
    Model m;
    m.config_ = model_config_from_json(j.at("config"));
    m.seed_ = j.at("seed").get<std::uint64_t>();
    const Model shape = Model::init(m.config_, 0);
    for (const auto& t : j.at("params")) {
        const auto name = t.at("name").get<std::string>();
        const auto data = t.at("data").get<std::vector<double>>();
        auto it = shape.params_.find(name);
        if (it == shape.params_.end())
            throw std::runtime_error("checkpoint has unexpected tensor '" + name + "'");
        if (static_cast<Eigen::Index>(data.size()) != it->second.size())
            throw std::runtime_error("checkpoint tensor '" + name + "' has the wrong size");
        m.params_[name] = Eigen::Map<const Vec>(data.data(), static_cast<Eigen::Index>(data.size()));
    }
    if (m.params_.size() != shape.params_.size())
        throw std::runtime_error("checkpoint is missing tensors");
    return m;
}

void Model::save(const std::filesystem::path& path) const
{
    std::ofstream out(path);
    if (!out)
        throw std::runtime_error("cannot write " + path.string());
    out << to_json().dump(1) << '\n';
}

Model Model::load(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot read " + path.string());
    return from_json(nlohmann::json::parse(in));
}

}  // namespace hyrep
