#include "hyrep/optim.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace hyrep {

void LossWeights::validate() const
{
    if (!(lambda >= 0.0) || !(gamma >= 0.0))
        throw std::invalid_argument("loss weights must be nonnegative");
    if (!(lambda + gamma > 0.0))
        throw std::invalid_argument("loss weights must not both be zero");
}

ScheduleMode parse_schedule_mode(const std::string& name)
{
    if (name == "joint")
        return ScheduleMode::joint;
    if (name == "alternating")
        return ScheduleMode::alternating;
    if (name == "fixed")
        return ScheduleMode::fixed;
    throw std::invalid_argument("unknown schedule mode '" + name + "' (joint|alternating|fixed)");
}

std::string to_string(ScheduleMode m)
{
    switch (m) {
    case ScheduleMode::joint: return "joint";
    case ScheduleMode::alternating: return "alternating";
    case ScheduleMode::fixed: return "fixed";
    }
    return "joint";
}

void Schedule::validate() const
{
    if (switch_epoch < 0)
        throw std::invalid_argument("switch_epoch must be >= 0");
    if (k_steps < 1)
        throw std::invalid_argument("k_steps must be >= 1");
    start.validate();
    if (mode == ScheduleMode::joint)
        after.validate();
}

LossWeights Schedule::at(int epoch, long step) const
{
    switch (mode) {
    case ScheduleMode::joint:
        return epoch < switch_epoch ? start : after;
    case ScheduleMode::alternating:
        if ((step / k_steps) % 2 == 0)
            return start;
        return {start.gamma, start.lambda};
    case ScheduleMode::fixed:
        return start;
    }
    return start;
}

Vec riemannian_grad(const BallPoint& x, const Vec& euclid_grad)
{
    if (euclid_grad.size() != x.dim())
        throw DimensionError("riemannian_grad: gradient and point differ in dimension");
    const double s = 0.5 * (1.0 - x.curvature().value() * x.coords().squaredNorm());
    return s * s * euclid_grad;
}

namespace {

Vec rsgd_kernel(const Vec& x, const Vec& g, double lr, double c)
{
    if (!g.allFinite())
        throw std::domain_error("rsgd_step: non-finite gradient");
    const double s = 0.5 * (1.0 - c * x.squaredNorm());
    const Vec v = (-lr * s * s) * g;
    return kernel::project(kernel::mobius_add(x, kernel::exp0(v, c), c), c);
}

}  // namespace

BallPoint rsgd_step(const BallPoint& x, const Vec& euclid_grad, double lr)
{
    if (!(lr >= 0.0))
        throw std::invalid_argument("learning rate must be nonnegative");
    if (euclid_grad.size() != x.dim())
        throw DimensionError("rsgd_step: gradient and point differ in dimension");
    return BallPoint(rsgd_kernel(x.coords(), euclid_grad, lr, x.curvature().value()), x.curvature());
}

void TrainConfig::validate() const
{
    model.validate();
    if (!(lr >= 0.0) || !std::isfinite(lr))
        throw std::invalid_argument("lr must be a nonnegative number");
    if (epochs < 1)
        throw std::invalid_argument("epochs must be >= 1");
    if (batch_size < 1)
        throw std::invalid_argument("batch_size must be >= 1");
    if (!(similarity.tau > 0.0))
        throw std::invalid_argument("tau must be positive");
    schedule.validate();
    if (triplets_per_sample < 1)
        throw std::invalid_argument("triplets_per_sample must be >= 1");
    if (!(mu >= 0.0))
        throw std::invalid_argument("mu must be nonnegative");
}

namespace {

double to_double(const std::string& key, const std::string& v)
{
    double out = 0.0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || p != v.data() + v.size() || !std::isfinite(out))
        throw ConfigError(key + ": '" + v + "' is not a number");
    return out;
}

long long to_int(const std::string& key, const std::string& v)
{
    long long out = 0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || p != v.data() + v.size())
        throw ConfigError(key + ": '" + v + "' is not an integer");
    return out;
}

int to_int32(const std::string& key, const std::string& v)
{
    const long long x = to_int(key, v);
    if (x < -2147483647LL || x > 2147483647LL)
        throw ConfigError(key + ": value out of range");
    return static_cast<int>(x);
}

bool to_bool(const std::string& key, const std::string& v)
{
    if (v == "true" || v == "1")
        return true;
    if (v == "false" || v == "0")
        return false;
    throw ConfigError(key + ": '" + v + "' is not a boolean");
}

std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos)
        return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::string fmt(double x)
{
    std::ostringstream ss;
    ss.precision(17);
    ss << x;
    return ss.str();
}

}  // namespace

std::vector<std::string> train_config_keys()
{
    return {"space",        "curvature",     "latent_dim",      "depth",          "activation",
            "lr",           "epochs",        "batch_size",      "tau",            "similarity_source",
            "literal_sign", "lambda",        "gamma",           "schedule.mode",  "schedule.k",
            "schedule.switch_epoch",         "after.lambda",    "after.gamma",    "triplets_per_sample",
            "mu",           "seed"};
}

void apply_setting(TrainConfig& cfg, const std::string& raw_key, const std::string& raw_value)
{
    const std::string key = trim(raw_key);
    const std::string v = trim(raw_value);
    try {
        if (key == "space")
            cfg.model.space = parse_space(v);
        else if (key == "curvature")
            cfg.model.curvature = to_double(key, v);
        else if (key == "latent_dim")
            cfg.model.latent_dim = to_int32(key, v);
        else if (key == "depth")
            cfg.model.depth = to_int32(key, v);
        else if (key == "activation")
            cfg.model.activation = tape::parse_activation(v);
        else if (key == "lr")
            cfg.lr = to_double(key, v);
        else if (key == "epochs")
            cfg.epochs = to_int32(key, v);
        else if (key == "batch_size")
            cfg.batch_size = to_int32(key, v);
        else if (key == "tau")
            cfg.similarity.tau = to_double(key, v);
        else if (key == "similarity_source")
            cfg.similarity.source = parse_similarity_source(v);
        else if (key == "literal_sign")
            cfg.similarity.literal_sign = to_bool(key, v);
        else if (key == "lambda")
            cfg.schedule.start.lambda = to_double(key, v);
        else if (key == "gamma")
            cfg.schedule.start.gamma = to_double(key, v);
        else if (key == "schedule.mode")
            cfg.schedule.mode = parse_schedule_mode(v);
        else if (key == "schedule.k")
            cfg.schedule.k_steps = to_int32(key, v);
        else if (key == "schedule.switch_epoch")
            cfg.schedule.switch_epoch = to_int32(key, v);
        else if (key == "after.lambda")
            cfg.schedule.after.lambda = to_double(key, v);
        else if (key == "after.gamma")
            cfg.schedule.after.gamma = to_double(key, v);
        else if (key == "triplets_per_sample")
            cfg.triplets_per_sample = to_int32(key, v);
        else if (key == "mu")
            cfg.mu = to_double(key, v);
        else if (key == "seed") {
            const long long s = to_int(key, v);
            if (s < 0)
                throw ConfigError("seed: must be nonnegative");
            cfg.seed = static_cast<std::uint64_t>(s);
        } else
            throw ConfigError("unknown key '" + key + "'");
    } catch (const std::invalid_argument& e) {
        throw ConfigError(key + ": " + e.what());
    }
}

TrainConfig parse_train_config(const std::string& text, TrainConfig base)
{
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos)
            line.erase(hash);
        if (trim(line).empty())
            continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
        try {
            apply_setting(base, line.substr(0, eq), line.substr(eq + 1));
        } catch (const ConfigError& e) {
            throw ConfigError("line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    try {
        base.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    return base;
}

TrainConfig load_train_config(const std::filesystem::path& path, TrainConfig base)
{
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot open config " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    try {
        return parse_train_config(ss.str(), std::move(base));
    } catch (const ConfigError& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

std::string to_config_text(const TrainConfig& cfg)
{
    std::ostringstream out;
    out << "space = " << to_string(cfg.model.space) << "\n"
        << "curvature = " << fmt(cfg.model.curvature) << "\n"
        << "latent_dim = " << cfg.model.latent_dim << "\n"
        << "depth = " << cfg.model.depth << "\n"
        << "activation = " << tape::to_string(cfg.model.activation) << "\n"
        << "lr = " << fmt(cfg.lr) << "\n"
        << "epochs = " << cfg.epochs << "\n"
        << "batch_size = " << cfg.batch_size << "\n"
        << "tau = " << fmt(cfg.similarity.tau) << "\n"
        << "similarity_source = " << to_string(cfg.similarity.source) << "\n"
        << "literal_sign = " << (cfg.similarity.literal_sign ? "true" : "false") << "\n"
        << "lambda = " << fmt(cfg.schedule.start.lambda) << "\n"
        << "gamma = " << fmt(cfg.schedule.start.gamma) << "\n"
        << "schedule.mode = " << to_string(cfg.schedule.mode) << "\n"
        << "schedule.k = " << cfg.schedule.k_steps << "\n"
        << "schedule.switch_epoch = " << cfg.schedule.switch_epoch << "\n"
        << "after.lambda = " << fmt(cfg.schedule.after.lambda) << "\n"
        << "after.gamma = " << fmt(cfg.schedule.after.gamma) << "\n"
        << "triplets_per_sample = " << cfg.triplets_per_sample << "\n"
        << "mu = " << fmt(cfg.mu) << "\n"
        << "seed = " << cfg.seed << "\n";
    return out.str();
}

namespace {

struct Recorded {
    std::vector<Model::Nodes> outputs;
    std::vector<tape::Var> inputs;
    tape::Var classification;
};

Recorded record_classification(tape::Graph& g, const Model& model, const Batch& batch)
{
    Recorded r;
    std::vector<tape::Var> ce;
    for (std::size_t i = 0; i < batch.inputs.size(); ++i) {
        const tape::Var x = g.constant(*batch.inputs[i]);
        const auto out = model.record(g, x);
        r.inputs.push_back(x);
        r.outputs.push_back(out);
        ce.push_back(g.cross_entropy(out.logits, batch.labels[i]));
    }
    r.classification = g.scale(g.add_n(ce), 1.0 / static_cast<double>(ce.size()));
    return r;
}

// The vectors the tree loss is computed on, scaled to unit norm; in the
// hyperbolic space they are then mapped into the ball with exp0.
std::vector<tape::Var> similarity_points(tape::Graph& g, const Model& model, const Recorded& r,
                                         SimilaritySource source)
{
    const bool hyp = model.config().space == Space::hyperbolic;
    const double c = model.config().curvature;
    std::vector<tape::Var> pts;
    for (std::size_t i = 0; i < r.outputs.size(); ++i) {
        tape::Var v{};
        switch (source) {
        case SimilaritySource::logits: v = r.outputs[i].logits; break;
        case SimilaritySource::latent:
            v = hyp ? g.log0(r.outputs[i].latent, c) : r.outputs[i].latent;
            break;
        case SimilaritySource::input: v = r.inputs[i]; break;
        }
        v = g.normalize(v);
        pts.push_back(hyp ? g.exp0(v, c) : v);
    }
    return pts;
}

}  // namespace

JointLossNodes record_joint_loss(tape::Graph& g, const Model& model, const Batch& batch, const LossWeights& weights,
                                 const SimilarityConfig& cfg, std::span<const Triplet> triplets)
{
    weights.validate();
    if (batch.inputs.empty() || batch.inputs.size() != batch.labels.size())
        throw std::invalid_argument("joint loss needs a nonempty batch with one label per input");
    if (weights.gamma > 0.0 && batch.inputs.size() < 3)
        throw std::invalid_argument("clustering loss needs a batch of at least 3 samples");
    const Recorded r = record_classification(g, model, batch);
    JointLossNodes out;
    out.classification = r.classification;
    tape::Var total = g.scale(r.classification, weights.lambda);
    if (weights.gamma > 0.0 && !triplets.empty()) {
        const auto pts = similarity_points(g, model, r, cfg.source);
        out.clustering = record_tree_loss(g, pts, triplets, cfg,
                                          {model.config().space, model.config().curvature});
        out.has_clustering = true;
        total = g.add(total, g.scale(out.clustering, weights.gamma));
    }
    out.total = total;
    g.set_output(total);
    return out;
}

JointLossValue joint_loss(const Batch& batch, const Model& model, const LossWeights& weights,
                          const SimilarityConfig& cfg, int triplet_count, std::mt19937_64& rng)
{
    std::vector<Triplet> triplets;
    if (weights.gamma > 0.0)
        triplets = sample_triplets(static_cast<int>(batch.inputs.size()), triplet_count, rng);
    tape::Graph g;
    const auto nodes = record_joint_loss(g, model, batch, weights, cfg, triplets);
    g.evaluate(model.params());
    JointLossValue v;
    v.total = g.value(nodes.total)[0];
    v.classification = g.value(nodes.classification)[0];
    if (nodes.has_clustering)
        v.clustering = g.value(nodes.clustering)[0];
    return v;
}

DivergenceError::DivergenceError(int epoch, double loss)
    : std::runtime_error("training diverged at epoch " + std::to_string(epoch) + " (loss " + fmt(loss) + ")"),
      epoch_(epoch)
{
}

void apply_gradients(Model& model, const tape::GradientMap& grads, double lr)
{
    const double c = model.config().curvature;
    for (const auto& [name, g] : grads) {
        Vec& p = model.params().at(name);
        if (g.size() != p.size())
            throw DimensionError("gradient for " + name + " has the wrong size");
        if (!g.allFinite())
            throw std::domain_error("non-finite gradient for " + name);
        if (model.is_ball_param(name)) {
            const Eigen::Index dim = model.config().latent_dim;
            for (Eigen::Index row = 0; row * dim < p.size(); ++row) {
                const Vec x = p.segment(row * dim, dim);
                p.segment(row * dim, dim) = rsgd_kernel(x, g.segment(row * dim, dim), lr, c);
            }
        } else {
            p -= lr * g;
        }
    }
}

namespace {

// Builds the scalar loss of one step; may draw from the step rng.
using LossBuilder = std::function<tape::Var(tape::Graph&, const Model&, const Batch&, const LossWeights&,
                                            std::mt19937_64&)>;

TrainState run_training(const Dataset& data, const TrainConfig& base, const LossBuilder& build,
                        const EpochCallback& on_epoch)
{
    data.validate();
    if (data.size() == 0)
        throw std::invalid_argument("training needs a nonempty dataset");
    TrainConfig cfg = base;
    cfg.model.input_dim = data.input_dim();
    cfg.model.num_classes = data.num_classes();
    cfg.validate();

    TrainState st;
    st.seed = cfg.seed;
    st.learning_rate = cfg.lr;
    st.model = Model::init(cfg.model, cfg.seed);
    std::mt19937_64 rng(cfg.seed * 0x2545f4914f6cdd1dULL + 0x632be59bd9b4e019ULL);

    std::vector<std::size_t> order(data.size());
    for (std::size_t i = 0; i < order.size(); ++i)
        order[i] = i;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0.0;
        int batches = 0;
        for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t e = std::min(order.size(), b + static_cast<std::size_t>(cfg.batch_size));
            Batch batch;
            for (std::size_t i = b; i < e; ++i) {
                batch.inputs.push_back(&data.features[order[i]]);
                batch.labels.push_back(data.labels[order[i]]);
            }
            const LossWeights w = cfg.schedule.at(epoch, st.steps);
            tape::Graph g;
            const tape::Var loss = build(g, st.model, batch, w, rng);
            g.set_output(loss);
            const double value = g.forward(st.model.params());
            if (!std::isfinite(value) || value > 1e8)
                throw DivergenceError(epoch, value);
            const auto grads = g.backward();
            try {
                apply_gradients(st.model, grads, cfg.lr);
            } catch (const std::domain_error&) {
                throw DivergenceError(epoch, value);
            }
            loss_sum += value;
            ++batches;
            ++st.steps;
        }
        const double mean = loss_sum / batches;
        if (!std::isfinite(mean) || mean > 1e8)
            throw DivergenceError(epoch, mean);
        st.loss_history.push_back(mean);
        st.epoch = epoch + 1;
        if (on_epoch)
            on_epoch(st);
    }
    return st;
}

}  // namespace

TrainState train(const Dataset& data, const TrainConfig& cfg, const EpochCallback& on_epoch)
{
    const SimilarityConfig sim = cfg.similarity;
    const int per_sample = cfg.triplets_per_sample;
    return run_training(
        data, cfg,
        [&](tape::Graph& g, const Model& model, const Batch& batch, const LossWeights& w, std::mt19937_64& rng) {
            const int n = static_cast<int>(batch.inputs.size());
            std::vector<Triplet> triplets;
            LossWeights eff = w;
            if (w.gamma > 0.0 && n >= 3) {
                triplets = sample_triplets(n, per_sample * n, rng);
            } else if (w.gamma > 0.0) {
                // Too few samples for a triplet: the short batch trains on classification only.
                eff.gamma = 0.0;
                if (eff.lambda == 0.0)
                    return g.scale(record_classification(g, model, batch).classification, 0.0);
            }
            return record_joint_loss(g, model, batch, eff, sim, triplets).total;
        },
        on_epoch);
}

TrainState train_with_constraint(const Dataset& data, const TrainConfig& cfg, const std::vector<int>& class_groups,
                                 const EpochCallback& on_epoch)
{
    if (static_cast<int>(class_groups.size()) != data.num_classes())
        throw std::invalid_argument("constraint groups must cover every dataset class");
    const double mu = cfg.mu;
    return run_training(
        data, cfg,
        [&](tape::Graph& g, const Model& model, const Batch& batch, const LossWeights&, std::mt19937_64&) {
            const Recorded r = record_classification(g, model, batch);
            if (mu == 0.0)
                return r.classification;
            const bool hyp = model.config().space == Space::hyperbolic;
            const double c = model.config().curvature;
            std::vector<tape::Var> pulls;
            for (std::size_t a = 0; a < r.outputs.size(); ++a) {
                for (std::size_t b = a + 1; b < r.outputs.size(); ++b) {
                    const int ga = class_groups[static_cast<std::size_t>(batch.labels[a])];
                    const int gb = class_groups[static_cast<std::size_t>(batch.labels[b])];
                    if (ga != gb)
                        continue;
                    const tape::Var x = r.outputs[a].latent;
                    const tape::Var y = r.outputs[b].latent;
                    pulls.push_back(hyp ? g.dist(x, y, c) : g.norm(g.sub(x, y)));
                }
            }
            if (pulls.empty())
                return r.classification;
            const tape::Var constraint =
                g.scale(g.add_n(pulls), mu / static_cast<double>(batch.inputs.size()));
            return g.add(r.classification, constraint);
        },
        on_epoch);
}

}  // namespace hyrep
