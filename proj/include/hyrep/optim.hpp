// Riemannian SGD, the joint classification + clustering objective, loss
// weight schedules and the training loops.

#pragma once

#include "hyrep/ball.hpp"
#include "hyrep/cluster.hpp"
#include "hyrep/data.hpp"
#include "hyrep/model.hpp"
#include "hyrep/tape.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace hyrep {

struct LossWeights {
    double lambda = 1.0;  ///< classification
    double gamma = 0.0;   ///< clustering

    void validate() const;
    bool operator==(const LossWeights&) const = default;
};

enum class ScheduleMode { joint, alternating, fixed };

[[nodiscard]] ScheduleMode parse_schedule_mode(const std::string& name);
[[nodiscard]] std::string to_string(ScheduleMode m);

struct Schedule {
    ScheduleMode mode = ScheduleMode::joint;
    int switch_epoch = 100;
    int k_steps = 5;
    /// Weights before the switch (joint), in the first phase (alternating)
    /// or throughout (fixed).
    LossWeights start{0.0, 1.0};
    /// Weights after the switch in joint mode.
    LossWeights after{0.5, 0.5};

    void validate() const;
    /// Weights for a 0-based epoch and 0-based global optimizer step.
    /// Alternating mode flips (lambda, gamma) of `start` every k_steps steps.
    [[nodiscard]] LossWeights at(int epoch, long step) const;
};

/// euclid_grad scaled by the inverse metric, ((1 - c|x|^2) / 2)^2.
[[nodiscard]] Vec riemannian_grad(const BallPoint& x, const Vec& euclid_grad);
/// x (+) exp0(-lr * riemannian_grad), projected onto the safe ball. Throws
/// std::domain_error for a non-finite gradient.
[[nodiscard]] BallPoint rsgd_step(const BallPoint& x, const Vec& euclid_grad, double lr);

struct TrainConfig {
    ModelConfig model;
    double lr = 1e-3;
    int epochs = 300;
    int batch_size = 32;
    SimilarityConfig similarity;
    Schedule schedule;
    /// Triplets sampled per batch item each step.
    int triplets_per_sample = 50;
    /// Weight of the distance constraint in train_with_constraint.
    double mu = 0.01;
    std::uint64_t seed = 0;

    void validate() const;
};

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Applies one `key = value` assignment. Throws ConfigError for unknown keys
/// or malformed values.
void apply_setting(TrainConfig& cfg, const std::string& key, const std::string& value);
/// Parses `key = value` lines; `#` starts a comment. Errors carry the line number.
[[nodiscard]] TrainConfig parse_train_config(const std::string& text, TrainConfig base = {});
[[nodiscard]] TrainConfig load_train_config(const std::filesystem::path& path, TrainConfig base = {});
/// Round-trippable `key = value` text for every documented key.
[[nodiscard]] std::string to_config_text(const TrainConfig& cfg);
[[nodiscard]] std::vector<std::string> train_config_keys();

struct Batch {
    std::vector<const Vec*> inputs;
    std::vector<int> labels;
};

struct JointLossNodes {
    tape::Var total;
    tape::Var classification;  ///< mean cross-entropy
    tape::Var clustering;      ///< tree loss (absent when gamma = 0)
    bool has_clustering = false;
};

/// Records lambda * mean cross-entropy + gamma * tree loss on the similarity
/// source vectors. The vectors are scaled to unit norm (latent points via
/// log0) and, in the hyperbolic space, mapped into the ball with exp0.
JointLossNodes record_joint_loss(tape::Graph& graph, const Model& model, const Batch& batch,
                                 const LossWeights& weights, const SimilarityConfig& cfg,
                                 std::span<const Triplet> triplets);

struct JointLossValue {
    double total = 0.0;
    double classification = 0.0;
    double clustering = 0.0;
};

/// Evaluates the joint loss; triplets are sampled from `rng` when gamma > 0.
[[nodiscard]] JointLossValue joint_loss(const Batch& batch, const Model& model, const LossWeights& weights,
                                        const SimilarityConfig& cfg, int triplet_count, std::mt19937_64& rng);

struct TrainState {
    int epoch = 0;
    std::uint64_t seed = 0;
    double learning_rate = 1e-3;
    long steps = 0;
    Model model;
    std::vector<double> loss_history;  ///< mean batch loss per epoch
};

class DivergenceError : public std::runtime_error {
public:
    DivergenceError(int epoch, double loss);
    [[nodiscard]] int epoch() const noexcept { return epoch_; }

private:
    int epoch_;
};

/// Called after each epoch with the state so far.
using EpochCallback = std::function<void(const TrainState&)>;

/// Minibatch RSGD under the configured schedule. Deterministic per seed.
[[nodiscard]] TrainState train(const Dataset& data, const TrainConfig& cfg, const EpochCallback& on_epoch = {});

/// lambda * cross-entropy + mu * distance constraint, where batch items whose
/// classes share a group in `class_groups` are pulled together. The clustering
/// loss is disabled. Distances are taken between latent representations.
[[nodiscard]] TrainState train_with_constraint(const Dataset& data, const TrainConfig& cfg,
                                               const std::vector<int>& class_groups,
                                               const EpochCallback& on_epoch = {});

/// Applies one optimizer step to the model parameters.
void apply_gradients(Model& model, const tape::GradientMap& grads, double lr);

}  // namespace hyrep
