// The classifier: a hyperbolic feed-forward feature extractor followed by a
// hyperbolic multiclass logistic regression head, and its all-Euclidean
// counterpart sharing the same interface.

#pragma once

#include "hyrep/ball.hpp"
#include "hyrep/tape.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace hyrep {

enum class Space { hyperbolic, euclidean };

[[nodiscard]] Space parse_space(const std::string& name);
[[nodiscard]] std::string to_string(Space s);

struct ModelConfig {
    int input_dim = 1;
    int latent_dim = 256;
    int num_classes = 2;
    double curvature = 2.0;
    Space space = Space::hyperbolic;
    tape::Activation activation = tape::Activation::relu;
    /// Number of affine + activation layers in the Euclidean map of the FFNN.
    int depth = 1;

    void validate() const;
};

/// One affine layer of the Euclidean map f inside the hyperbolic FFNN.
struct FfnnParams {
    Mat weight;  ///< l x d
    Vec bias;    ///< l
    tape::Activation activation = tape::Activation::relu;
};

/// Hyperbolic MLR parameters: one hyperplane per class.
struct MlrParams {
    std::vector<BallPoint> offsets;      ///< p_k
    std::vector<TangentVector> normals;  ///< a_k
};

struct Prediction {
    int label = 0;
    Vec probabilities;
};

/// exp0(f(log0(x_h))) for a single affine layer f.
[[nodiscard]] BallPoint ffnn_forward(const BallPoint& x_h, const FfnnParams& params);
[[nodiscard]] Vec mlr_logits(const BallPoint& x_l, const MlrParams& params);
/// -log softmax(logits)[label] with max subtraction.
[[nodiscard]] double cross_entropy(const Vec& logits, int label);
[[nodiscard]] Vec softmax(const Vec& logits);

namespace param_names {
inline constexpr const char* mlr_offsets = "mlr.offsets";
inline constexpr const char* mlr_normals = "mlr.normals";
inline constexpr const char* out_weight = "out.weight";
inline constexpr const char* out_bias = "out.bias";
[[nodiscard]] std::string layer_weight(int layer);
[[nodiscard]] std::string layer_bias(int layer);
}  // namespace param_names

class Model {
public:
    /// Weights uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)], biases 0,
    /// p_k = 0, a_k standard normal scaled by 1/sqrt(l).
    static Model init(const ModelConfig& config, std::uint64_t seed);

    [[nodiscard]] const ModelConfig& config() const noexcept { return config_; }
    [[nodiscard]] std::uint64_t seed() const noexcept { return seed_; }

    /// Flat row-major parameter tensors keyed by name.
    [[nodiscard]] const tape::Bindings& params() const noexcept { return params_; }
    [[nodiscard]] tape::Bindings& params() noexcept { return params_; }
    [[nodiscard]] std::vector<std::string> param_order() const;
    /// True for tensors whose rows are ball points updated by Riemannian steps.
    [[nodiscard]] bool is_ball_param(const std::string& name) const;

    [[nodiscard]] FfnnParams ffnn_layer(int layer) const;
    [[nodiscard]] MlrParams mlr() const;

    struct Nodes {
        tape::Var latent;  ///< x^L (a ball point in the hyperbolic space)
        tape::Var logits;
    };
    /// Records the forward pass for one input vector x^E.
    Nodes record(tape::Graph& graph, tape::Var x_e) const;

    [[nodiscard]] Vec logits(const Vec& x_e) const;
    [[nodiscard]] Vec latent(const Vec& x_e) const;
    [[nodiscard]] Prediction predict(const Vec& x_e) const;

    [[nodiscard]] nlohmann::json to_json() const;
    static Model from_json(const nlohmann::json& j);
    void save(const std::filesystem::path& path) const;
    static Model load(const std::filesystem::path& path);

private:
    ModelConfig config_;
    std::uint64_t seed_ = 0;
    tape::Bindings params_;
};

[[nodiscard]] nlohmann::json to_json(const ModelConfig& c);
[[nodiscard]] ModelConfig model_config_from_json(const nlohmann::json& j);

}  // namespace hyrep
