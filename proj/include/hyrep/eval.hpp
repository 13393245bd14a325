// Classification metrics, cross-validation protocols, distortion against
// random trees, and common-substructure mining across repeated runs.

#pragma once

#include "hyrep/cluster.hpp"
#include "hyrep/data.hpp"
#include "hyrep/model.hpp"
#include "hyrep/optim.hpp"

#include <json.hpp>

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace hyrep {

class ConfusionMatrix {
public:
    explicit ConfusionMatrix(int classes = 0);

    void add(int truth, int predicted);
    [[nodiscard]] int classes() const noexcept { return static_cast<int>(counts_.rows()); }
    [[nodiscard]] const Eigen::MatrixXi& counts() const noexcept { return counts_; }
    [[nodiscard]] long total() const;
    [[nodiscard]] long trace() const;
    [[nodiscard]] double accuracy() const;
    [[nodiscard]] std::vector<double> per_class_accuracy() const;
    /// Header row of predicted class names, one row per true class.
    [[nodiscard]] std::string to_csv(const std::vector<std::string>& class_names) const;

private:
    Eigen::MatrixXi counts_;
};

/// Class probabilities for one input.
using Predictor = std::function<Vec(const Vec&)>;

[[nodiscard]] Predictor model_predictor(const Model& model);

struct Metrics {
    std::size_t trials = 0;
    double accuracy = 0.0;
    std::vector<double> per_class_accuracy;
    ConfusionMatrix confusion;
    std::map<int, double> top_n;

    [[nodiscard]] nlohmann::json to_json(const std::vector<std::string>& class_names) const;
};

/// Class ids by decreasing probability; equal probabilities keep the lower id first.
[[nodiscard]] std::vector<int> ranked_classes(const Vec& probabilities);

/// Scores a fixed predictor on every trial of `data`.
[[nodiscard]] Metrics score(const Predictor& predict, const Dataset& data, const std::vector<int>& top_n = {1});
[[nodiscard]] std::map<int, double> top_n_accuracy(const Predictor& predict, const Dataset& data,
                                                   const std::vector<int>& n_values);

enum class Protocol { leave_one_out, leave_one_block_out, holdout };

[[nodiscard]] Protocol parse_protocol(const std::string& name);
[[nodiscard]] std::string to_string(Protocol p);

struct EvalOptions {
    Protocol protocol = Protocol::leave_one_out;
    /// leave_one_block_out: trials with within-class index i fall in block
    /// i mod blocks. 0 means one block per within-class index.
    int blocks = 0;
    /// holdout: fraction of each class (its last trials) held out.
    double holdout_fraction = 0.2;
    /// Values above the class count are skipped (see clip_top_n).
    std::vector<int> top_n{1, 3, 5};
    /// Largest dataset leave_one_out accepts.
    std::size_t max_loo_trials = 2000;
};

/// The values of n_values that are at most `classes`.
[[nodiscard]] std::vector<int> clip_top_n(const std::vector<int>& n_values, int classes);

/// Fold assignment (fold id per trial) for the protocol.
[[nodiscard]] std::vector<int> assign_folds(const Dataset& data, const EvalOptions& opts);

/// Fits a predictor on a training split; `fold` distinguishes the folds.
using Trainer = std::function<Predictor(const Dataset& train, int fold)>;

/// Trains once per fold and scores each held-out trial with its fold's
/// predictor. Folds run on up to worker_count() threads; results are
/// gathered in trial order.
[[nodiscard]] Metrics cross_validate(const Dataset& data, const Trainer& trainer, const EvalOptions& opts);

/// Trainer that runs `train` with cfg on each split.
[[nodiscard]] Trainer config_trainer(const TrainConfig& cfg);

/// HYREP_THREADS if set and positive, else hardware concurrency (at least 1).
[[nodiscard]] int worker_count();
/// Runs fn(i) for i in [0, n) on up to worker_count() threads. The first
/// exception thrown is rethrown after all workers finish.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

struct DistortionComparison {
    double value = 0.0;
    /// Mid-rank percentile of value among the random distortions (0..100).
    double percentile = 0.0;
    std::vector<double> random_values;
};

[[nodiscard]] DistortionComparison distortion_vs_random(const ClusterTree& tree, const std::vector<int>& classes,
                                                        int runs, std::uint64_t seed);

/// Mid-rank percentile of x within sample.
[[nodiscard]] double mid_rank_percentile(double x, const std::vector<double>& sample);
/// Kolmogorov-Smirnov statistic of a sample against uniform(0, 1).
[[nodiscard]] double ks_uniform_statistic(std::vector<double> sample);

/// Tree-space embedding of every trial: the model's similarity source
/// vectors, scaled to unit norm and mapped into the ball with exp0.
[[nodiscard]] std::vector<BallPoint> tree_embedding(const Model& model, const Dataset& data, SimilaritySource source);
/// decode_tree over tree_embedding, with the dataset labels as leaves.
[[nodiscard]] ClusterTree decode_model_tree(const Model& model, const Dataset& data, SimilaritySource source);

using ClassPair = std::pair<int, int>;

struct SubstructureCounts {
    int runs = 0;  ///< runs per dataset
    /// Per dataset, occurrences of each sibling class pair.
    std::vector<std::map<ClassPair, int>> per_dataset;
    /// Occurrences summed over datasets.
    std::map<ClassPair, int> total;
};

struct MiningResult {
    SubstructureCounts counts;
    std::vector<ClassPair> frequent_pairs;
    std::vector<std::vector<int>> groups;  ///< consensus groups (class ids, sorted)

    [[nodiscard]] nlohmann::json to_json(const std::vector<std::string>& class_names) const;
    /// One Newick fragment per consensus group.
    [[nodiscard]] std::vector<std::string> newick_fragments(const std::vector<std::string>& class_names) const;
    /// Group index per class; classes outside every group get singleton groups.
    [[nodiscard]] std::vector<int> class_groups(int num_classes) const;
};

/// Produces one tree for a dataset and run seed.
using TreeProducer = std::function<ClusterTree(const Dataset& data, std::uint64_t seed)>;

[[nodiscard]] TreeProducer config_tree_producer(const TrainConfig& cfg);

/// Keeps pairs whose frequency exceeds threshold in every dataset (at
/// threshold 0, every pair observed in every dataset) and unions
/// overlapping pairs into groups.
[[nodiscard]] MiningResult mine_substructures(const std::vector<Dataset>& datasets, int runs_per_dataset,
                                              double threshold, const TreeProducer& producer,
                                              std::uint64_t seed);
/// The pair filter and union step alone.
[[nodiscard]] MiningResult consolidate_substructures(SubstructureCounts counts, double threshold);

}  // namespace hyrep
