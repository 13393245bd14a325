// Spike-train segmentation and binning, the dataset file format, the built-in
// phoneme taxonomies, and a synthetic generator with a planted hierarchy.

#pragma once

#include "hyrep/ball.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace hyrep {

/// Thrown for malformed dataset, CSV or taxonomy input; the message carries
/// the file location (line/column or JSON field path).
class ParseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct SpikeTrain {
    std::vector<std::vector<double>> units;  ///< ascending timestamps per unit (s)
    double length = 0.0;                     ///< recording/segment length (s)
    std::optional<double> prompt;
    std::optional<double> go;
    std::optional<double> ao_start;
    std::optional<double> ao_end;
    std::optional<double> trial_end;

    [[nodiscard]] std::size_t unit_count() const noexcept { return units.size(); }
    /// Throws std::invalid_argument on unsorted timestamps or misordered markers.
    void validate() const;
};

inline constexpr double kSegmentBefore = 0.5;
inline constexpr double kSegmentAfter = 1.5;
inline constexpr double kBinWindow = 0.100;
inline constexpr double kBinStride = 0.025;

/// Keeps spikes in [AO_start - 0.5, AO_start + 1.5), shifted so the segment
/// starts at 0. Markers are shifted the same way.
[[nodiscard]] SpikeTrain segment_trial(const SpikeTrain& spikes);

/// N x T counts; bin t covers [t * stride, t * stride + window).
[[nodiscard]] Eigen::MatrixXi bin_spikes(const SpikeTrain& spikes, double window = kBinWindow,
                                         double stride = kBinStride);
[[nodiscard]] int bin_count(double length, double window = kBinWindow, double stride = kBinStride);

struct Trial {
    Eigen::MatrixXi counts;
    int label = 0;
    /// Row-major flattening of counts.
    [[nodiscard]] Vec flattened() const;
};

/// Class hierarchy. Each class has a top-down path of ancestor tags, the
/// first of which is its movement (or mouth) group.
struct Taxonomy {
    std::string name;
    std::vector<std::string> classes;
    std::vector<std::vector<std::string>> paths;
    std::vector<std::string> manners;  ///< per class, empty when untagged

    [[nodiscard]] std::size_t size() const noexcept { return classes.size(); }
    [[nodiscard]] const std::string& group_of(std::size_t cls) const { return paths.at(cls).front(); }
    [[nodiscard]] int index_of(const std::string& cls) const;
    /// Group index per class (groups numbered by first appearance).
    [[nodiscard]] std::vector<int> group_ids() const;
    [[nodiscard]] std::vector<std::string> group_names() const;
    /// Throws std::invalid_argument unless every class has a nonempty path of
    /// the same length and names are unique.
    void validate() const;
};

/// "consonant21" or "vowel_mouth4" (classes_per_group vowels per mouth group).
[[nodiscard]] Taxonomy builtin_taxonomy(const std::string& kind, int classes_per_group = 6);
[[nodiscard]] std::vector<std::string> builtin_taxonomy_kinds();
/// Complete binary hierarchy with 2^levels classes named c0, c1, ...
[[nodiscard]] Taxonomy binary_taxonomy(int levels);

/// Feature-vector dataset: flattened N x T trials with labels.
struct Dataset {
    int n_units = 0;
    int n_bins = 0;
    std::vector<std::string> classes;
    /// Optional per-class ancestor paths (same layout as Taxonomy::paths).
    std::vector<std::vector<std::string>> paths;
    std::vector<Vec> features;
    std::vector<int> labels;
    /// True when every feature is a nonnegative integer spike count.
    bool integral = false;

    [[nodiscard]] std::size_t size() const noexcept { return features.size(); }
    [[nodiscard]] int input_dim() const noexcept { return n_units * n_bins; }
    [[nodiscard]] int num_classes() const noexcept { return static_cast<int>(classes.size()); }
    [[nodiscard]] std::vector<int> class_counts() const;
    /// Position of each trial among the trials of its class.
    [[nodiscard]] std::vector<int> within_class_index() const;
    [[nodiscard]] Dataset subset(const std::vector<std::size_t>& indices) const;
    /// Group index per class from the first path element; empty without paths.
    [[nodiscard]] std::vector<int> class_groups() const;
    void validate() const;
};

struct SyntheticSpec {
    Taxonomy taxonomy = builtin_taxonomy("consonant21");
    int trials_per_class = 20;
    int feature_dim = 50;
    /// Diffusion step per tree level, from the top split down to the leaves.
    std::vector<double> level_scales{1.0, 0.6, 0.4};
    double noise_sigma = 1.0;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Class means from a top-down Gaussian diffusion over the taxonomy, trials
/// as class mean plus isotropic noise. Features are stored as one unit with
/// feature_dim bins.
[[nodiscard]] Dataset generate_synthetic(const SyntheticSpec& spec);
[[nodiscard]] std::vector<Vec> synthetic_class_means(const SyntheticSpec& spec);

[[nodiscard]] std::string dataset_to_json_text(const Dataset& d);
[[nodiscard]] Dataset dataset_from_json_text(const std::string& text);
void save_dataset(const Dataset& d, const std::filesystem::path& path);
[[nodiscard]] Dataset load_dataset(const std::filesystem::path& path);

/// Reads `unit,timestamp` spikes and `trial,prompt,go,ao_start,ao_end,end`
/// markers (optionally followed by a `label` column) and returns one binned
/// trial per marker row.
[[nodiscard]] Dataset ingest_csv(const std::filesystem::path& spikes_csv, const std::filesystem::path& markers_csv);

}  // namespace hyrep
