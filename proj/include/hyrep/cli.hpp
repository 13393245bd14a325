// Command-line front end: verb dispatch over the library.

#pragma once

#include "hyrep/data.hpp"
#include "hyrep/eval.hpp"
#include "hyrep/optim.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace hyrep::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 64;
inline constexpr int kExitConfig = 65;
inline constexpr int kExitRuntime = 70;

/// Every setting a command can read: training keys plus `data.*`, `eval.*`,
/// `distortion.*` and `mine.*` keys.
struct RunConfig {
    TrainConfig train;
    std::string preset = "consonant21";
    SyntheticSpec synthetic;
    int classes_per_group = 6;
    EvalOptions eval;
    int distortion_runs = 100;
    int mine_runs = 20;
    double mine_threshold = 0.5;
    int mine_datasets = 1;

    /// Throws ConfigError for unknown keys or bad values.
    void set(const std::string& key, const std::string& value);
    /// Rebuilds the synthetic spec's taxonomy after preset changes.
    void finalize();
};

[[nodiscard]] std::vector<std::string> verbs();
[[nodiscard]] std::string usage();

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

}  // namespace hyrep::cli
