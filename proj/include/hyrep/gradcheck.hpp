// Finite-difference verification of the tape primitives and of the full
// training objective. Shared by the unit tests, the acceptance suite and the
// `gradcheck` command.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace hyrep {

struct GradcheckResult {
    std::string name;
    double max_rel_error = 0.0;
    int points = 0;
};

/// Checks every differentiable primitive at `points` random evaluation points
/// bounded away from its singularities.
[[nodiscard]] std::vector<GradcheckResult> primitive_gradchecks(std::uint64_t seed, int points = 100,
                                                                double h = 1e-6);

/// Checks the joint objective (classification + clustering) of a small
/// randomly initialised model on a `batch`-sample batch, for both spaces.
[[nodiscard]] std::vector<GradcheckResult> joint_loss_gradchecks(std::uint64_t seed, int batch = 10,
                                                                 double h = 1e-6);

}  // namespace hyrep
