#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "rfgen/flow.hpp"

namespace rfgen {

struct SampleSpec {
  int n_steps = 4;
  std::uint64_t seed = 0;
  std::optional<ImageF> initial_noise;
};

/// v(x, t) for the noise -> image direction, t in [0, 1).
using VelocityField = std::function<ImageF(const ImageF& x, double t)>;

/// Plain Euler from t = 0 to t = 1 in `n_steps` equal steps, no clipping.
ImageF euler_integrate(const VelocityField& velocity, ImageF x, int n_steps);

/// Initial noise for a given shape and seed (shared by every counterfactual
/// cell that uses the same seed).
ImageF sampling_noise(const ModelConfig& config, std::uint64_t seed);

/// Euler sampling with the trained velocity; the result is clipped to [0, 1]
/// once, after the final step.
ImageF euler_sample(const FlowModel& model, const ConditioningBundle& cond, const SampleSpec& spec);

struct StepSweep {
  std::vector<int> steps;
  std::vector<ImageF> images;
  std::vector<double> mse_to_reference;  // against the largest step count
  std::vector<double> seconds;
};

StepSweep step_sweep(const FlowModel& model, const ConditioningBundle& cond, const std::vector<int>& steps,
                     std::uint64_t seed);

}  // namespace rfgen
