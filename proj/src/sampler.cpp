#include "rfgen/sampler.hpp"

#include <algorithm>
#include <chrono>

namespace rfgen {

ImageF euler_integrate(const VelocityField& velocity, ImageF x, int n_steps) {
  if (n_steps < 1) throw ArgumentError("n_steps must be >= 1");
  const float dt = 1.0f / static_cast<float>(n_steps);
  for (int k = 0; k < n_steps; ++k) {
    const double t = static_cast<double>(k) / n_steps;
    const ImageF v = velocity(x, t);
    if (!v.same_shape(x)) throw SamplingError(k, "velocity shape mismatch");
    x.data += dt * v.data;
    if (!x.data.allFinite()) throw SamplingError(k, "non-finite state");
  }
  return x;
}

ImageF sampling_noise(const ModelConfig& config, std::uint64_t seed) {
  return standard_normal_image(config.image_width, config.image_height, 3, seed);
}

ImageF euler_sample(const FlowModel& model, const ConditioningBundle& cond, const SampleSpec& spec) {
  if (spec.n_steps < 1) throw ArgumentError("n_steps must be >= 1");
  const auto& cfg = model.config();
  if (cond.spatial.width != cfg.image_width || cond.spatial.height != cfg.image_height ||
      cond.spatial.channels() != cfg.spatial_channels()) {
    throw ArgumentError("conditioning shape does not match checkpoint config");
  }
  ImageF x0 = spec.initial_noise ? *spec.initial_noise : sampling_noise(cfg, spec.seed);
  if (x0.width != cfg.image_width || x0.height != cfg.image_height || x0.channels() != 3) {
    throw ArgumentError("initial noise shape does not match checkpoint config");
  }
  ImageF x = euler_integrate([&](const ImageF& xt, double t) { return model.velocity(xt, t, cond); }, std::move(x0),
                             spec.n_steps);
  x.data = x.data.cwiseMax(0.0f).cwiseMin(1.0f);
  return x;
}

StepSweep step_sweep(const FlowModel& model, const ConditioningBundle& cond, const std::vector<int>& steps,
                     std::uint64_t seed) {
  if (steps.empty()) throw ArgumentError("step_sweep: empty step list");
  StepSweep out;
  out.steps = steps;
  const ImageF noise = sampling_noise(model.config(), seed);
  for (int n : steps) {
    SampleSpec spec{n, seed, noise};
    const auto t0 = std::chrono::steady_clock::now();
    out.images.push_back(euler_sample(model, cond, spec));
    out.seconds.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  const auto ref = static_cast<std::size_t>(std::max_element(steps.begin(), steps.end()) - steps.begin());
  for (const auto& img : out.images) {
    out.mse_to_reference.push_back((img.data - out.images[ref].data).cast<double>().squaredNorm() /
                                   static_cast<double>(img.data.size()));
  }
  return out;
}

}  // namespace rfgen
