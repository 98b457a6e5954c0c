#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "rfgen/phantom.hpp"
#include "rfgen/unet.hpp"

namespace rfgen {

/// Dose maps are scaled by the context multiplier after cohort
/// normalization and clipped to this ceiling.
inline constexpr float kMaxScaledDose = 1.2f;

/// Spatial part is concatenated with x_t on the channel axis; the treatment
/// context is embedded into cross-attention tokens by the network.
struct ConditioningBundle {
  ImageF spatial;
  TreatmentContext context;
};

ConditioningBundle build_conditioning(const PhantomRecord& record, const TreatmentContext& ctx, const ModelConfig& config);

struct TrainingMeta {
  int epoch = 0;  // epoch of the selected weights (0 = initialization)
  std::uint64_t seed = 0;
  std::vector<double> train_loss;
  std::vector<double> val_loss;
  nlohmann::json extra = nlohmann::json::object();  // hyperparameters, split, ...
};

struct ModelCheckpoint {
  ModelConfig config;
  ParamStore<float> weights;
  TrainingMeta meta;
};

ModelCheckpoint initial_checkpoint(const ModelConfig& config, std::uint64_t seed, InitMode mode = InitMode::Training);

void save_checkpoint(const std::filesystem::path& path, const ModelCheckpoint& ckpt);
ModelCheckpoint load_checkpoint(const std::filesystem::path& path);
std::string encode_checkpoint(const ModelCheckpoint& ckpt);
ModelCheckpoint decode_checkpoint(const std::string& bytes);

/// A checkpoint bound to its architecture; read-only and safe to share
/// across threads.
class FlowModel {
 public:
  explicit FlowModel(ModelCheckpoint ckpt) : ckpt_(std::move(ckpt)), net_(ckpt_.config) {}

  const ModelCheckpoint& checkpoint() const { return ckpt_; }
  const ModelConfig& config() const { return ckpt_.config; }
  const VelocityNet& net() const { return net_; }

  ImageF velocity(const ImageF& x_t, double t, const ConditioningBundle& cond) const;

 private:
  ModelCheckpoint ckpt_;
  VelocityNet net_;
};

ImageF velocity_forward(const ModelCheckpoint& ckpt, const ImageF& x_t, double t, const ConditioningBundle& cond);

/// x_t = (1 - t) x0 + t x1.
template <typename Derived>
auto flow_interpolate(const Eigen::MatrixBase<Derived>& x0, const Eigen::MatrixBase<Derived>& x1,
                      typename Derived::Scalar t) {
  using T = typename Derived::Scalar;
  return ((T(1) - t) * x0 + t * x1).eval();
}

template <typename T>
struct LossResult {
  T loss = 0;
  ParamStore<T> grad;
};

/// MAE between predicted and true velocity (x1 - x0) at a given noise draw
/// and time, with exact gradients. sign(0) is taken as 0.
template <typename T>
LossResult<T> rf_loss_at(const VelocityNet& net, const ParamStore<T>& p, const nn::Mat<T>& x1, const nn::Mat<T>& x0,
                         T t, const nn::Mat<T>& spatial, const TreatmentContext& ctx) {
  ForwardTape<T> tape;
  const nn::Mat<T> x_t = flow_interpolate(x0, x1, t);
  const nn::Mat<T> v = net.forward(p, x_t, t, spatial, ctx, tape);
  const nn::Mat<T> residual = v - (x1 - x0);
  const T n = static_cast<T>(residual.size());
  LossResult<T> out;
  out.loss = residual.cwiseAbs().sum() / n;
  const nn::Mat<T> dout = residual.unaryExpr([n](T r) { return r > 0 ? T(1) / n : (r < 0 ? T(-1) / n : T(0)); });
  out.grad = p.zeros_like();
  net.backward(p, tape, dout, out.grad);
  return out;
}

/// Standard-normal noise with the given shape, deterministic in `seed`.
ImageF standard_normal_image(int width, int height, int channels, std::uint64_t seed);

/// Samples x0 ~ N(0, I) and t ~ U(0, 1) from `rng`, then evaluates rf_loss_at.
LossResult<float> rf_loss(const VelocityNet& net, const ParamStore<float>& p, const ImageF& x1,
                          const ConditioningBundle& cond, std::mt19937_64& rng);

}  // namespace rfgen
