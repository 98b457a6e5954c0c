#pragma once

#include <cstdint>
#include <optional>
#include <random>

#include "rfgen/layers.hpp"
#include "rfgen/model_config.hpp"
#include "rfgen/treatment.hpp"

namespace rfgen {

enum class InitMode {
  Training,  // scaled uniform weights, zero biases, zero output layer
  Random,    // every tensor random, including biases and the output layer
  Zero,
};

template <typename T>
struct ForwardTape {
  nn::Vec<T> time_features, time_hidden, time_embed, time_act;
  nn::Vec<T> context_features, chemo_onehot;
  nn::Mat<T> tokens;
  nn::ConvCache<T> in_conv, out_conv;
  nn::ResBlockCache<T> down0, down1, down2, mid, up1, up0;
  nn::AttentionCache<T> attn_down0, attn_down1, attn_down2, attn_up1, attn_up0;
  nn::Mat<T> up0_out;
};

/// Three-level conditional U-Net predicting the flow velocity. Holds only the
/// architecture; weights live in a ParamStore so the same net runs in float
/// (training, inference) and double (gradient verification).
class VelocityNet {
 public:
  explicit VelocityNet(ModelConfig config);

  const ModelConfig& config() const { return config_; }

  template <typename T>
  ParamStore<T> layout() const {
    return layout_.cast<T>();
  }

  template <typename T>
  ParamStore<T> init(std::uint64_t seed, InitMode mode) const;

  /// Context tokens (context_dim x n): projected days embedding, then the
  /// projected one-hot chemo code when chemo conditioning is on.
  template <typename T>
  nn::Mat<T> context_tokens(const ParamStore<T>& p, const TreatmentContext& ctx, ForwardTape<T>* tape = nullptr) const;

  /// `x_t` is 3 x pixels, `spatial` is spatial_channels x pixels.
  template <typename T>
  nn::Mat<T> forward(const ParamStore<T>& p, const nn::Mat<T>& x_t, T t, const nn::Mat<T>& spatial,
                     const TreatmentContext& ctx, ForwardTape<T>& tape) const;

  template <typename T>
  nn::Mat<T> forward(const ParamStore<T>& p, const nn::Mat<T>& x_t, T t, const nn::Mat<T>& spatial,
                     const TreatmentContext& ctx) const {
    ForwardTape<T> tape;
    return forward(p, x_t, t, spatial, ctx, tape);
  }

  template <typename T>
  void backward(const ParamStore<T>& p, const ForwardTape<T>& tape, const nn::Mat<T>& dout,
                ParamStore<T>& grad) const;

 private:
  ModelConfig config_;
  ParamStore<float> layout_;
  nn::Grid g0_, g1_, g2_;

  nn::Linear time1_, time2_, ctx_time_, ctx_chemo_;
  nn::Conv2d in_conv_, out_conv_;
  nn::ResBlock down0_, down1_, down2_, mid_, up1_, up0_;
  std::optional<nn::CrossAttention> attn_down0_, attn_down1_, attn_down2_, attn_up1_, attn_up0_;
};

// ---------------------------------------------------------------------------

inline VelocityNet::VelocityNet(ModelConfig config) : config_(std::move(config)) {
  config_.validate();
  const auto& c = config_;
  const auto [w0, w1, w2] = c.widths;
  auto& s = layout_;
  g0_ = {c.image_height, c.image_width};
  g1_ = g0_.half();
  g2_ = g1_.half();

  time1_ = nn::Linear::create(s, "time.mlp1", c.time_embed_dim, c.time_hidden_dim);
  time2_ = nn::Linear::create(s, "time.mlp2", c.time_hidden_dim, c.time_hidden_dim);
  ctx_time_ = nn::Linear::create(s, "context.days", c.context_embed_dim, c.context_dim);
  if (c.use_chemo) ctx_chemo_ = nn::Linear::create(s, "context.chemo", kChemoCount, c.context_dim);

  auto attention = [&](int level, const std::string& name, int width) -> std::optional<nn::CrossAttention> {
    if (!c.has_attention(level)) return std::nullopt;
    return nn::CrossAttention::create(s, name, width, c.context_dim, c.heads);
  };

  in_conv_ = nn::Conv2d::create(s, "in_conv", c.input_channels(), w0, 3);
  down0_ = nn::ResBlock::create(s, "down0", w0, w0, c.time_hidden_dim);
  attn_down0_ = attention(0, "down0.attn", w0);
  down1_ = nn::ResBlock::create(s, "down1", w0, w1, c.time_hidden_dim);
  attn_down1_ = attention(1, "down1.attn", w1);
  down2_ = nn::ResBlock::create(s, "down2", w1, w2, c.time_hidden_dim);
  attn_down2_ = attention(2, "down2.attn", w2);
  mid_ = nn::ResBlock::create(s, "mid", w2, w2, c.time_hidden_dim);
  up1_ = nn::ResBlock::create(s, "up1", w2 + w1, w1, c.time_hidden_dim);
  attn_up1_ = attention(1, "up1.attn", w1);
  up0_ = nn::ResBlock::create(s, "up0", w1 + w0, w0, c.time_hidden_dim);
  attn_up0_ = attention(0, "up0.attn", w0);
  out_conv_ = nn::Conv2d::create(s, "out_conv", w0, 3, 3);
}

template <typename T>
ParamStore<T> VelocityNet::init(std::uint64_t seed, InitMode mode) const {
  ParamStore<T> p = layout<T>();
  if (mode == InitMode::Zero) return p;
  std::mt19937_64 rng(seed);
  for (int i = 0; i < p.size(); ++i) {
    auto& t = p[i];
    const std::string& name = p.name(i);
    const bool is_bias = name.size() >= 4 && name.compare(name.size() - 4, 4, "bias") == 0;
    const bool is_output = name.rfind("out_conv", 0) == 0;
    if (mode == InitMode::Training && (is_bias || is_output)) continue;
    // Biases borrow the fan-in of their layer's weight (registered just before).
    const auto fan_in = static_cast<double>(is_bias && i > 0 ? p[i - 1].cols() : t.cols());
    std::uniform_real_distribution<double> u(-std::sqrt(3.0 / fan_in), std::sqrt(3.0 / fan_in));
    for (Eigen::Index k = 0; k < t.size(); ++k) t.data()[k] = static_cast<T>(u(rng));
  }
  return p;
}

template <typename T>
nn::Mat<T> VelocityNet::context_tokens(const ParamStore<T>& p, const TreatmentContext& ctx,
                                       ForwardTape<T>* tape) const {
  ctx.validate();
  const int n = config_.use_chemo ? 2 : 1;
  nn::Mat<T> tokens(config_.context_dim, n);
  const T days = static_cast<T>(ctx.days_since_baseline / kMaxDays);
  nn::Vec<T> features = nn::sinusoidal_embedding<T>(days, config_.context_embed_dim);
  tokens.col(0) = ctx_time_.forward(p, features);
  nn::Vec<T> onehot = nn::Vec<T>::Zero(kChemoCount);
  if (config_.use_chemo) {
    onehot(static_cast<int>(ctx.chemo)) = T(1);
    tokens.col(1) = ctx_chemo_.forward(p, onehot);
  }
  if (tape) {
    tape->context_features = std::move(features);
    tape->chemo_onehot = std::move(onehot);
  }
  return tokens;
}

template <typename T>
nn::Mat<T> VelocityNet::forward(const ParamStore<T>& p, const nn::Mat<T>& x_t, T t, const nn::Mat<T>& spatial,
                                const TreatmentContext& ctx, ForwardTape<T>& tape) const {
  const auto& c = config_;
  if (x_t.rows() != 3 || x_t.cols() != g0_.pixels()) throw ArgumentError("velocity_forward: x_t shape mismatch");
  if (spatial.rows() != c.spatial_channels() || spatial.cols() != g0_.pixels()) {
    throw ArgumentError("velocity_forward: spatial conditioning shape mismatch");
  }

  tape.time_features = nn::sinusoidal_embedding<T>(t, c.time_embed_dim);
  tape.time_hidden = time1_.forward(p, tape.time_features);
  tape.time_embed = time2_.forward(p, nn::silu(tape.time_hidden));
  tape.time_act = nn::silu(tape.time_embed);
  tape.tokens = context_tokens(p, ctx, &tape);

  nn::Mat<T> input(c.input_channels(), g0_.pixels());
  input << x_t, spatial;
  nn::Mat<T> h = in_conv_.forward(p, input, g0_, tape.in_conv);
  nn::check_finite(h, "in_conv");

  nn::Mat<T> s0 = down0_.forward(p, h, g0_, tape.time_act, tape.down0);
  if (attn_down0_) s0 = attn_down0_->forward(p, s0, tape.tokens, tape.attn_down0);
  nn::Mat<T> s1 = down1_.forward(p, nn::avg_pool2(s0, g0_), g1_, tape.time_act, tape.down1);
  if (attn_down1_) s1 = attn_down1_->forward(p, s1, tape.tokens, tape.attn_down1);
  nn::Mat<T> b = down2_.forward(p, nn::avg_pool2(s1, g1_), g2_, tape.time_act, tape.down2);
  if (attn_down2_) b = attn_down2_->forward(p, b, tape.tokens, tape.attn_down2);
  b = mid_.forward(p, b, g2_, tape.time_act, tape.mid);

  nn::Mat<T> cat1(b.rows() + s1.rows(), g1_.pixels());
  cat1 << nn::upsample2(b, g2_), s1;
  nn::Mat<T> d1 = up1_.forward(p, cat1, g1_, tape.time_act, tape.up1);
  if (attn_up1_) d1 = attn_up1_->forward(p, d1, tape.tokens, tape.attn_up1);

  nn::Mat<T> cat0(d1.rows() + s0.rows(), g0_.pixels());
  cat0 << nn::upsample2(d1, g1_), s0;
  tape.up0_out = up0_.forward(p, cat0, g0_, tape.time_act, tape.up0);
  if (attn_up0_) tape.up0_out = attn_up0_->forward(p, tape.up0_out, tape.tokens, tape.attn_up0);

  nn::Mat<T> out = out_conv_.forward(p, nn::silu(tape.up0_out), g0_, tape.out_conv);
  nn::check_finite(out, "out_conv");
  return out;
}

template <typename T>
void VelocityNet::backward(const ParamStore<T>& p, const ForwardTape<T>& tape, const nn::Mat<T>& dout,
                           ParamStore<T>& grad) const {
  const auto [w0, w1, w2] = config_.widths;
  nn::Vec<T> dtime_act = nn::Vec<T>::Zero(config_.time_hidden_dim);
  nn::Mat<T> dtokens = nn::Mat<T>::Zero(tape.tokens.rows(), tape.tokens.cols());

  nn::Mat<T> dd0 = nn::silu_backward(tape.up0_out, out_conv_.backward(p, grad, tape.out_conv, dout, g0_));
  if (attn_up0_) dd0 = attn_up0_->backward(p, grad, tape.attn_up0, dd0, dtokens);
  const nn::Mat<T> dcat0 = up0_.backward(p, grad, tape.up0, dd0, g0_, tape.time_act, dtime_act);
  nn::Mat<T> ds0 = dcat0.bottomRows(w0);

  nn::Mat<T> dd1 = nn::upsample2_backward<T>(dcat0.topRows(w1), g1_);
  if (attn_up1_) dd1 = attn_up1_->backward(p, grad, tape.attn_up1, dd1, dtokens);
  const nn::Mat<T> dcat1 = up1_.backward(p, grad, tape.up1, dd1, g1_, tape.time_act, dtime_act);
  nn::Mat<T> ds1 = dcat1.bottomRows(w1);

  nn::Mat<T> db = nn::upsample2_backward<T>(dcat1.topRows(w2), g2_);
  db = mid_.backward(p, grad, tape.mid, db, g2_, tape.time_act, dtime_act);
  if (attn_down2_) db = attn_down2_->backward(p, grad, tape.attn_down2, db, dtokens);
  const nn::Mat<T> dp2 = down2_.backward(p, grad, tape.down2, db, g2_, tape.time_act, dtime_act);

  ds1 += nn::avg_pool2_backward(dp2, g1_);
  if (attn_down1_) ds1 = attn_down1_->backward(p, grad, tape.attn_down1, ds1, dtokens);
  const nn::Mat<T> dp1 = down1_.backward(p, grad, tape.down1, ds1, g1_, tape.time_act, dtime_act);

  ds0 += nn::avg_pool2_backward(dp1, g0_);
  if (attn_down0_) ds0 = attn_down0_->backward(p, grad, tape.attn_down0, ds0, dtokens);
  const nn::Mat<T> dh = down0_.backward(p, grad, tape.down0, ds0, g0_, tape.time_act, dtime_act);
  in_conv_.backward(p, grad, tape.in_conv, dh, g0_);

  const nn::Vec<T> dtime_embed = nn::silu_backward(tape.time_embed, dtime_act);
  const nn::Vec<T> dhidden_act = time2_.backward(p, grad, nn::silu(tape.time_hidden), dtime_embed);
  time1_.backward(p, grad, tape.time_features, nn::silu_backward(tape.time_hidden, dhidden_act));

  ctx_time_.backward(p, grad, tape.context_features, nn::Vec<T>(dtokens.col(0)));
  if (config_.use_chemo) ctx_chemo_.backward(p, grad, tape.chemo_onehot, nn::Vec<T>(dtokens.col(1)));
}

}  // namespace rfgen
