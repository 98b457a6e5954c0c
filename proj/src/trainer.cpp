#include "rfgen/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "rfgen/parallel.hpp"

namespace rfgen {

using nlohmann::json;

void TrainHyper::validate() const {
  if (batch < 1 || grad_accum < 1 || epochs < 0 || steps_per_epoch < 1 || val_samples < 0 || threads < 1) {
    throw ArgumentError("training hyperparameters must be positive");
  }
  if (!(lr > 0) || !(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1) || !(adam_eps > 0)) {
    throw ArgumentError("invalid optimizer hyperparameters");
  }
  if (!(dose_scale_min > 0) || dose_scale_max < dose_scale_min) throw ArgumentError("invalid dose_scale range");
  if (!(ema_decay >= 0 && ema_decay < 1)) throw ArgumentError("ema_decay must be in [0, 1)");
  if (!(lr_min_ratio >= 0 && lr_min_ratio <= 1)) throw ArgumentError("lr_min_ratio must be in [0, 1]");
}

json to_json(const TrainHyper& h) {
  return {{"batch", h.batch},         {"grad_accum", h.grad_accum},   {"lr", h.lr},
          {"epochs", h.epochs},       {"steps_per_epoch", h.steps_per_epoch}, {"seed", h.seed},
          {"val_samples", h.val_samples}, {"beta1", h.beta1},         {"beta2", h.beta2},
          {"adam_eps", h.adam_eps},   {"grad_clip", h.grad_clip},     {"dose_scale_min", h.dose_scale_min},
          {"dose_scale_max", h.dose_scale_max}, {"threads", h.threads},
          {"ema_decay", h.ema_decay}, {"cosine_lr", h.cosine_lr}, {"lr_min_ratio", h.lr_min_ratio}};
}

TrainHyper train_hyper_from_json(const json& j) {
  TrainHyper h;
  try {
    h.batch = j.value("batch", h.batch);
    h.grad_accum = j.value("grad_accum", h.grad_accum);
    h.lr = j.value("lr", h.lr);
    h.epochs = j.value("epochs", h.epochs);
    h.steps_per_epoch = j.value("steps_per_epoch", h.steps_per_epoch);
    h.seed = j.value("seed", h.seed);
    h.val_samples = j.value("val_samples", h.val_samples);
    h.beta1 = j.value("beta1", h.beta1);
    h.beta2 = j.value("beta2", h.beta2);
    h.adam_eps = j.value("adam_eps", h.adam_eps);
    h.grad_clip = j.value("grad_clip", h.grad_clip);
    h.dose_scale_min = j.value("dose_scale_min", h.dose_scale_min);
    h.dose_scale_max = j.value("dose_scale_max", h.dose_scale_max);
    h.threads = j.value("threads", h.threads);
    h.ema_decay = j.value("ema_decay", h.ema_decay);
    h.cosine_lr = j.value("cosine_lr", h.cosine_lr);
    h.lr_min_ratio = j.value("lr_min_ratio", h.lr_min_ratio);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("training config: ") + e.what());
  }
  h.validate();
  return h;
}

CohortSplit split_cohort(const std::vector<PhantomRecord>& records, std::uint64_t seed) {
  const int n = static_cast<int>(records.size());
  const int held = std::max(1, static_cast<int>(std::lround(n * 2.0 / 25.0)));
  if (n < 2 * held + 1) throw ArgumentError("cohort too small for a train/val/test split");

  std::vector<std::string> diseased, healthy;
  for (const auto& r : records) (r.label == SliceLabel::Diseased ? diseased : healthy).push_back(r.id);
  std::mt19937_64 rng(seed);
  std::shuffle(diseased.begin(), diseased.end(), rng);
  std::shuffle(healthy.begin(), healthy.end(), rng);

  // Deal held-out patients alternately from the two label pools.
  auto take = [&](int count) {
    std::vector<std::string> out;
    for (int k = 0; static_cast<int>(out.size()) < count; ++k) {
      auto& first = (k % 2 == 0) ? diseased : healthy;
      auto& second = (k % 2 == 0) ? healthy : diseased;
      auto& pool = first.empty() ? second : first;
      if (pool.empty()) break;
      out.push_back(pool.back());
      pool.pop_back();
    }
    return out;
  };
  CohortSplit s;
  s.test = take(held);
  s.val = take(held);
  for (const auto& r : records) {
    const bool held_out = std::count(s.test.begin(), s.test.end(), r.id) || std::count(s.val.begin(), s.val.end(), r.id);
    if (!held_out) s.train.push_back(r.id);
  }
  return s;
}

std::vector<PhantomRecord> select_records(const std::vector<PhantomRecord>& records, const std::vector<std::string>& ids) {
  std::vector<PhantomRecord> out;
  for (const auto& id : ids) {
    const auto it = std::find_if(records.begin(), records.end(), [&](const PhantomRecord& r) { return r.id == id; });
    if (it == records.end()) throw ArgumentError("unknown record id: " + id);
    out.push_back(*it);
  }
  return out;
}

json to_json(const CohortSplit& s) { return {{"train", s.train}, {"val", s.val}, {"test", s.test}}; }

CohortSplit split_from_json(const json& j) {
  return {j.at("train").get<std::vector<std::string>>(), j.at("val").get<std::vector<std::string>>(),
          j.at("test").get<std::vector<std::string>>()};
}

TrainingDraw draw_training_sample(const PhantomRecord& record, const TrainHyper& hyper, std::mt19937_64& rng) {
  TrainingDraw d;
  d.record = &record;
  if (record.followup_days.empty()) {
    d.context.days_since_baseline = std::uniform_int_distribution<int>(0, static_cast<int>(kMaxDays))(rng);
  } else {
    const auto k = std::uniform_int_distribution<std::size_t>(0, record.followup_days.size() - 1)(rng);
    d.context.days_since_baseline = record.followup_days[k];
  }
  d.context.chemo = static_cast<Chemo>(std::uniform_int_distribution<int>(0, kChemoCount - 1)(rng));
  d.context.dose_scale = std::uniform_real_distribution<double>(hyper.dose_scale_min, hyper.dose_scale_max)(rng);
  d.noise_seed = rng();
  d.t = std::uniform_real_distribution<float>(0.0f, 1.0f)(rng);
  return d;
}

Adam::Adam(const ParamStore<float>& like, double lr, double beta1, double beta2, double eps)
    : m_(like.zeros_like()), v_(like.zeros_like()), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void Adam::step(ParamStore<float>& w, const ParamStore<float>& g) {
  ++t_;
  const float b1 = static_cast<float>(beta1_), b2 = static_cast<float>(beta2_);
  const float c1 = static_cast<float>(1.0 - std::pow(beta1_, t_));
  const float c2 = static_cast<float>(1.0 - std::pow(beta2_, t_));
  const float lr = static_cast<float>(lr_), eps = static_cast<float>(eps_);
  for (int i = 0; i < w.size(); ++i) {
    m_[i] = b1 * m_[i] + (1 - b1) * g[i];
    v_[i] = b2 * v_[i] + (1 - b2) * g[i].cwiseProduct(g[i]);
    w[i].array() -= lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps);
  }
}

namespace {

struct DrawResult {
  float loss = 0;
  ParamStore<float> grad;
};

DrawResult evaluate_draw(const VelocityNet& net, const ParamStore<float>& w, const TrainingDraw& d, bool with_grad) {
  const auto& cfg = net.config();
  const ImageF x1 = oracle_followup(*d.record, d.context);
  const ConditioningBundle cond = build_conditioning(*d.record, d.context, cfg);
  const ImageF x0 = standard_normal_image(x1.width, x1.height, 3, d.noise_seed);
  if (with_grad) {
    auto r = rf_loss_at<float>(net, w, x1.data, x0.data, d.t, cond.spatial.data, d.context);
    return {r.loss, std::move(r.grad)};
  }
  const nn::Mat<float> x_t = flow_interpolate(x0.data, x1.data, d.t);
  const nn::Mat<float> v = net.forward<float>(w, x_t, d.t, cond.spatial.data, d.context);
  return {(v - (x1.data - x0.data)).cwiseAbs().mean(), {}};
}

/// Evaluates draws on `threads` workers; results land in draw order.
std::vector<DrawResult> evaluate_draws(const VelocityNet& net, const ParamStore<float>& w,
                                       const std::vector<TrainingDraw>& draws, bool with_grad, int threads) {
  std::vector<DrawResult> out(draws.size());
  parallel_for(draws.size(), threads, [&](std::size_t i) { out[i] = evaluate_draw(net, w, draws[i], with_grad); });
  return out;
}

}  // namespace

ModelCheckpoint train(const std::vector<PhantomRecord>& cohort, const ModelConfig& config, const TrainHyper& hyper,
                      const ProgressFn& progress) {
  if (cohort.empty()) throw ArgumentError("train: empty cohort");
  hyper.validate();
  const VelocityNet net(config);
  const CohortSplit split = split_cohort(cohort, hyper.seed);
  const auto train_records = select_records(cohort, split.train);
  const auto val_records = select_records(cohort, split.val);

  ModelCheckpoint ckpt = initial_checkpoint(config, hyper.seed);
  ckpt.meta.extra = {{"hyper", to_json(hyper)}, {"split", to_json(split)}, {"best_val_loss", nullptr}};
  if (hyper.epochs == 0) return ckpt;

  std::mt19937_64 rng(hyper.seed);
  BalancedSampler sampler(train_records, rng());

  std::vector<TrainingDraw> val_draws;
  {
    std::mt19937_64 vrng(hyper.seed ^ 0x9e3779b97f4a7c15ULL);
    for (int i = 0; i < hyper.val_samples && !val_records.empty(); ++i) {
      val_draws.push_back(draw_training_sample(val_records[static_cast<std::size_t>(i) % val_records.size()], hyper, vrng));
    }
  }

  ParamStore<float> weights = ckpt.weights;
  Adam adam(weights, hyper.lr, hyper.beta1, hyper.beta2, hyper.adam_eps);
  ParamStore<float> ema = weights;
  ParamStore<float> grad = weights.zeros_like();
  const int per_step = hyper.batch * hyper.grad_accum;
  const long total_steps = static_cast<long>(hyper.epochs) * hyper.steps_per_epoch;
  long global_step = 0;
  double best = std::numeric_limits<double>::infinity();

  for (int epoch = 1; epoch <= hyper.epochs; ++epoch) {
    double epoch_loss = 0;
    try {
      for (int step = 0; step < hyper.steps_per_epoch; ++step) {
        grad.set_zero();
        double step_loss = 0;
        for (int micro = 0; micro < hyper.grad_accum; ++micro) {
          std::vector<TrainingDraw> draws;
          for (int b = 0; b < hyper.batch; ++b) draws.push_back(draw_training_sample(sampler.next(), hyper, rng));
          const auto results = evaluate_draws(net, weights, draws, true, hyper.threads);
          for (const auto& r : results) {
            grad.add_scaled(r.grad, 1.0f / static_cast<float>(per_step));
            step_loss += r.loss;
          }
        }
        step_loss /= per_step;
        if (!std::isfinite(step_loss) || !grad.all_finite()) throw TrainingError(epoch, "loss diverged");
        if (hyper.grad_clip > 0) {
          const double norm = std::sqrt(static_cast<double>(grad.squared_norm()));
          if (norm > hyper.grad_clip) grad.scale(static_cast<float>(hyper.grad_clip / norm));
        }
        if (hyper.cosine_lr) {
          const double progress_frac = static_cast<double>(global_step) / static_cast<double>(total_steps);
          const double ratio = hyper.lr_min_ratio + (1 - hyper.lr_min_ratio) * 0.5 * (1 + std::cos(std::numbers::pi * progress_frac));
          adam.set_lr(hyper.lr * ratio);
        }
        adam.step(weights, grad);
        ++global_step;
        if (hyper.ema_decay > 0) {
          // Short warmup so early evaluations are not dominated by the init.
          const double d = std::min(hyper.ema_decay, (1.0 + global_step) / (10.0 + global_step));
          ema.lerp_toward(weights, static_cast<float>(1 - d));
        } else {
          ema = weights;
        }
        epoch_loss += step_loss;
      }
    } catch (const NumericError& e) {
      throw TrainingError(epoch, e.what());
    }
    epoch_loss /= hyper.steps_per_epoch;

    double val_loss = epoch_loss;
    if (!val_draws.empty()) {
      val_loss = 0;
      for (const auto& r : evaluate_draws(net, ema, val_draws, false, hyper.threads)) val_loss += r.loss;
      val_loss /= static_cast<double>(val_draws.size());
    }
    if (!std::isfinite(val_loss)) throw TrainingError(epoch, "validation loss is not finite");
    ckpt.meta.train_loss.push_back(epoch_loss);
    ckpt.meta.val_loss.push_back(val_loss);
    if (val_loss < best) {
      best = val_loss;
      ckpt.weights = ema;
      ckpt.meta.epoch = epoch;
      ckpt.meta.extra["best_val_loss"] = val_loss;
    }
    if (progress) progress(epoch, epoch_loss, val_loss);
  }
  return ckpt;
}

}  // namespace rfgen
