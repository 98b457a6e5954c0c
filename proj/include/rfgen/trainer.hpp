#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "rfgen/flow.hpp"

namespace rfgen {

struct TrainHyper {
  int batch = 8;
  int grad_accum = 2;
  double lr = 1e-3;
  int epochs = 120;
  int steps_per_epoch = 50;  // optimizer steps per epoch
  std::uint64_t seed = 0;
  int val_samples = 64;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double grad_clip = 1.0;  // global-norm clip, <= 0 disables
  double dose_scale_min = 0.7;
  double dose_scale_max = 1.3;
  int threads = 1;  // micro-batch workers; results do not depend on this
  double ema_decay = 0.999;  // 0 keeps the raw weights
  bool cosine_lr = true;
  double lr_min_ratio = 0.05;  // final lr as a fraction of lr

  void validate() const;
};

nlohmann::json to_json(const TrainHyper& h);
TrainHyper train_hyper_from_json(const nlohmann::json& j);

/// Patient-level split in the 21/2/2 proportions of a 25-patient cohort.
/// Validation and test each get one record of each label when available.
struct CohortSplit {
  std::vector<std::string> train, val, test;
};

CohortSplit split_cohort(const std::vector<PhantomRecord>& records, std::uint64_t seed);
std::vector<PhantomRecord> select_records(const std::vector<PhantomRecord>& records, const std::vector<std::string>& ids);
nlohmann::json to_json(const CohortSplit& s);
CohortSplit split_from_json(const nlohmann::json& j);

/// One training draw: which record, treatment, noise and flow time.
struct TrainingDraw {
  const PhantomRecord* record = nullptr;
  TreatmentContext context;
  std::uint64_t noise_seed = 0;
  float t = 0;
};

TrainingDraw draw_training_sample(const PhantomRecord& record, const TrainHyper& hyper, std::mt19937_64& rng);

/// Adam with bias correction over a whole ParamStore.
class Adam {
 public:
  Adam(const ParamStore<float>& like, double lr, double beta1, double beta2, double eps);
  void step(ParamStore<float>& weights, const ParamStore<float>& grad);
  void set_lr(double lr) { lr_ = lr; }

 private:
  ParamStore<float> m_, v_;
  double lr_, beta1_, beta2_, eps_;
  int t_ = 0;
};

using ProgressFn = std::function<void(int epoch, double train_loss, double val_loss)>;

/// Trains on the split's train records and returns the weights with the
/// lowest validation loss.
ModelCheckpoint train(const std::vector<PhantomRecord>& cohort, const ModelConfig& config, const TrainHyper& hyper,
                      const ProgressFn& progress = {});

}  // namespace rfgen
