#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "rfgen/metrics.hpp"
#include "rfgen/morpho.hpp"
#include "rfgen/sampler.hpp"

namespace rfgen {

/// Produces a follow-up prediction for a record under a context.
using Predictor = std::function<ImageF(const PhantomRecord&, const TreatmentContext&)>;

Predictor model_predictor(const FlowModel& model, int n_steps, std::uint64_t seed);
Predictor identity_predictor();
Predictor oracle_predictor();

struct ImageMetrics {
  double mse = 0;
  double psnr = 0;  // +inf for identical images
  double ssim = 0;
  double dice_tissue = 0;  // segment(prediction) vs the analytic oracle mask
  double dice_csf = 0;
  int area_tissue = 0;
  int area_csf = 0;
};

ImageMetrics image_metrics(const ImageF& prediction, const ImageF& truth, const SegmentationMask& oracle_mask);

struct ImageEvaluation {
  std::string record_id;
  TreatmentContext context;
  ImageMetrics model;
  ImageMetrics identity;
  int oracle_area_tissue = 0;
  int oracle_area_csf = 0;
  MorphometryComparison morphometry;
};

struct EvalOptions {
  int min_days = 0;  // follow-ups before this day are skipped
  bool morphometry = true;
  RegisterOptions registration;
  int threads = 1;
};

/// Every follow-up day of every record, evaluated under the reference
/// (adjuvant TMZ, unscaled dose) context. Results are in record/day order.
std::vector<ImageEvaluation> evaluate(const std::vector<PhantomRecord>& records, const Predictor& predict,
                                      const EvalOptions& opts = {});

nlohmann::json to_json(const ImageMetrics& m);
nlohmann::json to_json(const ImageEvaluation& e);
nlohmann::json to_json(const Summary& s);

/// Summaries of every metric for model and identity rows, morphometry
/// summaries, and paired Wilcoxon tests of predicted vs oracle class areas.
nlohmann::json aggregate_report(const std::vector<ImageEvaluation>& evals);

/// FNV-1a over the compact JSON dump, as 16 hex digits.
std::string config_hash(const nlohmann::json& j);

}  // namespace rfgen
