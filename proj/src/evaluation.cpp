#include "rfgen/evaluation.hpp"

#include <cmath>
#include <cstdio>

#include "rfgen/counterfactual.hpp"
#include "rfgen/parallel.hpp"

namespace rfgen {

using nlohmann::json;

Predictor model_predictor(const FlowModel& model, int n_steps, std::uint64_t seed) {
  return [&model, n_steps, seed](const PhantomRecord& r, const TreatmentContext& ctx) {
    return euler_sample(model, build_conditioning(r, ctx, model.config()), {n_steps, seed, {}});
  };
}

Predictor identity_predictor() {
  return [](const PhantomRecord& r, const TreatmentContext&) { return r.baseline; };
}

Predictor oracle_predictor() {
  return [](const PhantomRecord& r, const TreatmentContext& ctx) { return oracle_followup(r, ctx); };
}

ImageMetrics image_metrics(const ImageF& prediction, const ImageF& truth, const SegmentationMask& oracle_mask) {
  ImageMetrics m;
  m.mse = mse(prediction, truth);
  m.psnr = psnr(prediction, truth);
  m.ssim = ssim(prediction, truth);
  const SegmentationMask seg = segment(prediction);
  m.dice_tissue = dice(seg, oracle_mask, TissueClass::Tissue);
  m.dice_csf = dice(seg, oracle_mask, TissueClass::CSF);
  m.area_tissue = class_area(seg, TissueClass::Tissue);
  m.area_csf = class_area(seg, TissueClass::CSF);
  return m;
}

std::vector<ImageEvaluation> evaluate(const std::vector<PhantomRecord>& records, const Predictor& predict,
                                      const EvalOptions& opts) {
  std::vector<std::pair<const PhantomRecord*, int>> jobs;
  for (const auto& r : records)
    for (int d : r.followup_days)
      if (d >= opts.min_days) jobs.emplace_back(&r, d);

  std::vector<ImageEvaluation> out(jobs.size());
  parallel_for(jobs.size(), opts.threads, [&](std::size_t i) {
    const auto& [rec, day] = jobs[i];
    const TreatmentContext ctx = reference_context(day);
    const ImageF truth = oracle_followup(*rec, ctx);
    const SegmentationMask oracle = geometry_mask(geometry_at(*rec, ctx), rec->params.size);
    const ImageF pred = predict(*rec, ctx);
    auto& e = out[i];
    e.record_id = rec->id;
    e.context = ctx;
    e.model = image_metrics(pred, truth, oracle);
    e.identity = image_metrics(rec->baseline, truth, oracle);
    e.oracle_area_tissue = class_area(oracle, TissueClass::Tissue);
    e.oracle_area_csf = class_area(oracle, TissueClass::CSF);
    if (opts.morphometry) {
      e.morphometry = morphometry_compare(rec->baseline, truth, pred, segment(rec->baseline), opts.registration);
    }
  });
  return out;
}

json to_json(const ImageMetrics& m) {
  return {{"mse", m.mse},
          {"psnr", std::isinf(m.psnr) ? json(nullptr) : json(m.psnr)},
          {"ssim", m.ssim},
          {"dice_tissue", m.dice_tissue},
          {"dice_csf", m.dice_csf},
          {"area_tissue", m.area_tissue},
          {"area_csf", m.area_csf}};
}

namespace {

json to_json(const JacobianStats& s) {
  return {{"mean_abs_log_jacobian", s.mean_abs},
          {"mean_log_jacobian_tissue", s.mean_tissue},
          {"mean_log_jacobian_csf", s.mean_csf}};
}

}  // namespace

json to_json(const ImageEvaluation& e) {
  return {{"record_id", e.record_id},
          {"context", to_json(e.context)},
          {"model", to_json(e.model)},
          {"identity", to_json(e.identity)},
          {"oracle_area_tissue", e.oracle_area_tissue},
          {"oracle_area_csf", e.oracle_area_csf},
          {"morphometry",
           {{"real", to_json(e.morphometry.real)},
            {"predicted", to_json(e.morphometry.predicted)},
            {"diff_mean_abs", e.morphometry.diff_mean_abs},
            {"diff_tissue", e.morphometry.diff_tissue},
            {"diff_csf", e.morphometry.diff_csf}}}};
}

json to_json(const Summary& s) {
  return {{"mean", s.mean}, {"sd", s.sd}, {"n", s.n}};
}

json aggregate_report(const std::vector<ImageEvaluation>& evals) {
  auto collect = [&](auto get) {
    std::vector<double> v;
    for (const auto& e : evals) v.push_back(static_cast<double>(get(e)));
    return v;
  };
  auto metric_block = [&](auto row) {
    json j;
    j["mse"] = to_json(summarize(collect([&](const auto& e) { return row(e).mse; })));
    // PSNR summaries skip identical pairs (infinite PSNR).
    std::vector<double> p;
    for (const auto& e : evals)
      if (std::isfinite(row(e).psnr)) p.push_back(row(e).psnr);
    j["psnr"] = to_json(summarize(p));
    j["ssim"] = to_json(summarize(collect([&](const auto& e) { return row(e).ssim; })));
    j["dice_tissue"] = to_json(summarize(collect([&](const auto& e) { return row(e).dice_tissue; })));
    j["dice_csf"] = to_json(summarize(collect([&](const auto& e) { return row(e).dice_csf; })));
    j["area_tissue"] = to_json(summarize(collect([&](const auto& e) { return row(e).area_tissue; })));
    j["area_csf"] = to_json(summarize(collect([&](const auto& e) { return row(e).area_csf; })));
    return j;
  };
  auto wilcoxon_json = [](const std::vector<double>& a, const std::vector<double>& b) -> json {
    if (a.empty()) return nullptr;
    const auto w = wilcoxon_signed_rank(a, b);
    return {{"statistic", w.statistic}, {"p_value", w.p_value}, {"n", w.n}, {"exact", w.exact}};
  };
  const auto pred_tissue = collect([](const auto& e) { return e.model.area_tissue; });
  const auto pred_csf = collect([](const auto& e) { return e.model.area_csf; });
  const auto oracle_tissue = collect([](const auto& e) { return e.oracle_area_tissue; });
  const auto oracle_csf = collect([](const auto& e) { return e.oracle_area_csf; });
  return {{"n_images", evals.size()},
          {"model", metric_block([](const ImageEvaluation& e) -> const ImageMetrics& { return e.model; })},
          {"identity", metric_block([](const ImageEvaluation& e) -> const ImageMetrics& { return e.identity; })},
          {"oracle_area_tissue", to_json(summarize(oracle_tissue))},
          {"oracle_area_csf", to_json(summarize(oracle_csf))},
          {"morphometry",
           {{"real_mean_abs", to_json(summarize(collect([](const auto& e) { return e.morphometry.real.mean_abs; })))},
            {"predicted_mean_abs",
             to_json(summarize(collect([](const auto& e) { return e.morphometry.predicted.mean_abs; })))},
            {"diff_mean_abs", to_json(summarize(collect([](const auto& e) { return e.morphometry.diff_mean_abs; })))},
            {"diff_tissue", to_json(summarize(collect([](const auto& e) { return e.morphometry.diff_tissue; })))},
            {"diff_csf", to_json(summarize(collect([](const auto& e) { return e.morphometry.diff_csf; })))}}},
          {"wilcoxon_area_vs_oracle",
           {{"test", "paired two-sided Wilcoxon signed-rank, predicted vs oracle class area"},
            {"tissue", wilcoxon_json(pred_tissue, oracle_tissue)},
            {"csf", wilcoxon_json(pred_csf, oracle_csf)}}}};
}

std::string config_hash(const json& j) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : j.dump()) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace rfgen
