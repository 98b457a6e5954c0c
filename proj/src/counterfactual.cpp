#include "rfgen/counterfactual.hpp"

#include <cstdio>
#include <fstream>

#include "rfgen/parallel.hpp"
#include "rfgen/raw_io.hpp"

namespace rfgen {

using nlohmann::json;

namespace {

void require_full_conditioning(const ModelConfig& cfg) {
  if (!cfg.use_dose || !cfg.use_chemo) {
    throw ConfigError("counterfactuals need a checkpoint trained with dose and chemo conditioning");
  }
}

std::vector<ImageF> sample_contexts(const FlowModel& model, const PhantomRecord& record,
                                    const std::vector<TreatmentContext>& contexts, std::uint64_t seed,
                                    const GridOptions& opts) {
  if (opts.n_steps < 1) throw ArgumentError("n_steps must be >= 1");
  for (const auto& c : contexts) c.validate();
  const ImageF noise = sampling_noise(model.config(), seed);
  std::vector<ImageF> out(contexts.size());
  parallel_for(contexts.size(), opts.threads, [&](std::size_t i) {
    out[i] = euler_sample(model, build_conditioning(record, contexts[i], model.config()), {opts.n_steps, seed, noise});
  });
  return out;
}

ImageF difference(const ImageF& a, const ImageF& b) {
  ImageF d = a;
  d.data -= b.data;
  return d;
}

json blob(const ImageF& img) { return base64_encode(encode_raw(img)); }

void write_manifest(const std::filesystem::path& dir, const json& j) {
  std::ofstream f(dir / "manifest.json");
  if (!f) throw IoError("cannot write " + (dir / "manifest.json").string());
  f << j.dump(2) << '\n';
}

}  // namespace

ImageF threshold_for_display(const ImageF& diff, double threshold) {
  ImageF out = diff;
  const auto th = static_cast<float>(threshold);
  out.data = diff.data.unaryExpr([th](float v) { return std::abs(v) < th ? 0.0f : v; });
  return out;
}

GridAxes GridAxes::centered_on(Chemo center) {
  GridAxes a;
  int k = 0;
  std::array<Chemo, 2> others{};
  for (int c = 0; c < kChemoCount; ++c)
    if (static_cast<Chemo>(c) != center) others[static_cast<std::size_t>(k++)] = static_cast<Chemo>(c);
  a.chemos = {others[0], center, others[1]};
  return a;
}

CounterfactualGrid make_grid(const FlowModel& model, const PhantomRecord& record, const TreatmentContext& reference,
                             std::uint64_t seed, const GridAxes& axes, const GridOptions& opts) {
  require_full_conditioning(model.config());
  reference.validate();
  CounterfactualGrid g;
  g.record_id = record.id;
  g.reference = reference;
  g.axes = axes;
  g.seed = seed;
  g.n_steps = opts.n_steps;
  g.threshold = opts.threshold;
  std::vector<TreatmentContext> contexts;
  for (std::size_t r = 0; r < 3; ++r) {
    for (std::size_t c = 0; c < 3; ++c) {
      contexts.push_back({reference.days_since_baseline, axes.chemos[r], reference.dose_scale * axes.dose_factors[c]});
      g.contexts[r * 3 + c] = contexts.back();
    }
  }
  auto images = sample_contexts(model, record, contexts, seed, opts);
  for (std::size_t i = 0; i < 9; ++i) g.images[i] = std::move(images[i]);
  for (std::size_t i = 0; i < 9; ++i) {
    g.diffs[i] = difference(g.images[i], g.images[CounterfactualGrid::kCenter]);
    g.display_diffs[i] = threshold_for_display(g.diffs[i], opts.threshold);
  }
  return g;
}

CounterfactualGrid make_grid(const FlowModel& model, const PhantomRecord& record, const TreatmentContext& reference,
                             std::uint64_t seed, const GridOptions& opts) {
  return make_grid(model, record, reference, seed, GridAxes::centered_on(reference.chemo), opts);
}

std::vector<int> default_series_days() {
  std::vector<int> d;
  for (int day = 60; day <= kMaxDays; day += 60) d.push_back(day);
  return d;
}

TemporalSeries make_series(const FlowModel& model, const PhantomRecord& record, const TreatmentContext& ctx_template,
                           const std::vector<int>& days, std::uint64_t seed, const GridOptions& opts) {
  require_full_conditioning(model.config());
  if (days.empty()) throw ArgumentError("series: empty day list");
  for (std::size_t i = 1; i < days.size(); ++i)
    if (days[i] <= days[i - 1]) throw ArgumentError("series: days must be strictly increasing");
  TemporalSeries s;
  s.record_id = record.id;
  s.context_template = ctx_template;
  s.seed = seed;
  s.n_steps = opts.n_steps;
  s.threshold = opts.threshold;
  s.days = days;
  std::vector<TreatmentContext> contexts;
  for (int d : days) {
    TreatmentContext c = ctx_template;
    c.days_since_baseline = d;
    contexts.push_back(c);
  }
  s.images = sample_contexts(model, record, contexts, seed, opts);
  for (std::size_t i = 1; i < s.images.size(); ++i) {
    s.diffs.push_back(difference(s.images[i], s.images[i - 1]));
    s.display_diffs.push_back(threshold_for_display(s.diffs.back(), opts.threshold));
  }
  return s;
}

json to_json(const TreatmentContext& ctx) {
  return {{"days_since_baseline", ctx.days_since_baseline},
          {"chemo", std::string(to_string(ctx.chemo))},
          {"dose_scale", ctx.dose_scale}};
}

TreatmentContext context_from_json(const json& j, const TreatmentContext& defaults) {
  if (!j.is_object()) throw ArgumentError("context must be a JSON object");
  TreatmentContext c = defaults;
  try {
    if (j.contains("days_since_baseline")) c.days_since_baseline = j.at("days_since_baseline").get<int>();
    if (j.contains("chemo")) c.chemo = chemo_from_string(j.at("chemo").get<std::string>());
    if (j.contains("dose_scale")) c.dose_scale = j.at("dose_scale").get<double>();
  } catch (const json::exception& e) {
    throw ArgumentError(std::string("invalid context field: ") + e.what());
  }
  c.validate();
  return c;
}

json to_json(const CounterfactualGrid& g, bool embed_images) {
  json cells = json::array();
  for (std::size_t i = 0; i < 9; ++i) {
    json cell = {{"row", i / 3}, {"col", i % 3}, {"context", to_json(g.contexts[i])}};
    if (embed_images) {
      cell["image"] = blob(g.images[i]);
      cell["diff"] = blob(g.diffs[i]);
      cell["display_diff"] = blob(g.display_diffs[i]);
    }
    cells.push_back(std::move(cell));
  }
  json chemos = json::array();
  for (Chemo c : g.axes.chemos) chemos.push_back(std::string(to_string(c)));
  return {{"record_id", g.record_id},
          {"reference", to_json(g.reference)},
          {"axes", {{"dose_factors", g.axes.dose_factors}, {"chemos", chemos}}},
          {"seed", g.seed},
          {"n_steps", g.n_steps},
          {"threshold", g.threshold},
          {"center", CounterfactualGrid::kCenter},
          {"cells", cells}};
}

json to_json(const TemporalSeries& s, bool embed_images) {
  json j = {{"record_id", s.record_id},
            {"context_template", to_json(s.context_template)},
            {"seed", s.seed},
            {"n_steps", s.n_steps},
            {"threshold", s.threshold},
            {"days", s.days}};
  if (embed_images) {
    json images = json::array(), diffs = json::array(), display = json::array();
    for (const auto& im : s.images) images.push_back(blob(im));
    for (const auto& d : s.diffs) diffs.push_back(blob(d));
    for (const auto& d : s.display_diffs) display.push_back(blob(d));
    j["images"] = images;
    j["diffs"] = diffs;
    j["display_diffs"] = display;
  }
  return j;
}

void export_grid(const std::filesystem::path& dir, const CounterfactualGrid& g) {
  std::filesystem::create_directories(dir);
  json j = to_json(g, false);
  for (std::size_t i = 0; i < 9; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "cell_%zu_%zu", i / 3, i % 3);
    const std::string base = name;
    write_raw(dir / (base + ".raw"), g.images[i]);
    write_raw(dir / (base + "_diff.raw"), g.diffs[i]);
    write_raw(dir / (base + "_diff_display.raw"), g.display_diffs[i]);
    j["cells"][i]["files"] = {{"image", base + ".raw"}, {"diff", base + "_diff.raw"},
                              {"display_diff", base + "_diff_display.raw"}};
  }
  write_manifest(dir, j);
}

void export_series(const std::filesystem::path& dir, const TemporalSeries& s) {
  std::filesystem::create_directories(dir);
  json j = to_json(s, false);
  json images = json::array(), diffs = json::array();
  for (std::size_t i = 0; i < s.images.size(); ++i) {
    const std::string base = "day_" + std::to_string(s.days[i]);
    write_raw(dir / (base + ".raw"), s.images[i]);
    images.push_back(base + ".raw");
  }
  for (std::size_t i = 0; i < s.diffs.size(); ++i) {
    const std::string base = "diff_" + std::to_string(s.days[i]) + "_" + std::to_string(s.days[i + 1]);
    write_raw(dir / (base + ".raw"), s.diffs[i]);
    write_raw(dir / (base + "_display.raw"), s.display_diffs[i]);
    diffs.push_back({{"diff", base + ".raw"}, {"display_diff", base + "_display.raw"}});
  }
  j["files"] = {{"images", images}, {"diffs", diffs}};
  write_manifest(dir, j);
}

}  // namespace rfgen
