#include "rfgen/cohort_io.hpp"

#include <fstream>

#include "rfgen/raw_io.hpp"

namespace rfgen {

using nlohmann::json;

namespace {

json ellipse_json(const Ellipse& e) { return {{"cx", e.cx}, {"cy", e.cy}, {"ax", e.ax}, {"ay", e.ay}}; }
Ellipse ellipse_from(const json& j) { return {j.at("cx"), j.at("cy"), j.at("ax"), j.at("ay")}; }

std::string label_name(SliceLabel l) { return l == SliceLabel::Diseased ? "diseased" : "healthy_appearing"; }
SliceLabel label_from(const std::string& s) {
  if (s == "diseased") return SliceLabel::Diseased;
  if (s == "healthy_appearing") return SliceLabel::HealthyAppearing;
  throw IoError("cohort.json: unknown slice label '" + s + "'");
}

}  // namespace

json to_json(const PhantomParams& p) {
  const auto& d = p.dynamics;
  const auto& it = p.intensities;
  return {
      {"size", p.size},
      {"brain", ellipse_json(p.brain)},
      {"ventricle", ellipse_json(p.ventricle)},
      {"lesion", {{"cx", p.lesion_cx}, {"cy", p.lesion_cy}, {"radius", p.lesion_radius}}},
      {"dose", {{"cx", p.dose_cx}, {"cy", p.dose_cy}, {"sigma", p.dose_sigma}, {"peak", p.dose_peak}}},
      {"intensities", {{"tissue", it.tissue}, {"csf", it.csf}, {"lesion", it.lesion}, {"edema", it.edema}}},
      {"dynamics",
       {{"atrophy_per_dose_day", d.atrophy_per_dose_day},
        {"lesion_shrink_per_dose", d.lesion_shrink_per_dose},
        {"response_days", d.response_days},
        {"regrowth_threshold", d.regrowth_threshold},
        {"regrowth_latency_days", d.regrowth_latency_days},
        {"regrowth_rate", d.regrowth_rate},
        {"edema_onset_day", d.edema_onset_day},
        {"edema_growth_rate", d.edema_growth_rate},
        {"edema_max_width", d.edema_max_width},
        {"max_ventricle_factor", d.max_ventricle_factor},
        {"max_lesion_factor", d.max_lesion_factor}}},
      {"noise_seed", p.noise_seed},
      {"bounds", {{"lo", p.bounds.lo}, {"hi", p.bounds.hi}}},
  };
}

PhantomParams params_from_json(const json& j) {
  PhantomParams p;
  p.size = j.at("size");
  p.brain = ellipse_from(j.at("brain"));
  p.ventricle = ellipse_from(j.at("ventricle"));
  const auto& l = j.at("lesion");
  p.lesion_cx = l.at("cx");
  p.lesion_cy = l.at("cy");
  p.lesion_radius = l.at("radius");
  const auto& d = j.at("dose");
  p.dose_cx = d.at("cx");
  p.dose_cy = d.at("cy");
  p.dose_sigma = d.at("sigma");
  p.dose_peak = d.at("peak");
  const auto& it = j.at("intensities");
  p.intensities.tissue = it.at("tissue");
  p.intensities.csf = it.at("csf");
  p.intensities.lesion = it.at("lesion");
  p.intensities.edema = it.at("edema");
  const auto& dy = j.at("dynamics");
  auto& dd = p.dynamics;
  dd.atrophy_per_dose_day = dy.at("atrophy_per_dose_day");
  dd.lesion_shrink_per_dose = dy.at("lesion_shrink_per_dose");
  dd.response_days = dy.at("response_days");
  dd.regrowth_threshold = dy.at("regrowth_threshold");
  dd.regrowth_latency_days = dy.at("regrowth_latency_days");
  dd.regrowth_rate = dy.at("regrowth_rate");
  dd.edema_onset_day = dy.at("edema_onset_day");
  dd.edema_growth_rate = dy.at("edema_growth_rate");
  dd.edema_max_width = dy.at("edema_max_width");
  dd.max_ventricle_factor = dy.at("max_ventricle_factor");
  dd.max_lesion_factor = dy.at("max_lesion_factor");
  p.noise_seed = j.at("noise_seed");
  p.bounds = {j.at("bounds").at("lo"), j.at("bounds").at("hi")};
  return p;
}

void save_cohort(const std::filesystem::path& dir, const std::vector<PhantomRecord>& records, const json& extra) {
  std::filesystem::create_directories(dir);
  json manifest = extra.is_object() ? extra : json::object();
  manifest["format"] = "rfgen-cohort-1";
  json items = json::array();
  for (const auto& r : records) {
    const std::string b = r.id + "_baseline.raw", d = r.id + "_dose.raw";
    write_raw(dir / b, r.baseline);
    write_raw(dir / d, r.dose);
    items.push_back({{"id", r.id},
                     {"label", label_name(r.label)},
                     {"followup_days", r.followup_days},
                     {"baseline", b},
                     {"dose", d},
                     {"params", to_json(r.params)}});
  }
  manifest["records"] = std::move(items);
  std::ofstream f(dir / "cohort.json");
  if (!f) throw IoError("cannot write " + (dir / "cohort.json").string());
  f << manifest.dump(2) << '\n';
}

json load_cohort_manifest(const std::filesystem::path& dir) {
  std::ifstream f(dir / "cohort.json");
  if (!f) throw IoError("missing cohort manifest: " + (dir / "cohort.json").string());
  try {
    return json::parse(f);
  } catch (const json::exception& e) {
    throw IoError(std::string("cohort.json: ") + e.what());
  }
}

std::vector<PhantomRecord> load_cohort(const std::filesystem::path& dir) {
  const json manifest = load_cohort_manifest(dir);
  std::vector<PhantomRecord> out;
  try {
    for (const auto& item : manifest.at("records")) {
      PhantomRecord r;
      r.id = item.at("id");
      r.label = label_from(item.at("label"));
      r.followup_days = item.at("followup_days").get<std::vector<int>>();
      r.params = params_from_json(item.at("params"));
      r.baseline = read_raw(dir / item.at("baseline").get<std::string>());
      r.dose = read_raw(dir / item.at("dose").get<std::string>());
      out.push_back(std::move(r));
    }
  } catch (const json::exception& e) {
    throw IoError(std::string("cohort.json: ") + e.what());
  }
  return out;
}

}  // namespace rfgen
