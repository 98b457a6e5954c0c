#include "rfgen/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace rfgen {

namespace {

using Uniform = std::uniform_real_distribution<double>;

constexpr double kMaxDays = 720.0;

double course_factor(Chemo c) { return c == Chemo::ReRT_TMZ ? 1.5 : 1.0; }

// Low-frequency multiplicative texture, fixed per phantom.
struct Texture {
  struct Wave {
    double amp, kx, ky, phase;
  };
  std::array<std::array<Wave, 3>, 3> waves{};

  Texture(std::uint64_t seed, int size) {
    std::mt19937_64 rng(seed);
    Uniform amp(0.004, 0.008), cyc(0.5, 2.5), ang(0.0, 2.0 * std::numbers::pi);
    for (auto& ch : waves) {
      for (auto& w : ch) {
        const double k = 2.0 * std::numbers::pi * cyc(rng) / size;
        const double theta = ang(rng);
        w = {amp(rng), k * std::cos(theta), k * std::sin(theta), ang(rng)};
      }
    }
  }

  double operator()(int c, int x, int y) const {
    double v = 0;
    for (const auto& w : waves[c]) v += w.amp * std::sin(w.kx * x + w.ky * y + w.phase);
    return v;
  }
};

ImageD render_raw(const PhantomParams& p, const PhantomGeometry& g) {
  const int n = p.size;
  const Texture tex(p.noise_seed, n);
  ImageD img(n, n, 3);
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      if (!g.brain.contains(x, y)) continue;
      const std::array<double, 3>* base = &p.intensities.tissue;
      if (g.in_lesion(x, y)) {
        base = &p.intensities.lesion;
      } else if (g.ventricle.contains(x, y)) {
        base = &p.intensities.csf;
      } else if (g.in_edema(x, y)) {
        base = &p.intensities.edema;
      }
      for (int c = 0; c < 3; ++c) img(c, y, x) = (*base)[c] * (1.0 + tex(c, x, y));
    }
  }
  return img;
}

ImageD render_dose(const PhantomParams& p) {
  const int n = p.size;
  ImageD d(n, n, 1);
  const double s2 = 2.0 * p.dose_sigma * p.dose_sigma;
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      const double dx = x - p.dose_cx, dy = y - p.dose_cy;
      d(0, y, x) = p.dose_peak * std::exp(-(dx * dx + dy * dy) / s2);
    }
  }
  return d;
}

bool disc_inside_ellipse(const Ellipse& e, double cx, double cy, double r) {
  for (int k = 0; k < 64; ++k) {
    const double a = 2.0 * std::numbers::pi * k / 64;
    if (!e.contains(cx + r * std::cos(a), cy + r * std::sin(a))) return false;
  }
  return e.contains(cx, cy);
}

bool disc_clear_of_ellipse(const Ellipse& e, double cx, double cy, double r) {
  for (int k = 0; k < 64; ++k) {
    const double a = 2.0 * std::numbers::pi * k / 64;
    for (double f : {0.0, 0.5, 1.0}) {
      if (e.contains(cx + f * r * std::cos(a), cy + f * r * std::sin(a))) return false;
    }
  }
  return true;
}

PhantomParams draw_params(std::mt19937_64& rng, int size, bool diseased) {
  const double s = size;
  auto u = [&](double lo, double hi) { return Uniform(lo, hi)(rng); };
  PhantomParams p;
  p.size = size;
  const double mid = (s - 1.0) / 2.0;
  p.brain = {mid + u(-0.03, 0.03) * s, mid + u(-0.03, 0.03) * s, u(0.36, 0.42) * s, u(0.38, 0.44) * s};
  p.ventricle = {p.brain.cx + u(-0.03, 0.03) * s, p.brain.cy + u(-0.03, 0.03) * s, u(0.07, 0.10) * s,
                 u(0.10, 0.14) * s};

  auto jitter = [&](std::array<double, 3> v) {
    for (auto& x : v) x *= u(0.95, 1.05);
    return v;
  };
  p.intensities.tissue = jitter({700, 650, 500});
  p.intensities.csf = jitter({200, 180, 150});
  p.intensities.lesion = jitter({560, 950, 850});
  p.intensities.edema = jitter({540, 620, 820});

  // Response coefficients are shared across the cohort so that the follow-up
  // is a function of what the model sees (anatomy, dose, context).
  p.dynamics.edema_max_width = 0.085 * s;

  if (diseased) {
    // One pixel of clearance at 32 px, scaled down for smaller grids.
    const double margin = std::min(1.0, s / 32.0);
    for (int attempt = 0;; ++attempt) {
      if (attempt > 10000) throw ArgumentError("phantom: could not place lesion inside brain");
      const double side = u(0, 1) < 0.5 ? -1.0 : 1.0;
      const double r = u(0.08, 0.12) * s;
      const double cx = p.brain.cx + side * u(0.18, 0.22) * s;
      const double cy = p.brain.cy + u(-0.12, 0.12) * s;
      if (disc_inside_ellipse(p.brain, cx, cy, r + margin) && disc_clear_of_ellipse(p.ventricle, cx, cy, r + margin)) {
        p.lesion_cx = cx;
        p.lesion_cy = cy;
        p.lesion_radius = r;
        break;
      }
    }
    p.dose_cx = p.lesion_cx;
    p.dose_cy = p.lesion_cy;
  } else {
    p.dose_cx = p.brain.cx + u(-0.2, 0.2) * s;
    p.dose_cy = p.brain.cy + u(-0.2, 0.2) * s;
  }
  p.dose_sigma = u(0.15, 0.22) * s;
  p.dose_peak = u(40, 60);
  p.noise_seed = rng();
  return p;
}

std::vector<int> draw_followup_days(std::mt19937_64& rng) {
  const int count = std::uniform_int_distribution<int>(3, 19)(rng);
  std::uniform_int_distribution<int> day(30, 720);
  std::vector<int> days;
  while (static_cast<int>(days.size()) < count) {
    const int d = day(rng);
    if (std::find(days.begin(), days.end(), d) == days.end()) days.push_back(d);
  }
  std::sort(days.begin(), days.end());
  return days;
}

}  // namespace

void PhantomParams::validate() const {
  if (size < 16) throw ArgumentError("phantom size must be >= 16");
  if (brain.ax <= 0 || brain.ay <= 0 || ventricle.ax <= 0 || ventricle.ay <= 0 || lesion_radius < 0) {
    throw ArgumentError("phantom radii must be positive");
  }
  if (!disc_inside_ellipse(brain, ventricle.cx, ventricle.cy, 0.0)) throw ArgumentError("ventricle center outside brain");
  for (int k = 0; k < 64; ++k) {
    const double a = 2.0 * std::numbers::pi * k / 64;
    if (!brain.contains(ventricle.cx + ventricle.ax * std::cos(a), ventricle.cy + ventricle.ay * std::sin(a))) {
      throw ArgumentError("ventricle not inside brain");
    }
  }
  if (lesion_radius > 0 && !disc_inside_ellipse(brain, lesion_cx, lesion_cy, lesion_radius)) {
    throw ArgumentError("lesion not inside brain");
  }
  if (!(bounds.hi >= bounds.lo)) throw ArgumentError("invalid percentile bounds");
}

bool PhantomGeometry::in_lesion(double x, double y) const {
  if (lesion_radius <= 0) return false;
  const double dx = x - lesion_cx, dy = y - lesion_cy;
  return dx * dx + dy * dy <= lesion_radius * lesion_radius;
}

bool PhantomGeometry::in_edema(double x, double y) const {
  if (lesion_radius <= 0 || edema_width <= 0) return false;
  const double dx = x - lesion_cx, dy = y - lesion_cy;
  const double d2 = dx * dx + dy * dy;
  const double outer = lesion_radius + edema_width;
  return d2 > lesion_radius * lesion_radius && d2 <= outer * outer;
}

EffectiveDose effective_dose(const PhantomRecord& record) {
  const auto& p = record.params;
  EffectiveDose out;
  double brain_sum = 0, lesion_sum = 0;
  int brain_n = 0, lesion_n = 0;
  const PhantomGeometry g0{p.brain, p.ventricle, p.lesion_cx, p.lesion_cy, p.lesion_radius, 0.0};
  for (int y = 0; y < p.size; ++y) {
    for (int x = 0; x < p.size; ++x) {
      const double d = record.dose(0, y, x);
      if (p.brain.contains(x, y)) {
        brain_sum += d;
        ++brain_n;
      }
      if (g0.in_lesion(x, y)) {
        lesion_sum += d;
        ++lesion_n;
      }
    }
  }
  out.brain_mean = brain_n ? brain_sum / brain_n : 0.0;
  out.lesion_mean = lesion_n ? lesion_sum / lesion_n : 0.0;
  return out;
}

PhantomGeometry geometry_at(const PhantomRecord& record, const TreatmentContext& ctx) {
  ctx.validate();
  const auto& p = record.params;
  const auto& dyn = p.dynamics;
  PhantomGeometry g{p.brain, p.ventricle, p.lesion_cx, p.lesion_cy, p.lesion_radius, 0.0};
  const double days = ctx.days_since_baseline;
  if (days == 0) return g;

  const EffectiveDose ed = effective_dose(record);
  const double course = course_factor(ctx.chemo);

  const double ventricle_dose = ctx.dose_scale * ed.brain_mean * course;
  const double f = std::min(1.0 + dyn.atrophy_per_dose_day * ventricle_dose * days / kMaxDays, dyn.max_ventricle_factor);
  g.ventricle.ax *= f;
  g.ventricle.ay *= f;

  if (p.lesion_radius > 0) {
    const double lesion_dose = ctx.dose_scale * ed.lesion_mean * course;
    const double shrink =
        std::exp(-dyn.lesion_shrink_per_dose * lesion_dose * std::min(days, dyn.response_days) / dyn.response_days);
    const double regrow = 1.0 + dyn.regrowth_rate * std::max(0.0, dyn.regrowth_threshold - lesion_dose) *
                                    std::max(0.0, days - dyn.regrowth_latency_days) / 360.0;
    g.lesion_radius = std::min(p.lesion_radius * shrink * regrow, p.lesion_radius * dyn.max_lesion_factor);

    if (ctx.chemo == Chemo::None && days > dyn.edema_onset_day) {
      const double logistic = 1.0 / (1.0 + std::exp(-dyn.edema_growth_rate * (days - dyn.edema_onset_day)));
      g.edema_width = dyn.edema_max_width * (2.0 * logistic - 1.0);
    }
  }
  return g;
}

SegmentationMask geometry_mask(const PhantomGeometry& g, int size) {
  SegmentationMask m(size, size);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      if (!g.brain.contains(x, y)) continue;
      m(y, x) = (g.ventricle.contains(x, y) && !g.in_lesion(x, y)) ? TissueClass::CSF : TissueClass::Tissue;
    }
  }
  return m;
}

std::vector<bool> edema_ring_mask(const PhantomGeometry& g, int size) {
  std::vector<bool> m(static_cast<std::size_t>(size) * size, false);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      m[static_cast<std::size_t>(y) * size + x] = g.brain.contains(x, y) && g.in_edema(x, y) &&
                                                  !g.in_lesion(x, y) && !g.ventricle.contains(x, y);
    }
  }
  return m;
}

int ventricle_area(const PhantomGeometry& g, int size) {
  int n = 0;
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) n += g.ventricle.contains(x, y) ? 1 : 0;
  return n;
}

int lesion_area(const PhantomGeometry& g, int size) {
  int n = 0;
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) n += (g.in_lesion(x, y) && g.brain.contains(x, y)) ? 1 : 0;
  return n;
}

std::vector<PhantomRecord> generate_cohort(int n_patients, int size, std::uint64_t seed) {
  if (n_patients < 1) throw ArgumentError("n_patients must be >= 1");
  if (size < 16) throw ArgumentError("size must be >= 16");
  std::mt19937_64 rng(seed);
  std::vector<PhantomRecord> records(static_cast<std::size_t>(n_patients));
  std::vector<ImageD> raw_doses;
  raw_doses.reserve(records.size());
  for (int i = 0; i < n_patients; ++i) {
    auto& r = records[static_cast<std::size_t>(i)];
    char id[16];
    std::snprintf(id, sizeof id, "P%03d", i);
    r.id = id;
    // Alternating labels keep both pools populated for any cohort size >= 2.
    r.label = (i % 2 == 0) ? SliceLabel::Diseased : SliceLabel::HealthyAppearing;
    r.params = draw_params(rng, size, r.label == SliceLabel::Diseased);
    r.followup_days = draw_followup_days(rng);

    const PhantomGeometry g0{r.params.brain, r.params.ventricle, r.params.lesion_cx, r.params.lesion_cy,
                             r.params.lesion_radius, 0.0};
    const ImageD raw = render_raw(r.params, g0);
    r.params.bounds = percentile_bounds(raw);
    r.baseline = apply_bounds(raw, r.params.bounds);
    raw_doses.push_back(render_dose(r.params));
    r.params.validate();
  }
  auto doses = rescale_dose_cohort(raw_doses);
  for (std::size_t i = 0; i < records.size(); ++i) records[i].dose = std::move(doses[i]);
  return records;
}

ImageF oracle_followup(const PhantomRecord& record, const TreatmentContext& ctx) {
  ctx.validate();
  if (ctx.days_since_baseline == 0) return record.baseline;
  const PhantomGeometry g = geometry_at(record, ctx);
  return apply_bounds(render_raw(record.params, g), record.params.bounds);
}

double percentile_sorted(std::span<const double> sorted, double pct) {
  if (sorted.empty()) throw ArgumentError("percentile of empty range");
  const double pos = pct / 100.0 * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

PercentileBounds percentile_bounds(const ImageD& raw, double lo_pct, double hi_pct) {
  if (raw.empty()) throw ArgumentError("normalize_percentile: empty image");
  if (!(lo_pct < hi_pct) || lo_pct < 0 || hi_pct > 100) throw ArgumentError("normalize_percentile: need 0 <= lo < hi <= 100");
  std::vector<double> v(raw.data.data(), raw.data.data() + raw.data.size());
  std::sort(v.begin(), v.end());
  return {percentile_sorted(v, lo_pct), percentile_sorted(v, hi_pct)};
}

ImageF apply_bounds(const ImageD& raw, const PercentileBounds& b) {
  ImageF out(raw.width, raw.height, raw.channels());
  const double range = b.hi - b.lo;
  if (!(range > 0)) return out;  // constant image -> zeros
  out.data = ((raw.data.array().max(b.lo).min(b.hi) - b.lo) / range).cast<float>().matrix();
  return out;
}

ImageF normalize_percentile(const ImageD& raw, double lo_pct, double hi_pct) {
  return apply_bounds(raw, percentile_bounds(raw, lo_pct, hi_pct));
}

std::vector<DoseMap> rescale_dose_cohort(std::span<const ImageD> doses) {
  double peak = 0;
  for (const auto& d : doses) {
    if (d.empty()) throw ArgumentError("rescale_dose_cohort: empty dose map");
    peak = std::max(peak, d.data.maxCoeff());
  }
  if (!(peak > 0)) throw ArgumentError("rescale_dose_cohort: cohort has no positive dose");
  std::vector<DoseMap> out;
  out.reserve(doses.size());
  for (const auto& d : doses) out.emplace_back(d.width, d.height, (d.data / peak).cast<float>().eval());
  return out;
}

BalancedSampler::BalancedSampler(std::span<const PhantomRecord> records, std::uint64_t seed) : rng_(seed) {
  for (const auto& r : records) (r.label == SliceLabel::Diseased ? diseased_ : healthy_).push_back(&r);
  if (healthy_.empty() || diseased_.empty()) throw ArgumentError("balanced_sampler: both label pools must be non-empty");
}

const PhantomRecord& BalancedSampler::next() {
  const auto& pool = (rng_() & 1u) ? diseased_ : healthy_;
  const auto i = std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng_);
  return *pool[i];
}

}  // namespace rfgen
