#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "rfgen/image.hpp"
#include "rfgen/labels.hpp"
#include "rfgen/treatment.hpp"

namespace rfgen {

/// Per-pixel relative dose, one channel.
using DoseMap = ImageF;

enum class SliceLabel { HealthyAppearing, Diseased };

struct Ellipse {
  double cx = 0, cy = 0, ax = 1, ay = 1;
  bool contains(double x, double y) const {
    const double dx = (x - cx) / ax, dy = (y - cy) / ay;
    return dx * dx + dy * dy <= 1.0;
  }
};

/// Raw (pre-normalization) intensities per channel {T1, T1Gd, FLAIR}.
struct TissueIntensities {
  std::array<double, 3> tissue{};
  std::array<double, 3> csf{};
  std::array<double, 3> lesion{};
  std::array<double, 3> edema{};
};

/// Response coefficients. Ventricle semi-axes scale linearly with
/// effective-dose x days, the lesion shrinks exponentially in effective dose
/// and regrows below a threshold, and an untreated lesion grows a
/// logistic-onset edema ring.
struct PhantomDynamics {
  double atrophy_per_dose_day = 1.8;     // axis growth per unit dose per 720 days
  double lesion_shrink_per_dose = 0.7;   // exponent per unit effective dose
  double response_days = 180.0;          // shrinkage completes at this day
  double regrowth_threshold = 0.6;       // effective lesion dose below which regrowth starts
  double regrowth_latency_days = 360.0;
  double regrowth_rate = 1.0;            // fractional radius gain per unit deficit per 360 days
  double edema_onset_day = 300.0;
  double edema_growth_rate = 0.01;       // logistic rate, 1/day
  double edema_max_width = 2.5;          // pixels
  double max_ventricle_factor = 2.0;
  double max_lesion_factor = 1.5;
};

struct PercentileBounds {
  double lo = 0.0;
  double hi = 1.0;
};

struct PhantomParams {
  int size = 32;
  Ellipse brain;
  Ellipse ventricle;
  double lesion_cx = 0, lesion_cy = 0, lesion_radius = 0;
  double dose_cx = 0, dose_cy = 0, dose_sigma = 1, dose_peak = 50;  // raw dose units
  TissueIntensities intensities;
  PhantomDynamics dynamics;
  std::uint64_t noise_seed = 0;
  // Percentile bounds of the raw baseline; follow-ups reuse them so the whole
  // series shares one intensity scale.
  PercentileBounds bounds;

  void validate() const;
};

struct PhantomRecord {
  std::string id;
  PhantomParams params;
  ImageF baseline;
  DoseMap dose;
  std::vector<int> followup_days;
  SliceLabel label = SliceLabel::HealthyAppearing;
};

/// Analytic anatomy at a given treatment context.
struct PhantomGeometry {
  Ellipse brain;
  Ellipse ventricle;
  double lesion_cx = 0, lesion_cy = 0, lesion_radius = 0;
  double edema_width = 0;

  bool in_lesion(double x, double y) const;
  bool in_edema(double x, double y) const;
};

struct EffectiveDose {
  double brain_mean = 0;  // mean normalized dose over the brain
  double lesion_mean = 0; // mean normalized dose over the baseline lesion
};

EffectiveDose effective_dose(const PhantomRecord& record);
PhantomGeometry geometry_at(const PhantomRecord& record, const TreatmentContext& ctx);

/// Analytic class map: ventricle -> CSF, rest of brain -> Tissue.
SegmentationMask geometry_mask(const PhantomGeometry& g, int size);
/// Pixels of the edema ring (excluding lesion and ventricle).
std::vector<bool> edema_ring_mask(const PhantomGeometry& g, int size);
int ventricle_area(const PhantomGeometry& g, int size);
int lesion_area(const PhantomGeometry& g, int size);

std::vector<PhantomRecord> generate_cohort(int n_patients, int size, std::uint64_t seed);

ImageF oracle_followup(const PhantomRecord& record, const TreatmentContext& ctx);

/// Linear-interpolation percentile (numpy's default) of an ascending range.
double percentile_sorted(std::span<const double> sorted, double pct);

/// Joint percentiles over all channels.
PercentileBounds percentile_bounds(const ImageD& raw, double lo_pct = 0.5, double hi_pct = 99.5);
ImageF apply_bounds(const ImageD& raw, const PercentileBounds& bounds);
ImageF normalize_percentile(const ImageD& raw, double lo_pct = 0.5, double hi_pct = 99.5);

std::vector<DoseMap> rescale_dose_cohort(std::span<const ImageD> doses);

/// Fair coin between the two label pools, then a uniform draw within the pool.
/// Holds a view of the records; single consumer.
class BalancedSampler {
 public:
  BalancedSampler(std::span<const PhantomRecord> records, std::uint64_t seed);
  const PhantomRecord& next();

 private:
  std::vector<const PhantomRecord*> healthy_;
  std::vector<const PhantomRecord*> diseased_;
  std::mt19937_64 rng_;
};

}  // namespace rfgen
