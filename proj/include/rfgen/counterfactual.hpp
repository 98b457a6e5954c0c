#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include <json.hpp>

#include "rfgen/sampler.hpp"

namespace rfgen {

/// 10 on a 0-255 display scale, expressed on [0, 1] intensities.
inline constexpr double kDisplayThreshold = 10.0 / 255.0;

/// Zeroes |d| < threshold. Display only; callers keep the raw map.
ImageF threshold_for_display(const ImageF& diff, double threshold = kDisplayThreshold);

/// Rows vary the chemotherapy arm, columns the dose multiplier. The middle
/// row and column define the center cell all differences refer to.
struct GridAxes {
  std::array<double, 3> dose_factors{0.8, 1.0, 1.2};
  std::array<Chemo, 3> chemos{Chemo::None, Chemo::AdjuvantTMZ, Chemo::ReRT_TMZ};

  /// Default axes with `center` in the middle row; the other two arms keep
  /// their enum order.
  static GridAxes centered_on(Chemo center);
};

struct GridOptions {
  int n_steps = 4;
  double threshold = kDisplayThreshold;
  int threads = 1;
};

struct CounterfactualGrid {
  std::string record_id;
  TreatmentContext reference;
  GridAxes axes;
  std::uint64_t seed = 0;
  int n_steps = 0;
  double threshold = kDisplayThreshold;
  std::array<TreatmentContext, 9> contexts;
  std::array<ImageF, 9> images;         // row-major, index = row * 3 + col
  std::array<ImageF, 9> diffs;          // cell - center, raw
  std::array<ImageF, 9> display_diffs;  // thresholded

  static constexpr int kCenter = 4;
};

/// Cell (r, c) uses the reference days, axes.chemos[r] and
/// reference.dose_scale * axes.dose_factors[c]. Every cell starts from the
/// same initial noise.
CounterfactualGrid make_grid(const FlowModel& model, const PhantomRecord& record, const TreatmentContext& reference,
                             std::uint64_t seed, const GridAxes& axes, const GridOptions& opts = {});
CounterfactualGrid make_grid(const FlowModel& model, const PhantomRecord& record, const TreatmentContext& reference,
                             std::uint64_t seed, const GridOptions& opts = {});

struct TemporalSeries {
  std::string record_id;
  TreatmentContext context_template;
  std::uint64_t seed = 0;
  int n_steps = 0;
  double threshold = kDisplayThreshold;
  std::vector<int> days;
  std::vector<ImageF> images;
  std::vector<ImageF> diffs;  // images[i + 1] - images[i]
  std::vector<ImageF> display_diffs;
};

/// 60, 120, ..., 720.
std::vector<int> default_series_days();

TemporalSeries make_series(const FlowModel& model, const PhantomRecord& record, const TreatmentContext& ctx_template,
                           const std::vector<int>& days, std::uint64_t seed, const GridOptions& opts = {});

/// Metadata plus, when `embed_images` is set, base64 raw blobs for every image.
nlohmann::json to_json(const CounterfactualGrid& grid, bool embed_images);
nlohmann::json to_json(const TemporalSeries& series, bool embed_images);

/// Writes manifest.json and one raw file per image under `dir`.
void export_grid(const std::filesystem::path& dir, const CounterfactualGrid& grid);
void export_series(const std::filesystem::path& dir, const TemporalSeries& series);

nlohmann::json to_json(const TreatmentContext& ctx);
TreatmentContext context_from_json(const nlohmann::json& j, const TreatmentContext& defaults = {});

}  // namespace rfgen
