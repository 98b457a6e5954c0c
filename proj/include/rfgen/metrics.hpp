#pragma once

#include <limits>
#include <vector>

#include "rfgen/image.hpp"
#include "rfgen/labels.hpp"

namespace rfgen {

/// Returned by psnr for identical images.
inline constexpr double kPsnrIdentical = std::numeric_limits<double>::infinity();

double mse(const ImageF& a, const ImageF& b);
double psnr(const ImageF& a, const ImageF& b, double peak = 1.0);

struct SsimOptions {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;
};

/// Gaussian-windowed SSIM over valid window positions, averaged over
/// positions and then over channels.
double ssim(const ImageF& a, const ImageF& b, const SsimOptions& opts = {});

/// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
std::vector<double> gaussian_taps(int size, double sigma);

struct SegmentOptions {
  double background_threshold = 0.02;  // on the T1-like channel
  int iterations = 50;
};

/// Background by threshold on the T1-like channel, then 1-D 2-means on the
/// foreground: the darker cluster is CSF, the brighter one Tissue.
SegmentationMask segment(const ImageF& img, const SegmentOptions& opts = {});

/// 2|A n B| / (|A| + |B|) for one label; 1.0 when both are empty.
double dice(const SegmentationMask& a, const SegmentationMask& b, TissueClass label);
int class_area(const SegmentationMask& mask, TissueClass label);

struct Summary {
  double mean = 0;
  double sd = 0;  // sample standard deviation
  int n = 0;
};
Summary summarize(const std::vector<double>& values);

struct WilcoxonResult {
  double statistic = 0;  // smaller of W+ and W-
  double p_value = 1;    // two-sided
  int n = 0;             // non-zero pairs
  bool exact = false;
};

/// Paired two-sided Wilcoxon signed-rank test. Exact null distribution for
/// n <= 25 without ties, normal approximation with tie correction otherwise.
WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace rfgen
