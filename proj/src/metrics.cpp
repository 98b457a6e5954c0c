#include "rfgen/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rfgen/phantom.hpp"

namespace rfgen {

double mse(const ImageF& a, const ImageF& b) {
  require_same_shape(a, b, "mse");
  if (a.empty()) throw ArgumentError("mse: empty image");
  return (a.data.cast<double>() - b.data.cast<double>()).squaredNorm() / static_cast<double>(a.data.size());
}

double psnr(const ImageF& a, const ImageF& b, double peak) {
  const double m = mse(a, b);
  if (m == 0.0) return kPsnrIdentical;
  return 10.0 * std::log10(peak * peak / m);
}

std::vector<double> gaussian_taps(int size, double sigma) {
  std::vector<double> g(static_cast<std::size_t>(size));
  const double c = (size - 1) / 2.0;
  for (int i = 0; i < size; ++i) g[static_cast<std::size_t>(i)] = std::exp(-(i - c) * (i - c) / (2 * sigma * sigma));
  const double s = std::accumulate(g.begin(), g.end(), 0.0);
  for (auto& v : g) v /= s;
  return g;
}

namespace {

using ArrayD = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Separable valid-mode filtering: (h - n + 1) x (w - n + 1) output.
ArrayD filter_valid(const ArrayD& img, const std::vector<double>& taps) {
  const auto n = static_cast<Eigen::Index>(taps.size());
  const Eigen::Index h = img.rows(), w = img.cols();
  ArrayD rows = ArrayD::Zero(h, w - n + 1);
  for (Eigen::Index k = 0; k < n; ++k) rows += taps[static_cast<std::size_t>(k)] * img.middleCols(k, w - n + 1);
  ArrayD out = ArrayD::Zero(h - n + 1, w - n + 1);
  for (Eigen::Index k = 0; k < n; ++k) out += taps[static_cast<std::size_t>(k)] * rows.middleRows(k, h - n + 1);
  return out;
}

}  // namespace

double ssim(const ImageF& a, const ImageF& b, const SsimOptions& opts) {
  require_same_shape(a, b, "ssim");
  if (a.width < opts.window || a.height < opts.window) throw ArgumentError("ssim: image smaller than window");
  const auto taps = gaussian_taps(opts.window, opts.sigma);
  const double c1 = std::pow(opts.k1 * opts.dynamic_range, 2);
  const double c2 = std::pow(opts.k2 * opts.dynamic_range, 2);
  double total = 0;
  for (int c = 0; c < a.channels(); ++c) {
    const ArrayD x = Eigen::Map<const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
                         a.data.row(c).data(), a.height, a.width)
                         .cast<double>()
                         .array();
    const ArrayD y = Eigen::Map<const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
                         b.data.row(c).data(), b.height, b.width)
                         .cast<double>()
                         .array();
    const ArrayD mx = filter_valid(x, taps), my = filter_valid(y, taps);
    const ArrayD sxx = filter_valid(x * x, taps) - mx * mx;
    const ArrayD syy = filter_valid(y * y, taps) - my * my;
    const ArrayD sxy = filter_valid(x * y, taps) - mx * my;
    const ArrayD map = ((2 * mx * my + c1) * (2 * sxy + c2)) / ((mx * mx + my * my + c1) * (sxx + syy + c2));
    total += map.mean();
  }
  return total / a.channels();
}

SegmentationMask segment(const ImageF& img, const SegmentOptions& opts) {
  if (img.empty()) throw ArgumentError("segment: empty image");
  SegmentationMask mask(img.width, img.height);
  std::vector<double> fg;
  for (int i = 0; i < img.pixels(); ++i) {
    const double v = img.data(kT1, i);
    if (v >= opts.background_threshold) fg.push_back(v);
  }
  if (fg.empty()) throw ArgumentError("segment: no foreground pixels");
  std::vector<double> sorted = fg;
  std::sort(sorted.begin(), sorted.end());
  double lo = percentile_sorted(sorted, 25.0), hi = percentile_sorted(sorted, 75.0);
  for (int it = 0; it < opts.iterations; ++it) {
    double sum_lo = 0, sum_hi = 0;
    int n_lo = 0, n_hi = 0;
    for (double v : fg) {
      if ((v - lo) * (v - lo) <= (v - hi) * (v - hi)) {
        sum_lo += v;
        ++n_lo;
      } else {
        sum_hi += v;
        ++n_hi;
      }
    }
    if (n_lo) lo = sum_lo / n_lo;
    if (n_hi) hi = sum_hi / n_hi;
  }
  if (lo > hi) std::swap(lo, hi);
  for (int i = 0; i < img.pixels(); ++i) {
    const double v = img.data(kT1, i);
    if (v < opts.background_threshold) continue;
    mask.labels[static_cast<std::size_t>(i)] =
        (v - lo) * (v - lo) <= (v - hi) * (v - hi) ? TissueClass::CSF : TissueClass::Tissue;
  }
  return mask;
}

double dice(const SegmentationMask& a, const SegmentationMask& b, TissueClass label) {
  if (a.width != b.width || a.height != b.height) throw ArgumentError("dice: mask shape mismatch");
  std::size_t na = 0, nb = 0, both = 0;
  for (std::size_t i = 0; i < a.labels.size(); ++i) {
    const bool x = a.labels[i] == label, y = b.labels[i] == label;
    na += x;
    nb += y;
    both += x && y;
  }
  if (na + nb == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(na + nb);
}

int class_area(const SegmentationMask& mask, TissueClass label) {
  return static_cast<int>(std::count(mask.labels.begin(), mask.labels.end(), label));
}

Summary summarize(const std::vector<double>& values) {
  Summary s;
  s.n = static_cast<int>(values.size());
  if (values.empty()) return s;
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / s.n;
  if (s.n > 1) {
    double ss = 0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.sd = std::sqrt(ss / (s.n - 1));
  }
  return s;
}

WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw ArgumentError("wilcoxon: paired samples must have equal length");
  std::vector<double> d;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i] != b[i]) d.push_back(a[i] - b[i]);
  WilcoxonResult r;
  r.n = static_cast<int>(d.size());
  if (r.n == 0) return r;

  std::vector<std::size_t> order(d.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return std::abs(d[i]) < std::abs(d[j]); });
  std::vector<double> rank(d.size());
  bool ties = false;
  double tie_term = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && std::abs(d[order[j + 1]]) == std::abs(d[order[i]])) ++j;
    const double mid = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = mid;
    const double t = static_cast<double>(j - i + 1);
    if (t > 1) {
      ties = true;
      tie_term += t * t * t - t;
    }
    i = j + 1;
  }
  double w_plus = 0;
  for (std::size_t i = 0; i < d.size(); ++i)
    if (d[i] > 0) w_plus += rank[i];
  const double n = r.n;
  const double total = n * (n + 1) / 2;
  r.statistic = std::min(w_plus, total - w_plus);

  if (!ties && r.n <= 25) {
    // counts[s] = number of sign assignments with W+ = s.
    const int max_sum = r.n * (r.n + 1) / 2;
    std::vector<double> counts(static_cast<std::size_t>(max_sum) + 1, 0.0);
    counts[0] = 1;
    for (int k = 1; k <= r.n; ++k)
      for (int s = max_sum; s >= k; --s) counts[static_cast<std::size_t>(s)] += counts[static_cast<std::size_t>(s - k)];
    double tail = 0;
    for (int s = 0; s <= static_cast<int>(r.statistic); ++s) tail += counts[static_cast<std::size_t>(s)];
    r.p_value = std::min(1.0, 2.0 * tail / std::pow(2.0, r.n));
    r.exact = true;
  } else {
    const double mean = total / 2;
    const double var = n * (n + 1) * (2 * n + 1) / 24 - tie_term / 48;
    const double z = (r.statistic - mean) / std::sqrt(var);
    r.p_value = std::min(1.0, std::erfc(std::abs(z) / std::sqrt(2.0)));
  }
  return r;
}

}  // namespace rfgen
