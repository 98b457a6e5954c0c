#include "rfgen/morpho.hpp"

#include <algorithm>
#include <cmath>

#include "rfgen/metrics.hpp"

namespace rfgen {

namespace {

using Plane = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Plane to_plane(const ImageD& img) {
  return Eigen::Map<const Plane>(img.data.row(0).data(), img.height, img.width);
}

double sample_bilinear(const Plane& p, double x, double y) {
  const auto h = p.rows(), w = p.cols();
  x = std::clamp(x, 0.0, static_cast<double>(w - 1));
  y = std::clamp(y, 0.0, static_cast<double>(h - 1));
  const auto x0 = static_cast<Eigen::Index>(std::floor(x)), y0 = static_cast<Eigen::Index>(std::floor(y));
  const auto x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
  const double fx = x - static_cast<double>(x0), fy = y - static_cast<double>(y0);
  return (1 - fy) * ((1 - fx) * p(y0, x0) + fx * p(y0, x1)) + fy * ((1 - fx) * p(y1, x0) + fx * p(y1, x1));
}

Plane warp_plane(const Plane& p, const DisplacementField& f) {
  Plane out(f.height, f.width);
  for (int y = 0; y < f.height; ++y)
    for (int x = 0; x < f.width; ++x) out(y, x) = sample_bilinear(p, x + f.ux(y, x), y + f.uy(y, x));
  return out;
}

Plane downsample(const Plane& p) {
  const Eigen::Index h = (p.rows() + 1) / 2, w = (p.cols() + 1) / 2;
  Plane out(h, w);
  for (Eigen::Index y = 0; y < h; ++y) {
    for (Eigen::Index x = 0; x < w; ++x) {
      double s = 0;
      int n = 0;
      for (Eigen::Index dy = 0; dy < 2; ++dy)
        for (Eigen::Index dx = 0; dx < 2; ++dx)
          if (2 * y + dy < p.rows() && 2 * x + dx < p.cols()) {
            s += p(2 * y + dy, 2 * x + dx);
            ++n;
          }
      out(y, x) = s / n;
    }
  }
  return out;
}

DisplacementField upsample_field(const DisplacementField& coarse, int w, int h) {
  DisplacementField fine(w, h);
  const Plane ux = Eigen::Map<const Plane>(coarse.u.row(0).data(), coarse.height, coarse.width);
  const Plane uy = Eigen::Map<const Plane>(coarse.u.row(1).data(), coarse.height, coarse.width);
  const double sx = static_cast<double>(coarse.width) / w, sy = static_cast<double>(coarse.height) / h;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double cx = (x + 0.5) * sx - 0.5, cy = (y + 0.5) * sy - 0.5;
      fine.ux(y, x) = sample_bilinear(ux, cx, cy) / sx;
      fine.uy(y, x) = sample_bilinear(uy, cx, cy) / sy;
    }
  }
  return fine;
}

// Separable Gaussian with edge replication, truncated at 3 sigma.
Plane smooth(const Plane& p, double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3 * sigma)));
  const auto taps = gaussian_taps(2 * radius + 1, sigma);
  const auto h = p.rows(), w = p.cols();
  Plane tmp(h, w), out(h, w);
  for (Eigen::Index y = 0; y < h; ++y) {
    for (Eigen::Index x = 0; x < w; ++x) {
      double s = 0;
      for (int k = -radius; k <= radius; ++k) s += taps[static_cast<std::size_t>(k + radius)] * p(y, std::clamp<Eigen::Index>(x + k, 0, w - 1));
      tmp(y, x) = s;
    }
  }
  for (Eigen::Index y = 0; y < h; ++y) {
    for (Eigen::Index x = 0; x < w; ++x) {
      double s = 0;
      for (int k = -radius; k <= radius; ++k) s += taps[static_cast<std::size_t>(k + radius)] * tmp(std::clamp<Eigen::Index>(y + k, 0, h - 1), x);
      out(y, x) = s;
    }
  }
  return out;
}

void zero_border(DisplacementField& f) {
  for (int y = 0; y < f.height; ++y) {
    for (int x = 0; x < f.width; ++x) {
      if (y == 0 || x == 0 || y == f.height - 1 || x == f.width - 1) {
        f.ux(y, x) = 0;
        f.uy(y, x) = 0;
      }
    }
  }
}

double plane_mse(const Plane& a, const Plane& b) { return (a - b).square().mean(); }

// One demons iteration: force from the warped image's gradient, then
// Gaussian regularization of the accumulated field.
void demons_step(const Plane& moving, const Plane& fixed, DisplacementField& f, const RegisterOptions& opts) {
  const Plane warped = warp_plane(moving, f);
  const auto h = warped.rows(), w = warped.cols();
  for (Eigen::Index y = 0; y < h; ++y) {
    for (Eigen::Index x = 0; x < w; ++x) {
      const auto xm = std::max<Eigen::Index>(x - 1, 0), xp = std::min<Eigen::Index>(x + 1, w - 1);
      const auto ym = std::max<Eigen::Index>(y - 1, 0), yp = std::min<Eigen::Index>(y + 1, h - 1);
      const double gx = (warped(y, xp) - warped(y, xm)) / static_cast<double>(xp - xm);
      const double gy = (warped(yp, x) - warped(ym, x)) / static_cast<double>(yp - ym);
      const double diff = fixed(y, x) - warped(y, x);
      const double denom = gx * gx + gy * gy + diff * diff;
      if (denom < opts.epsilon) continue;
      f.ux(static_cast<int>(y), static_cast<int>(x)) += diff * gx / denom;
      f.uy(static_cast<int>(y), static_cast<int>(x)) += diff * gy / denom;
    }
  }
  for (int c = 0; c < 2; ++c) {
    Eigen::Map<Plane> comp(f.u.row(c).data(), f.height, f.width);
    comp = smooth(Plane(comp), opts.smoothing_sigma);
  }
  zero_border(f);
  if (!f.u.allFinite()) throw NumericError("register", "non-finite displacement field");
}

}  // namespace

DisplacementField DisplacementField::from_image(const ImageF& img) {
  if (img.channels() != 2) throw ArgumentError("displacement field image must have 2 channels");
  DisplacementField f(img.width, img.height);
  f.u = img.data.cast<double>();
  return f;
}

ImageD warp(const ImageD& img, const DisplacementField& field) {
  if (img.width != field.width || img.height != field.height) throw ArgumentError("warp: shape mismatch");
  ImageD out(img.width, img.height, img.channels());
  for (int c = 0; c < img.channels(); ++c) {
    const Plane p = Eigen::Map<const Plane>(img.data.row(c).data(), img.height, img.width);
    const Plane w = warp_plane(p, field);
    out.data.row(c) = Eigen::Map<const Eigen::RowVectorXd>(w.data(), w.size());
  }
  return out;
}

DisplacementField register_images(const ImageF& moving, const ImageF& fixed, const RegisterOptions& opts) {
  require_same_shape(moving, fixed, "register");
  if (moving.channels() != 1) throw ArgumentError("register: expects single-channel images");
  if (opts.levels < 1 || opts.iterations < 0) throw ArgumentError("register: invalid options");

  std::vector<Plane> mov{to_plane(moving.cast<double>())}, fix{to_plane(fixed.cast<double>())};
  for (int l = 1; l < opts.levels; ++l) {
    mov.push_back(downsample(mov.back()));
    fix.push_back(downsample(fix.back()));
  }

  DisplacementField field(static_cast<int>(mov.back().cols()), static_cast<int>(mov.back().rows()));
  for (int l = opts.levels - 1; l >= 0; --l) {
    const auto& m = mov[static_cast<std::size_t>(l)];
    const auto& f = fix[static_cast<std::size_t>(l)];
    if (field.width != m.cols() || field.height != m.rows()) {
      field = upsample_field(field, static_cast<int>(m.cols()), static_cast<int>(m.rows()));
      zero_border(field);
    }
    if (l > 0) {
      for (int it = 0; it < opts.iterations; ++it) demons_step(m, f, field, opts);
      continue;
    }
    DisplacementField best(field.width, field.height);
    double best_mse = plane_mse(m, f);
    auto consider = [&] {
      const double e = plane_mse(warp_plane(m, field), f);
      if (e < best_mse) {
        best_mse = e;
        best = field;
      }
    };
    consider();
    for (int it = 0; it < opts.iterations; ++it) {
      demons_step(m, f, field, opts);
      consider();
    }
    field = std::move(best);
  }
  return field;
}

JacobianMap log_jacobian(const DisplacementField& f) {
  JacobianMap map{f.width, f.height, std::vector<double>(static_cast<std::size_t>(f.width) * f.height, 0.0)};
  for (int y = 0; y < f.height; ++y) {
    for (int x = 0; x < f.width; ++x) {
      const int xm = std::max(x - 1, 0), xp = std::min(x + 1, f.width - 1);
      const int ym = std::max(y - 1, 0), yp = std::min(y + 1, f.height - 1);
      const double dx = xp - xm, dy = yp - ym;
      const double a = dx > 0 ? (f.ux(y, xp) - f.ux(y, xm)) / dx : 0.0;  // d ux / dx
      const double b = dy > 0 ? (f.ux(yp, x) - f.ux(ym, x)) / dy : 0.0;  // d ux / dy
      const double c = dx > 0 ? (f.uy(y, xp) - f.uy(y, xm)) / dx : 0.0;  // d uy / dx
      const double d = dy > 0 ? (f.uy(yp, x) - f.uy(ym, x)) / dy : 0.0;  // d uy / dy
      const double det = (1 + a) * (1 + d) - b * c;
      map.log_det[static_cast<std::size_t>(y) * f.width + x] = std::log(std::max(det, kMinJacobianDet));
    }
  }
  return map;
}

JacobianStats jacobian_stats(const JacobianMap& map, const SegmentationMask& mask) {
  if (map.width != mask.width || map.height != mask.height) throw ArgumentError("jacobian_stats: shape mismatch");
  JacobianStats s;
  double abs_sum = 0, tissue = 0, csf = 0;
  for (std::size_t i = 0; i < map.log_det.size(); ++i) {
    const double v = map.log_det[i];
    if (mask.labels[i] == TissueClass::Tissue) {
      tissue += v;
      ++s.n_tissue;
    } else if (mask.labels[i] == TissueClass::CSF) {
      csf += v;
      ++s.n_csf;
    } else {
      continue;
    }
    abs_sum += std::abs(v);
  }
  const int fg = s.n_tissue + s.n_csf;
  s.mean_abs = fg ? abs_sum / fg : 0.0;
  s.mean_tissue = s.n_tissue ? tissue / s.n_tissue : 0.0;
  s.mean_csf = s.n_csf ? csf / s.n_csf : 0.0;
  return s;
}

MorphometryComparison morphometry_compare(const ImageF& baseline, const ImageF& real_followup,
                                          const ImageF& predicted_followup, const SegmentationMask& baseline_mask,
                                          const RegisterOptions& opts) {
  require_same_shape(baseline, real_followup, "morphometry_compare");
  require_same_shape(baseline, predicted_followup, "morphometry_compare");
  const ImageF fixed = extract_channel(baseline, kT1);
  MorphometryComparison out;
  out.real = jacobian_stats(log_jacobian(register_images(extract_channel(real_followup, kT1), fixed, opts)), baseline_mask);
  out.predicted =
      jacobian_stats(log_jacobian(register_images(extract_channel(predicted_followup, kT1), fixed, opts)), baseline_mask);
  out.diff_mean_abs = out.predicted.mean_abs - out.real.mean_abs;
  out.diff_tissue = out.predicted.mean_tissue - out.real.mean_tissue;
  out.diff_csf = out.predicted.mean_csf - out.real.mean_csf;
  return out;
}

}  // namespace rfgen
