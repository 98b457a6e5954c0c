#pragma once

#include <vector>

#include "rfgen/image.hpp"
#include "rfgen/labels.hpp"

namespace rfgen {

/// Pull-back displacement in pixel units: the warped moving image at x is
/// moving(x + u(x)). Row 0 holds the x component, row 1 the y component.
struct DisplacementField {
  int width = 0;
  int height = 0;
  Planes<double> u;

  DisplacementField() = default;
  DisplacementField(int w, int h) : width(w), height(h), u(Planes<double>::Zero(2, static_cast<Eigen::Index>(w) * h)) {}

  double& ux(int y, int x) { return u(0, y * width + x); }
  double& uy(int y, int x) { return u(1, y * width + x); }
  double ux(int y, int x) const { return u(0, y * width + x); }
  double uy(int y, int x) const { return u(1, y * width + x); }

  ImageF to_image() const { return Image<double>(width, height, u).cast<float>(); }
  static DisplacementField from_image(const ImageF& img);
};

/// Bilinear sampling of `img` at x + u(x), clamped to the image domain.
ImageD warp(const ImageD& img, const DisplacementField& field);

struct RegisterOptions {
  int levels = 3;
  int iterations = 60;  // per level
  double smoothing_sigma = 1.5;
  double epsilon = 1e-9;
};

/// Multi-resolution demons registration of single-channel images. The
/// returned field warps `moving` onto `fixed`; among the finest-level
/// iterates (and the zero field) the one with the lowest MSE is returned.
DisplacementField register_images(const ImageF& moving, const ImageF& fixed, const RegisterOptions& opts = {});

inline constexpr double kMinJacobianDet = 1e-6;

struct JacobianMap {
  int width = 0;
  int height = 0;
  std::vector<double> log_det;  // log(max(det(I + grad u), 1e-6))

  double operator()(int y, int x) const { return log_det[static_cast<std::size_t>(y) * width + x]; }
};

/// Central differences in the interior, one-sided at the border.
JacobianMap log_jacobian(const DisplacementField& field);

/// Background excluded: mean |log J| over Tissue and CSF together, signed means per class.
struct JacobianStats {
  double mean_abs = 0;
  double mean_tissue = 0;
  double mean_csf = 0;
  int n_tissue = 0;
  int n_csf = 0;
};

JacobianStats jacobian_stats(const JacobianMap& map, const SegmentationMask& mask);

struct MorphometryComparison {
  JacobianStats real;
  JacobianStats predicted;
  double diff_mean_abs = 0;  // predicted - real
  double diff_tissue = 0;
  double diff_csf = 0;
};

/// Registers each follow-up (T1-like channel) onto the baseline, so the
/// Jacobians live in baseline space where `baseline_mask` applies. Positive
/// values mean the follow-up expanded relative to baseline.
MorphometryComparison morphometry_compare(const ImageF& baseline, const ImageF& real_followup,
                                          const ImageF& predicted_followup, const SegmentationMask& baseline_mask,
                                          const RegisterOptions& opts = {});

}  // namespace rfgen
