#pragma once

// Independent reference implementations shared by the unit tests and the
// acceptance runner.

#include <cmath>

#include "rfgen/image.hpp"
#include "rfgen/morpho.hpp"

namespace rfgen::test {

// Independent per-window SSIM: explicit 2-D Gaussian weights, direct sums.
inline double ssim_oracle(const ImageF& a, const ImageF& b) {
  const int win = 11, r = 5;
  const double sigma = 1.5, c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  double wsum = 0;
  double w[11][11];
  for (int i = 0; i < win; ++i)
    for (int j = 0; j < win; ++j) wsum += w[i][j] = std::exp(-((i - r) * (i - r) + (j - r) * (j - r)) / (2 * sigma * sigma));
  double total = 0;
  for (int c = 0; c < a.channels(); ++c) {
    double acc = 0;
    int count = 0;
    for (int y = 0; y + win <= a.height; ++y) {
      for (int x = 0; x + win <= a.width; ++x) {
        double ma = 0, mb = 0;
        for (int i = 0; i < win; ++i)
          for (int j = 0; j < win; ++j) {
            ma += w[i][j] / wsum * a(c, y + i, x + j);
            mb += w[i][j] / wsum * b(c, y + i, x + j);
          }
        double va = 0, vb = 0, cov = 0;
        for (int i = 0; i < win; ++i)
          for (int j = 0; j < win; ++j) {
            const double da = a(c, y + i, x + j) - ma, db = b(c, y + i, x + j) - mb;
            va += w[i][j] / wsum * da * da;
            vb += w[i][j] / wsum * db * db;
            cov += w[i][j] / wsum * da * db;
          }
        acc += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        ++count;
      }
    }
    total += acc / count;
  }
  return total / a.channels();
}

inline DisplacementField affine_field(int w, int h, double a11, double a12, double a21, double a22) {
  DisplacementField f(w, h);
  const double cx = (w - 1) / 2.0, cy = (h - 1) / 2.0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      f.ux(y, x) = a11 * (x - cx) + a12 * (y - cy);
      f.uy(y, x) = a21 * (x - cx) + a22 * (y - cy);
    }
  }
  return f;
}

inline ImageF blob(int size, double cx, double cy, double sigma) {
  ImageF img(size, size, 1);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x)
      img(0, y, x) = static_cast<float>(std::exp(-((x - cx) * (x - cx) + (y - cy) * (y - cy)) / (2 * sigma * sigma)));
  return img;
}

}  // namespace rfgen::test
