#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>

#include "rfgen/image.hpp"
#include "rfgen/layers.hpp"
#include "rfgen/params.hpp"

namespace rfgen::test {

inline nn::Mat<double> random_mat(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  nn::Mat<double> m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

inline ImageF random_image(int w, int h, int c, std::mt19937_64& rng) {
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  ImageF img(w, h, c);
  for (Eigen::Index i = 0; i < img.data.size(); ++i) img.data.data()[i] = u(rng);
  return img;
}

inline void randomize(ParamStore<double>& p, std::mt19937_64& rng, double scale = 0.5) {
  for (int i = 0; i < p.size(); ++i) p[i] = random_mat(p[i].rows(), p[i].cols(), rng, scale);
}

inline double relative_error(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6}); }

/// Largest relative error between `grad` and central differences of `loss`
/// over every entry of `p`.
inline double max_gradient_error(const ParamStore<double>& p, const ParamStore<double>& grad,
                                 const std::function<double(const ParamStore<double>&)>& loss, double h = 1e-5) {
  double worst = 0;
  ParamStore<double> q = p;
  for (int i = 0; i < p.size(); ++i) {
    for (Eigen::Index k = 0; k < p[i].size(); ++k) {
      const double orig = q[i].data()[k];
      q[i].data()[k] = orig + h;
      const double lp = loss(q);
      q[i].data()[k] = orig - h;
      const double lm = loss(q);
      q[i].data()[k] = orig;
      worst = std::max(worst, relative_error(grad[i].data()[k], (lp - lm) / (2 * h)));
    }
  }
  return worst;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("rfgen_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace rfgen::test
