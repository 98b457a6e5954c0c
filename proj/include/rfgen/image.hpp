#pragma once

#include <Eigen/Core>

#include <cstddef>

#include "rfgen/errors.hpp"

namespace rfgen {

/// Channel-major planar storage: one row per channel, pixels in raster order
/// (index = y * width + x). The same layout is used for network activations.
template <typename Scalar>
using Planes = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum Channel : int { kT1 = 0, kT1Gd = 1, kFlair = 2 };

template <typename Scalar>
struct Image {
  using Storage = Planes<Scalar>;

  int width = 0;
  int height = 0;
  Storage data;

  Image() = default;
  Image(int w, int h, int channels) : width(w), height(h), data(Storage::Zero(channels, w * h)) {}
  Image(int w, int h, Storage planes) : width(w), height(h), data(std::move(planes)) {
    if (data.cols() != static_cast<Eigen::Index>(w) * h) {
      throw ArgumentError("planar storage does not match image size");
    }
  }

  int channels() const { return static_cast<int>(data.rows()); }
  int pixels() const { return width * height; }
  bool empty() const { return data.size() == 0; }

  Scalar& operator()(int c, int y, int x) { return data(c, y * width + x); }
  Scalar operator()(int c, int y, int x) const { return data(c, y * width + x); }

  auto channel(int c) { return data.row(c); }
  auto channel(int c) const { return data.row(c); }

  bool same_shape(const Image& other) const {
    return width == other.width && height == other.height && channels() == other.channels();
  }

  template <typename Other>
  Image<Other> cast() const {
    return Image<Other>(width, height, data.template cast<Other>());
  }

  bool operator==(const Image& other) const { return same_shape(other) && data == other.data; }
};

using ImageF = Image<float>;
using ImageD = Image<double>;

/// Single-channel view of one plane as a new image.
template <typename Scalar>
Image<Scalar> extract_channel(const Image<Scalar>& img, int c) {
  return Image<Scalar>(img.width, img.height, Planes<Scalar>(img.data.row(c)));
}

/// Stack planes of `a` over planes of `b`.
template <typename Scalar>
Image<Scalar> concat_channels(const Image<Scalar>& a, const Image<Scalar>& b) {
  if (a.width != b.width || a.height != b.height) throw ArgumentError("concat_channels: size mismatch");
  Planes<Scalar> out(a.channels() + b.channels(), a.pixels());
  out << a.data, b.data;
  return Image<Scalar>(a.width, a.height, std::move(out));
}

template <typename Scalar>
void require_same_shape(const Image<Scalar>& a, const Image<Scalar>& b, const char* what) {
  if (!a.same_shape(b)) throw ArgumentError(std::string(what) + ": image shape mismatch");
}

}  // namespace rfgen
