#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstddef>
#include <random>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "rfgen/errors.hpp"

namespace rfgen {

/// Ordered, named collection of weight matrices. Registration order is the
/// serialization order and is fully determined by the model configuration.
template <typename Scalar>
class ParamStore {
 public:
  using Tensor = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  int add(std::string name, Eigen::Index rows, Eigen::Index cols) {
    if (lookup_.count(name)) throw ArgumentError("duplicate parameter name: " + name);
    const int idx = static_cast<int>(tensors_.size());
    lookup_.emplace(name, idx);
    names_.push_back(std::move(name));
    tensors_.push_back(Tensor::Zero(rows, cols));
    return idx;
  }

  Tensor& operator[](int i) { return tensors_[static_cast<std::size_t>(i)]; }
  const Tensor& operator[](int i) const { return tensors_[static_cast<std::size_t>(i)]; }

  int index(std::string_view name) const {
    const auto it = lookup_.find(std::string(name));
    if (it == lookup_.end()) throw ArgumentError("unknown parameter: " + std::string(name));
    return it->second;
  }
  bool contains(std::string_view name) const { return lookup_.count(std::string(name)) > 0; }

  int size() const { return static_cast<int>(tensors_.size()); }
  const std::string& name(int i) const { return names_[static_cast<std::size_t>(i)]; }

  std::size_t total_weights() const {
    std::size_t n = 0;
    for (const auto& t : tensors_) n += static_cast<std::size_t>(t.size());
    return n;
  }

  ParamStore zeros_like() const {
    ParamStore out = *this;
    out.set_zero();
    return out;
  }

  void set_zero() {
    for (auto& t : tensors_) t.setZero();
  }

  void add_scaled(const ParamStore& other, Scalar s) {
    for (std::size_t i = 0; i < tensors_.size(); ++i) tensors_[i] += s * other.tensors_[i];
  }

  /// this += a * (other - this)
  void lerp_toward(const ParamStore& other, Scalar a) {
    for (std::size_t i = 0; i < tensors_.size(); ++i) tensors_[i] += a * (other.tensors_[i] - tensors_[i]);
  }

  void scale(Scalar s) {
    for (auto& t : tensors_) t *= s;
  }

  Scalar squared_norm() const {
    Scalar n = 0;
    for (const auto& t : tensors_) n += t.squaredNorm();
    return n;
  }

  bool all_finite() const {
    for (const auto& t : tensors_)
      if (!t.allFinite()) return false;
    return true;
  }

  template <typename Other>
  ParamStore<Other> cast() const {
    ParamStore<Other> out;
    for (std::size_t i = 0; i < tensors_.size(); ++i) {
      const int j = out.add(names_[i], tensors_[i].rows(), tensors_[i].cols());
      out[j] = tensors_[i].template cast<Other>();
    }
    return out;
  }

  bool operator==(const ParamStore& o) const {
    if (names_ != o.names_) return false;
    for (std::size_t i = 0; i < tensors_.size(); ++i) {
      if (tensors_[i].rows() != o.tensors_[i].rows() || tensors_[i].cols() != o.tensors_[i].cols()) return false;
      if (tensors_[i] != o.tensors_[i]) return false;
    }
    return true;
  }

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> tensors_;
  std::unordered_map<std::string, int> lookup_;
};

}  // namespace rfgen
