#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

#include "iet/error.hpp"

namespace iet {

// Dense row-major tensor of 64-bit floats. All public numeric operations
// keep values finite; NaN/Inf raises NumericError instead of propagating.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<int64_t> shape, std::string name = {})
      : shape_(std::move(shape)), name_(std::move(name)) {
    data_.assign(static_cast<size_t>(count(shape_)), 0.0);
  }

  Tensor(std::vector<int64_t> shape, std::vector<double> data,
         std::string name = {})
      : shape_(std::move(shape)), data_(std::move(data)), name_(std::move(name)) {
    if (count(shape_) != static_cast<int64_t>(data_.size()))
      throw DimensionError("tensor data size does not match shape");
  }

  static Tensor full(std::vector<int64_t> shape, double v) {
    Tensor t(std::move(shape));
    for (double& x : t.data_) x = v;
    return t;
  }

  const std::vector<int64_t>& shape() const { return shape_; }
  int64_t dim(size_t i) const { return shape_.at(i); }
  size_t rank() const { return shape_.size(); }
  int64_t numel() const { return static_cast<int64_t>(data_.size()); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& vec() { return data_; }
  const std::vector<double>& vec() const { return data_; }

  const std::string& name() const { return name_; }
  void set_name(std::string n) { name_ = std::move(n); }

  double& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  double operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

  double& at2(int64_t i, int64_t j) { return data_[static_cast<size_t>(i * shape_[1] + j)]; }
  double at2(int64_t i, int64_t j) const { return data_[static_cast<size_t>(i * shape_[1] + j)]; }

  double& at3(int64_t i, int64_t j, int64_t k) {
    return data_[static_cast<size_t>((i * shape_[1] + j) * shape_[2] + k)];
  }
  double at3(int64_t i, int64_t j, int64_t k) const {
    return data_[static_cast<size_t>((i * shape_[1] + j) * shape_[2] + k)];
  }

  // Same storage, new logical shape. Element count must match.
  Tensor reshaped(std::vector<int64_t> shape) const {
    if (count(shape) != numel())
      throw DimensionError("reshape changes element count");
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = data_;
    t.name_ = name_;
    return t;
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  // Throws NumericError naming `what` if any element is NaN/Inf.
  void check_finite(const char* what) const;

  static int64_t count(const std::vector<int64_t>& shape) {
    int64_t n = 1;
    for (int64_t e : shape) {
      if (e < 0) throw DimensionError("negative extent");
      n *= e;
    }
    return n;
  }

 private:
  std::vector<int64_t> shape_;
  std::vector<double> data_;
  std::string name_;
};

// Cotangent paired with a parameter or activation; shape mirrors the primal.
using Grad = Tensor;

}  // namespace iet
