#pragma once

#include <Eigen/Dense>

#include <array>
#include <string>

#include "sim2seg/error.hpp"

namespace sim2seg::nn {

/// Dense NCHW tensor. Storage is one contiguous Eigen array; a sample's
/// channels can be viewed as a row-major (C, H*W) matrix.
template <typename Scalar>
class Tensor {
 public:
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
  using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using MatrixMap = Eigen::Map<RowMatrix>;
  using ConstMatrixMap = Eigen::Map<const RowMatrix>;
  using Shape = std::array<int, 4>;

  Tensor() = default;
  Tensor(int n, int c, int h, int w)
      : shape_{n, c, h, w}, values_(Array::Zero(static_cast<Eigen::Index>(n) * c * h * w)) {}
  explicit Tensor(const Shape& s) : Tensor(s[0], s[1], s[2], s[3]) {}
  Tensor(const Shape& s, Array values) : shape_(s), values_(std::move(values)) {
    if (values_.size() != numel(s)) {
      throw Error(ErrorKind::kShape, "tensor storage does not match its shape");
    }
  }

  static Tensor constant(const Shape& s, Scalar v) {
    return Tensor(s, Array::Constant(numel(s), v));
  }
  static Eigen::Index numel(const Shape& s) {
    return static_cast<Eigen::Index>(s[0]) * s[1] * s[2] * s[3];
  }

  int n() const { return shape_[0]; }
  int c() const { return shape_[1]; }
  int h() const { return shape_[2]; }
  int w() const { return shape_[3]; }
  const Shape& shape() const { return shape_; }
  Eigen::Index size() const { return values_.size(); }
  Eigen::Index plane() const { return static_cast<Eigen::Index>(shape_[2]) * shape_[3]; }
  Eigen::Index sample_size() const { return plane() * shape_[1]; }

  Array& values() { return values_; }
  const Array& values() const { return values_; }
  Scalar* data() { return values_.data(); }
  const Scalar* data() const { return values_.data(); }

  Scalar& at(int n, int c, int y, int x) {
    return values_[((static_cast<Eigen::Index>(n) * shape_[1] + c) * shape_[2] + y) * shape_[3] + x];
  }
  Scalar at(int n, int c, int y, int x) const {
    return values_[((static_cast<Eigen::Index>(n) * shape_[1] + c) * shape_[2] + y) * shape_[3] + x];
  }

  MatrixMap sample(int i) { return MatrixMap(data() + i * sample_size(), c(), plane()); }
  ConstMatrixMap sample(int i) const {
    return ConstMatrixMap(data() + i * sample_size(), c(), plane());
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
  bool all_finite() const { return values_.isFinite().all(); }

  template <typename Other>
  Tensor<Other> cast() const {
    return Tensor<Other>(shape_, values_.template cast<Other>());
  }

 private:
  Shape shape_{0, 0, 0, 0};
  Array values_;
};

inline std::string shape_string(const std::array<int, 4>& s) {
  return "[" + std::to_string(s[0]) + "," + std::to_string(s[1]) + "," + std::to_string(s[2]) +
         "," + std::to_string(s[3]) + "]";
}

}  // namespace sim2seg::nn
