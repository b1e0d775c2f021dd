#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <ostream>
#include <span>
#include <string>

#include "minimax/errors.hpp"

namespace minimax {

using Index = Eigen::Index;

// Dense NCHW shape. Scalars and vectors are expressed with unit dimensions.
struct Shape {
  Index n = 0;
  Index c = 0;
  Index h = 0;
  Index w = 0;

  Index size() const { return n * c * h * w; }
  Index plane() const { return h * w; }
  Index item() const { return c * h * w; }

  friend bool operator==(const Shape&, const Shape&) = default;
};

inline std::string to_string(const Shape& s) {
  return "(" + std::to_string(s.n) + "," + std::to_string(s.c) + "," + std::to_string(s.h) +
         "," + std::to_string(s.w) + ")";
}

inline std::ostream& operator<<(std::ostream& os, const Shape& s) { return os << to_string(s); }

// Owning dense tensor, NCHW row-major (w fastest). Storage is an Eigen array so
// element-wise arithmetic can use Eigen expressions directly via array().
template <typename Scalar>
class Tensor {
 public:
  using Storage = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
  // One image viewed as (H*W) x C, column-major: column c is channel c's plane.
  using ImageMatrix = Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>>;
  using ConstImageMatrix = Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>>;

  Tensor() = default;
  explicit Tensor(Shape shape) : shape_(shape), data_(Storage::Zero(shape.size())) {}
  Tensor(Shape shape, Scalar fill) : shape_(shape), data_(Storage::Constant(shape.size(), fill)) {}

  static Tensor zeros(Shape shape) { return Tensor(shape); }
  static Tensor constant(Shape shape, Scalar v) { return Tensor(shape, v); }
  static Tensor scalar(Scalar v) { return Tensor(Shape{1, 1, 1, 1}, v); }
  static Tensor vector(Index len) { return Tensor(Shape{1, len, 1, 1}); }

  const Shape& shape() const { return shape_; }
  Index size() const { return shape_.size(); }
  bool empty() const { return data_.size() == 0; }

  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }
  std::span<Scalar> span() { return {data_.data(), static_cast<std::size_t>(data_.size())}; }
  std::span<const Scalar> span() const {
    return {data_.data(), static_cast<std::size_t>(data_.size())};
  }

  Storage& array() { return data_; }
  const Storage& array() const { return data_; }

  Scalar& operator[](Index i) { return data_[i]; }
  Scalar operator[](Index i) const { return data_[i]; }

  Scalar& operator()(Index n, Index c, Index h, Index w) {
    return data_[((n * shape_.c + c) * shape_.h + h) * shape_.w + w];
  }
  Scalar operator()(Index n, Index c, Index h, Index w) const {
    return data_[((n * shape_.c + c) * shape_.h + h) * shape_.w + w];
  }

  Scalar* plane(Index n, Index c) { return data() + (n * shape_.c + c) * shape_.plane(); }
  const Scalar* plane(Index n, Index c) const {
    return data() + (n * shape_.c + c) * shape_.plane();
  }

  ImageMatrix image(Index n) { return ImageMatrix(plane(n, 0), shape_.plane(), shape_.c); }
  ConstImageMatrix image(Index n) const {
    return ConstImageMatrix(plane(n, 0), shape_.plane(), shape_.c);
  }

  Scalar item() const {
    if (size() != 1) throw ContractError("item() on tensor of shape " + to_string(shape_));
    return data_[0];
  }

  void fill(Scalar v) { data_.setConstant(v); }
  void set_zero() { data_.setZero(); }

  Tensor reshaped(Shape s) const {
    if (s.size() != size()) throw ContractError("reshape size mismatch " + to_string(s));
    Tensor out = *this;
    out.shape_ = s;
    return out;
  }

  template <typename Other>
  Tensor<Other> cast() const {
    Tensor<Other> out(shape_);
    out.array() = data_.template cast<Other>();
    return out;
  }

  Tensor& operator+=(const Tensor& o) {
    require_same_shape(o, "+=");
    data_ += o.data_;
    return *this;
  }
  Tensor& operator-=(const Tensor& o) {
    require_same_shape(o, "-=");
    data_ -= o.data_;
    return *this;
  }
  Tensor& operator*=(Scalar s) {
    data_ *= s;
    return *this;
  }

  bool all_finite() const { return data_.allFinite(); }

  void require_same_shape(const Tensor& o, const char* what) const {
    if (!(shape_ == o.shape_)) {
      throw ContractError(std::string("shape mismatch in ") + what + ": " + to_string(shape_) +
                          " vs " + to_string(o.shape_));
    }
  }

 private:
  Shape shape_{};
  Storage data_{};
};

template <typename Scalar>
Tensor<Scalar> operator+(Tensor<Scalar> a, const Tensor<Scalar>& b) {
  a += b;
  return a;
}

template <typename Scalar>
Tensor<Scalar> operator-(Tensor<Scalar> a, const Tensor<Scalar>& b) {
  a -= b;
  return a;
}

template <typename Scalar>
Tensor<Scalar> operator*(Tensor<Scalar> a, Scalar s) {
  a *= s;
  return a;
}

}  // namespace minimax
