#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "nargen/common.hpp"

namespace nargen {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using VectorX = Eigen::Vector<Scalar, Eigen::Dynamic>;
template <typename Scalar>
using MatMap = Eigen::Map<MatrixX<Scalar>>;
template <typename Scalar>
using ConstMatMap = Eigen::Map<const MatrixX<Scalar>>;
template <typename Scalar>
using VecMap = Eigen::Map<VectorX<Scalar>>;
template <typename Scalar>
using ConstVecMap = Eigen::Map<const VectorX<Scalar>>;

inline Index shape_size(const Shape& shape) {
  Index n = 1;
  for (Index d : shape) n *= d;
  return n;
}

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

// Dense row-major tensor of dynamic rank; the carrier for all model math.
// Rank-0 tensors hold a single scalar. 2-D views map onto Eigen matrices,
// which is where all the heavy lifting happens.
template <typename Scalar>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape) : shape_(std::move(shape)) {
    validate_shape();
    data_.assign(static_cast<std::size_t>(shape_size(shape_)), Scalar(0));
  }

  Tensor(Shape shape, std::vector<Scalar> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    validate_shape();
    if (shape_size(shape_) != static_cast<Index>(data_.size())) {
      throw DimensionError("Tensor: shape " + shape_string(shape_) + " does not match data length " +
                           std::to_string(data_.size()));
    }
  }

  static Tensor full(Shape shape, Scalar v) {
    Tensor t(std::move(shape));
    for (auto& x : t.data_) x = v;
    return t;
  }

  static Tensor scalar(Scalar v) { return Tensor(Shape{}, {v}); }

  template <typename Other>
  static Tensor cast_from(const Tensor<Other>& other) {
    std::vector<Scalar> data(other.data().size());
    for (std::size_t i = 0; i < data.size(); ++i) data[i] = static_cast<Scalar>(other.data()[i]);
    return Tensor(other.shape(), std::move(data));
  }

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  Index dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
  Index size() const { return static_cast<Index>(data_.size()); }
  bool empty() const { return data_.empty(); }

  Scalar* raw() { return data_.data(); }
  const Scalar* raw() const { return data_.data(); }
  std::vector<Scalar>& data() { return data_; }
  const std::vector<Scalar>& data() const { return data_; }

  Scalar& operator[](Index i) { return data_[static_cast<std::size_t>(i)]; }
  Scalar operator[](Index i) const { return data_[static_cast<std::size_t>(i)]; }

  // Scalar value of a rank-0/size-1 tensor.
  Scalar item() const {
    if (size() != 1) throw ContractError("Tensor::item on non-scalar " + shape_string(shape_));
    return data_[0];
  }

  // 2-D Eigen view with an explicit split of the flat storage.
  MatMap<Scalar> mat(Index rows, Index cols) {
    check_view(rows, cols);
    return MatMap<Scalar>(data_.data(), rows, cols);
  }
  ConstMatMap<Scalar> mat(Index rows, Index cols) const {
    check_view(rows, cols);
    return ConstMatMap<Scalar>(data_.data(), rows, cols);
  }

  // Natural 2-D view of a rank-2 tensor.
  MatMap<Scalar> mat() { return mat(require_rank2_rows(), shape_[1]); }
  ConstMatMap<Scalar> mat() const { return mat(require_rank2_rows(), shape_[1]); }

  VecMap<Scalar> vec() { return VecMap<Scalar>(data_.data(), size()); }
  ConstVecMap<Scalar> vec() const { return ConstVecMap<Scalar>(data_.data(), size()); }

  // Same storage, different shape (copies; tensors have value semantics).
  Tensor reshaped(Shape shape) const {
    if (shape_size(shape) != size()) {
      throw DimensionError("Tensor::reshaped: " + shape_string(shape_) + " -> " + shape_string(shape));
    }
    return Tensor(std::move(shape), data_);
  }

  bool all_finite() const {
    for (const Scalar& x : data_) {
      if (!std::isfinite(static_cast<double>(x))) return false;
    }
    return true;
  }

  void require_finite(const char* context) const {
    if (!all_finite()) throw NumericalError(std::string("non-finite values in ") + context);
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  void validate_shape() const {
    for (Index d : shape_) {
      if (d < 0) throw DimensionError("Tensor: negative dimension in " + shape_string(shape_));
    }
  }
  void check_view(Index rows, Index cols) const {
    if (rows * cols != size()) {
      throw DimensionError("Tensor: cannot view " + shape_string(shape_) + " as " +
                           std::to_string(rows) + "x" + std::to_string(cols));
    }
  }
  Index require_rank2_rows() const {
    if (rank() != 2) throw DimensionError("Tensor: rank-2 view of " + shape_string(shape_));
    return shape_[0];
  }

  Shape shape_;
  std::vector<Scalar> data_;
};

template <typename Scalar>
Tensor<Scalar> random_normal(Shape shape, double stddev, std::uint64_t seed) {
  Tensor<Scalar> t(std::move(shape));
  Rng rng(seed);
  for (Index i = 0; i < t.size(); ++i) t[i] = static_cast<Scalar>(rng.normal() * stddev);
  return t;
}

}  // namespace nargen
