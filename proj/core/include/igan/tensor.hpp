#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "igan/common.hpp"
#include "igan/rng.hpp"

namespace igan {

// Dense row-major tensor with a small-rank dynamic shape. All layouts in this
// codebase are NHWC; matrices are (rows, cols).
template <typename T>
class Tensor {
 public:
  using Scalar = T;
  using MatMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
  using ConstMatMap =
      Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
  using VecMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>;
  using ConstVecMap = Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>;

  Tensor() = default;
  explicit Tensor(std::vector<long> shape) : shape_(std::move(shape)) {
    data_.assign(numel_of(shape_), T(0));
  }
  Tensor(std::initializer_list<long> shape) : Tensor(std::vector<long>(shape)) {}

  static Tensor zeros(std::vector<long> shape) { return Tensor(std::move(shape)); }

  static Tensor full(std::vector<long> shape, T value) {
    Tensor t(std::move(shape));
    t.fill(value);
    return t;
  }

  static Tensor gaussian(std::vector<long> shape, Rng& rng, T stddev = T(1)) {
    Tensor t(std::move(shape));
    for (auto& v : t.data_) v = static_cast<T>(rng.gaussian()) * stddev;
    return t;
  }

  const std::vector<long>& shape() const { return shape_; }
  long dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
  int rank() const { return static_cast<int>(shape_.size()); }
  std::size_t numel() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  T& at(std::initializer_list<long> idx) { return data_[offset(idx)]; }
  const T& at(std::initializer_list<long> idx) const { return data_[offset(idx)]; }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }
  void zero() { fill(T(0)); }

  // Same storage, new shape; element count must match.
  Tensor reshaped(std::vector<long> shape) const {
    IGAN_CHECK(numel_of(shape) == numel(), "reshape: element count mismatch for " + shape_str());
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = data_;
    return t;
  }

  // Rows [begin, end) along the leading dimension.
  Tensor slice0(long begin, long end) const {
    IGAN_CHECK(rank() >= 1 && begin >= 0 && begin <= end && end <= shape_[0],
               "slice0: bad range for " + shape_str());
    std::vector<long> shape = shape_;
    shape[0] = end - begin;
    Tensor t(shape);
    const long row = inner_size();
    std::copy(data_.begin() + begin * row, data_.begin() + end * row, t.data_.begin());
    return t;
  }

  // Concatenation along the leading dimension.
  static Tensor concat0(const Tensor& a, const Tensor& b) {
    IGAN_CHECK(a.rank() == b.rank() && a.rank() >= 1, "concat0: rank mismatch");
    for (int i = 1; i < a.rank(); ++i)
      IGAN_CHECK(a.dim(i) == b.dim(i), "concat0: trailing shape mismatch");
    std::vector<long> shape = a.shape_;
    shape[0] += b.shape_[0];
    Tensor t(shape);
    std::copy(a.data_.begin(), a.data_.end(), t.data_.begin());
    std::copy(b.data_.begin(), b.data_.end(), t.data_.begin() + static_cast<long>(a.numel()));
    return t;
  }

  // New tensor whose leading-dimension rows are src rows at `idx`.
  static Tensor gather0(const Tensor& src, const std::vector<long>& idx) {
    IGAN_CHECK(src.rank() >= 1, "gather0: need rank >= 1");
    std::vector<long> shape = src.shape_;
    shape[0] = static_cast<long>(idx.size());
    Tensor t(shape);
    const long row = src.inner_size();
    for (std::size_t i = 0; i < idx.size(); ++i) {
      IGAN_CHECK(idx[i] >= 0 && idx[i] < src.shape_[0], "gather0: index out of range");
      std::copy(src.data_.begin() + idx[i] * row, src.data_.begin() + (idx[i] + 1) * row,
                t.data_.begin() + static_cast<long>(i) * row);
    }
    return t;
  }

  MatMap mat(long rows, long cols) {
    IGAN_CHECK(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols) == numel(),
               "mat: size mismatch");
    return MatMap(data_.data(), rows, cols);
  }
  ConstMatMap mat(long rows, long cols) const {
    IGAN_CHECK(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols) == numel(),
               "mat: size mismatch");
    return ConstMatMap(data_.data(), rows, cols);
  }
  // Leading-dimension split: rows = shape[0], cols = rest.
  MatMap mat2d() { return mat(shape_.empty() ? 1 : shape_[0], inner_size()); }
  ConstMatMap mat2d() const { return mat(shape_.empty() ? 1 : shape_[0], inner_size()); }

  VecMap vec() { return VecMap(data_.data(), static_cast<long>(numel())); }
  ConstVecMap vec() const { return ConstVecMap(data_.data(), static_cast<long>(numel())); }

  bool all_finite() const {
    for (const T& v : data_)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  Tensor& operator+=(const Tensor& o) {
    IGAN_CHECK(same_shape(o), "operator+=: shape mismatch");
    vec() += o.vec();
    return *this;
  }
  Tensor& operator-=(const Tensor& o) {
    IGAN_CHECK(same_shape(o), "operator-=: shape mismatch");
    vec() -= o.vec();
    return *this;
  }
  Tensor& operator*=(T s) {
    vec() *= s;
    return *this;
  }

  std::string shape_str() const {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape_.size(); ++i) os << (i ? "x" : "") << shape_[i];
    os << "]";
    return os.str();
  }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(shape_);
    for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
    return out;
  }

 private:
  static std::size_t numel_of(const std::vector<long>& shape) {
    std::size_t n = 1;
    for (long d : shape) {
      IGAN_CHECK(d >= 0, "tensor dims must be nonnegative");
      n *= static_cast<std::size_t>(d);
    }
    return n;
  }

  long inner_size() const {
    long n = 1;
    for (std::size_t i = 1; i < shape_.size(); ++i) n *= shape_[i];
    return n;
  }

  std::size_t offset(std::initializer_list<long> idx) const {
    std::size_t off = 0;
    std::size_t i = 0;
    for (long v : idx) {
      off = off * static_cast<std::size_t>(shape_[i]) + static_cast<std::size_t>(v);
      ++i;
    }
    return off;
  }

  std::vector<long> shape_;
  std::vector<T> data_;

  template <typename U>
  friend class Tensor;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace igan
