#pragma once

#include <Eigen/Dense>

#include <string>
#include <utility>
#include <vector>

#include "igan/tensor.hpp"

namespace igan::nn {

// A trainable tensor with its gradient accumulator.
template <typename T>
struct Param {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;

  void init_shape(std::vector<long> shape) {
    value = Tensor<T>(shape);
    grad = Tensor<T>(std::move(shape));
  }
};

// Named non-trainable state (power-iteration vectors, BN running stats).
template <typename T>
struct NamedState {
  std::string name;
  Tensor<T>* tensor;
};

template <typename T>
struct ParamRefs {
  std::vector<Param<T>*> params;
  std::vector<NamedState<T>> states;

  void add(Param<T>& p) { params.push_back(&p); }
  void add_state(std::string name, Tensor<T>& t) { states.push_back({std::move(name), &t}); }
  void absorb(ParamRefs&& o) {
    params.insert(params.end(), o.params.begin(), o.params.end());
    states.insert(states.end(), o.states.begin(), o.states.end());
  }

  void zero_grad() {
    for (auto* p : params) p->grad.zero();
  }
  std::size_t param_count() const {
    std::size_t n = 0;
    for (auto* p : params) n += p->value.numel();
    return n;
  }
};

// Orthogonal initialization: QR of a seeded Gaussian matrix, sign-fixed so the
// decomposition is unique, scaled by `gain`. Convolution kernels are treated
// as (out, fan_in) matrices.
template <typename T>
void orthogonal_init(Tensor<T>& w, long rows, long cols, Rng& rng, T gain) {
  using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic>;
  const bool wide = cols > rows;
  const long r = wide ? cols : rows;
  const long c = wide ? rows : cols;
  Mat a(r, c);
  for (long i = 0; i < r; ++i)
    for (long j = 0; j < c; ++j) a(i, j) = rng.gaussian();
  Eigen::HouseholderQR<Mat> qr(a);
  Mat q = qr.householderQ() * Mat::Identity(r, c);
  Mat rmat = qr.matrixQR().topRows(c).template triangularView<Eigen::Upper>();
  for (long j = 0; j < c; ++j)
    if (rmat(j, j) < 0) q.col(j) = -q.col(j);
  if (wide) q.transposeInPlace();
  auto m = w.mat(rows, cols);
  for (long i = 0; i < rows; ++i)
    for (long j = 0; j < cols; ++j) m(i, j) = static_cast<T>(q(i, j)) * gain;
}

}  // namespace igan::nn
