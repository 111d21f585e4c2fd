#pragma once

#include <cmath>
#include <string>

#include "igan/nn/layers.hpp"

namespace igan::nn {

inline constexpr double kSnEps = 1e-12;

namespace detail {

// One power-iteration update of the left singular vector estimate u for the
// (rows x cols) matrix W: v = normalize(W^T u), u = normalize(W v).
template <typename T>
void sn_iterate(const Tensor<T>& w, long rows, long cols, Tensor<T>& u, long iters) {
  auto wm = w.mat(rows, cols);
  Eigen::Matrix<T, Eigen::Dynamic, 1> v(cols);
  auto uv = u.vec();
  for (long i = 0; i < iters; ++i) {
    v.noalias() = wm.transpose() * uv;
    v /= std::max(v.norm(), T(kSnEps));
    uv.noalias() = wm * v;
    uv /= std::max(uv.norm(), T(kSnEps));
  }
}

// Spectral-norm estimate from a frozen u: sigma = ||W^T u||. Also emits the
// matching right vector v = W^T u / sigma, which makes u v^T the exact
// gradient of sigma with respect to W.
template <typename T>
T sn_sigma(const Tensor<T>& w, long rows, long cols, const Tensor<T>& u, Tensor<T>& v_out) {
  auto wm = w.mat(rows, cols);
  v_out = Tensor<T>({cols});
  v_out.vec().noalias() = wm.transpose() * u.vec();
  const T sigma = v_out.vec().norm();
  v_out.vec() /= std::max(sigma, T(kSnEps));
  return sigma;
}

}  // namespace detail

// Deterministic generic start vector for power iteration.
template <typename T>
Tensor<T> sn_init_state(long rows, Rng& rng) {
  Tensor<T> u({rows});
  T norm2 = T(0);
  for (std::size_t i = 0; i < u.numel(); ++i) {
    u[i] = static_cast<T>(rng.gaussian());
    norm2 += u[i] * u[i];
  }
  const T inv = T(1) / std::max(std::sqrt(norm2), T(kSnEps));
  for (std::size_t i = 0; i < u.numel(); ++i) u[i] *= inv;
  return u;
}

// Normalizes a weight by its estimated top singular value. Kernels of rank
// above 2 are treated as (dim0) x (everything else). `state` is the persisted
// left-vector estimate; an empty state is seeded deterministically. A zero
// matrix comes back as zeros (sigma is floored at kSnEps).
template <typename T>
Tensor<T> spectral_normalize(const Tensor<T>& weight, Tensor<T>& state, long iters) {
  IGAN_CHECK(weight.rank() >= 2, "spectral_normalize: need rank >= 2, got " + weight.shape_str());
  IGAN_CHECK(weight.all_finite(), "spectral_normalize: non-finite weight");
  const long rows = weight.dim(0);
  const long cols = static_cast<long>(weight.numel()) / rows;
  if (state.numel() != static_cast<std::size_t>(rows)) {
    Rng seed_rng(0x5bd1e995u ^ (static_cast<uint64_t>(rows) << 20) ^ static_cast<uint64_t>(cols));
    state = sn_init_state<T>(rows, seed_rng);
  }
  detail::sn_iterate(weight, rows, cols, state, iters);
  Tensor<T> v;
  const T sigma = detail::sn_sigma(weight, rows, cols, state, v);
  Tensor<T> out = weight;
  const T inv = T(1) / std::max(sigma, T(kSnEps));
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= inv;
  return out;
}

// Linear layer with spectral-normalized weight. Each training-mode forward
// advances the power iteration once; frozen mode reuses the persisted state,
// which keeps the backward pass an exact gradient of the forward map.
template <typename T>
class SNLinear : public Linear<T> {
 public:
  SNLinear() = default;
  SNLinear(std::string name, long in, long out, Rng& rng, T gain = T(1), bool bias = true)
      : Linear<T>(name, in, out, rng, gain, bias) {
    u_ = sn_init_state<T>(out, rng);
    u_name_ = name + ".sn_u";
  }

  void set_training(bool training) { training_ = training; }

  // Extra power iterations against the current weight, e.g. before eval.
  void refresh(long iters) {
    detail::sn_iterate(this->w_.value, this->out_, this->in_, u_, iters);
  }

  Tensor<T> forward(const Tensor<T>& x) {
    if (training_) detail::sn_iterate(this->w_.value, this->out_, this->in_, u_, 1);
    sigma_ = detail::sn_sigma(this->w_.value, this->out_, this->in_, u_, v_);
    wn_ = this->w_.value;
    const T inv = T(1) / std::max(sigma_, T(kSnEps));
    for (std::size_t i = 0; i < wn_.numel(); ++i) wn_[i] *= inv;
    return this->forward_with(x, wn_);
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    Tensor<T> gn(this->w_.value.shape());
    Tensor<T> dx = this->backward_with(dy, wn_, gn);
    accumulate_raw_grad(gn, wn_, sigma_, u_, v_, this->w_.grad);
    return dx;
  }

  void collect(ParamRefs<T>& r) {
    Linear<T>::collect(r);
    r.add_state(u_name_, u_);
  }

  T sigma() const { return sigma_; }

  // Maps the gradient wrt the normalized weight to the raw weight:
  // d(W/sigma) with sigma = u^T W v gives G/sigma - <G, Wn>_F u v^T / sigma.
  static void accumulate_raw_grad(const Tensor<T>& gn, const Tensor<T>& wn, T sigma,
                                  const Tensor<T>& u, const Tensor<T>& v, Tensor<T>& out) {
    const long rows = u.dim(0), cols = v.dim(0);
    const T inv = T(1) / std::max(sigma, T(kSnEps));
    auto gm = gn.mat(rows, cols);
    auto wm = wn.mat(rows, cols);
    const T dot = (gm.array() * wm.array()).sum();
    out.mat(rows, cols).noalias() += inv * (gm - dot * (u.vec() * v.vec().transpose()));
  }

 private:
  std::string u_name_;
  bool training_ = true;
  Tensor<T> u_, v_, wn_;
  T sigma_ = T(1);
};

template <typename T>
class SNConv2d : public Conv2d<T> {
 public:
  SNConv2d() = default;
  SNConv2d(std::string name, long in_c, long out_c, long k, long stride, long pad, Rng& rng,
           T gain = T(1), bool bias = true)
      : Conv2d<T>(name, in_c, out_c, k, stride, pad, rng, gain, bias) {
    u_ = sn_init_state<T>(out_c, rng);
    u_name_ = name + ".sn_u";
  }

  void set_training(bool training) { training_ = training; }

  void refresh(long iters) {
    detail::sn_iterate(this->w_.value, rows(), cols(), u_, iters);
  }

  Tensor<T> forward(const Tensor<T>& x) {
    if (training_) detail::sn_iterate(this->w_.value, rows(), cols(), u_, 1);
    sigma_ = detail::sn_sigma(this->w_.value, rows(), cols(), u_, v_);
    wn_ = this->w_.value;
    const T inv = T(1) / std::max(sigma_, T(kSnEps));
    for (std::size_t i = 0; i < wn_.numel(); ++i) wn_[i] *= inv;
    return this->forward_with(x, wn_);
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    Tensor<T> gn(this->w_.value.shape());
    Tensor<T> dx = this->backward_with(dy, wn_, gn);
    SNLinear<T>::accumulate_raw_grad(gn, wn_, sigma_, u_, v_, this->w_.grad);
    return dx;
  }

  void collect(ParamRefs<T>& r) {
    Conv2d<T>::collect(r);
    r.add_state(u_name_, u_);
  }

  T sigma() const { return sigma_; }

 private:
  long rows() const { return this->out_c_; }
  long cols() const { return this->k_ * this->k_ * this->in_c_; }

  std::string u_name_;
  bool training_ = true;
  Tensor<T> u_, v_, wn_;
  T sigma_ = T(1);
};

}  // namespace igan::nn
