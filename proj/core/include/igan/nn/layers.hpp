#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>
#include <vector>

#include "igan/nn/module.hpp"
#include "igan/tensor.hpp"

namespace igan::nn {

// Fully connected layer, y = x W^T + b with x of shape (N, in).
template <typename T>
class Linear {
 public:
  Linear() = default;
  Linear(std::string name, long in, long out, Rng& rng, T gain = T(1), bool bias = true)
      : in_(in), out_(out), has_bias_(bias) {
    w_.name = name + ".weight";
    w_.init_shape({out, in});
    orthogonal_init(w_.value, out, in, rng, gain);
    if (bias) {
      b_.name = name + ".bias";
      b_.init_shape({out});
    }
  }

  Tensor<T> forward(const Tensor<T>& x) { return forward_with(x, w_.value); }

  Tensor<T> backward(const Tensor<T>& dy) { return backward_with(dy, w_.value, w_.grad); }

  void collect(ParamRefs<T>& r) {
    r.add(w_);
    if (has_bias_) r.add(b_);
  }

  long in_features() const { return in_; }
  long out_features() const { return out_; }
  Param<T>& weight() { return w_; }
  Param<T>& bias() { return b_; }

 protected:
  Tensor<T> forward_with(const Tensor<T>& x, const Tensor<T>& w) {
    const long n = x.dim(0);
    IGAN_CHECK(x.rank() == 2 && x.dim(1) == in_, "Linear: bad input " + x.shape_str());
    x_ = x;
    Tensor<T> y({n, out_});
    y.mat2d().noalias() = x.mat2d() * w.mat2d().transpose();
    if (has_bias_) y.mat2d().rowwise() += b_.value.vec().transpose();
    return y;
  }

  Tensor<T> backward_with(const Tensor<T>& dy, const Tensor<T>& w, Tensor<T>& wgrad) {
    const long n = dy.dim(0);
    wgrad.mat2d().noalias() += dy.mat2d().transpose() * x_.mat2d();
    if (has_bias_) b_.grad.vec() += dy.mat2d().colwise().sum().transpose();
    Tensor<T> dx({n, in_});
    dx.mat2d().noalias() = dy.mat2d() * w.mat2d();
    return dx;
  }

  long in_ = 0, out_ = 0;
  bool has_bias_ = true;
  Param<T> w_, b_;
  Tensor<T> x_;
};

// NHWC convolution via im2col. Weights are stored as an
// (out_channels, kh*kw*in_channels) matrix, the same reshape spectral
// normalization uses.
template <typename T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(std::string name, long in_c, long out_c, long k, long stride, long pad, Rng& rng,
         T gain = T(1), bool bias = true)
      : in_c_(in_c), out_c_(out_c), k_(k), stride_(stride), pad_(pad), has_bias_(bias) {
    w_.name = name + ".weight";
    w_.init_shape({out_c, k * k * in_c});
    orthogonal_init(w_.value, out_c, k * k * in_c, rng, gain);
    if (bias) {
      b_.name = name + ".bias";
      b_.init_shape({out_c});
    }
  }

  Tensor<T> forward(const Tensor<T>& x) { return forward_with(x, w_.value); }

  Tensor<T> backward(const Tensor<T>& dy) { return backward_with(dy, w_.value, w_.grad); }

  void collect(ParamRefs<T>& r) {
    r.add(w_);
    if (has_bias_) r.add(b_);
  }

  Param<T>& weight() { return w_; }

 protected:
  Tensor<T> forward_with(const Tensor<T>& x, const Tensor<T>& w) {
    IGAN_CHECK(x.rank() == 4 && x.dim(3) == in_c_, "Conv2d: bad input " + x.shape_str());
    n_ = x.dim(0);
    h_ = x.dim(1);
    wd_ = x.dim(2);
    oh_ = (h_ + 2 * pad_ - k_) / stride_ + 1;
    ow_ = (wd_ + 2 * pad_ - k_) / stride_ + 1;
    IGAN_CHECK(oh_ >= 1 && ow_ >= 1, "Conv2d: empty output");
    col_ = im2col(x);
    Tensor<T> y({n_, oh_, ow_, out_c_});
    y.mat(n_ * oh_ * ow_, out_c_).noalias() = col_.mat2d() * w.mat2d().transpose();
    if (has_bias_) y.mat(n_ * oh_ * ow_, out_c_).rowwise() += b_.value.vec().transpose();
    return y;
  }

  Tensor<T> backward_with(const Tensor<T>& dy, const Tensor<T>& w, Tensor<T>& wgrad) {
    auto dym = dy.mat(n_ * oh_ * ow_, out_c_);
    wgrad.mat2d().noalias() += dym.transpose() * col_.mat2d();
    if (has_bias_) b_.grad.vec() += dym.colwise().sum().transpose();
    Tensor<T> dcol({n_ * oh_ * ow_, k_ * k_ * in_c_});
    dcol.mat2d().noalias() = dym * w.mat2d();
    return col2im(dcol);
  }

  Tensor<T> im2col(const Tensor<T>& x) const {
    Tensor<T> col({n_ * oh_ * ow_, k_ * k_ * in_c_});
    const T* src = x.data();
    T* dst = col.data();
    const long row_len = k_ * k_ * in_c_;
    for (long n = 0; n < n_; ++n) {
      const T* xn = src + n * h_ * wd_ * in_c_;
      for (long oy = 0; oy < oh_; ++oy) {
        for (long ox = 0; ox < ow_; ++ox) {
          T* out_row = dst + ((n * oh_ + oy) * ow_ + ox) * row_len;
          for (long ky = 0; ky < k_; ++ky) {
            const long y = oy * stride_ + ky - pad_;
            for (long kx = 0; kx < k_; ++kx) {
              const long xx = ox * stride_ + kx - pad_;
              T* cell = out_row + (ky * k_ + kx) * in_c_;
              if (y >= 0 && y < h_ && xx >= 0 && xx < wd_) {
                std::memcpy(cell, xn + (y * wd_ + xx) * in_c_,
                            sizeof(T) * static_cast<std::size_t>(in_c_));
              } else {
                std::fill(cell, cell + in_c_, T(0));
              }
            }
          }
        }
      }
    }
    return col;
  }

  Tensor<T> col2im(const Tensor<T>& dcol) const {
    Tensor<T> dx({n_, h_, wd_, in_c_});
    const T* src = dcol.data();
    T* dst = dx.data();
    const long row_len = k_ * k_ * in_c_;
    for (long n = 0; n < n_; ++n) {
      T* xn = dst + n * h_ * wd_ * in_c_;
      for (long oy = 0; oy < oh_; ++oy) {
        for (long ox = 0; ox < ow_; ++ox) {
          const T* in_row = src + ((n * oh_ + oy) * ow_ + ox) * row_len;
          for (long ky = 0; ky < k_; ++ky) {
            const long y = oy * stride_ + ky - pad_;
            if (y < 0 || y >= h_) continue;
            for (long kx = 0; kx < k_; ++kx) {
              const long xx = ox * stride_ + kx - pad_;
              if (xx < 0 || xx >= wd_) continue;
              const T* cell = in_row + (ky * k_ + kx) * in_c_;
              T* acc = xn + (y * wd_ + xx) * in_c_;
              for (long c = 0; c < in_c_; ++c) acc[c] += cell[c];
            }
          }
        }
      }
    }
    return dx;
  }

  long in_c_ = 0, out_c_ = 0, k_ = 0, stride_ = 1, pad_ = 0;
  bool has_bias_ = true;
  long n_ = 0, h_ = 0, wd_ = 0, oh_ = 0, ow_ = 0;
  Param<T> w_, b_;
  Tensor<T> col_;
};

// Batch normalization over N*H*W per channel (NHWC). Train mode normalizes
// with batch statistics and couples samples within the batch; eval mode uses
// the running estimates.
template <typename T>
class BatchNorm2d {
 public:
  BatchNorm2d() = default;
  BatchNorm2d(std::string name, long c, T eps = T(1e-5), T momentum = T(0.1)) : c_(c), eps_(eps), momentum_(momentum) {
    gamma_.name = name + ".gamma";
    gamma_.init_shape({c});
    gamma_.value.fill(T(1));
    beta_.name = name + ".beta";
    beta_.init_shape({c});
    running_mean_ = Tensor<T>({c});
    running_var_ = Tensor<T>::full({c}, T(1));
    name_ = std::move(name);
  }

  void set_training(bool training) { training_ = training; }

  Tensor<T> forward(const Tensor<T>& x) {
    IGAN_CHECK(x.rank() == 4 && x.dim(3) == c_, "BatchNorm2d: bad input " + x.shape_str());
    const long rows = x.dim(0) * x.dim(1) * x.dim(2);
    auto xm = x.mat(rows, c_);
    mean_ = Tensor<T>({c_});
    inv_std_ = Tensor<T>({c_});
    if (training_) {
      mean_.vec() = xm.colwise().mean().transpose();
      Tensor<T> var({c_});
      for (long c = 0; c < c_; ++c) {
        const T mu = mean_[static_cast<std::size_t>(c)];
        T acc = T(0);
        for (long r = 0; r < rows; ++r) {
          const T d = xm(r, c) - mu;
          acc += d * d;
        }
        var[static_cast<std::size_t>(c)] = acc / static_cast<T>(rows);
      }
      for (long c = 0; c < c_; ++c) {
        inv_std_[static_cast<std::size_t>(c)] =
            T(1) / std::sqrt(var[static_cast<std::size_t>(c)] + eps_);
        // Running variance keeps the unbiased estimate.
        const T unbiased = rows > 1 ? var[static_cast<std::size_t>(c)] * static_cast<T>(rows) /
                                          static_cast<T>(rows - 1)
                                    : var[static_cast<std::size_t>(c)];
        running_mean_[static_cast<std::size_t>(c)] =
            (T(1) - momentum_) * running_mean_[static_cast<std::size_t>(c)] +
            momentum_ * mean_[static_cast<std::size_t>(c)];
        running_var_[static_cast<std::size_t>(c)] =
            (T(1) - momentum_) * running_var_[static_cast<std::size_t>(c)] + momentum_ * unbiased;
      }
    } else {
      for (long c = 0; c < c_; ++c) {
        mean_[static_cast<std::size_t>(c)] = running_mean_[static_cast<std::size_t>(c)];
        inv_std_[static_cast<std::size_t>(c)] =
            T(1) / std::sqrt(running_var_[static_cast<std::size_t>(c)] + eps_);
      }
    }
    xhat_ = Tensor<T>(x.shape());
    Tensor<T> y(x.shape());
    auto xh = xhat_.mat(rows, c_);
    auto ym = y.mat(rows, c_);
    for (long c = 0; c < c_; ++c) {
      const T mu = mean_[static_cast<std::size_t>(c)];
      const T is = inv_std_[static_cast<std::size_t>(c)];
      const T g = gamma_.value[static_cast<std::size_t>(c)];
      const T b = beta_.value[static_cast<std::size_t>(c)];
      for (long r = 0; r < rows; ++r) {
        const T v = (xm(r, c) - mu) * is;
        xh(r, c) = v;
        ym(r, c) = g * v + b;
      }
    }
    rows_ = rows;
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    const long rows = rows_;
    auto dym = dy.mat(rows, c_);
    auto xh = xhat_.mat(rows, c_);
    Tensor<T> dx(dy.shape());
    auto dxm = dx.mat(rows, c_);
    for (long c = 0; c < c_; ++c) {
      T sum_dy = T(0), sum_dy_xhat = T(0);
      for (long r = 0; r < rows; ++r) {
        sum_dy += dym(r, c);
        sum_dy_xhat += dym(r, c) * xh(r, c);
      }
      gamma_.grad[static_cast<std::size_t>(c)] += sum_dy_xhat;
      beta_.grad[static_cast<std::size_t>(c)] += sum_dy;
      const T g = gamma_.value[static_cast<std::size_t>(c)];
      const T is = inv_std_[static_cast<std::size_t>(c)];
      if (training_) {
        const T mean_dy = sum_dy / static_cast<T>(rows);
        const T mean_dy_xhat = sum_dy_xhat / static_cast<T>(rows);
        for (long r = 0; r < rows; ++r)
          dxm(r, c) = g * is * (dym(r, c) - mean_dy - xh(r, c) * mean_dy_xhat);
      } else {
        for (long r = 0; r < rows; ++r) dxm(r, c) = g * is * dym(r, c);
      }
    }
    return dx;
  }

  void collect(ParamRefs<T>& r) {
    r.add(gamma_);
    r.add(beta_);
    r.add_state(name_ + ".running_mean", running_mean_);
    r.add_state(name_ + ".running_var", running_var_);
  }

 private:
  std::string name_;
  long c_ = 0;
  T eps_ = T(1e-5), momentum_ = T(0.1);
  bool training_ = true;
  Param<T> gamma_, beta_;
  Tensor<T> running_mean_, running_var_;
  Tensor<T> mean_, inv_std_, xhat_;
  long rows_ = 0;
};

template <typename T>
class ReLU {
 public:
  Tensor<T> forward(const Tensor<T>& x) {
    x_ = x;
    Tensor<T> y(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
    return y;
  }
  Tensor<T> backward(const Tensor<T>& dy) {
    Tensor<T> dx(dy.shape());
    for (std::size_t i = 0; i < dy.numel(); ++i) dx[i] = x_[i] > T(0) ? dy[i] : T(0);
    return dx;
  }

 private:
  Tensor<T> x_;
};

template <typename T>
class LeakyReLU {
 public:
  explicit LeakyReLU(T slope = T(0.2)) : slope_(slope) {}
  Tensor<T> forward(const Tensor<T>& x) {
    x_ = x;
    Tensor<T> y(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) y[i] = x[i] > T(0) ? x[i] : slope_ * x[i];
    return y;
  }
  Tensor<T> backward(const Tensor<T>& dy) {
    Tensor<T> dx(dy.shape());
    for (std::size_t i = 0; i < dy.numel(); ++i) dx[i] = x_[i] > T(0) ? dy[i] : slope_ * dy[i];
    return dx;
  }

 private:
  T slope_;
  Tensor<T> x_;
};

template <typename T>
class Tanh {
 public:
  Tensor<T> forward(const Tensor<T>& x) {
    y_ = Tensor<T>(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) y_[i] = std::tanh(x[i]);
    return y_;
  }
  Tensor<T> backward(const Tensor<T>& dy) {
    Tensor<T> dx(dy.shape());
    for (std::size_t i = 0; i < dy.numel(); ++i) dx[i] = dy[i] * (T(1) - y_[i] * y_[i]);
    return dx;
  }

 private:
  Tensor<T> y_;
};

// 2x2 average pooling, stride 2 (NHWC, even spatial dims).
template <typename T>
class AvgPool2 {
 public:
  Tensor<T> forward(const Tensor<T>& x) {
    const long n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
    IGAN_CHECK(h % 2 == 0 && w % 2 == 0, "AvgPool2: odd spatial size " + x.shape_str());
    n_ = n; h_ = h; w_ = w; c_ = c;
    Tensor<T> y({n, h / 2, w / 2, c});
    const T* src = x.data();
    T* dst = y.data();
    for (long i = 0; i < n; ++i)
      for (long oy = 0; oy < h / 2; ++oy)
        for (long ox = 0; ox < w / 2; ++ox) {
          const T* p00 = src + ((i * h + 2 * oy) * w + 2 * ox) * c;
          const T* p01 = p00 + c;
          const T* p10 = p00 + w * c;
          const T* p11 = p10 + c;
          T* o = dst + ((i * (h / 2) + oy) * (w / 2) + ox) * c;
          for (long ch = 0; ch < c; ++ch)
            o[ch] = (p00[ch] + p01[ch] + p10[ch] + p11[ch]) * T(0.25);
        }
    return y;
  }
  Tensor<T> backward(const Tensor<T>& dy) {
    Tensor<T> dx({n_, h_, w_, c_});
    const T* src = dy.data();
    T* dst = dx.data();
    for (long i = 0; i < n_; ++i)
      for (long oy = 0; oy < h_ / 2; ++oy)
        for (long ox = 0; ox < w_ / 2; ++ox) {
          const T* g = src + ((i * (h_ / 2) + oy) * (w_ / 2) + ox) * c_;
          T* p00 = dst + ((i * h_ + 2 * oy) * w_ + 2 * ox) * c_;
          T* p01 = p00 + c_;
          T* p10 = p00 + w_ * c_;
          T* p11 = p10 + c_;
          for (long ch = 0; ch < c_; ++ch) {
            const T v = g[ch] * T(0.25);
            p00[ch] += v;
            p01[ch] += v;
            p10[ch] += v;
            p11[ch] += v;
          }
        }
    return dx;
  }

 private:
  long n_ = 0, h_ = 0, w_ = 0, c_ = 0;
};

// Nearest-neighbor 2x upsampling.
template <typename T>
class Upsample2 {
 public:
  Tensor<T> forward(const Tensor<T>& x) {
    const long n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
    n_ = n; h_ = h; w_ = w; c_ = c;
    Tensor<T> y({n, 2 * h, 2 * w, c});
    const T* src = x.data();
    T* dst = y.data();
    for (long i = 0; i < n; ++i)
      for (long yy = 0; yy < 2 * h; ++yy) {
        const long sy = yy / 2;
        for (long xx = 0; xx < 2 * w; ++xx) {
          const long sx = xx / 2;
          std::memcpy(dst + ((i * 2 * h + yy) * 2 * w + xx) * c,
                      src + ((i * h + sy) * w + sx) * c, sizeof(T) * static_cast<std::size_t>(c));
        }
      }
    return y;
  }
  Tensor<T> backward(const Tensor<T>& dy) {
    Tensor<T> dx({n_, h_, w_, c_});
    const T* src = dy.data();
    T* dst = dx.data();
    for (long i = 0; i < n_; ++i)
      for (long yy = 0; yy < 2 * h_; ++yy) {
        const long sy = yy / 2;
        for (long xx = 0; xx < 2 * w_; ++xx) {
          const long sx = xx / 2;
          const T* g = src + ((i * 2 * h_ + yy) * 2 * w_ + xx) * c_;
          T* acc = dst + ((i * h_ + sy) * w_ + sx) * c_;
          for (long ch = 0; ch < c_; ++ch) acc[ch] += g[ch];
        }
      }
    return dx;
  }

 private:
  long n_ = 0, h_ = 0, w_ = 0, c_ = 0;
};

// Sum over all spatial positions: NxHxWxC -> NxC.
template <typename T>
class GlobalSumPool {
 public:
  Tensor<T> forward(const Tensor<T>& x) {
    const long n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
    n_ = n; h_ = h; w_ = w; c_ = c;
    Tensor<T> y({n, c});
    const T* src = x.data();
    for (long i = 0; i < n; ++i) {
      T* o = y.data() + i * c;
      for (long p = 0; p < h * w; ++p) {
        const T* s = src + (i * h * w + p) * c;
        for (long ch = 0; ch < c; ++ch) o[ch] += s[ch];
      }
    }
    return y;
  }
  Tensor<T> backward(const Tensor<T>& dy) {
    Tensor<T> dx({n_, h_, w_, c_});
    T* dst = dx.data();
    for (long i = 0; i < n_; ++i) {
      const T* g = dy.data() + i * c_;
      for (long p = 0; p < h_ * w_; ++p) {
        T* o = dst + (i * h_ * w_ + p) * c_;
        for (long ch = 0; ch < c_; ++ch) o[ch] = g[ch];
      }
    }
    return dx;
  }

 private:
  long n_ = 0, h_ = 0, w_ = 0, c_ = 0;
};

}  // namespace igan::nn
