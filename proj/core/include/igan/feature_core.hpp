#pragma once

#include <string>
#include <vector>

#include "igan/nn/spectral_norm.hpp"
#include "igan/tensor.hpp"

namespace igan {

// Last local feature map (N x M x M x K) and global feature vector (N x K)
// of the discriminator for one batch.
template <typename T>
struct FeatureBundle {
  Tensor<T> local;
  Tensor<T> global;

  long n() const { return local.dim(0); }
  long m() const { return local.dim(1); }
  long k() const { return local.dim(3); }

  void validate() const {
    IGAN_CHECK(local.rank() == 4 && global.rank() == 2, "FeatureBundle: bad ranks");
    IGAN_CHECK(local.dim(1) == local.dim(2), "FeatureBundle: local map must be square");
    IGAN_CHECK(local.dim(0) == global.dim(0) && local.dim(3) == global.dim(1),
               "FeatureBundle: local/global N or K mismatch");
    IGAN_CHECK(n() >= 1 && m() >= 1 && k() >= 1, "FeatureBundle: empty dims");
    IGAN_CHECK_NUMERIC(local.all_finite() && global.all_finite(),
                       "FeatureBundle: non-finite features");
  }
};

template <typename T>
struct ProjectedBundle {
  Tensor<T> local_p;   // N x M x M x R
  Tensor<T> global_p;  // N x R

  long n() const { return local_p.dim(0); }
  long m() const { return local_p.dim(1); }
  long r() const { return local_p.dim(3); }
};

// The two projection heads mapping features into the R-dimensional RKHS.
// Both are one-hidden-layer nets with a linear shortcut; every weight is
// spectral-normalized. 1x1 convolutions over an M x M map are applied as a
// fully connected layer over the (N*M*M) x K row view.
template <typename T>
class CriticPair {
 public:
  CriticPair() = default;
  CriticPair(long k, long r, Rng& rng) : CriticPair(k, k, r, rng) {}
  // Local and global feature depths may differ (they do in the deeper
  // discriminators, where the tap sits before the last block).
  CriticPair(long k_local, long k_global, long r, Rng& rng)
      : k_local_(k_local),
        k_global_(k_global),
        r_(r),
        la_("critic.theta.hidden", k_local, k_local, rng),
        lb_("critic.theta.out", k_local, r, rng),
        lsc_("critic.theta.shortcut", k_local, r, rng),
        ga_("critic.omega.hidden", k_global, k_global, rng),
        gb_("critic.omega.out", k_global, r, rng),
        gsc_("critic.omega.shortcut", k_global, r, rng) {
    IGAN_CHECK(k_local >= 1 && k_global >= 1 && r >= 1, "CriticPair: dims must be positive");
  }

  long k() const { return k_local_; }
  long k_local() const { return k_local_; }
  long k_global() const { return k_global_; }
  long r() const { return r_; }

  void set_training(bool training) {
    la_.set_training(training);
    lb_.set_training(training);
    lsc_.set_training(training);
    ga_.set_training(training);
    gb_.set_training(training);
    gsc_.set_training(training);
  }

  // Extra power iterations on every weight (e.g. before evaluation).
  void refresh(long iters) {
    la_.refresh(iters);
    lb_.refresh(iters);
    lsc_.refresh(iters);
    ga_.refresh(iters);
    gb_.refresh(iters);
    gsc_.refresh(iters);
  }

  nn::ParamRefs<T> params() {
    nn::ParamRefs<T> r;
    la_.collect(r);
    lb_.collect(r);
    lsc_.collect(r);
    ga_.collect(r);
    gb_.collect(r);
    gsc_.collect(r);
    return r;
  }

  // phi_theta: per-location shortcut(x) + out(relu(hidden(x))).
  Tensor<T> project_local(const Tensor<T>& local) {
    IGAN_CHECK(local.rank() == 4 && local.dim(3) == k_local_,
               "project_local: expected NxMxMx" + std::to_string(k_local_) + ", got " +
                   local.shape_str());
    IGAN_CHECK(local.dim(1) == local.dim(2), "project_local: local map must be square");
    IGAN_CHECK_NUMERIC(local.all_finite(), "project_local: non-finite input");
    local_shape_ = local.shape();
    const long rows = local.dim(0) * local.dim(1) * local.dim(2);
    Tensor<T> x = local.reshaped({rows, k_local_});
    Tensor<T> y = lb_.forward(lrelu_.forward(la_.forward(x)));
    y += lsc_.forward(x);
    return y.reshaped({local.dim(0), local.dim(1), local.dim(2), r_});
  }

  Tensor<T> backward_local(const Tensor<T>& d_local_p) {
    const long rows = d_local_p.dim(0) * d_local_p.dim(1) * d_local_p.dim(2);
    Tensor<T> dy = d_local_p.reshaped({rows, r_});
    Tensor<T> dx = la_.backward(lrelu_.backward(lb_.backward(dy)));
    dx += lsc_.backward(dy);
    return dx.reshaped(local_shape_);
  }

  // phi_omega.
  Tensor<T> project_global(const Tensor<T>& global) {
    IGAN_CHECK(global.rank() == 2 && global.dim(1) == k_global_,
               "project_global: expected Nx" + std::to_string(k_global_) + ", got " +
                   global.shape_str());
    IGAN_CHECK_NUMERIC(global.all_finite(), "project_global: non-finite input");
    Tensor<T> y = gb_.forward(grelu_.forward(ga_.forward(global)));
    y += gsc_.forward(global);
    return y;
  }

  Tensor<T> backward_global(const Tensor<T>& d_global_p) {
    Tensor<T> dx = ga_.backward(grelu_.backward(gb_.backward(d_global_p)));
    dx += gsc_.backward(d_global_p);
    return dx;
  }

 private:
  long k_local_ = 0, k_global_ = 0, r_ = 0;
  nn::SNLinear<T> la_, lb_, lsc_;
  nn::SNLinear<T> ga_, gb_, gsc_;
  nn::ReLU<T> lrelu_, grelu_;
  std::vector<long> local_shape_;
};

// Scores for all anchor/candidate pairs. Logically this is an
// (N*M*M anchors) x (N*M*M candidates) array with
//   scores[b, i, b', j] = <local_p[b', j], global_p[b]>,
// but the value does not depend on the anchor's own location i, so rows are
// stored once per image: a compact N x (N*M*M) matrix indexed by
// (anchor image b, candidate b'*M*M + j).
template <typename T>
class ScoreTensor {
 public:
  ScoreTensor() = default;
  ScoreTensor(long n, long m) : n_(n), m2_(m * m), scores_({n, n * m * m}) {
    IGAN_CHECK(n >= 1 && m >= 1, "ScoreTensor: empty dims");
  }

  long n() const { return n_; }
  long m2() const { return m2_; }
  long anchors() const { return n_ * m2_; }
  long candidates() const { return n_ * m2_; }

  long positive_index(long b, long i) const { return b * m2_ + i; }

  // Full-tensor accessor; i is accepted to mirror the logical shape.
  T score(long b, long i, long cand) const {
    (void)i;
    return scores_.at({b, cand});
  }

  Tensor<T>& matrix() { return scores_; }
  const Tensor<T>& matrix() const { return scores_; }

 private:
  long n_ = 0, m2_ = 0;
  Tensor<T> scores_;
};

// scores[b, i, b', j] = <local_p[b', j-th location], global_p[b]>; one GEMM.
template <typename T>
ScoreTensor<T> score_pairs(const ProjectedBundle<T>& p);

// Gradients of a scalar loss through score_pairs, given dL/d(score matrix).
template <typename T>
void score_pairs_backward(const Tensor<T>& d_scores, const ProjectedBundle<T>& p,
                          Tensor<T>& d_local_p, Tensor<T>& d_global_p);

// Mean over all N*M*M anchors of -log softmax at the positive, the softmax
// running over every candidate in the batch (the positive itself and all
// same-image and other-image locations). Log-sum-exp uses max subtraction.
template <typename T>
T nce_loss(const ScoreTensor<T>& s);

// Fraction of anchors whose positive is the strict unique maximum; ties lose.
template <typename T>
double nce_accuracy(const ScoreTensor<T>& s);

// dL/d(score matrix) for L = nce_loss, in the compact N x (N*M*M) layout.
template <typename T>
Tensor<T> nce_loss_backward(const ScoreTensor<T>& s);

template <typename T>
struct NceResult {
  T loss = T(0);
  double accuracy = 0.0;
};

// project_local/project_global -> score_pairs -> {nce_loss, nce_accuracy}.
template <typename T>
NceResult<T> contrastive_pairing(const FeatureBundle<T>& features, CriticPair<T>& critic);

// Trainer path: additionally accumulates critic parameter gradients (scaled
// by grad_scale) and, when requested, returns gradients with respect to the
// input features for further backpropagation into the discriminator.
template <typename T>
NceResult<T> contrastive_pairing_grad(const FeatureBundle<T>& features, CriticPair<T>& critic,
                                      T grad_scale, Tensor<T>* d_local, Tensor<T>* d_global);

template <typename T>
Tensor<T> project_local(const Tensor<T>& local, CriticPair<T>& critic) {
  return critic.project_local(local);
}
template <typename T>
Tensor<T> project_global(const Tensor<T>& global, CriticPair<T>& critic) {
  return critic.project_global(global);
}

using nn::spectral_normalize;

}  // namespace igan
