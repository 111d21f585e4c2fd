#include "igan/feature_core.hpp"

#include <algorithm>
#include <cmath>

namespace igan {

template <typename T>
ScoreTensor<T> score_pairs(const ProjectedBundle<T>& p) {
  IGAN_CHECK(p.local_p.rank() == 4 && p.global_p.rank() == 2, "score_pairs: bad ranks");
  IGAN_CHECK(p.local_p.dim(0) == p.global_p.dim(0) && p.local_p.dim(3) == p.global_p.dim(1),
             "score_pairs: local/global N or R mismatch");
  const long n = p.n(), m = p.m(), r = p.r();
  ScoreTensor<T> s(n, m);
  // (N x R) x (R x N*M*M): candidate c = b'*M*M + j walks the local rows.
  s.matrix().mat2d().noalias() =
      p.global_p.mat2d() * p.local_p.mat(n * m * m, r).transpose();
  return s;
}

template <typename T>
void score_pairs_backward(const Tensor<T>& d_scores, const ProjectedBundle<T>& p,
                          Tensor<T>& d_local_p, Tensor<T>& d_global_p) {
  const long n = p.n(), m = p.m(), r = p.r();
  d_local_p = Tensor<T>(p.local_p.shape());
  d_global_p = Tensor<T>(p.global_p.shape());
  d_global_p.mat2d().noalias() = d_scores.mat2d() * p.local_p.mat(n * m * m, r);
  d_local_p.mat(n * m * m, r).noalias() = d_scores.mat2d().transpose() * p.global_p.mat2d();
}

namespace {

// Row-wise log-sum-exp with max subtraction, accumulated in double.
template <typename T>
double row_lse(const T* row, long len, T* maxv_out = nullptr) {
  T maxv = row[0];
  for (long c = 1; c < len; ++c) maxv = std::max(maxv, row[c]);
  double acc = 0.0;
  for (long c = 0; c < len; ++c) acc += std::exp(static_cast<double>(row[c] - maxv));
  if (maxv_out) *maxv_out = maxv;
  return static_cast<double>(maxv) + std::log(acc);
}

}  // namespace

template <typename T>
T nce_loss(const ScoreTensor<T>& s) {
  IGAN_CHECK_NUMERIC(s.matrix().all_finite(), "nce_loss: non-finite scores");
  const long n = s.n(), m2 = s.m2(), nc = s.candidates();
  double total = 0.0;
  for (long b = 0; b < n; ++b) {
    const T* row = s.matrix().data() + b * nc;
    const double lse = row_lse(row, nc);
    // All M*M anchors of image b share the same candidate row.
    for (long i = 0; i < m2; ++i)
      total += lse - static_cast<double>(row[s.positive_index(b, i)]);
  }
  return static_cast<T>(total / static_cast<double>(n * m2));
}

template <typename T>
double nce_accuracy(const ScoreTensor<T>& s) {
  IGAN_CHECK_NUMERIC(s.matrix().all_finite(), "nce_accuracy: non-finite scores");
  const long n = s.n(), m2 = s.m2(), nc = s.candidates();
  long correct = 0;
  for (long b = 0; b < n; ++b) {
    const T* row = s.matrix().data() + b * nc;
    T maxv = row[0];
    long max_count = 1;
    for (long c = 1; c < nc; ++c) {
      if (row[c] > maxv) {
        maxv = row[c];
        max_count = 1;
      } else if (row[c] == maxv) {
        ++max_count;
      }
    }
    if (max_count != 1) continue;
    for (long i = 0; i < m2; ++i)
      if (row[s.positive_index(b, i)] == maxv) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(n * m2);
}

template <typename T>
Tensor<T> nce_loss_backward(const ScoreTensor<T>& s) {
  const long n = s.n(), m2 = s.m2(), nc = s.candidates();
  const double inv_anchors = 1.0 / static_cast<double>(n * m2);
  Tensor<T> d({n, nc});
  for (long b = 0; b < n; ++b) {
    const T* row = s.matrix().data() + b * nc;
    T* out = d.data() + b * nc;
    T maxv;
    const double lse = row_lse(row, nc, &maxv);
    // The M*M anchors of image b contribute M*M copies of the softmax and
    // one subtracted unit spread over this image's own candidate block.
    const double sm_scale = static_cast<double>(m2) * inv_anchors;
    for (long c = 0; c < nc; ++c) {
      const double sm = std::exp(static_cast<double>(row[c]) - lse);
      out[c] = static_cast<T>(sm * sm_scale);
    }
    for (long i = 0; i < m2; ++i)
      out[s.positive_index(b, i)] -= static_cast<T>(inv_anchors);
  }
  return d;
}

// The projections check feature depths against the critic dims, which may
// differ between local and global, so only the shared structure is checked
// here rather than the full (equal-K) bundle invariant.
template <typename T>
static void check_pairable(const FeatureBundle<T>& f) {
  IGAN_CHECK(f.local.rank() == 4 && f.global.rank() == 2, "contrastive_pairing: bad ranks");
  IGAN_CHECK(f.local.dim(1) == f.local.dim(2), "contrastive_pairing: local map must be square");
  IGAN_CHECK(f.local.dim(0) == f.global.dim(0), "contrastive_pairing: batch mismatch");
  IGAN_CHECK(f.n() >= 1 && f.m() >= 1, "contrastive_pairing: empty batch");
}

template <typename T>
NceResult<T> contrastive_pairing(const FeatureBundle<T>& features, CriticPair<T>& critic) {
  check_pairable(features);
  ProjectedBundle<T> p;
  p.local_p = critic.project_local(features.local);
  p.global_p = critic.project_global(features.global);
  ScoreTensor<T> s = score_pairs(p);
  return {nce_loss(s), nce_accuracy(s)};
}

template <typename T>
NceResult<T> contrastive_pairing_grad(const FeatureBundle<T>& features, CriticPair<T>& critic,
                                      T grad_scale, Tensor<T>* d_local, Tensor<T>* d_global) {
  check_pairable(features);
  ProjectedBundle<T> p;
  p.local_p = critic.project_local(features.local);
  p.global_p = critic.project_global(features.global);
  ScoreTensor<T> s = score_pairs(p);
  NceResult<T> out{nce_loss(s), nce_accuracy(s)};
  Tensor<T> ds = nce_loss_backward(s);
  if (grad_scale != T(1)) ds *= grad_scale;
  Tensor<T> dlp, dgp;
  score_pairs_backward(ds, p, dlp, dgp);
  Tensor<T> dl = critic.backward_local(dlp);
  Tensor<T> dg = critic.backward_global(dgp);
  if (d_local) *d_local = std::move(dl);
  if (d_global) *d_global = std::move(dg);
  return out;
}

template ScoreTensor<float> score_pairs(const ProjectedBundle<float>&);
template ScoreTensor<double> score_pairs(const ProjectedBundle<double>&);
template void score_pairs_backward(const Tensor<float>&, const ProjectedBundle<float>&,
                                   Tensor<float>&, Tensor<float>&);
template void score_pairs_backward(const Tensor<double>&, const ProjectedBundle<double>&,
                                   Tensor<double>&, Tensor<double>&);
template float nce_loss(const ScoreTensor<float>&);
template double nce_loss(const ScoreTensor<double>&);
template double nce_accuracy(const ScoreTensor<float>&);
template double nce_accuracy(const ScoreTensor<double>&);
template Tensor<float> nce_loss_backward(const ScoreTensor<float>&);
template Tensor<double> nce_loss_backward(const ScoreTensor<double>&);
template NceResult<float> contrastive_pairing(const FeatureBundle<float>&, CriticPair<float>&);
template NceResult<double> contrastive_pairing(const FeatureBundle<double>&, CriticPair<double>&);
template NceResult<float> contrastive_pairing_grad(const FeatureBundle<float>&, CriticPair<float>&,
                                                   float, Tensor<float>*, Tensor<float>*);
template NceResult<double> contrastive_pairing_grad(const FeatureBundle<double>&,
                                                    CriticPair<double>&, double, Tensor<double>*,
                                                    Tensor<double>*);

}  // namespace igan
