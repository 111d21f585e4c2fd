#pragma once

#include <Eigen/Dense>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "igan/gan_nets.hpp"
#include "igan/nn/layers.hpp"
#include "igan/training.hpp"

namespace igan {

// Stand-in for the usual pre-trained scoring network: anything that maps
// image batches to features and class probabilities. Scores are only
// comparable between runs that used the same extractor, hence the
// fingerprint.
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual Tensor<float> extract(const Tensor<float>& images) = 0;        // N x d
  virtual Tensor<float> predict_probs(const Tensor<float>& images) = 0;  // N x C, rows sum to 1
  virtual long feature_dim() const = 0;
  virtual long num_classes() const = 0;
  virtual std::string fingerprint() const = 0;
};

struct GaussianStats {
  Eigen::VectorXd mu;
  Eigen::MatrixXd sigma;

  long d() const { return mu.size(); }
  // Symmetry within 1e-8 and eigenvalues >= -1e-8.
  void validate() const;
};

// Sample mean and unbiased covariance (divisor N-1), symmetrized.
GaussianStats gaussian_stats(const Tensor<float>& features);

// Symmetric PSD square root via eigendecomposition, negative eigenvalues
// clipped at 0. Retries once with 1e-6 jitter on the diagonal if the residual
// check ||S*S - A||_F / max(1, ||A||_F) <= 1e-6 fails.
Eigen::MatrixXd matrix_sqrt(const Eigen::MatrixXd& a);

// ||mu_r - mu_g||^2 + Tr(S_r + S_g - 2 (S_r S_g)^{1/2}), the trace term
// computed through the symmetric equivalent S_r^{1/2} S_g S_r^{1/2}.
// Roundoff negatives above -1e-6 clamp to 0.
double fid(const GaussianStats& r, const GaussianStats& g);

// Unbiased MMD^2 with the cubic polynomial kernel k(x,y) = ((1/d) x.y + 1)^3.
// `block` tiles the Gram accumulation; 0 computes full blocks.
double kid(const Tensor<float>& x_feats, const Tensor<float>& y_feats, long block = 0);

// (mean, population std) over `splits` splits of exp(mean KL(p(y|x) || p_bar)).
// 0*log 0 := 0; logs clamp their argument at 1e-12.
std::pair<double, double> inception_score(const Tensor<float>& probs, long splits);

// Row-major float32 matrix files: magic, u32 n, u32 d, then n*d little-endian
// floats. Magic FEAT1 for features, PROB1 for probabilities (rows must sum
// to 1 within 1e-5).
void write_features(const std::string& path, const Tensor<float>& rows);
void write_probs(const std::string& path, const Tensor<float>& rows);
Tensor<float> read_features(const std::string& path);
Tensor<float> read_probs(const std::string& path);

struct MetricReport {
  std::string extractor_fingerprint;
  long n_real = 0;  // real samples actually used (capped at the dataset size)
  long n_fake = 0;
  std::vector<std::uint64_t> seeds;
  std::vector<double> fid_runs, kid_runs, is_runs;
  double fid_mean = 0, fid_std = 0;
  double kid_mean = 0, kid_std = 0;
  double is_mean = 0, is_std = 0;

  std::string text() const;  // key=value lines
  static std::string csv_header();
  std::string csv_row() const;
};

// FID on n_real real / n_fake fake features, KID on equal counts, IS on the
// fake probabilities; one pass per seed, mean and population std across
// seeds. Sample counts are recorded in the report since FID is biased at
// small n.
MetricReport evaluate_generator(GeneratorBase<float>& gen, FeatureExtractor& extractor,
                                const Dataset<float>& real, long n_real, long n_fake,
                                const std::vector<std::uint64_t>& seeds, long is_splits = 1);

// Small convolutional classifier trained on the evaluation dataset; features
// are the penultimate activations, probabilities the softmax output.
class SmallCnnExtractor : public FeatureExtractor {
 public:
  SmallCnnExtractor(long image_size, long in_channels, long num_classes, std::uint64_t seed);

  // Plain supervised training; throws CalibrationError if the final train
  // accuracy is below min_accuracy.
  void fit(const Dataset<float>& data, long epochs, long batch_size, double lr,
           double min_accuracy);
  // Accuracy on a labeled set.
  double accuracy(const Dataset<float>& data);

  Tensor<float> extract(const Tensor<float>& images) override;
  Tensor<float> predict_probs(const Tensor<float>& images) override;
  long feature_dim() const override { return feat_dim_; }
  long num_classes() const override { return classes_; }
  std::string fingerprint() const override;

  // Class predictions plus the winning probability, for mode counting.
  std::pair<std::vector<long>, std::vector<double>> predict(const Tensor<float>& images);

  void save(const std::string& path);
  void load(const std::string& path);

 private:
  Tensor<float> features_forward(const Tensor<float>& images);
  Tensor<float> logits_forward(const Tensor<float>& images);
  nn::ParamRefs<float> params();

  long image_size_ = 0, in_channels_ = 0, classes_ = 0, feat_dim_ = 0;
  nn::Conv2d<float> conv1_, conv2_, conv3_;
  nn::Linear<float> fc_feat_, fc_out_;
  nn::ReLU<float> r1_, r2_, r3_, r4_;
  nn::AvgPool2<float> p1_, p2_, p3_;
};

}  // namespace igan
