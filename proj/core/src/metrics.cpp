#include "igan/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <sstream>

namespace igan {

namespace {

double clamped_log(double v) { return std::log(std::max(v, 1e-12)); }

std::pair<double, double> mean_and_pop_std(const std::vector<double>& xs) {
  const double n = static_cast<double>(xs.size());
  const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  return {mean, std::sqrt(var / n)};
}

}  // namespace

void GaussianStats::validate() const {
  IGAN_CHECK(mu.size() >= 1 && sigma.rows() == mu.size() && sigma.cols() == mu.size(),
             "GaussianStats: shape mismatch");
  IGAN_CHECK_NUMERIC(mu.allFinite() && sigma.allFinite(), "GaussianStats: non-finite");
  const double asym = (sigma - sigma.transpose()).cwiseAbs().maxCoeff();
  IGAN_CHECK(asym <= 1e-8, "GaussianStats: sigma not symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sigma, Eigen::EigenvaluesOnly);
  IGAN_CHECK_NUMERIC(es.info() == Eigen::Success, "GaussianStats: eigensolver failed");
  IGAN_CHECK(es.eigenvalues().minCoeff() >= -1e-8, "GaussianStats: sigma not PSD");
}

GaussianStats gaussian_stats(const Tensor<float>& features) {
  IGAN_CHECK(features.rank() == 2, "gaussian_stats: features must be N x d");
  const long n = features.dim(0), d = features.dim(1);
  if (n < 2) throw DataError("gaussian_stats: need at least 2 samples");
  IGAN_CHECK_NUMERIC(features.all_finite(), "gaussian_stats: non-finite features");
  Eigen::MatrixXd x = features.mat2d().cast<double>();
  GaussianStats s;
  s.mu = x.colwise().mean();
  Eigen::MatrixXd xc = x.rowwise() - s.mu.transpose();
  s.sigma = (xc.transpose() * xc) / static_cast<double>(n - 1);
  s.sigma = ((s.sigma + s.sigma.transpose()) / 2.0).eval();
  (void)d;
  return s;
}

namespace {

Eigen::MatrixXd sqrt_from_eig(const Eigen::MatrixXd& a, bool& ok) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
  if (es.info() != Eigen::Success) {
    ok = false;
    return Eigen::MatrixXd();
  }
  Eigen::VectorXd lam = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  ok = true;
  return es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose();
}

double sqrt_residual(const Eigen::MatrixXd& s, const Eigen::MatrixXd& a) {
  return (s * s - a).norm() / std::max(1.0, a.norm());
}

}  // namespace

Eigen::MatrixXd matrix_sqrt(const Eigen::MatrixXd& a) {
  IGAN_CHECK(a.rows() == a.cols() && a.rows() >= 1, "matrix_sqrt: need a square matrix");
  IGAN_CHECK_NUMERIC(a.allFinite(), "matrix_sqrt: non-finite input");
  const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  IGAN_CHECK((a - a.transpose()).cwiseAbs().maxCoeff() <= 1e-8 * scale,
             "matrix_sqrt: input not symmetric");
  Eigen::MatrixXd sym = (a + a.transpose()) / 2.0;
  bool ok = false;
  Eigen::MatrixXd s = sqrt_from_eig(sym, ok);
  if (ok && sqrt_residual(s, sym) <= 1e-6) return s;
  // Rare near-degenerate failure: jitter the diagonal once and retry.
  std::cerr << "matrix_sqrt: retrying with 1e-6 diagonal jitter\n";
  Eigen::MatrixXd jittered = sym + 1e-6 * Eigen::MatrixXd::Identity(sym.rows(), sym.cols());
  s = sqrt_from_eig(jittered, ok);
  IGAN_CHECK_NUMERIC(ok && sqrt_residual(s, jittered) <= 1e-6,
                     "matrix_sqrt: residual check failed");
  return s;
}

double fid(const GaussianStats& r, const GaussianStats& g) {
  IGAN_CHECK(r.d() == g.d(), "fid: dimension mismatch");
  if ((r.mu.array() == g.mu.array()).all() && (r.sigma.array() == g.sigma.array()).all())
    return 0.0;
  Eigen::MatrixXd sr = matrix_sqrt(r.sigma);
  Eigen::MatrixXd inner = sr * g.sigma * sr;
  inner = ((inner + inner.transpose()) / 2.0).eval();
  const double tr_cross = matrix_sqrt(inner).trace();
  double v = (r.mu - g.mu).squaredNorm() + r.sigma.trace() + g.sigma.trace() - 2.0 * tr_cross;
  if (v < 0.0) {
    IGAN_CHECK_NUMERIC(v > -1e-6, "fid: negative beyond roundoff tolerance");
    v = 0.0;
  }
  return v;
}

namespace {

// Sum of ((g/d)+1)^3 over a dense Gram tile.
double kernel_tile_sum(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, long i0, long i1,
                       long j0, long j1, double inv_d) {
  Eigen::MatrixXd gram =
      x.middleRows(i0, i1 - i0) * y.middleRows(j0, j1 - j0).transpose() * inv_d;
  double s = 0.0;
  for (long i = 0; i < gram.rows(); ++i)
    for (long j = 0; j < gram.cols(); ++j) {
      const double k = gram(i, j) + 1.0;
      s += k * k * k;
    }
  return s;
}

double kernel_diag_sum(const Eigen::MatrixXd& x, double inv_d) {
  double s = 0.0;
  for (long i = 0; i < x.rows(); ++i) {
    const double k = x.row(i).squaredNorm() * inv_d + 1.0;
    s += k * k * k;
  }
  return s;
}

double kernel_full_sum(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, long block,
                       double inv_d) {
  double s = 0.0;
  for (long i = 0; i < x.rows(); i += block)
    for (long j = 0; j < y.rows(); j += block)
      s += kernel_tile_sum(x, y, i, std::min(i + block, x.rows()), j,
                           std::min(j + block, y.rows()), inv_d);
  return s;
}

}  // namespace

double kid(const Tensor<float>& x_feats, const Tensor<float>& y_feats, long block) {
  IGAN_CHECK(x_feats.rank() == 2 && y_feats.rank() == 2, "kid: features must be N x d");
  IGAN_CHECK(x_feats.dim(1) == y_feats.dim(1), "kid: dimension mismatch");
  const long m = x_feats.dim(0), n = y_feats.dim(0), d = x_feats.dim(1);
  if (m < 2 || n < 2) throw DataError("kid: need at least 2 samples per set");
  IGAN_CHECK_NUMERIC(x_feats.all_finite() && y_feats.all_finite(), "kid: non-finite features");
  if (block <= 0) block = 2048;

  Eigen::MatrixXd x = x_feats.mat2d().cast<double>();
  Eigen::MatrixXd y = y_feats.mat2d().cast<double>();
  const double inv_d = 1.0 / static_cast<double>(d);

  const double sxx = kernel_full_sum(x, x, block, inv_d) - kernel_diag_sum(x, inv_d);
  const double syy = kernel_full_sum(y, y, block, inv_d) - kernel_diag_sum(y, inv_d);
  const double sxy = kernel_full_sum(x, y, block, inv_d);
  const double md = static_cast<double>(m), nd = static_cast<double>(n);
  return sxx / (md * (md - 1.0)) + syy / (nd * (nd - 1.0)) - 2.0 * sxy / (md * nd);
}

std::pair<double, double> inception_score(const Tensor<float>& probs, long splits) {
  IGAN_CHECK(probs.rank() == 2, "inception_score: probs must be N x C");
  const long n = probs.dim(0), c = probs.dim(1);
  IGAN_CHECK(splits >= 1 && n % splits == 0,
             "inception_score: sample count not divisible into splits");
  IGAN_CHECK_NUMERIC(probs.all_finite(), "inception_score: non-finite probs");
  for (long i = 0; i < n; ++i) {
    double row_sum = 0.0;
    for (long j = 0; j < c; ++j) {
      const double p = probs.data()[i * c + j];
      IGAN_CHECK(p >= 0.0, "inception_score: negative probability");
      row_sum += p;
    }
    IGAN_CHECK(std::abs(row_sum - 1.0) <= 1e-5, "inception_score: row does not sum to 1");
  }

  const long per = n / splits;
  std::vector<double> scores;
  for (long s = 0; s < splits; ++s) {
    const float* base = probs.data() + s * per * c;
    std::vector<double> marginal(c, 0.0);
    for (long i = 0; i < per; ++i)
      for (long j = 0; j < c; ++j) marginal[j] += base[i * c + j];
    for (long j = 0; j < c; ++j) marginal[j] /= static_cast<double>(per);

    double kl_sum = 0.0;
    for (long i = 0; i < per; ++i)
      for (long j = 0; j < c; ++j) {
        const double p = base[i * c + j];
        if (p > 0.0) kl_sum += p * (clamped_log(p) - clamped_log(marginal[j]));
      }
    scores.push_back(std::exp(kl_sum / static_cast<double>(per)));
  }
  return mean_and_pop_std(scores);
}

namespace {

void write_matrix_file(const std::string& path, const Tensor<float>& rows, const char* magic) {
  IGAN_CHECK(rows.rank() == 2 && rows.dim(0) >= 1 && rows.dim(1) >= 1,
             "matrix file: need a nonempty N x d tensor");
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os.good()) throw DataError(std::string("cannot open for write: ") + path);
  os.write(magic, 5);
  const std::uint32_t n = static_cast<std::uint32_t>(rows.dim(0));
  const std::uint32_t d = static_cast<std::uint32_t>(rows.dim(1));
  os.write(reinterpret_cast<const char*>(&n), 4);
  os.write(reinterpret_cast<const char*>(&d), 4);
  os.write(reinterpret_cast<const char*>(rows.data()),
           static_cast<std::streamsize>(rows.numel() * sizeof(float)));
  IGAN_CHECK(os.good(), "matrix file: write failed");
}

Tensor<float> read_matrix_file(const std::string& path, const char* magic) {
  std::ifstream is(path, std::ios::binary);
  if (!is.good()) throw DataError(std::string("cannot open: ") + path);
  char got[5];
  is.read(got, 5);
  if (!is || std::string(got, 5) != magic)
    throw DataError(std::string("bad magic, expected ") + magic + ": " + path);
  std::uint32_t n = 0, d = 0;
  is.read(reinterpret_cast<char*>(&n), 4);
  is.read(reinterpret_cast<char*>(&d), 4);
  if (!is || n == 0 || d == 0) throw DataError("bad header: " + path);
  Tensor<float> rows({static_cast<long>(n), static_cast<long>(d)});
  is.read(reinterpret_cast<char*>(rows.data()),
          static_cast<std::streamsize>(rows.numel() * sizeof(float)));
  if (!is) throw DataError("truncated matrix file: " + path);
  is.peek();
  if (!is.eof()) throw DataError("trailing bytes: " + path);
  return rows;
}

void check_prob_rows(const Tensor<float>& rows, const std::string& what) {
  for (long i = 0; i < rows.dim(0); ++i) {
    double s = 0.0;
    for (long j = 0; j < rows.dim(1); ++j) s += rows.data()[i * rows.dim(1) + j];
    if (std::abs(s - 1.0) > 1e-5) throw DataError(what + ": row " + std::to_string(i) +
                                                  " does not sum to 1");
  }
}

}  // namespace

void write_features(const std::string& path, const Tensor<float>& rows) {
  write_matrix_file(path, rows, "FEAT1");
}

void write_probs(const std::string& path, const Tensor<float>& rows) {
  check_prob_rows(rows, "write_probs");
  write_matrix_file(path, rows, "PROB1");
}

Tensor<float> read_features(const std::string& path) { return read_matrix_file(path, "FEAT1"); }

Tensor<float> read_probs(const std::string& path) {
  Tensor<float> rows = read_matrix_file(path, "PROB1");
  check_prob_rows(rows, "read_probs");
  return rows;
}

std::string MetricReport::text() const {
  std::ostringstream os;
  os << std::setprecision(12);
  os << "extractor " << extractor_fingerprint << '\n';
  os << "n_real " << n_real << '\n';
  os << "n_fake " << n_fake << '\n';
  auto join = [&os](const char* key, const auto& xs) {
    os << key << ' ';
    for (std::size_t i = 0; i < xs.size(); ++i) os << (i ? "," : "") << xs[i];
    os << '\n';
  };
  join("seeds", seeds);
  join("fid_runs", fid_runs);
  join("kid_runs", kid_runs);
  join("is_runs", is_runs);
  os << "fid_mean " << fid_mean << '\n' << "fid_std " << fid_std << '\n';
  os << "kid_mean " << kid_mean << '\n' << "kid_std " << kid_std << '\n';
  os << "is_mean " << is_mean << '\n' << "is_std " << is_std << '\n';
  return os.str();
}

std::string MetricReport::csv_header() {
  return "fid_mean,fid_std,kid_mean,kid_std,is_mean,is_std,n_real,n_fake,n_seeds";
}

std::string MetricReport::csv_row() const {
  std::ostringstream os;
  os << std::setprecision(12) << fid_mean << ',' << fid_std << ',' << kid_mean << ',' << kid_std
     << ',' << is_mean << ',' << is_std << ',' << n_real << ',' << n_fake << ',' << seeds.size();
  return os.str();
}

MetricReport evaluate_generator(GeneratorBase<float>& gen, FeatureExtractor& extractor,
                                const Dataset<float>& real, long n_real, long n_fake,
                                const std::vector<std::uint64_t>& seeds, long is_splits) {
  IGAN_CHECK(n_real >= 2 && n_fake >= 2, "evaluate_generator: need at least 2 samples per side");
  IGAN_CHECK(!seeds.empty(), "evaluate_generator: need at least one seed");
  IGAN_CHECK(real.size() >= 2, "evaluate_generator: empty real dataset");

  MetricReport rep;
  rep.extractor_fingerprint = extractor.fingerprint();
  rep.n_real = std::min(n_real, real.size());
  rep.n_fake = n_fake;
  rep.seeds = seeds;

  for (std::uint64_t seed : seeds) {
    Rng r_real = Rng(seed).derive("eval_real");
    std::vector<long> idx(static_cast<std::size_t>(real.size()));
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<long>(i);
    r_real.shuffle(idx.begin(), idx.end());
    idx.resize(static_cast<std::size_t>(rep.n_real));
    Tensor<float> real_imgs = Tensor<float>::gather0(real.images, idx);
    Tensor<float> real_feats = extractor.extract(real_imgs);

    Rng r_fake = Rng(seed).derive("eval_fake");
    Tensor<float> fake_imgs = sample_images(gen, n_fake, 64, r_fake);
    Tensor<float> fake_feats = extractor.extract(fake_imgs);

    rep.fid_runs.push_back(fid(gaussian_stats(real_feats), gaussian_stats(fake_feats)));
    const long nk = std::min(rep.n_real, n_fake);
    rep.kid_runs.push_back(kid(real_feats.slice0(0, nk), fake_feats.slice0(0, nk)));
    rep.is_runs.push_back(inception_score(extractor.predict_probs(fake_imgs), is_splits).first);
  }

  std::tie(rep.fid_mean, rep.fid_std) = mean_and_pop_std(rep.fid_runs);
  std::tie(rep.kid_mean, rep.kid_std) = mean_and_pop_std(rep.kid_runs);
  std::tie(rep.is_mean, rep.is_std) = mean_and_pop_std(rep.is_runs);
  return rep;
}

SmallCnnExtractor::SmallCnnExtractor(long image_size, long in_channels, long num_classes,
                                     std::uint64_t seed)
    : image_size_(image_size), in_channels_(in_channels), classes_(num_classes), feat_dim_(64) {
  IGAN_CHECK(image_size >= 8 && image_size % 8 == 0,
             "SmallCnnExtractor: image size must be a multiple of 8");
  IGAN_CHECK(in_channels >= 1 && num_classes >= 2, "SmallCnnExtractor: bad channels or classes");
  Rng rng = Rng(seed).derive("extractor");
  const float g = std::sqrt(2.0f);
  conv1_ = nn::Conv2d<float>("ex.conv1", in_channels, 24, 3, 1, 1, rng, g);
  conv2_ = nn::Conv2d<float>("ex.conv2", 24, 48, 3, 1, 1, rng, g);
  conv3_ = nn::Conv2d<float>("ex.conv3", 48, 96, 3, 1, 1, rng, g);
  const long s = image_size / 8;
  fc_feat_ = nn::Linear<float>("ex.fc_feat", s * s * 96, feat_dim_, rng, g);
  fc_out_ = nn::Linear<float>("ex.fc_out", feat_dim_, classes_, rng, 1.0f);
}

nn::ParamRefs<float> SmallCnnExtractor::params() {
  nn::ParamRefs<float> r;
  conv1_.collect(r);
  conv2_.collect(r);
  conv3_.collect(r);
  fc_feat_.collect(r);
  fc_out_.collect(r);
  return r;
}

Tensor<float> SmallCnnExtractor::features_forward(const Tensor<float>& images) {
  IGAN_CHECK(images.rank() == 4 && images.dim(1) == image_size_ &&
                 images.dim(2) == image_size_ && images.dim(3) == in_channels_,
             "SmallCnnExtractor: bad image shape " + images.shape_str());
  Tensor<float> h = p1_.forward(r1_.forward(conv1_.forward(images)));
  h = p2_.forward(r2_.forward(conv2_.forward(h)));
  h = p3_.forward(r3_.forward(conv3_.forward(h)));
  const long n = h.dim(0);
  h = h.reshaped({n, h.dim(1) * h.dim(2) * h.dim(3)});
  return r4_.forward(fc_feat_.forward(h));
}

Tensor<float> SmallCnnExtractor::logits_forward(const Tensor<float>& images) {
  return fc_out_.forward(features_forward(images));
}

namespace {

// Row softmax with max subtraction, accumulated in double.
Tensor<float> softmax_rows(const Tensor<float>& logits) {
  const long n = logits.dim(0), c = logits.dim(1);
  Tensor<float> out(logits.shape());
  for (long i = 0; i < n; ++i) {
    const float* row = logits.data() + i * c;
    float* o = out.data() + i * c;
    double mx = row[0];
    for (long j = 1; j < c; ++j) mx = std::max(mx, static_cast<double>(row[j]));
    double sum = 0.0;
    for (long j = 0; j < c; ++j) sum += std::exp(row[j] - mx);
    for (long j = 0; j < c; ++j) o[j] = static_cast<float>(std::exp(row[j] - mx) / sum);
  }
  return out;
}

constexpr long kExtractChunk = 256;

}  // namespace

Tensor<float> SmallCnnExtractor::extract(const Tensor<float>& images) {
  const long n = images.dim(0);
  Tensor<float> out({n, feat_dim_});
  for (long at = 0; at < n; at += kExtractChunk) {
    const long take = std::min(kExtractChunk, n - at);
    Tensor<float> f = features_forward(images.slice0(at, at + take));
    std::copy(f.data(), f.data() + f.numel(), out.data() + at * feat_dim_);
  }
  return out;
}

Tensor<float> SmallCnnExtractor::predict_probs(const Tensor<float>& images) {
  const long n = images.dim(0);
  Tensor<float> out({n, classes_});
  for (long at = 0; at < n; at += kExtractChunk) {
    const long take = std::min(kExtractChunk, n - at);
    Tensor<float> p = softmax_rows(logits_forward(images.slice0(at, at + take)));
    std::copy(p.data(), p.data() + p.numel(), out.data() + at * classes_);
  }
  return out;
}

std::pair<std::vector<long>, std::vector<double>> SmallCnnExtractor::predict(
    const Tensor<float>& images) {
  Tensor<float> probs = predict_probs(images);
  const long n = probs.dim(0), c = probs.dim(1);
  std::vector<long> cls(static_cast<std::size_t>(n));
  std::vector<double> conf(static_cast<std::size_t>(n));
  for (long i = 0; i < n; ++i) {
    const float* row = probs.data() + i * c;
    long best = 0;
    for (long j = 1; j < c; ++j)
      if (row[j] > row[best]) best = j;
    cls[static_cast<std::size_t>(i)] = best;
    conf[static_cast<std::size_t>(i)] = row[best];
  }
  return {std::move(cls), std::move(conf)};
}

double SmallCnnExtractor::accuracy(const Dataset<float>& data) {
  IGAN_CHECK(static_cast<long>(data.labels.size()) == data.size(),
             "accuracy: dataset must be labeled");
  auto [cls, conf] = predict(data.images);
  long hits = 0;
  for (long i = 0; i < data.size(); ++i)
    if (cls[static_cast<std::size_t>(i)] == data.labels[static_cast<std::size_t>(i)]) ++hits;
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

void SmallCnnExtractor::fit(const Dataset<float>& data, long epochs, long batch_size, double lr,
                            double min_accuracy) {
  IGAN_CHECK(static_cast<long>(data.labels.size()) == data.size(), "fit: dataset must be labeled");
  IGAN_CHECK(data.size() >= batch_size && batch_size >= 1, "fit: bad batch size");
  for (long l : data.labels)
    IGAN_CHECK(l >= 0 && l < classes_, "fit: label out of range");

  nn::ParamRefs<float> ps = params();
  Adam<float> opt(0.9f, 0.999f);
  opt.attach(ps);
  Rng rng(0x8d2f1a6bu);

  std::vector<long> order(static_cast<std::size_t>(data.size()));
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<long>(i);
  for (long e = 0; e < epochs; ++e) {
    rng.shuffle(order.begin(), order.end());
    for (long at = 0; at + batch_size <= data.size(); at += batch_size) {
      std::vector<long> idx(order.begin() + at, order.begin() + at + batch_size);
      Tensor<float> x = Tensor<float>::gather0(data.images, idx);
      Tensor<float> logits = logits_forward(x);
      Tensor<float> probs = softmax_rows(logits);
      Tensor<float> dlogits = probs;
      const float inv_n = 1.0f / static_cast<float>(batch_size);
      for (long i = 0; i < batch_size; ++i) {
        float* row = dlogits.data() + i * classes_;
        for (long j = 0; j < classes_; ++j) row[j] *= inv_n;
        row[data.labels[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])]] -= inv_n;
      }
      ps.zero_grad();
      Tensor<float> dh = r4_.backward(fc_feat_.backward(fc_out_.backward(dlogits)));
      const long s = image_size_ / 8;
      dh = dh.reshaped({batch_size, s, s, 96});
      dh = conv3_.backward(r3_.backward(p3_.backward(dh)));
      dh = conv2_.backward(r2_.backward(p2_.backward(dh)));
      conv1_.backward(r1_.backward(p1_.backward(dh)));
      opt.step(ps, static_cast<float>(lr));
    }
  }

  const double acc = accuracy(data);
  if (acc < min_accuracy)
    throw CalibrationError("extractor accuracy " + std::to_string(acc) + " below required " +
                           std::to_string(min_accuracy));
}

std::string SmallCnnExtractor::fingerprint() const {
  std::uint64_t h = fnv1a(std::to_string(image_size_) + "/" + std::to_string(in_channels_) + "/" +
                          std::to_string(classes_) + "/" + std::to_string(feat_dim_));
  auto* self = const_cast<SmallCnnExtractor*>(this);
  for (const auto* p : self->params().params)
    h = fnv1a(p->value.data(), p->value.numel() * sizeof(float), h);
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return "cnn-" + std::to_string(feat_dim_) + "-" + std::to_string(classes_) + "-" + buf;
}

void SmallCnnExtractor::save(const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os.good()) throw DataError("cannot open for write: " + path);
  os << "IGANCNN1 " << image_size_ << ' ' << in_channels_ << ' ' << classes_ << ' ' << feat_dim_
     << '\n';
  for (const auto* p : params().params) {
    const std::uint32_t n = static_cast<std::uint32_t>(p->value.numel());
    os.write(reinterpret_cast<const char*>(&n), 4);
    os.write(reinterpret_cast<const char*>(p->value.data()),
             static_cast<std::streamsize>(p->value.numel() * sizeof(float)));
  }
  IGAN_CHECK(os.good(), "extractor save failed: " + path);
}

void SmallCnnExtractor::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is.good()) throw DataError("cannot open: " + path);
  std::string line;
  std::getline(is, line);
  std::istringstream head(line);
  std::string magic;
  long sz = 0, ch = 0, cl = 0, fd = 0;
  head >> magic >> sz >> ch >> cl >> fd;
  if (magic != "IGANCNN1") throw DataError("bad extractor magic: " + path);
  if (sz != image_size_ || ch != in_channels_ || cl != classes_ || fd != feat_dim_)
    throw ConfigError("extractor shape mismatch: " + path);
  for (auto* p : params().params) {
    std::uint32_t n = 0;
    is.read(reinterpret_cast<char*>(&n), 4);
    if (!is || n != p->value.numel()) throw DataError("extractor blob mismatch: " + path);
    is.read(reinterpret_cast<char*>(p->value.data()),
            static_cast<std::streamsize>(p->value.numel() * sizeof(float)));
    if (!is) throw DataError("truncated extractor file: " + path);
  }
  is.peek();
  if (!is.eof()) throw DataError("trailing bytes in extractor file: " + path);
}

}  // namespace igan
