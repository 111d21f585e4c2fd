#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "igan/experiments.hpp"
#include "igan/metrics.hpp"

using namespace igan;
namespace fs = std::filesystem;

namespace {

Tensor<float> random_feats(long n, long d, std::uint64_t seed, float scale = 1.0f) {
  Rng rng(seed);
  return Tensor<float>::gaussian({n, d}, rng, scale);
}

GaussianStats stats_of(std::uint64_t seed, long n, long d) {
  return gaussian_stats(random_feats(n, d, seed));
}

std::string scratch_path(const std::string& name) {
  return (fs::temp_directory_path() / name).string();
}

struct Cleanup {
  std::string path;
  ~Cleanup() { std::remove(path.c_str()); }
};

// Unbiased MMD^2 with the cubic dot-product kernel, written as three plain
// loops so it shares nothing with the library implementation.
double kid_oracle(const Tensor<float>& xs, const Tensor<float>& ys) {
  const long m = xs.dim(0), n = ys.dim(0), d = xs.dim(1);
  auto k = [&](const float* a, const float* b) {
    long double dot = 0.0L;
    for (long j = 0; j < d; ++j) dot += static_cast<long double>(a[j]) * b[j];
    const long double u = dot / d + 1.0L;
    return u * u * u;
  };
  long double sxx = 0, syy = 0, sxy = 0;
  for (long i = 0; i < m; ++i)
    for (long j = 0; j < m; ++j)
      if (i != j) sxx += k(xs.data() + i * d, xs.data() + j * d);
  for (long i = 0; i < n; ++i)
    for (long j = 0; j < n; ++j)
      if (i != j) syy += k(ys.data() + i * d, ys.data() + j * d);
  for (long i = 0; i < m; ++i)
    for (long j = 0; j < n; ++j) sxy += k(xs.data() + i * d, ys.data() + j * d);
  return static_cast<double>(sxx / (static_cast<long double>(m) * (m - 1)) +
                             syy / (static_cast<long double>(n) * (n - 1)) -
                             2.0L * sxy / (static_cast<long double>(m) * n));
}

}  // namespace

TEST_CASE("gaussian stats use the unbiased covariance") {
  Tensor<float> two({2, 1});
  two.data()[0] = 0.0f;
  two.data()[1] = 2.0f;
  GaussianStats s = gaussian_stats(two);
  CHECK(s.mu(0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(s.sigma(0, 0) == doctest::Approx(2.0).epsilon(1e-12));

  Tensor<float> three({3, 2});
  float vals[6] = {0, 0, 1, 1, 2, 0};
  std::copy(vals, vals + 6, three.data());
  GaussianStats t = gaussian_stats(three);
  CHECK(t.mu(0) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(t.mu(1) == doctest::Approx(1.0 / 3.0).epsilon(1e-9));
  CHECK(t.sigma(0, 0) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(t.sigma(0, 1) == doctest::Approx(0.0).epsilon(1e-9).scale(1.0));
  CHECK(t.sigma(1, 1) == doctest::Approx(1.0 / 3.0).epsilon(1e-9));
  CHECK_NOTHROW(t.validate());

  Tensor<float> one({1, 3});
  CHECK_THROWS_AS(gaussian_stats(one), DataError);
}

TEST_CASE("matrix sqrt squares back to its input") {
  Rng rng(17);
  for (long d : {1L, 3L, 8L}) {
    Eigen::MatrixXd b(d, d + 2);
    for (long i = 0; i < d; ++i)
      for (long j = 0; j < d + 2; ++j) b(i, j) = rng.gaussian();
    Eigen::MatrixXd a = b * b.transpose();
    Eigen::MatrixXd s = matrix_sqrt(a);
    CHECK((s * s - a).cwiseAbs().maxCoeff() < 1e-8 * (1.0 + a.cwiseAbs().maxCoeff()));
    CHECK((s - s.transpose()).cwiseAbs().maxCoeff() < 1e-9);
  }
  Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(4, 4);
  CHECK(matrix_sqrt(zero).cwiseAbs().maxCoeff() == doctest::Approx(0.0).scale(1.0));
}

TEST_CASE("fid closed forms in one dimension") {
  auto gauss1d = [](double mu, double var) {
    GaussianStats s;
    s.mu = Eigen::VectorXd::Constant(1, mu);
    s.sigma = Eigen::MatrixXd::Constant(1, 1, var);
    return s;
  };
  // Identical distributions score zero.
  GaussianStats a = stats_of(5, 64, 6);
  CHECK(fid(a, a) == doctest::Approx(0.0).epsilon(1e-6).scale(1.0));

  CHECK(fid(gauss1d(0, 1), gauss1d(1, 1)) == doctest::Approx(1.0).epsilon(1e-9));
  // General 1-D law: (mu1-mu2)^2 + s1 + s2 - 2 sqrt(s1 s2).
  CHECK(fid(gauss1d(2, 4), gauss1d(0, 0.25)) ==
        doctest::Approx(4.0 + 4.0 + 0.25 - 2.0 * 1.0).epsilon(1e-9));
}

TEST_CASE("fid is symmetric and rotation invariant") {
  GaussianStats r = stats_of(11, 80, 6);
  GaussianStats g = stats_of(12, 70, 6);
  const double f = fid(r, g);
  CHECK(f > 0.0);
  CHECK(fid(g, r) == doctest::Approx(f).epsilon(1e-9));

  // A shared orthogonal change of basis leaves the score unchanged.
  Rng rng(13);
  Eigen::MatrixXd m(6, 6);
  for (long i = 0; i < 6; ++i)
    for (long j = 0; j < 6; ++j) m(i, j) = rng.gaussian();
  Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(m).householderQ();
  auto rotate = [&](const GaussianStats& s) {
    GaussianStats o;
    o.mu = q * s.mu;
    o.sigma = q * s.sigma * q.transpose();
    return o;
  };
  CHECK(fid(rotate(r), rotate(g)) == doctest::Approx(f).epsilon(1e-6));

  GaussianStats wrong = stats_of(14, 60, 5);
  CHECK_THROWS_AS(fid(r, wrong), ContractError);
}

TEST_CASE("kid matches a brute-force unbiased estimator") {
  Tensor<float> x = random_feats(7, 4, 21);
  Tensor<float> y = random_feats(9, 4, 22, 1.3f);
  const double expect = kid_oracle(x, y);
  CHECK(kid(x, y) == doctest::Approx(expect).epsilon(1e-10).scale(1.0));
  // Tiling must not change the sum.
  CHECK(kid(x, y, 3) == doctest::Approx(kid(x, y)).epsilon(1e-12).scale(1.0));
  CHECK(kid(x, y, 1) == doctest::Approx(kid(x, y)).epsilon(1e-12).scale(1.0));

  // Same-distribution draws hover near zero (the estimator is unbiased).
  double acc = 0.0;
  const int trials = 24;
  for (int t = 0; t < trials; ++t)
    acc += kid(random_feats(24, 6, 100 + 2 * t), random_feats(24, 6, 101 + 2 * t));
  CHECK(std::abs(acc / trials) < 0.05);

  Tensor<float> short_x = random_feats(1, 4, 30);
  CHECK_THROWS_AS(kid(short_x, y), DataError);
  Tensor<float> wrong_d = random_feats(5, 3, 31);
  CHECK_THROWS_AS(kid(wrong_d, y), ContractError);
}

TEST_CASE("inception score hits its analytic endpoints") {
  // Uniform predictions carry no information: IS = 1.
  Tensor<float> uniform({12, 10});
  for (std::size_t i = 0; i < uniform.numel(); ++i) uniform.data()[i] = 0.1f;
  auto [is_u, std_u] = inception_score(uniform, 1);
  CHECK(is_u == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(std_u == 0.0);

  // Confident, balanced predictions over C classes: IS = C.
  const long c = 10;
  Tensor<float> onehot({2 * c, c});
  for (long i = 0; i < 2 * c; ++i) onehot.at({i, i % c}) = 1.0f;
  auto [is_o, std_o] = inception_score(onehot, 1);
  CHECK(is_o == doctest::Approx(static_cast<double>(c)).epsilon(1e-6));

  // Two identical halves give zero spread across splits.
  auto [is_2, std_2] = inception_score(onehot, 2);
  CHECK(is_2 == doctest::Approx(static_cast<double>(c)).epsilon(1e-6));
  CHECK(std_2 == doctest::Approx(0.0).epsilon(1e-9).scale(1.0));

  // Any prediction matrix lands in [1, C].
  Rng rng(40);
  Tensor<float> soft({30, 5});
  for (long i = 0; i < 30; ++i) {
    double row = 0.0;
    for (long j = 0; j < 5; ++j) {
      soft.at({i, j}) = static_cast<float>(0.05 + rng.uniform());
      row += soft.at({i, j});
    }
    for (long j = 0; j < 5; ++j) soft.at({i, j}) = static_cast<float>(soft.at({i, j}) / row);
  }
  auto [is_s, std_s] = inception_score(soft, 3);
  CHECK(is_s >= 1.0 - 1e-9);
  CHECK(is_s <= 5.0 + 1e-9);
  CHECK(std_s >= 0.0);

  Tensor<float> bad({3, 4});
  for (std::size_t i = 0; i < bad.numel(); ++i) bad.data()[i] = 0.5f;
  CHECK_THROWS_AS(inception_score(bad, 1), ContractError);
}

TEST_CASE("feature and probability files round trip and reject damage") {
  const std::string fpath = scratch_path("igan_feats.bin");
  const std::string ppath = scratch_path("igan_probs.bin");
  Cleanup g1{fpath}, g2{ppath};

  Tensor<float> feats = random_feats(5, 7, 50);
  write_features(fpath, feats);
  Tensor<float> back = read_features(fpath);
  REQUIRE(back.dim(0) == 5);
  REQUIRE(back.dim(1) == 7);
  for (std::size_t i = 0; i < feats.numel(); ++i) CHECK(back.data()[i] == feats.data()[i]);

  Tensor<float> probs({4, 3});
  for (long i = 0; i < 4; ++i) {
    probs.at({i, 0}) = 0.2f;
    probs.at({i, 1}) = 0.3f;
    probs.at({i, 2}) = 0.5f;
  }
  write_probs(ppath, probs);
  Tensor<float> pback = read_probs(ppath);
  for (std::size_t i = 0; i < probs.numel(); ++i) CHECK(pback.data()[i] == probs.data()[i]);

  // Wrong magic for the reader in use.
  CHECK_THROWS_AS(read_probs(fpath), DataError);
  CHECK_THROWS_AS(read_features(ppath), DataError);
  CHECK_THROWS_AS(read_features(scratch_path("igan_absent.bin")), DataError);

  // Truncation and trailing garbage.
  std::ifstream is(fpath, std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  is.close();
  {
    std::ofstream os(fpath, std::ios::binary | std::ios::trunc);
    os << bytes.substr(0, bytes.size() - 5);
  }
  CHECK_THROWS_AS(read_features(fpath), DataError);
  {
    std::ofstream os(fpath, std::ios::binary | std::ios::trunc);
    os << bytes << "xx";
  }
  CHECK_THROWS_AS(read_features(fpath), DataError);

  // Probability rows must sum to one on the way back in.
  Tensor<float> off({2, 2});
  off.at({0, 0}) = 0.9f;
  off.at({0, 1}) = 0.9f;
  off.at({1, 0}) = 0.5f;
  off.at({1, 1}) = 0.5f;
  write_features(ppath, off);  // sneak bad rows past the writer's check
  CHECK_THROWS_AS(read_probs(ppath), DataError);
}

TEST_CASE("small cnn extractor: shapes, determinism, save and load") {
  const std::string path = scratch_path("igan_extractor.bin");
  Cleanup guard{path};

  SmallCnnExtractor ex(32, 1, 10, 77);
  CHECK(ex.num_classes() == 10);
  CHECK(ex.feature_dim() > 0);

  Dataset<float> data = make_glyph_digits(60, 32, 5);
  Tensor<float> feats = ex.extract(data.images.slice0(0, 8));
  CHECK(feats.dim(0) == 8);
  CHECK(feats.dim(1) == ex.feature_dim());
  CHECK(feats.all_finite());

  Tensor<float> probs = ex.predict_probs(data.images.slice0(0, 6));
  CHECK(probs.dim(0) == 6);
  CHECK(probs.dim(1) == 10);
  for (long i = 0; i < 6; ++i) {
    double s = 0.0;
    for (long j = 0; j < 10; ++j) {
      s += probs.at({i, j});
      CHECK(probs.at({i, j}) >= 0.0f);
    }
    CHECK(s == doctest::Approx(1.0).epsilon(1e-5));
  }

  // Same seed, same weights.
  SmallCnnExtractor twin(32, 1, 10, 77);
  CHECK(twin.fingerprint() == ex.fingerprint());
  SmallCnnExtractor other(32, 1, 10, 78);
  CHECK(other.fingerprint() != ex.fingerprint());

  const double acc0 = ex.accuracy(data);
  CHECK(acc0 >= 0.0);
  CHECK(acc0 <= 1.0);
  ex.fit(data, 2, 20, 1e-3, 0.0);
  CHECK(ex.fingerprint() != twin.fingerprint());

  ex.save(path);
  SmallCnnExtractor loaded(32, 1, 10, 1);
  loaded.load(path);
  CHECK(loaded.fingerprint() == ex.fingerprint());
  Tensor<float> f1 = ex.extract(data.images.slice0(0, 4));
  Tensor<float> f2 = loaded.extract(data.images.slice0(0, 4));
  for (std::size_t i = 0; i < f1.numel(); ++i) CHECK(f2.data()[i] == f1.data()[i]);

  SmallCnnExtractor wrong(16, 1, 10, 1);
  CHECK_THROWS_AS(wrong.load(path), ConfigError);
  CHECK_THROWS_AS(loaded.load(scratch_path("igan_absent_cnn.bin")), DataError);

  // An impossible accuracy floor trips the calibration guard.
  SmallCnnExtractor strict(32, 1, 10, 9);
  CHECK_THROWS_AS(strict.fit(data, 1, 20, 1e-5, 1.1), CalibrationError);
}

TEST_CASE("evaluate_generator aggregates per-seed runs") {
  NetSpec net;
  net.arch = NetSpec::Arch::dcgan;
  net.noise_dim = 8;
  net.gen_widths = {16, 16, 8, 8};
  auto gen = build_generator<float>(net, 3);
  SmallCnnExtractor ex(32, 3, 10, 4);

  Dataset<float> real = make_synthetic_clusters(40, 32, 6);
  MetricReport rep = evaluate_generator(*gen, ex, real, 100, 24, {1, 2});

  CHECK(rep.n_real == 40);  // capped at the dataset size
  CHECK(rep.n_fake == 24);
  CHECK(rep.seeds == std::vector<std::uint64_t>{1, 2});
  REQUIRE(rep.fid_runs.size() == 2);
  REQUIRE(rep.kid_runs.size() == 2);
  REQUIRE(rep.is_runs.size() == 2);
  CHECK(rep.fid_mean ==
        doctest::Approx((rep.fid_runs[0] + rep.fid_runs[1]) / 2.0).epsilon(1e-9));
  for (double v : rep.fid_runs) CHECK(std::isfinite(v));
  for (double v : rep.is_runs) {
    CHECK(v >= 1.0 - 1e-9);
    CHECK(v <= 10.0 + 1e-9);
  }
  CHECK(rep.extractor_fingerprint == ex.fingerprint());

  CHECK(MetricReport::csv_header() ==
        "fid_mean,fid_std,kid_mean,kid_std,is_mean,is_std,n_real,n_fake,n_seeds");
  const std::string row = rep.csv_row();
  CHECK(std::count(row.begin(), row.end(), ',') == 8);
  CHECK(rep.text().find("fid_mean") != std::string::npos);
  CHECK(rep.text().find(ex.fingerprint()) != std::string::npos);

  CHECK_THROWS_AS(evaluate_generator(*gen, ex, real, 1, 24, {1}), ContractError);
}
