#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <igan/feature_core.hpp>
#include <igan/rng.hpp>
#include <igan/tensor.hpp>

#include <cmath>
#include <vector>

using namespace igan;

namespace {

// Literal enumeration of the contrastive objective in extended precision:
// for every anchor location, -log softmax at its positive over all N*M*M
// candidates in the batch.
long double nce_oracle(const ScoreTensor<double>& s) {
  const long n = s.n();
  const long m2 = s.m2();
  long double total = 0.0L;
  for (long b = 0; b < n; ++b) {
    for (long i = 0; i < m2; ++i) {
      long double denom = 0.0L;
      for (long cand = 0; cand < s.candidates(); ++cand)
        denom += std::exp(static_cast<long double>(s.score(b, i, cand)));
      const long double pos = std::exp(static_cast<long double>(s.score(b, i, s.positive_index(b, i))));
      total += -std::log(pos / denom);
    }
  }
  return total / static_cast<long double>(n * m2);
}

double oracle_accuracy(const ScoreTensor<double>& s) {
  const long n = s.n();
  const long m2 = s.m2();
  long hits = 0;
  for (long b = 0; b < n; ++b)
    for (long i = 0; i < m2; ++i) {
      const double pos = s.score(b, i, s.positive_index(b, i));
      bool strict = true;
      for (long cand = 0; cand < s.candidates(); ++cand) {
        if (cand == s.positive_index(b, i)) continue;
        if (s.score(b, i, cand) >= pos) {
          strict = false;
          break;
        }
      }
      if (strict) ++hits;
    }
  return static_cast<double>(hits) / static_cast<double>(n * m2);
}

ProjectedBundle<double> random_bundle(long n, long m, long r, Rng& rng) {
  ProjectedBundle<double> p;
  p.local_p = Tensor<double>::gaussian({n, m, m, r}, rng);
  p.global_p = Tensor<double>::gaussian({n, r}, rng);
  return p;
}

FeatureBundle<double> random_features(long n, long m, long k, Rng& rng) {
  FeatureBundle<double> f;
  f.local = Tensor<double>::gaussian({n, m, m, k}, rng);
  f.global = Tensor<double>::gaussian({n, k}, rng);
  return f;
}

}  // namespace

TEST_CASE("score_pairs computes every anchor candidate inner product") {
  Rng rng(101);
  const long n = 3, m = 2, r = 5;
  ProjectedBundle<double> p = random_bundle(n, m, r, rng);
  ScoreTensor<double> s = score_pairs(p);
  REQUIRE(s.n() == n);
  REQUIRE(s.m2() == m * m);
  for (long b = 0; b < n; ++b)
    for (long bp = 0; bp < n; ++bp)
      for (long j = 0; j < m * m; ++j) {
        double want = 0.0;
        for (long d = 0; d < r; ++d)
          want += p.local_p.at({bp, j / m, j % m, d}) * p.global_p.at({b, d});
        CHECK(s.score(b, 0, bp * m * m + j) == doctest::Approx(want).epsilon(1e-12));
      }
}

TEST_CASE("nce_loss matches the brute force enumeration") {
  Rng rng(103);
  for (int trial = 0; trial < 50; ++trial) {
    const long n = 1 + static_cast<long>(rng.below(4));
    const long m = 1 + static_cast<long>(rng.below(4));
    const long r = 1 + static_cast<long>(rng.below(16));
    ProjectedBundle<double> p = random_bundle(n, m, r, rng);
    ScoreTensor<double> s = score_pairs(p);
    const double got = nce_loss(s);
    const long double want = nce_oracle(s);
    CHECK(std::abs(got - static_cast<double>(want)) / static_cast<double>(want) < 1e-12);
    CHECK(nce_accuracy(s) == oracle_accuracy(s));
  }
}

TEST_CASE("nce_loss_backward matches finite differences") {
  Rng rng(107);
  const long n = 3, m = 2;
  ProjectedBundle<double> p = random_bundle(n, m, 6, rng);
  ScoreTensor<double> s = score_pairs(p);
  Tensor<double> grad = nce_loss_backward(s);
  REQUIRE(grad.same_shape(s.matrix()));
  const double h = 1e-6;
  for (std::size_t i = 0; i < s.matrix().numel(); ++i) {
    const double keep = s.matrix()[i];
    s.matrix()[i] = keep + h;
    const double up = nce_loss(s);
    s.matrix()[i] = keep - h;
    const double down = nce_loss(s);
    s.matrix()[i] = keep;
    const double want = (up - down) / (2 * h);
    CHECK(grad[i] == doctest::Approx(want).epsilon(1e-6).scale(1.0));
  }
}

TEST_CASE("score_pairs_backward matches finite differences") {
  Rng rng(109);
  const long n = 2, m = 2, r = 4;
  ProjectedBundle<double> p = random_bundle(n, m, r, rng);
  Tensor<double> v = Tensor<double>::gaussian({n, n * m * m}, rng);  // cotangent

  auto loss = [&] {
    ScoreTensor<double> s = score_pairs(p);
    double acc = 0.0;
    for (std::size_t i = 0; i < v.numel(); ++i) acc += s.matrix()[i] * v[i];
    return acc;
  };

  Tensor<double> d_local, d_global;
  score_pairs_backward(v, p, d_local, d_global);
  const double h = 1e-6;
  for (std::size_t i = 0; i < p.local_p.numel(); ++i) {
    const double keep = p.local_p[i];
    p.local_p[i] = keep + h;
    const double up = loss();
    p.local_p[i] = keep - h;
    const double down = loss();
    p.local_p[i] = keep;
    CHECK(d_local[i] == doctest::Approx((up - down) / (2 * h)).epsilon(1e-7).scale(1.0));
  }
  for (std::size_t i = 0; i < p.global_p.numel(); ++i) {
    const double keep = p.global_p[i];
    p.global_p[i] = keep + h;
    const double up = loss();
    p.global_p[i] = keep - h;
    const double down = loss();
    p.global_p[i] = keep;
    CHECK(d_global[i] == doctest::Approx((up - down) / (2 * h)).epsilon(1e-7).scale(1.0));
  }
}

TEST_CASE("collapsed batches hit the chance bound with zero accuracy") {
  Rng rng(113);
  for (long n : {2L, 4L, 8L}) {
    const long m = 2, k = 6;
    // All images identical: every candidate location j ties with the
    // positive across the batch.
    Tensor<double> one_local = Tensor<double>::gaussian({1, m, m, k}, rng);
    Tensor<double> one_global = Tensor<double>::gaussian({1, k}, rng);
    FeatureBundle<double> f;
    f.local = Tensor<double>({n, m, m, k});
    f.global = Tensor<double>({n, k});
    for (long b = 0; b < n; ++b) {
      for (long i = 0; i < m * m * k; ++i)
        f.local[static_cast<std::size_t>(b * m * m * k + i)] = one_local[static_cast<std::size_t>(i)];
      for (long i = 0; i < k; ++i)
        f.global[static_cast<std::size_t>(b * k + i)] = one_global[static_cast<std::size_t>(i)];
    }
    Rng crng(200 + n);
    CriticPair<double> critic(k, k, 5, crng);
    NceResult<double> res = contrastive_pairing(f, critic);
    CHECK(res.loss >= std::log(static_cast<double>(n)) - 1e-9);
    CHECK(res.accuracy == 0.0);
  }
}

TEST_CASE("constant feature maps give exactly log of the candidate count") {
  const long n = 4, m = 2, k = 3;
  FeatureBundle<double> f;
  f.local = Tensor<double>::full({n, m, m, k}, 0.25);
  f.global = Tensor<double>::full({n, k}, -0.5);
  Rng crng(223);
  CriticPair<double> critic(k, k, 4, crng);
  NceResult<double> res = contrastive_pairing(f, critic);
  CHECK(res.loss == doctest::Approx(std::log(static_cast<double>(n * m * m))).epsilon(1e-12));
  CHECK(res.accuracy == 0.0);
}

TEST_CASE("nce loss is invariant under batch permutation") {
  Rng rng(127);
  const long n = 5, m = 2, k = 7;
  FeatureBundle<double> f = random_features(n, m, k, rng);
  Rng crng(228);
  CriticPair<double> critic(k, k, 6, crng);
  critic.set_training(false);
  critic.refresh(50);
  const double base = contrastive_pairing(f, critic).loss;

  std::vector<long> perm{3, 0, 4, 1, 2};
  FeatureBundle<double> g;
  g.local = Tensor<double>::gather0(f.local, perm);
  g.global = Tensor<double>::gather0(f.global, perm);
  const double permuted = contrastive_pairing(g, critic).loss;
  CHECK(permuted == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("untrained critics score near chance accuracy") {
  Rng rng(131);
  const long n = 4, m = 2;
  const double chance = 1.0 / static_cast<double>(n * m * m);
  double mean_acc = 0.0;
  const int trials = 60;
  for (int t = 0; t < trials; ++t) {
    FeatureBundle<double> f = random_features(n, m, 8, rng);
    Rng crng(300 + t);
    CriticPair<double> critic(8, 8, 12, crng);
    mean_acc += contrastive_pairing(f, critic).accuracy;
  }
  mean_acc /= trials;
  CHECK(mean_acc > 0.2 * chance);
  CHECK(mean_acc < 5.0 * chance);
}

TEST_CASE("contrastive gradients match finite differences through frozen critics") {
  Rng rng(137);
  const long n = 2, m = 2, k = 4, r = 5;
  FeatureBundle<double> f = random_features(n, m, k, rng);
  Rng crng(400);
  CriticPair<double> critic(k, k, r, crng);
  critic.set_training(false);
  critic.refresh(100);

  nn::ParamRefs<double> params = critic.params();
  params.zero_grad();
  Tensor<double> d_local, d_global;
  NceResult<double> res = contrastive_pairing_grad(f, critic, 1.0, &d_local, &d_global);
  CHECK(res.loss > 0.0);

  auto loss = [&] { return contrastive_pairing(f, critic).loss; };
  const double h = 1e-6;
  auto central = [&](double& x) {
    const double keep = x;
    x = keep + h;
    const double up = loss();
    x = keep - h;
    const double down = loss();
    x = keep;
    return (up - down) / (2 * h);
  };

  for (auto* p : params.params)
    for (std::size_t i = 0; i < p->value.numel(); ++i)
      CHECK(p->grad[i] == doctest::Approx(central(p->value[i])).epsilon(5e-6).scale(1.0));
  for (std::size_t i = 0; i < f.local.numel(); ++i)
    CHECK(d_local[i] == doctest::Approx(central(f.local[i])).epsilon(5e-6).scale(1.0));
  for (std::size_t i = 0; i < f.global.numel(); ++i)
    CHECK(d_global[i] == doctest::Approx(central(f.global[i])).epsilon(5e-6).scale(1.0));
}

TEST_CASE("grad_scale scales parameter gradients linearly") {
  Rng rng(139);
  FeatureBundle<double> f = random_features(3, 2, 5, rng);
  Rng c1(500), c2(500);
  CriticPair<double> a(5, 5, 4, c1), b(5, 5, 4, c2);
  a.set_training(false);
  b.set_training(false);
  nn::ParamRefs<double> pa = a.params(), pb = b.params();
  pa.zero_grad();
  pb.zero_grad();
  (void)contrastive_pairing_grad<double>(f, a, 1.0, nullptr, nullptr);
  (void)contrastive_pairing_grad<double>(f, b, 2.5, nullptr, nullptr);
  for (std::size_t i = 0; i < pa.params.size(); ++i)
    for (std::size_t j = 0; j < pa.params[i]->grad.numel(); ++j)
      CHECK(pb.params[i]->grad[j] ==
            doctest::Approx(2.5 * pa.params[i]->grad[j]).epsilon(1e-9).scale(1.0));
}

TEST_CASE("critic pair exposes depths and validates inputs") {
  Rng rng(149);
  CriticPair<float> critic(8, 16, 32, rng);
  CHECK(critic.k_local() == 8);
  CHECK(critic.k_global() == 16);
  CHECK(critic.r() == 32);

  nn::ParamRefs<float> params = critic.params();
  bool found_theta = false, found_omega = false;
  for (auto* p : params.params) {
    if (p->name == "critic.theta.hidden.weight") found_theta = true;
    if (p->name == "critic.omega.shortcut.weight") found_omega = true;
  }
  CHECK(found_theta);
  CHECK(found_omega);

  Tensor<float> bad_local({2, 3, 3, 9});
  CHECK_THROWS_AS((void)critic.project_local(bad_local), ContractError);
  Tensor<float> bad_global({2, 9});
  CHECK_THROWS_AS((void)critic.project_global(bad_global), ContractError);
  Tensor<float> rect({2, 3, 2, 8});
  CHECK_THROWS_AS((void)critic.project_local(rect), ContractError);
}

TEST_CASE("single-depth critic constructor delegates") {
  Rng rng(151);
  CriticPair<float> critic(12, 20, rng);
  CHECK(critic.k_local() == 12);
  CHECK(critic.k_global() == 12);
  CHECK(critic.r() == 20);
}

TEST_CASE("score tensor index layout") {
  ScoreTensor<float> s(3, 2);
  CHECK(s.anchors() == 12);
  CHECK(s.candidates() == 12);
  CHECK(s.positive_index(0, 0) == 0);
  CHECK(s.positive_index(2, 3) == 11);
  s.matrix().at({1, 7}) = 42.0f;
  CHECK(s.score(1, 0, 7) == 42.0f);
  CHECK(s.score(1, 3, 7) == 42.0f);  // anchor location does not change the row
  CHECK_THROWS_AS(ScoreTensor<float>(0, 2), ContractError);
}

TEST_CASE("feature bundle validation catches mismatches") {
  FeatureBundle<float> f;
  f.local = Tensor<float>({2, 3, 3, 4});
  f.global = Tensor<float>({2, 4});
  CHECK_NOTHROW(f.validate());
  f.global = Tensor<float>({3, 4});
  CHECK_THROWS_AS(f.validate(), ContractError);
  f.global = Tensor<float>({2, 5});
  CHECK_THROWS_AS(f.validate(), ContractError);
  f.local = Tensor<float>({2, 3, 2, 4});
  f.global = Tensor<float>({2, 4});
  CHECK_THROWS_AS(f.validate(), ContractError);
}

TEST_CASE("spectral_normalize seeds and reuses its state deterministically") {
  Rng rng(157);
  Tensor<float> w = Tensor<float>::gaussian({6, 9}, rng, 2.0f);
  Tensor<float> s1, s2;
  Tensor<float> a = nn::spectral_normalize(w, s1, 25);
  Tensor<float> b = nn::spectral_normalize(w, s2, 25);
  REQUIRE(s1.numel() == 6);
  for (std::size_t i = 0; i < a.numel(); ++i) REQUIRE(a[i] == b[i]);
  // A second call continues from the stored state and stays normalized.
  Tensor<float> c = nn::spectral_normalize(w, s1, 25);
  Eigen::JacobiSVD<Eigen::MatrixXf> svd(c.mat2d());
  CHECK(svd.singularValues()(0) == doctest::Approx(1.0).epsilon(1e-3));
}
