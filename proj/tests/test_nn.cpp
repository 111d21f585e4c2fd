#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <igan/nn/layers.hpp>
#include <igan/nn/module.hpp>
#include <igan/nn/spectral_norm.hpp>
#include <igan/rng.hpp>
#include <igan/tensor.hpp>

#include <cmath>
#include <functional>
#include <vector>

using igan::Rng;
using igan::Tensor;
namespace nn = igan::nn;

namespace {

// Central finite difference of a scalar function along one coordinate.
double fd(const std::function<double()>& f, double& x, double h = 1e-6) {
  const double keep = x;
  x = keep + h;
  const double up = f();
  x = keep - h;
  const double down = f();
  x = keep;
  return (up - down) / (2.0 * h);
}

double dot(const Tensor<double>& a, const Tensor<double>& b) {
  REQUIRE(a.numel() == b.numel());
  double s = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) s += a[i] * b[i];
  return s;
}

double rel_err(double got, double want) {
  return std::abs(got - want) / std::max({1e-8, std::abs(got), std::abs(want)});
}

}  // namespace

TEST_CASE("linear forward matches the explicit product") {
  Rng rng(3);
  nn::Linear<double> lin("fc", 3, 2, rng);
  Tensor<double> x = Tensor<double>::gaussian({4, 3}, rng);
  Tensor<double> y = lin.forward(x);
  REQUIRE(y.dim(0) == 4);
  REQUIRE(y.dim(1) == 2);
  for (long n = 0; n < 4; ++n)
    for (long o = 0; o < 2; ++o) {
      double want = lin.bias().value[static_cast<std::size_t>(o)];
      for (long i = 0; i < 3; ++i)
        want += x.at({n, i}) * lin.weight().value.at({o, i});
      CHECK(y.at({n, o}) == doctest::Approx(want).epsilon(1e-12));
    }
}

TEST_CASE("linear gradients agree with finite differences") {
  Rng rng(11);
  nn::Linear<double> lin("fc", 4, 3, rng);
  Tensor<double> x = Tensor<double>::gaussian({5, 4}, rng);
  Tensor<double> v = Tensor<double>::gaussian({5, 3}, rng);  // fixed cotangent

  auto loss = [&] { return dot(lin.forward(x), v); };

  nn::ParamRefs<double> params;
  lin.collect(params);
  params.zero_grad();
  (void)lin.forward(x);
  Tensor<double> dx = lin.backward(v);

  for (auto* p : params.params)
    for (std::size_t i = 0; i < p->value.numel(); ++i)
      CHECK(rel_err(p->grad[i], fd(loss, p->value[i])) < 1e-7);
  for (std::size_t i = 0; i < x.numel(); ++i)
    CHECK(rel_err(dx[i], fd(loss, x[i])) < 1e-7);
}

TEST_CASE("conv2d matches a naive dense convolution") {
  for (const auto& [stride, pad] : std::vector<std::pair<long, long>>{{1, 1}, {2, 1}, {1, 0}}) {
    Rng rng(5 + stride * 10 + pad);
    const long in_c = 3, out_c = 4, k = 3, h = 6, w = 6, n = 2;
    nn::Conv2d<double> conv("c", in_c, out_c, k, stride, pad, rng);
    Tensor<double> x = Tensor<double>::gaussian({n, h, w, in_c}, rng);
    Tensor<double> y = conv.forward(x);
    const long oh = (h + 2 * pad - k) / stride + 1;
    REQUIRE(y.dim(1) == oh);
    for (long b = 0; b < n; ++b)
      for (long oy = 0; oy < oh; ++oy)
        for (long ox = 0; ox < oh; ++ox)
          for (long oc = 0; oc < out_c; ++oc) {
            double want = conv.weight().name.empty() ? 0.0 : 0.0;
            for (long ky = 0; ky < k; ++ky)
              for (long kx = 0; kx < k; ++kx) {
                const long iy = oy * stride + ky - pad;
                const long ix = ox * stride + kx - pad;
                if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                for (long ic = 0; ic < in_c; ++ic)
                  want += conv.weight().value.at({oc, (ky * k + kx) * in_c + ic}) *
                          x.at({b, iy, ix, ic});
              }
            CHECK(y.at({b, oy, ox, oc}) == doctest::Approx(want).epsilon(1e-10).scale(1.0));
          }
  }
}

TEST_CASE("conv2d gradients agree with finite differences") {
  Rng rng(17);
  nn::Conv2d<double> conv("c", 2, 3, 3, 1, 1, rng);
  Tensor<double> x = Tensor<double>::gaussian({2, 4, 4, 2}, rng);
  Tensor<double> v = Tensor<double>::gaussian({2, 4, 4, 3}, rng);

  auto loss = [&] { return dot(conv.forward(x), v); };

  nn::ParamRefs<double> params;
  conv.collect(params);
  params.zero_grad();
  (void)conv.forward(x);
  Tensor<double> dx = conv.backward(v);

  for (auto* p : params.params)
    for (std::size_t i = 0; i < p->value.numel(); ++i)
      CHECK(rel_err(p->grad[i], fd(loss, p->value[i])) < 1e-6);
  for (std::size_t i = 0; i < x.numel(); ++i)
    CHECK(rel_err(dx[i], fd(loss, x[i])) < 1e-6);
}

TEST_CASE("batchnorm normalizes the batch in train mode") {
  Rng rng(23);
  nn::BatchNorm2d<double> bn("bn", 3);
  Tensor<double> x = Tensor<double>::gaussian({4, 2, 2, 3}, rng);
  x *= 2.0;
  Tensor<double> y = bn.forward(x);
  const long rows = 4 * 2 * 2;
  for (long c = 0; c < 3; ++c) {
    double mean = 0.0, var = 0.0;
    for (long r = 0; r < rows; ++r) mean += y.mat(rows, 3)(r, c);
    mean /= rows;
    for (long r = 0; r < rows; ++r) {
      const double d = y.mat(rows, 3)(r, c) - mean;
      var += d * d;
    }
    var /= rows;
    CHECK(mean == doctest::Approx(0.0).scale(1).epsilon(1e-10));
    CHECK(var == doctest::Approx(1.0).epsilon(1e-3));  // eps shrinks it slightly
  }
}

TEST_CASE("batchnorm running stats follow the update rule and drive eval mode") {
  Rng rng(29);
  nn::BatchNorm2d<double> bn("bn", 2, 1e-5, 0.1);
  Tensor<double> x = Tensor<double>::gaussian({8, 2, 2, 2}, rng);
  const long rows = 8 * 2 * 2;

  // Expected running stats after one train step from the (0, 1) start.
  std::vector<double> mu(2, 0.0), var(2, 0.0);
  auto xm = x.mat(rows, 2);
  for (long c = 0; c < 2; ++c) {
    for (long r = 0; r < rows; ++r) mu[static_cast<std::size_t>(c)] += xm(r, c);
    mu[static_cast<std::size_t>(c)] /= rows;
    for (long r = 0; r < rows; ++r) {
      const double d = xm(r, c) - mu[static_cast<std::size_t>(c)];
      var[static_cast<std::size_t>(c)] += d * d;
    }
    var[static_cast<std::size_t>(c)] /= (rows - 1);  // running update keeps the unbiased estimate
  }
  (void)bn.forward(x);

  nn::ParamRefs<double> refs;
  bn.collect(refs);
  REQUIRE(refs.states.size() == 2);
  const Tensor<double>& rm = *refs.states[0].tensor;
  const Tensor<double>& rv = *refs.states[1].tensor;
  for (long c = 0; c < 2; ++c) {
    CHECK(rm[static_cast<std::size_t>(c)] ==
          doctest::Approx(0.1 * mu[static_cast<std::size_t>(c)]).epsilon(1e-10));
    CHECK(rv[static_cast<std::size_t>(c)] ==
          doctest::Approx(0.9 + 0.1 * var[static_cast<std::size_t>(c)]).epsilon(1e-10));
  }

  // Eval mode must use the running stats, not the batch.
  bn.set_training(false);
  Tensor<double> one({1, 1, 1, 2});
  one.fill(0.5);
  Tensor<double> y = bn.forward(one);
  for (long c = 0; c < 2; ++c) {
    const double want = (0.5 - rm[static_cast<std::size_t>(c)]) /
                        std::sqrt(rv[static_cast<std::size_t>(c)] + 1e-5);
    CHECK(y[static_cast<std::size_t>(c)] == doctest::Approx(want).epsilon(1e-10));
  }
}

TEST_CASE("batchnorm gradients agree with finite differences") {
  Rng rng(31);
  nn::BatchNorm2d<double> bn("bn", 2);
  Tensor<double> x = Tensor<double>::gaussian({3, 2, 2, 2}, rng);
  Tensor<double> v = Tensor<double>::gaussian({3, 2, 2, 2}, rng);

  // Fresh running stats per call keep the loss a pure function of x.
  auto loss = [&] {
    nn::BatchNorm2d<double> local("bn", 2);
    nn::ParamRefs<double> p0;
    bn.collect(p0);
    nn::ParamRefs<double> p1;
    local.collect(p1);
    for (std::size_t i = 0; i < 2; ++i) p1.params[i]->value = p0.params[i]->value;
    return dot(local.forward(x), v);
  };

  nn::ParamRefs<double> params;
  bn.collect(params);
  params.zero_grad();
  (void)bn.forward(x);
  Tensor<double> dx = bn.backward(v);

  for (auto* p : params.params)
    for (std::size_t i = 0; i < p->value.numel(); ++i)
      CHECK(rel_err(p->grad[i], fd(loss, p->value[i])) < 1e-6);
  for (std::size_t i = 0; i < x.numel(); ++i)
    CHECK(rel_err(dx[i], fd(loss, x[i])) < 1e-6);
}

TEST_CASE("activations match their formulas and derivatives") {
  Rng rng(37);
  Tensor<double> x = Tensor<double>::gaussian({50}, rng);
  Tensor<double> v = Tensor<double>::gaussian({50}, rng);

  nn::ReLU<double> relu;
  Tensor<double> yr = relu.forward(x);
  Tensor<double> dr = relu.backward(v);
  nn::LeakyReLU<double> lrelu(0.2);
  Tensor<double> yl = lrelu.forward(x);
  Tensor<double> dl = lrelu.backward(v);
  nn::Tanh<double> th;
  Tensor<double> yt = th.forward(x);
  Tensor<double> dt = th.backward(v);

  for (std::size_t i = 0; i < 50; ++i) {
    CHECK(yr[i] == (x[i] > 0 ? x[i] : 0.0));
    CHECK(dr[i] == (x[i] > 0 ? v[i] : 0.0));
    CHECK(yl[i] == doctest::Approx(x[i] > 0 ? x[i] : 0.2 * x[i]));
    CHECK(dl[i] == doctest::Approx(x[i] > 0 ? v[i] : 0.2 * v[i]));
    CHECK(yt[i] == doctest::Approx(std::tanh(x[i])).epsilon(1e-12));
    CHECK(dt[i] == doctest::Approx(v[i] * (1 - std::tanh(x[i]) * std::tanh(x[i]))).epsilon(1e-12));
  }
}

TEST_CASE("pooling and upsampling satisfy the adjoint identity") {
  Rng rng(41);
  Tensor<double> x = Tensor<double>::gaussian({2, 4, 4, 3}, rng);

  nn::AvgPool2<double> pool;
  Tensor<double> y = pool.forward(x);
  REQUIRE(y.dim(1) == 2);
  CHECK(y.at({0, 0, 0, 0}) ==
        doctest::Approx(0.25 * (x.at({0, 0, 0, 0}) + x.at({0, 0, 1, 0}) + x.at({0, 1, 0, 0}) +
                                x.at({0, 1, 1, 0}))));
  Tensor<double> u = Tensor<double>::gaussian(y.shape(), rng);
  CHECK(dot(y, u) == doctest::Approx(dot(x, pool.backward(u))).epsilon(1e-12));

  nn::Upsample2<double> up;
  Tensor<double> y2 = up.forward(x);
  REQUIRE(y2.dim(1) == 8);
  CHECK(y2.at({1, 5, 3, 2}) == x.at({1, 2, 1, 2}));
  Tensor<double> u2 = Tensor<double>::gaussian(y2.shape(), rng);
  CHECK(dot(y2, u2) == doctest::Approx(dot(x, up.backward(u2))).epsilon(1e-12));

  nn::GlobalSumPool<double> gsp;
  Tensor<double> y3 = gsp.forward(x);
  REQUIRE(y3.rank() == 2);
  double want = 0.0;
  for (long i = 0; i < 4; ++i)
    for (long j = 0; j < 4; ++j) want += x.at({0, i, j, 1});
  CHECK(y3.at({0, 1}) == doctest::Approx(want).epsilon(1e-12));
  Tensor<double> u3 = Tensor<double>::gaussian(y3.shape(), rng);
  CHECK(dot(y3, u3) == doctest::Approx(dot(x, gsp.backward(u3))).epsilon(1e-12));
}

TEST_CASE("orthogonal init gives orthonormal rows or columns times gain") {
  Rng rng(43);
  for (const auto& [rows, cols] : std::vector<std::pair<long, long>>{{4, 7}, {7, 4}, {5, 5}}) {
    Tensor<double> w({rows, cols});
    nn::orthogonal_init(w, rows, cols, rng, 2.0);
    Eigen::MatrixXd m = w.mat2d();
    Eigen::MatrixXd gram = rows <= cols ? (m * m.transpose()).eval() : (m.transpose() * m).eval();
    const long k = std::min(rows, cols);
    for (long i = 0; i < k; ++i)
      for (long j = 0; j < k; ++j)
        CHECK(gram(i, j) == doctest::Approx(i == j ? 4.0 : 0.0).scale(1).epsilon(1e-9));
  }
}

TEST_CASE("spectral normalization drives the top singular value to one") {
  Rng rng(47);
  for (int trial = 0; trial < 10; ++trial) {
    const long rows = 2 + static_cast<long>(rng.below(30));
    const long cols = 2 + static_cast<long>(rng.below(30));
    Tensor<float> w = Tensor<float>::gaussian({rows, cols}, rng, 3.0f);
    Tensor<float> state;
    Tensor<float> wn = nn::spectral_normalize(w, state, 50);
    Eigen::MatrixXf m = wn.mat2d();
    Eigen::JacobiSVD<Eigen::MatrixXf> svd(m);
    CHECK(svd.singularValues()(0) == doctest::Approx(1.0).epsilon(2e-3));
  }
}

TEST_CASE("snlinear sigma matches an svd after refresh") {
  Rng rng(53);
  nn::SNLinear<double> lin("sn", 12, 9, rng);
  lin.weight().value = Tensor<double>::gaussian({9, 12}, rng, 2.0);
  lin.set_training(false);
  lin.refresh(200);
  Tensor<double> x = Tensor<double>::gaussian({3, 12}, rng);
  Tensor<double> y = lin.forward(x);  // eval forward fixes sigma from the refreshed state

  Eigen::MatrixXd m = lin.weight().value.mat2d();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  CHECK(lin.sigma() == doctest::Approx(svd.singularValues()(0)).epsilon(1e-6));
  for (long n = 0; n < 3; ++n)
    for (long o = 0; o < 9; ++o) {
      double want = lin.bias().value[static_cast<std::size_t>(o)];
      for (long i = 0; i < 12; ++i)
        want += x.at({n, i}) * lin.weight().value.at({o, i}) / lin.sigma();
      CHECK(y.at({n, o}) == doctest::Approx(want).epsilon(1e-9));
    }
}

TEST_CASE("snlinear collects its power iteration vector as state") {
  Rng rng(59);
  nn::SNLinear<float> lin("crit", 6, 4, rng);
  nn::ParamRefs<float> refs;
  lin.collect(refs);
  REQUIRE(refs.states.size() == 1);
  CHECK(refs.states[0].name == "crit.sn_u");
  CHECK(refs.states[0].tensor->numel() == 4);
}

TEST_CASE("param refs absorb and zero") {
  Rng rng(61);
  nn::Linear<float> a("a", 2, 2, rng);
  nn::Linear<float> b("b", 2, 2, rng);
  nn::ParamRefs<float> ra;
  a.collect(ra);
  nn::ParamRefs<float> rb;
  b.collect(rb);
  const std::size_t na = ra.params.size();
  ra.absorb(std::move(rb));
  CHECK(ra.params.size() == 2 * na);
  CHECK(ra.param_count() == 2 * (2 * 2 + 2));
  for (auto* p : ra.params) p->grad.fill(1.0f);
  ra.zero_grad();
  for (auto* p : ra.params)
    for (std::size_t i = 0; i < p->grad.numel(); ++i) REQUIRE(p->grad[i] == 0.0f);
}
