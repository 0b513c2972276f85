#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "ddb/linop.hpp"
#include "ddb/oracle.hpp"
#include "ddb/rng.hpp"
#include "ddb/schedule.hpp"

using namespace ddb;

namespace {

ThetaBarTable linear_theta(double rate) {
  ThetaBarTable tb;
  tb.t = {0.0, 0.5, 1.0};
  tb.value = {0.0, 0.5 * rate, rate};
  return tb;
}

double rel_err(const Tensor& got, const Tensor& want) {
  return norm2(got - want) / std::max(norm2(want), 1e-12);
}

}  // namespace

TEST_CASE("gaussian oracle scalar conditioning") {
  // x0 ~ N(0,1), x1 = x0 + n with n ~ N(0,1). At t=1: E[x0|x1] = x1/2.
  const auto sched = BridgeSchedule::i2sb();
  const IdentityOp ident({1});
  const GaussianOracle o(Tensor::scalar(0.0), Tensor::scalar(1.0), ident, 1.0, sched);

  CHECK(o.predict(Tensor::scalar(2.0), 1.0)[0] == Catch::Approx(1.0).epsilon(1e-12));
  CHECK(o.vjp(Tensor::scalar(0.3), 1.0, Tensor::scalar(1.0))[0] ==
        Catch::Approx(0.5).epsilon(1e-12));
  // fd against analytic on the scalar case
  const Tensor fd = fd_vjp(o, Tensor::scalar(0.7), 1.0, Tensor::scalar(1.0), 1e-5);
  CHECK(std::abs(fd[0] - 0.5) < 1e-8);
}

TEST_CASE("gaussian oracle observes x0 at t = 0") {
  const auto sched = BridgeSchedule::i2sb();
  const IdentityOp ident({3});
  const GaussianOracle o(Tensor({3}, {0.1, 0.2, 0.3}), Tensor::full({3}, 0.5), ident,
                         0.3, sched);
  CounterRng rng(4);
  const Tensor x = rng.normal_tensor({3});
  CHECK(bit_identical(o.predict(x, 0.0), x));
  const Tensor u = rng.normal_tensor({3});
  CHECK(bit_identical(o.vjp(x, 0.0, u), u));
}

TEST_CASE("gaussian predict is affine in x_t") {
  const auto sched = BridgeSchedule::i2sb();
  const PeriodicConvolutionOp blur({6}, gaussian_kernel(3, 1.0));
  CounterRng rng(11);
  Tensor mu = rng.normal_tensor({6});
  const GaussianOracle o(mu, Tensor::full({6}, 0.2), blur, 0.1, sched);

  const double t = 0.6;
  const Tensor zero = Tensor::zeros({6});
  const Tensor base = o.predict(zero, t);
  const Tensor x = rng.normal_tensor({6});
  const Tensor y = rng.normal_tensor({6});
  const double a = 0.7, b = -1.3;
  Tensor combo(x.shape);
  for (std::size_t i = 0; i < combo.size(); ++i) combo[i] = a * x[i] + b * y[i];
  Tensor expect(x.shape);
  const Tensor px = o.predict(x, t), py = o.predict(y, t);
  for (std::size_t i = 0; i < combo.size(); ++i)
    expect[i] = base[i] + a * (px[i] - base[i]) + b * (py[i] - base[i]);
  CHECK(max_abs(o.predict(combo, t) - expect) < 1e-12);
}

TEST_CASE("gaussian diagonal and dense paths agree") {
  const auto sched = BridgeSchedule::i2sb();
  Tensor m({5}, {1, 0, 1, 1, 0});
  const MaskOp mask(m);
  CounterRng rng(12);
  const Tensor mu = rng.normal_tensor({5});
  Tensor var({5}, {0.3, 0.5, 0.1, 0.7, 0.2});

  const GaussianOracle diag(mu, var, mask, 0.25, sched);
  Eigen::MatrixXd s0 = Eigen::MatrixXd::Zero(5, 5);
  for (int i = 0; i < 5; ++i) s0(i, i) = var[static_cast<std::size_t>(i)];
  const GaussianOracle dense(mu, s0, mask, 0.25, sched);

  for (double t : {0.1, 0.35, 0.8, 1.0}) {
    const Tensor x = rng.normal_tensor({5});
    const Tensor u = rng.normal_tensor({5});
    CHECK(max_abs(diag.predict(x, t) - dense.predict(x, t)) < 1e-10);
    CHECK(max_abs(diag.vjp(x, t, u) - dense.vjp(x, t, u)) < 1e-10);
  }
}

TEST_CASE("gaussian oracle rejects shape-changing operators") {
  const auto sched = BridgeSchedule::i2sb();
  const AvgPoolDownsampleOp pool({4}, 2);
  CHECK_THROWS_AS(
      GaussianOracle(Tensor::zeros({4}), Tensor::full({4}, 1.0), pool, 0.1, sched),
      ConfigError);
}

TEST_CASE("gaussian oracle is the empirical L2 minimizer of its own model") {
  // First-order optimality of the MMSE map: E[e] = 0 and E[e x_t] = 0 up to
  // Monte-Carlo error, for e = predict(x_t) - x0.
  const auto sched = BridgeSchedule::i2sb();
  const IdentityOp ident({1});
  const double mu0 = 0.3, s0 = 0.5, sn = 0.2, t = 0.6;
  const GaussianOracle o(Tensor::scalar(mu0), Tensor::scalar(s0 * s0), ident, sn, sched);
  const auto c = sched.coefficients(t);

  CounterRng rng(13);
  const int n = 200000;
  double sum_e = 0.0, sum_ex = 0.0, sum_e2 = 0.0, sum_ex2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x0 = mu0 + s0 * rng.normal();
    const double x1 = x0 + sn * rng.normal();
    const double xt = (1.0 - c.alpha_t) * x0 + c.alpha_t * x1 + c.sigma_t * rng.normal();
    const double e = o.predict(Tensor::scalar(xt), t)[0] - x0;
    sum_e += e;
    sum_e2 += e * e;
    sum_ex += e * xt;
    sum_ex2 += e * xt * e * xt;
  }
  const double mean_e = sum_e / n;
  const double se_e = std::sqrt((sum_e2 / n - mean_e * mean_e) / n);
  const double mean_ex = sum_ex / n;
  const double se_ex = std::sqrt((sum_ex2 / n - mean_ex * mean_ex) / n);
  CHECK(std::abs(mean_e) < 4.0 * se_e);
  CHECK(std::abs(mean_ex) < 4.0 * se_ex);
}

TEST_CASE("mixture oracle basics") {
  const auto sched = BridgeSchedule::i2sb();

  SECTION("single component returns its clean image for any input") {
    const Tensor x0({2}, {0.4, 0.6});
    const Tensor x1({2}, {0.9, 0.1});
    const MixtureOracle o({x0}, {x1}, sched);
    CounterRng rng(3);
    const Tensor probe = rng.normal_tensor({2});
    CHECK(bit_identical(o.predict(probe, 0.7), x0));
    // Constant predictor: zero pullback.
    const Tensor v = o.vjp(probe, 0.7, rng.normal_tensor({2}));
    CHECK(max_abs(v) == 0.0);
  }

  SECTION("tiny temperature acts as argmax over pair centers") {
    const MixtureOracle o({Tensor::scalar(0.0), Tensor::scalar(1.0)},
                          {Tensor::scalar(0.0), Tensor::scalar(1.0)}, sched, 1e-3);
    CHECK(o.predict(Tensor::scalar(0.9), 1.0)[0] == Catch::Approx(1.0).margin(1e-9));
  }

  SECTION("huge sigma floor averages the components") {
    const MixtureOracle o({Tensor::scalar(0.0), Tensor::scalar(1.0)},
                          {Tensor::scalar(0.0), Tensor::scalar(1.0)}, sched, 100.0);
    CHECK(o.predict(Tensor::scalar(0.3), 0.5)[0] == Catch::Approx(0.5).margin(1e-3));
  }

  SECTION("validation") {
    CHECK_THROWS_AS(MixtureOracle({}, {}, sched), ConfigError);
    CHECK_THROWS_AS(MixtureOracle({Tensor::scalar(0.0)}, {}, sched), ConfigError);
    CHECK_THROWS_AS(
        MixtureOracle({Tensor::scalar(0.0)}, {Tensor::scalar(0.0)}, sched, 0.0),
        ConfigError);
  }
}

TEST_CASE("mixture oracle weights and t = 0 exactness") {
  const auto sched = BridgeSchedule::i2sb();
  CounterRng rng(17);
  std::vector<Tensor> x0s, x1s;
  for (int k = 0; k < 5; ++k) {
    Tensor x0 = rng.normal_tensor({6});
    Tensor x1 = x0;
    for (double& v : x1.data) v += 0.3 * rng.normal();
    x0s.push_back(std::move(x0));
    x1s.push_back(std::move(x1));
  }
  const MixtureOracle o(x0s, x1s, sched);

  for (const Tensor& x0 : x0s) {
    const Tensor p = o.predict(x0, 0.0);
    for (std::size_t j = 0; j < p.size(); ++j) REQUIRE(p[j] == x0[j]);
  }

  for (int trial = 0; trial < 50; ++trial) {
    const Tensor x = rng.normal_tensor({6});
    const double t = rng.uniform();
    const auto w = o.weights(x, t);
    double sum = 0.0;
    for (double v : w) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
      sum += v;
    }
    CHECK(std::abs(sum - 1.0) < 1e-12);
  }
}

TEST_CASE("vjp matches finite differences, gaussian oracle") {
  const auto sched = BridgeSchedule::i2sb();
  const PeriodicConvolutionOp blur({8}, gaussian_kernel(3, 1.1));
  CounterRng rng(19);
  const GaussianOracle o(rng.normal_tensor({8}), Tensor::full({8}, 0.3), blur, 0.15,
                         sched);
  for (int trial = 0; trial < 100; ++trial) {
    const double t = 0.05 + 0.95 * rng.uniform();
    const Tensor x = rng.normal_tensor({8});
    const Tensor u = rng.normal_tensor({8});
    const Tensor a = o.vjp(x, t, u);
    const Tensor f = fd_vjp(o, x, t, u, 1e-5);
    REQUIRE(rel_err(f, a) < 1e-5);
  }
}

TEST_CASE("vjp matches finite differences, mixture oracle") {
  // Scales chosen so several components carry weight: spread comparable to
  // the sampling temperature at the probed times.
  const auto irsde = BridgeSchedule::irsde(linear_theta(3.0), 0.5);
  CounterRng rng(23);
  std::vector<Tensor> x0s, x1s;
  const PeriodicConvolutionOp blur({4}, {0.25, 0.5, 0.25});
  for (int k = 0; k < 3; ++k) {
    Tensor x0({4});
    for (double& v : x0.data) v = 0.5 + 0.3 * rng.normal();
    x1s.push_back(blur.apply(x0));
    x0s.push_back(std::move(x0));
  }
  const MixtureOracle o(x0s, x1s, irsde, 1e-3);

  for (int trial = 0; trial < 100; ++trial) {
    const double t = 0.15 + 0.8 * rng.uniform();
    const auto c = irsde.coefficients(t);
    const std::size_t k = rng.next_u64() % x0s.size();
    Tensor x({4});
    for (std::size_t j = 0; j < 4; ++j)
      x[j] = (1.0 - c.alpha_t) * x0s[k][j] + c.alpha_t * x1s[k][j] +
             c.sigma_t * rng.normal();
    const Tensor u = rng.normal_tensor({4});
    const Tensor a = o.vjp(x, t, u);
    const double h = 1e-4 * std::max(c.sigma_t, 1e-3);
    const Tensor f = fd_vjp(o, x, t, u, h);
    REQUIRE(rel_err(f, a) < 1e-5);
  }
}

TEST_CASE("fd_vjp validates its step") {
  const auto sched = BridgeSchedule::i2sb();
  const MixtureOracle o({Tensor::scalar(0.0)}, {Tensor::scalar(1.0)}, sched);
  CHECK_THROWS_AS(fd_vjp(o, Tensor::scalar(0.0), 0.5, Tensor::scalar(1.0), 0.0),
                  DomainError);
}
