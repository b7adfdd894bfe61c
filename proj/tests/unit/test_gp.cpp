#include <cmath>
#include <random>

#include "doctest.h"
#include "macrogpo/errors.hpp"
#include "macrogpo/gp.hpp"
#include "oracles.hpp"

using namespace macrogpo;

namespace {

KernelParams plankton() {
  KernelParams p;
  p.signal_variance = 1.0;
  p.noise_variance = 1e-5;
  p.length_scales = {0.5, 0.5};
  return p;
}

ObservationSet rand_obs(std::size_t n, std::uint64_t seed, double spread = 2.0) {
  Rng rng = make_rng(seed);
  std::uniform_real_distribution<double> u(0.0, spread);
  std::normal_distribution<double> z(0.0, 1.0);
  ObservationSet d;
  for (std::size_t i = 0; i < n; ++i) d.append(Location{u(rng), u(rng)}, z(rng));
  return d;
}

std::vector<Location> rand_locs(std::size_t n, std::uint64_t seed) { return rand_obs(n, seed).locations; }

}  // namespace

TEST_CASE("kernel_cov basics") {
  KernelParams p = plankton();
  CHECK(kernel_cov({0, 0}, {0, 0}, p) == doctest::Approx(1.0));
  CHECK(kernel_cov({0, 0}, {0.5, 0}, p) == doctest::Approx(std::exp(-0.5)).epsilon(1e-14));
  CHECK(kernel_cov({0, 0}, {10.0, 0}, p) < 1e-12);
  CHECK(kernel_cov({0.1, 0.3}, {1.0, -0.2}, p) == kernel_cov({1.0, -0.2}, {0.1, 0.3}, p));
  CHECK_THROWS_AS(kernel_cov({0, 0, 0}, {0, 0}, p), InvalidInput);
}

TEST_CASE("kernel params validation") {
  KernelParams p = plankton();
  p.noise_variance = 0.0;
  CHECK_THROWS_AS(p.validate(), InvalidInput);
  p = plankton();
  p.length_scales = {0.5, -1.0};
  CHECK_THROWS_AS(p.validate(), InvalidInput);
  CHECK_THROWS_AS(ConditionedGp{p}, InvalidInput);
}

TEST_CASE("posterior with no data is the prior") {
  KernelParams p = plankton();
  p.prior_mean = 0.3;
  auto targets = rand_locs(3, 1);
  auto b = posterior(targets, {}, p);
  auto gram = noisy_gram(targets, p);
  CHECK((b.mean.array() - 0.3).abs().maxCoeff() == 0.0);
  CHECK((b.covariance - gram).cwiseAbs().maxCoeff() < 1e-15);
  CHECK((b.chol * b.chol.transpose() - b.covariance).norm() <= 1e-10 * b.covariance.norm());
}

TEST_CASE("posterior at an observed point") {
  KernelParams p = plankton();
  ObservationSet d;
  d.append(Location{1.0, 1.0}, 0.7);
  std::vector<Location> t{{1.0, 1.0}};
  auto b = posterior(t, d, p);
  CHECK(b.mean(0) == doctest::Approx(0.7 / (1.0 + 1e-5)).epsilon(1e-12));
}

TEST_CASE("posterior matches the dense-inverse oracle") {
  KernelParams p = plankton();
  p.prior_mean = -0.4;
  for (std::uint64_t seed : {2u, 3u, 4u}) {
    auto d = rand_obs(5, seed);
    auto t = rand_locs(3, seed + 100);
    auto b = posterior(t, d, p);
    auto o = oracle::naive_posterior(t, d, p);
    CHECK((b.mean - o.mean).cwiseAbs().maxCoeff() < 1e-8);
    CHECK((b.covariance - o.covariance).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("incremental conditioning equals one-shot conditioning") {
  KernelParams p = plankton();
  p.length_scales = {0.8, 0.6};
  auto d = rand_obs(9, 7);
  auto t = rand_locs(4, 8);
  ConditionedGp whole(p, d);
  ConditionedGp parts(p);
  parts.append(std::span(d.locations).subspan(0, 4), std::span(d.measurements).subspan(0, 4));
  parts.append(std::span(d.locations).subspan(4), std::span(d.measurements).subspan(4));
  auto a = whole.predict(t);
  auto b = parts.predict(t);
  CHECK((a.mean - b.mean).cwiseAbs().maxCoeff() < 1e-8);
  CHECK((a.covariance - b.covariance).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("covariance does not depend on measurements") {
  KernelParams p = plankton();
  auto d = rand_obs(6, 11);
  auto t = rand_locs(3, 12);
  auto a = posterior(t, d, p);
  for (double& z : d.measurements) z = 5.0 * z + 1.0;
  auto b = posterior(t, d, p);
  CHECK(a.covariance == b.covariance);
}

TEST_CASE("adding observations never increases variance") {
  KernelParams p = plankton();
  p.noise_variance = 0.01;
  auto d = rand_obs(12, 13);
  auto t = rand_locs(5, 14);
  ConditionedGp gp(p);
  Eigen::VectorXd prev = gp.predict(t).covariance.diagonal();
  for (std::size_t i = 0; i < d.size(); ++i) {
    gp.append(std::span(d.locations).subspan(i, 1), std::span(d.measurements).subspan(i, 1));
    Eigen::VectorXd now = gp.predict(t).covariance.diagonal();
    CHECK((now - prev).maxCoeff() <= 1e-10);
    prev = now;
  }
}

TEST_CASE("duplicate locations survive factorization") {
  KernelParams p = plankton();
  ObservationSet d;
  for (int i = 0; i < 5; ++i) d.append(Location{0.2, 0.2}, 0.1 * i);
  auto b = posterior(std::vector<Location>{{0.2, 0.2}}, d, p);
  CHECK(std::isfinite(b.mean(0)));
  CHECK(b.covariance(0, 0) >= p.noise_variance);
}

TEST_CASE("robust_cholesky rejects an indefinite matrix") {
  Eigen::MatrixXd m(2, 2);
  m << 1.0, 2.0, 2.0, 1.0;
  CHECK_THROWS_AS(robust_cholesky(m, 1.0), NumericalError);
}

TEST_CASE("info gain") {
  KernelParams p;
  p.signal_variance = 1.0;
  p.noise_variance = 0.25;
  p.length_scales = {1.0};
  auto b = posterior(std::vector<Location>{{0.0}}, {}, p);
  CHECK(info_gain(b, p.noise_variance) == doctest::Approx(0.5 * std::log(6.0)).epsilon(1e-14));

  p.signal_variance = 0.0;
  auto flat = posterior(std::vector<Location>{{0.0}, {1.0}, {2.0}}, {}, p);
  CHECK(info_gain(flat, p.noise_variance) == doctest::Approx(1.5 * std::log(2.0)).epsilon(1e-14));

  KernelParams q = plankton();
  q.noise_variance = 0.05;
  auto d = rand_obs(4, 21);
  auto t = rand_locs(4, 22);
  auto belief = posterior(t, d, q);
  const double ig = info_gain(belief, q.noise_variance);
  CHECK(ig >= 0.0);
  CHECK(ig == doctest::Approx(oracle::naive_info_gain(belief.covariance, q.noise_variance)).epsilon(1e-9));
}

TEST_CASE("sample_outputs: zero innovation returns the mean") {
  KernelParams p = plankton();
  auto b = posterior(rand_locs(3, 30), rand_obs(4, 31), p);
  Rng rng = make_rng(1);
  auto zero = [](Eigen::MatrixXd& x, Rng&) { x.setZero(); };
  auto s = sample_outputs(b, 1, rng, zero);
  REQUIRE(s.size() == 1);
  CHECK(s[0] == b.mean);
  CHECK_THROWS_AS(sample_outputs(b, 0, rng), InvalidInput);
}

TEST_CASE("sample_outputs: diagonal case is independent normals") {
  KernelParams p = plankton();
  p.signal_variance = 0.0;
  p.noise_variance = 0.5;
  p.prior_mean = 2.0;
  auto b = posterior(std::vector<Location>{{0, 0}}, {}, p);
  Rng rng = make_rng(1);
  auto s = sample_outputs(b, 10000, rng);
  std::vector<double> u;
  for (auto& v : s) u.push_back((v(0) - 2.0) / std::sqrt(0.5));
  std::sort(u.begin(), u.end());
  double ks = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double cdf = 0.5 * std::erfc(-u[i] / std::sqrt(2.0));
    ks = std::max({ks, std::abs(cdf - double(i) / u.size()), std::abs(cdf - double(i + 1) / u.size())});
  }
  CHECK(ks < 1.63 / std::sqrt(double(u.size())));  // 1% critical value
}

TEST_CASE("sample_outputs: Monte Carlo covariance") {
  KernelParams p = plankton();
  p.noise_variance = 0.01;
  auto b = posterior(rand_locs(3, 40), rand_obs(3, 41), p);
  Rng rng = make_rng(6);
  auto s = sample_outputs(b, 100000, rng);
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(3);
  for (auto& v : s) mean += v;
  mean /= double(s.size());
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(3, 3);
  for (auto& v : s) cov += (v - mean) * (v - mean).transpose();
  cov /= double(s.size() - 1);
  CHECK((cov - b.covariance).cwiseAbs().maxCoeff() < 0.05 * p.signal_variance);
}

TEST_CASE("sample_outputs is deterministic per seed") {
  KernelParams p = plankton();
  auto b = posterior(rand_locs(2, 50), {}, p);
  Rng r1 = make_rng(9), r2 = make_rng(9);
  auto a = sample_outputs(b, 20, r1);
  auto c = sample_outputs(b, 20, r2);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == c[i]);
}
