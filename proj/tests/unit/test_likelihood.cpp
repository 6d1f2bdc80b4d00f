#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "helpers.hpp"
#include "isbor/errors.hpp"
#include "isbor/likelihood.hpp"

using namespace isbor;
using isbor::testing::random_instance;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Oracle values from 60-digit arithmetic.
constexpr double kCdfAt1 = 0.8413447460685429;
constexpr double kLogProb10_9 = -43.628216632280822;
constexpr double kLogProb30_29 = -424.78741990973031;
constexpr double kLogProb36_35 = -616.97510126192251;
constexpr double kLogProbHalf = -0.95991633369562232;
constexpr double kLogProbNarrow = -20.329192936978384;  // (5.001, 5)
constexpr double kDeltaHalfLine = 0.79788456080286536;  // N(0) / 0.5
constexpr double kHessHalfLine = 0.63661977236758134;   // 2 / pi

double norm_rel(const Matrix& a, const Matrix& b) {
  return (a - b).norm() / std::max(a.norm(), 1e-300);
}

}  // namespace

TEST_SUITE("likelihood") {

TEST_CASE("normal_cdf reference values and limits") {
  CHECK(normal_cdf(0.0) == 0.5);
  CHECK(normal_cdf(-kInf) == 0.0);
  CHECK(normal_cdf(kInf) == 1.0);
  CHECK(normal_cdf(1.0) == doctest::Approx(kCdfAt1).epsilon(1e-14));
  CHECK(normal_cdf(-1.0) == doctest::Approx(1.0 - kCdfAt1).epsilon(1e-14));
}

TEST_CASE("normal_cdf is monotone") {
  double prev = 0.0;
  for (double z = -40.0; z <= 40.0; z += 0.01) {
    const double v = normal_cdf(z);
    CHECK(v >= prev);
    prev = v;
  }
}

TEST_CASE("log_normal_cdf stays finite deep in the lower tail") {
  CHECK(log_normal_cdf(-40.0) == doctest::Approx(-804.60844201375379).epsilon(1e-12));
  CHECK(std::isfinite(log_normal_cdf(-1e3)));
  CHECK(log_normal_cdf(kInf) == 0.0);
  CHECK(log_normal_cdf(-kInf) == -kInf);
  CHECK(log_normal_cdf(-34.999) == doctest::Approx(log_normal_cdf(-35.001)).epsilon(1e-3));
}

TEST_CASE("Thresholds construction and boundaries") {
  const Thresholds t(-1.0, {2.0});
  CHECK(t.categories() == 3);
  CHECK(t.boundary(0) == -kInf);
  CHECK(t.boundary(1) == -1.0);
  CHECK(t.boundary(2) == 1.0);
  CHECK(t.boundary(3) == kInf);
  CHECK(t.cutpoints() == std::vector<double>{-1.0, 1.0});
  CHECK_THROWS_AS(Thresholds(0.0, {0.0}), InputError);
  CHECK_THROWS_AS(Thresholds(0.0, {-1.0}), InputError);
  CHECK_THROWS_AS(Thresholds(kInf, {}), InputError);
  CHECK_THROWS_AS(Thresholds::from_cutpoints({1.0, 1.0}), InputError);
  CHECK_THROWS_AS(Thresholds::centered(1), InputError);

  const Thresholds c = Thresholds::centered(5);
  CHECK(c.cutpoints() == std::vector<double>{-1.5, -0.5, 0.5, 1.5});
  const Thresholds p = Thresholds::from_cutpoints({-60, -9, 15, 60});
  CHECK(p.classify(0.0) == 3);
  CHECK(p.classify(100.0) == 5);
  CHECK(p.classify(-60.0) == 1);
  CHECK(p.classify(-59.999) == 2);
}

TEST_CASE("z_pair examples") {
  const Thresholds two(0.0, {});
  const auto [a1, a2] = z_pair(0.0, 2, two, 1.0);
  CHECK(a1 == kInf);
  CHECK(a2 == 0.0);
  const Thresholds three(-1.0, {2.0});
  const auto [b1, b2] = z_pair(0.0, 2, three, 2.0);
  CHECK(b1 == 0.5);
  CHECK(b2 == -0.5);
  CHECK_THROWS_AS(z_pair(0.0, 0, three, 1.0), InputError);
  CHECK_THROWS_AS(z_pair(0.0, 4, three, 1.0), InputError);
  CHECK_THROWS_AS(z_pair(0.0, 1, three, 0.0), InputError);
}

TEST_CASE("z1 exceeds z2 for random inputs") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-50.0, 50.0);
  for (int k = 0; k < 1000; ++k) {
    const Thresholds b(u(rng) / 10.0, {0.001 + std::abs(u(rng)) / 10.0, 1.0});
    const int y = 1 + k % 4;
    const auto [z1, z2] = z_pair(u(rng), y, b, 0.01 + std::abs(u(rng)));
    CHECK(z1 > z2);
  }
}

TEST_CASE("log_prob reference values") {
  CHECK(log_prob(kInf, 0.0) == doctest::Approx(std::log(0.5)).epsilon(1e-15));
  CHECK(log_prob(kInf, -kInf) == 0.0);
  CHECK(log_prob(10.0, 9.0) == doctest::Approx(kLogProb10_9).epsilon(1e-12));
  CHECK(log_prob(-9.0, -10.0) == doctest::Approx(kLogProb10_9).epsilon(1e-12));
  CHECK(log_prob(30.0, 29.0) == doctest::Approx(kLogProb30_29).epsilon(1e-12));
  CHECK(log_prob(-29.0, -30.0) == doctest::Approx(kLogProb30_29).epsilon(1e-12));
  CHECK(log_prob(36.0, 35.0) == doctest::Approx(kLogProb36_35).epsilon(1e-10));
  CHECK(log_prob(0.5, -0.5) == doctest::Approx(kLogProbHalf).epsilon(1e-14));
  CHECK(log_prob(5.001, 5.0) == doctest::Approx(kLogProbNarrow).epsilon(1e-9));
  CHECK_THROWS_AS(log_prob(1.0, 1.0), InputError);
  CHECK_THROWS_AS(log_prob(0.0, 1.0), InputError);
}

TEST_CASE("log_prob is finite and monotone in z1") {
  for (double z2 = -30.0; z2 <= 29.0; z2 += 1.0) {
    double prev = -kInf;
    for (double z1 = z2 + 0.05; z1 <= 30.0; z1 += 0.05) {
      const double v = log_prob(z1, z2);
      CHECK(std::isfinite(v));
      CHECK(v >= prev);
      prev = v;
    }
  }
}

TEST_CASE("category probabilities sum to one") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  for (int k = 0; k < 500; ++k) {
    const Thresholds b(u(rng), {0.1 + std::abs(u(rng)), 0.1 + std::abs(u(rng)), 0.5});
    const double f = 2.0 * u(rng), sigma = 0.1 + std::abs(u(rng));
    double total = 0.0;
    for (int y = 1; y <= b.categories(); ++y) {
      const auto [z1, z2] = z_pair(f, y, b, sigma);
      total += std::exp(log_prob(z1, z2));
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-10));
  }
}

TEST_CASE("two-class terms at the boundary") {
  const Thresholds b(0.0, {});
  const Vector f = Vector::Zero(2);
  const LikelihoodTerms t = likelihood_terms(f, Labels{2, 1}, b, 1.0);
  CHECK(t.delta[0] == doctest::Approx(kDeltaHalfLine).epsilon(1e-14));
  CHECK(t.delta[1] == doctest::Approx(-kDeltaHalfLine).epsilon(1e-14));
  CHECK(t.hess_diag[0] == doctest::Approx(kHessHalfLine).epsilon(1e-14));
  CHECK(t.hess_diag[1] == doctest::Approx(kHessHalfLine).epsilon(1e-14));
  CHECK(t.log_lik == doctest::Approx(2.0 * std::log(0.5)).epsilon(1e-15));
}

TEST_CASE("per-sample derivatives match finite differences of log_prob") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int k = 0; k < 200; ++k) {
    const Thresholds b(u(rng), {0.3 + std::abs(u(rng))});
    const double f = u(rng), sigma = 0.3 + std::abs(u(rng));
    const int y = 1 + k % 3;
    auto lp = [&](double s) {
      const auto [z1, z2] = z_pair(s, y, b, sigma);
      return log_prob(z1, z2);
    };
    const double h = 1e-4;
    const double d1 = (lp(f + h) - lp(f - h)) / (2 * h);
    const double d2 = (lp(f + h) - 2 * lp(f) + lp(f - h)) / (h * h);
    const Vector fv = Vector::Constant(1, f);
    const LikelihoodTerms t = likelihood_terms(fv, Labels{y}, b, sigma);
    CHECK(t.delta[0] == doctest::Approx(d1).epsilon(1e-6));
    CHECK(t.hess_diag[0] == doctest::Approx(-d2).epsilon(1e-4));
  }
}

// Restricted to |z| <= 26 or so, where the curvature is representable; further
// out it underflows to zero and the clamp takes over.
TEST_CASE("curvature is positive before clamping") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int k = 0; k < 10000; ++k) {
    const Thresholds b(3.0 * u(rng), {0.01 + 2.0 * std::abs(u(rng)), 0.01 + 2.0 * std::abs(u(rng))});
    const double f = 4.0 * u(rng), sigma = 0.5 + 3.0 * std::abs(u(rng));
    const int y = 1 + k % 4;
    const auto [z1, z2] = z_pair(f, y, b, sigma);
    CHECK(sample_derivs(z1, z2).hess_raw > 0.0);
  }
}

TEST_CASE("gradient and Hessian match finite differences in w") {
  std::mt19937_64 rng(5);
  const int rs[] = {2, 3, 5};
  for (int rep = 0; rep < 30; ++rep) {
    const int r = rs[rep % 3];
    auto in = random_instance(rng, 5 + rep % 15, 1 + rep % 4, r);
    auto L = [&](const Vector& w) { return log_likelihood(in.phi * w, in.y, in.b, in.sigma); };
    auto grad = [&](const Vector& w) {
      return Vector(in.phi.transpose() * likelihood_terms(in.phi * w, in.y, in.b, in.sigma).delta);
    };
    const Index m = in.w.size();
    const double h = 1e-5;
    Vector fd(m);
    Matrix fd_h(m, m);
    for (Index j = 0; j < m; ++j) {
      Vector wp = in.w, wm = in.w;
      wp[j] += h;
      wm[j] -= h;
      fd[j] = (L(wp) - L(wm)) / (2 * h);
      fd_h.col(j) = (grad(wp) - grad(wm)) / (2 * h);
    }
    const LikelihoodTerms t = likelihood_terms(in.phi * in.w, in.y, in.b, in.sigma);
    const Vector g = in.phi.transpose() * t.delta;
    const Matrix hess = -(in.phi.transpose() * t.hess_diag.asDiagonal() * in.phi);
    CHECK(norm_rel(g, fd) < 1e-5);
    CHECK(norm_rel(hess, fd_h) < 1e-4);
  }
}

TEST_CASE("likelihood_terms invariants and far-tail behaviour") {
  const Thresholds b = Thresholds::from_cutpoints({-1.0, 1.0});
  Vector f(4);
  f << 0.0, 500.0, -500.0, 1e4;
  const LikelihoodTerms t = likelihood_terms(f, Labels{2, 1, 3, 3}, b, 0.5);
  CHECK(t.log_lik <= 0.0);
  CHECK(std::isfinite(t.log_lik));
  for (Index i = 0; i < 4; ++i) {
    CHECK(std::isfinite(t.delta[i]));
    CHECK(t.hess_diag[i] >= kHessFloor);
  }
  // Badly misclassified samples pull towards their interval.
  CHECK(t.delta[1] < 0.0);
  CHECK(t.delta[2] > 0.0);
  CHECK(t.hess_diag[1] == doctest::Approx(4.0).epsilon(1e-3));
  // Confidently correct sample: no gradient and curvature at the floor.
  CHECK(t.delta[3] == 0.0);
  CHECK(t.hess_diag[3] == kHessFloor);
}

TEST_CASE("likelihood_terms reports the offending sample") {
  const Thresholds b(0.0, {});
  Vector f(3);
  f << 0.0, std::nan(""), 1.0;
  try {
    likelihood_terms(f, Labels{1, 2, 1}, b, 1.0);
    FAIL("expected an error");
  } catch (const std::exception& e) {
    CHECK(std::string(e.what()).find("1") != std::string::npos);
  }
  CHECK_THROWS_AS(likelihood_terms(Vector::Zero(2), Labels{1}, b, 1.0), InputError);
  CHECK_THROWS_AS(likelihood_terms(Vector::Zero(1), Labels{3}, b, 1.0), InputError);
}

}
