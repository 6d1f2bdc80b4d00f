#include "isbor/likelihood.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "isbor/errors.hpp"

namespace isbor {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kSqrt2 = std::numbers::sqrt2;
const double kLogSqrt2Pi = 0.5 * std::log(2.0 * std::numbers::pi);
const double kLogProbFloor = std::log(kProbFloor);

// ln(1 - e^x) for x <= 0.
double log1mexp(double x) {
  if (x > -std::numbers::ln2) return std::log(-std::expm1(x));
  return std::log1p(-std::exp(x));
}

double log_normal_pdf(double z) { return -0.5 * z * z - kLogSqrt2Pi; }

double erf_or_one(double z) { return std::isinf(z) ? (z > 0 ? 1.0 : -1.0) : std::erf(z / kSqrt2); }

// ln(Phi(z1) - Phi(z2)) without the floor; -inf when the difference vanishes.
double log_prob_raw(double z1, double z2) {
  if (z2 >= 0.0) {
    // Both edges in the upper tail: use survival functions Q(z) = Phi(-z).
    const double lq2 = log_normal_cdf(-z2);
    const double lq1 = log_normal_cdf(-z1);
    return lq2 + log1mexp(lq1 - lq2);
  }
  if (z1 <= 0.0) {
    const double l1 = log_normal_cdf(z1);
    const double l2 = log_normal_cdf(z2);
    return l1 + log1mexp(l2 - l1);
  }
  // z2 < 0 < z1: both erf terms are positive, no cancellation.
  return std::log(0.5 * (erf_or_one(z1) + erf_or_one(-z2)));
}

// Stable log-probability. When the tail difference underflows for two finite
// edges the interval is narrow relative to its distance from 0, and the mass
// is close to width times the density at the midpoint. The floor is the last
// resort.
double log_prob_stable(double z1, double z2) {
  double lp = log_prob_raw(z1, z2);
  if (!std::isfinite(lp) && std::isfinite(z1) && std::isfinite(z2))
    lp = std::log(z1 - z2) + log_normal_pdf(0.5 * (z1 + z2));
  return std::isfinite(lp) ? lp : kLogProbFloor;
}

}  // namespace

Thresholds::Thresholds(double b1, std::vector<double> deltas) : b1_(b1), deltas_(std::move(deltas)) {
  if (!std::isfinite(b1_)) throw InputError("threshold b1 must be finite");
  for (double d : deltas_)
    if (!(d > 0.0) || !std::isfinite(d)) throw InputError("threshold gaps must be positive");
}

Thresholds Thresholds::centered(int r) {
  if (r < 2) throw InputError("need at least 2 categories");
  return Thresholds(1.0 - r / 2.0, std::vector<double>(static_cast<std::size_t>(r - 2), 1.0));
}

Thresholds Thresholds::from_cutpoints(const std::vector<double>& cutpoints) {
  if (cutpoints.empty()) throw InputError("need at least one cut-point");
  std::vector<double> deltas;
  for (std::size_t i = 1; i < cutpoints.size(); ++i) deltas.push_back(cutpoints[i] - cutpoints[i - 1]);
  return Thresholds(cutpoints.front(), std::move(deltas));
}

double Thresholds::boundary(int i) const {
  const int r = categories();
  if (i <= 0) return -kInf;
  if (i >= r) return kInf;
  double b = b1_;
  for (int k = 0; k < i - 1; ++k) b += deltas_[k];
  return b;
}

std::vector<double> Thresholds::cutpoints() const {
  std::vector<double> out{b1_};
  for (double d : deltas_) out.push_back(out.back() + d);
  return out;
}

int Thresholds::classify(double f) const {
  double b = b1_;
  if (f <= b) return 1;
  for (std::size_t k = 0; k < deltas_.size(); ++k) {
    b += deltas_[k];
    if (f <= b) return static_cast<int>(k) + 2;
  }
  return categories();
}

double normal_cdf(double z) {
  if (std::isnan(z)) return z;
  return 0.5 * std::erfc(-z / kSqrt2);
}

double normal_pdf(double z) {
  if (std::isinf(z)) return 0.0;
  return std::exp(log_normal_pdf(z));
}

double log_normal_cdf(double z) {
  if (std::isnan(z)) return z;
  if (z == -kInf) return -kInf;
  if (z > 0.0) return std::log1p(-0.5 * std::erfc(z / kSqrt2));
  if (z > -35.0) return std::log(0.5 * std::erfc(-z / kSqrt2));
  // Asymptotic expansion of the Mills ratio; relative error below 1e-12 here.
  const double w = 1.0 / (z * z);
  const double series = 1.0 - w * (1.0 - w * (3.0 - w * (15.0 - w * 105.0)));
  return log_normal_pdf(z) - std::log(-z) + std::log(series);
}

std::pair<double, double> z_pair(double f, int y, const Thresholds& b, double sigma) {
  const int r = b.categories();
  if (y < 1 || y > r)
    throw InputError("label " + std::to_string(y) + " outside 1.." + std::to_string(r));
  if (!(sigma > 0.0)) throw InputError("noise sigma must be positive");
  return {(b.boundary(y) - f) / sigma, (b.boundary(y - 1) - f) / sigma};
}

double log_prob(double z1, double z2) {
  if (!(z1 > z2)) throw InputError("log_prob requires z1 > z2");
  return log_prob_stable(z1, z2);
}

SampleDerivs sample_derivs(double z1, double z2) {
  const double lp = log_prob_stable(z1, z2);
  SampleDerivs d{};
  d.log_p = lp;
  d.ratio_upper = std::isinf(z1) ? 0.0 : std::exp(log_normal_pdf(z1) - lp);
  d.ratio_lower = std::isinf(z2) ? 0.0 : std::exp(log_normal_pdf(z2) - lp);
  const double diff = d.ratio_upper - d.ratio_lower;
  // z * N(z) -> 0 at infinite edges.
  const double zu = std::isinf(z1) ? 0.0 : z1 * d.ratio_upper;
  const double zl = std::isinf(z2) ? 0.0 : z2 * d.ratio_lower;
  d.hess_raw = diff * diff + zu - zl;
  return d;
}

LikelihoodTerms likelihood_terms(const Vector& scores, const Labels& labels, const Thresholds& b,
                                 double sigma) {
  const Index n = scores.size();
  if (static_cast<Index>(labels.size()) != n)
    throw InputError("likelihood_terms: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(n) + " scores");
  LikelihoodTerms t;
  t.delta.resize(n);
  t.hess_diag.resize(n);
  const double inv_s = 1.0 / sigma;
  for (Index i = 0; i < n; ++i) {
    if (!std::isfinite(scores[i]))
      throw NumericError("non-finite score at sample " + std::to_string(i));
    const auto [z1, z2] = z_pair(scores[i], labels[i], b, sigma);
    const SampleDerivs d = sample_derivs(z1, z2);
    const double delta = -inv_s * (d.ratio_upper - d.ratio_lower);
    const double h = inv_s * inv_s * d.hess_raw;
    if (!std::isfinite(delta) || !std::isfinite(h) || !std::isfinite(d.log_p))
      throw NumericError("non-finite likelihood term at sample " + std::to_string(i));
    t.log_lik += d.log_p;
    t.delta[i] = delta;
    t.hess_diag[i] = std::max(h, kHessFloor);
  }
  return t;
}

double log_likelihood(const Vector& scores, const Labels& labels, const Thresholds& b,
                      double sigma) {
  const Index n = scores.size();
  if (static_cast<Index>(labels.size()) != n)
    throw InputError("log_likelihood: label count mismatch");
  double total = 0.0;
  for (Index i = 0; i < n; ++i) {
    if (!std::isfinite(scores[i]))
      throw NumericError("non-finite score at sample " + std::to_string(i));
    const auto [z1, z2] = z_pair(scores[i], labels[i], b, sigma);
    total += log_prob(z1, z2);
  }
  if (!std::isfinite(total)) throw NumericError("non-finite log-likelihood");
  return total;
}

}  // namespace isbor
