#pragma once

#include <utility>
#include <vector>

#include "isbor/types.hpp"

namespace isbor {

/// Ascending cut-points b_1 < ... < b_{r-1}, parameterized by the first
/// threshold and the positive gaps between consecutive thresholds.
/// b_0 = -inf and b_r = +inf are implied.
class Thresholds {
 public:
  Thresholds() = default;
  Thresholds(double b1, std::vector<double> deltas);

  // Unit-spaced thresholds centred on zero: b_i = i - r/2.
  static Thresholds centered(int r);
  // From explicit finite cut-points b_1..b_{r-1}; must be strictly increasing.
  static Thresholds from_cutpoints(const std::vector<double>& cutpoints);

  int categories() const { return static_cast<int>(deltas_.size()) + 2; }
  double b1() const { return b1_; }
  const std::vector<double>& deltas() const { return deltas_; }

  // b_i for i in [0, r]; infinite at both ends.
  double boundary(int i) const;
  std::vector<double> cutpoints() const;
  // Category y with b_{y-1} < f <= b_y.
  int classify(double f) const;

 private:
  double b1_ = 0.0;
  std::vector<double> deltas_;
};

struct LikelihoodTerms {
  double log_lik = 0.0;
  Vector delta;      // dL/df_n
  Vector hess_diag;  // -d^2L/df_n^2, clamped from below at kHessFloor
};

inline constexpr double kHessFloor = 1e-10;
inline constexpr double kProbFloor = 1e-300;

double normal_cdf(double z);
double normal_pdf(double z);
// ln Phi(z), accurate far into both tails.
double log_normal_cdf(double z);

// Standardized distances of the score to the upper and lower edge of the
// label's interval: ((b_y - f)/sigma, (b_{y-1} - f)/sigma).
std::pair<double, double> z_pair(double f, int y, const Thresholds& b, double sigma);

// ln(Phi(z1) - Phi(z2)) for z1 > z2, evaluated in whichever tail keeps
// precision. Floored at ln(kProbFloor) only when that fails.
double log_prob(double z1, double z2);

// Per-sample first/second derivative pieces at a single (z1, z2).
struct SampleDerivs {
  double log_p;
  double ratio_upper;  // N(z1) / p
  double ratio_lower;  // N(z2) / p
  double hess_raw;     // sigma^2 * H_nn before clamping
};
SampleDerivs sample_derivs(double z1, double z2);

LikelihoodTerms likelihood_terms(const Vector& scores, const Labels& labels, const Thresholds& b,
                                 double sigma);
double log_likelihood(const Vector& scores, const Labels& labels, const Thresholds& b,
                      double sigma);

}  // namespace isbor
