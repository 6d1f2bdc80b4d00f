#include "isbor/hyper.hpp"

#include <algorithm>
#include <cmath>

#include "isbor/errors.hpp"

namespace isbor {

ThresholdGradient threshold_gradients(const Vector& scores, const Labels& labels,
                                      const Thresholds& b, double sigma) {
  const int r = b.categories();
  ThresholdGradient g;
  g.ddeltas.assign(static_cast<std::size_t>(std::max(r - 2, 0)), 0.0);
  const double inv_s = 1.0 / sigma;
  for (Index n = 0; n < scores.size(); ++n) {
    const int y = labels[n];
    const auto [z1, z2] = z_pair(scores[n], y, b, sigma);
    const SampleDerivs d = sample_derivs(z1, z2);
    const double neg_delta = inv_s * (d.ratio_upper - d.ratio_lower);
    g.db1 += neg_delta;
    // Gap k (k = 2..r-1) moves b_k..b_{r-1}: both edges when y > k, the upper edge when y == k.
    for (int k = 2; k <= r - 1; ++k) {
      if (y > k)
        g.ddeltas[k - 2] += neg_delta;
      else if (y == k)
        g.ddeltas[k - 2] += inv_s * d.ratio_upper;
    }
  }
  return g;
}

namespace {

Thresholds step_thresholds(const Thresholds& b, const ThresholdGradient& g, double t) {
  std::vector<double> deltas = b.deltas();
  for (std::size_t k = 0; k < deltas.size(); ++k)
    deltas[k] = std::max(deltas[k] + t * g.ddeltas[k], kDeltaMin);
  return Thresholds(b.b1() + t * g.db1, std::move(deltas));
}

}  // namespace

ThresholdUpdate update_thresholds(const Vector& scores, const Labels& labels, const Thresholds& b,
                                  double sigma, const ThresholdSchedule& schedule) {
  ThresholdUpdate out{b, 0.0, 0.0, 0, 0.0};
  out.log_lik_before = log_likelihood(scores, labels, b, sigma);
  out.log_lik_after = out.log_lik_before;
  if (scores.size() == 0) return out;

  double t = schedule.initial_step > 0 ? schedule.initial_step
                                       : 0.1 / static_cast<double>(scores.size());
  ThresholdGradient g = threshold_gradients(scores, labels, out.b, sigma);
  for (int step = 0; step < schedule.max_steps; ++step) {
    bool zero = g.db1 == 0.0;
    for (double v : g.ddeltas) zero = zero && v == 0.0;
    if (zero) break;
    const Thresholds trial = step_thresholds(out.b, g, t);
    const double ll = log_likelihood(scores, labels, trial, sigma);
    if (ll >= out.log_lik_after) {
      out.b = trial;
      out.log_lik_after = ll;
      ++out.accepted_steps;
      t *= schedule.grow;
      g = threshold_gradients(scores, labels, out.b, sigma);
    } else {
      t *= 0.5;
    }
  }
  out.step = t;
  return out;
}

NoiseState update_noise(const Vector& t_hat, const Matrix& phi, const Vector& w,
                        const Vector& alpha, const Vector& sigma_diag, double previous_sigma) {
  if (phi.rows() != t_hat.size() || phi.cols() != w.size() || alpha.size() != w.size() ||
      sigma_diag.size() != w.size())
    throw InputError("update_noise: shape mismatch");
  const double n = static_cast<double>(t_hat.size());
  const double gamma = (1.0 - alpha.array() * sigma_diag.array()).sum();
  const double denom = n - gamma;
  NoiseState st;
  if (!(denom > 0.0)) {
    st.sigma = previous_sigma;
    st.kept_previous = true;
    return st;
  }
  const double resid = (t_hat - phi * w).squaredNorm();
  const double s = std::sqrt(resid / denom);
  if (std::isnan(s)) {
    st.sigma = previous_sigma;
    st.kept_previous = true;
    return st;
  }
  st.sigma = std::clamp(s, kSigmaMin, kSigmaMax);
  st.clamped = st.sigma != s;
  return st;
}

}  // namespace isbor
