#pragma once

#include <vector>

#include "isbor/likelihood.hpp"
#include "isbor/types.hpp"

namespace isbor {

inline constexpr double kDeltaMin = 1e-3;
inline constexpr double kSigmaMin = 1e-3;
inline constexpr double kSigmaMax = 1e3;

struct ThresholdGradient {
  double db1 = 0.0;
  std::vector<double> ddeltas;  // one per gap, r - 2 entries
};

// Gradient of the log-likelihood with respect to b_1 and each gap.
ThresholdGradient threshold_gradients(const Vector& scores, const Labels& labels,
                                      const Thresholds& b, double sigma);

struct ThresholdSchedule {
  int max_steps = 10;       // accepted or rejected ascent attempts per call
  double initial_step = 0;  // 0 means 0.1 / N
  double grow = 2.0;        // step multiplier after an accepted step
};

struct ThresholdUpdate {
  Thresholds b;
  double log_lik_before = 0.0;
  double log_lik_after = 0.0;
  int accepted_steps = 0;
  double step = 0.0;  // step size reached, a good start for the next call
};

// Projected gradient ascent on the thresholds with backtracking. Never
// decreases the log-likelihood; gaps are kept >= kDeltaMin.
ThresholdUpdate update_thresholds(const Vector& scores, const Labels& labels, const Thresholds& b,
                                  double sigma, const ThresholdSchedule& schedule = {});

struct NoiseState {
  double sigma = 1.0;
  bool kept_previous = false;  // denominator not positive or quotient undefined
  bool clamped = false;
};

// sigma^2 = |t - Phi w|^2 / (N - sum_m (1 - alpha_m Sigma_mm)), clamped to
// [kSigmaMin, kSigmaMax].
NoiseState update_noise(const Vector& t_hat, const Matrix& phi, const Vector& w,
                        const Vector& alpha, const Vector& sigma_diag, double previous_sigma);

}  // namespace isbor
