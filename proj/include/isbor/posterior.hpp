#pragma once

#include <vector>

#include "isbor/errors.hpp"
#include "isbor/likelihood.hpp"
#include "isbor/types.hpp"

namespace isbor {

struct NewtonOptions {
  int max_iterations = 50;
  int max_halvings = 20;
  double step_tol = 1e-6;  // on |dw|_inf
  double grad_tol = 1e-6;  // on |Phi^T delta - A w|_inf
  double decrement_tol = 1e-10;  // on g^T H^{-1} g / 2, the predicted ascent
};

/// Laplace approximation at the MAP weights of the active basis.
struct PosteriorState {
  Vector w_star;
  Matrix sigma_post;  // (A + Phi^T H Phi)^{-1}
  Vector t_hat;       // H^{-1} delta + Phi w*
  double log_marginal = 0.0;
  LikelihoodTerms terms;  // at w*
  double grad_norm = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> log_posterior_trace;  // one entry per accepted iterate
};

// Thrown by map_estimate when Newton exhausts its iteration budget.
class NewtonNotConverged : public ConvergenceError {
 public:
  NewtonNotConverged(const std::string& what, PosteriorState best)
      : ConvergenceError(what), best_(std::move(best)) {}
  const PosteriorState& best() const noexcept { return best_; }

 private:
  PosteriorState best_;
};

// ln p(w | D) up to a constant: L(Phi w) - 1/2 w^T A w.
double log_posterior(const Vector& w, const Matrix& phi, const Labels& labels, const Vector& alpha,
                     const Thresholds& b, double sigma);

// Newton-Raphson with step halving. `w_init` may be empty (zeros).
PosteriorState map_estimate(const Matrix& phi, const Labels& labels, const Vector& alpha,
                            const Thresholds& b, double sigma, const Vector& w_init,
                            const NewtonOptions& opts = {});

// L - 1/2 w*^T A w* + 1/2 ln|A| + 1/2 ln|Sigma|, from a converged state.
double log_marginal_laplace(const PosteriorState& state, const Vector& alpha);

// Cholesky of a symmetric matrix with an escalating diagonal ridge
// (1e-10 .. 1e-4, relative to the mean diagonal). Throws NumericError.
Eigen::LLT<Matrix> robust_cholesky(const Matrix& m);

}  // namespace isbor
