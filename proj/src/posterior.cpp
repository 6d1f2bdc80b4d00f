#include "isbor/posterior.hpp"

#include <cmath>
#include <string>

namespace isbor {
namespace {

Matrix weighted_gram(const Matrix& phi, const Vector& h) {
  const Matrix scaled = phi.array().colwise() * h.array().sqrt();
  Matrix g = Matrix::Zero(phi.cols(), phi.cols());
  g.selfadjointView<Eigen::Lower>().rankUpdate(scaled.transpose());
  return g.selfadjointView<Eigen::Lower>();
}

double half_quad(const Vector& w, const Vector& alpha) {
  return 0.5 * (w.array().square() * alpha.array()).sum();
}

void check_shapes(const Matrix& phi, const Labels& labels, const Vector& alpha) {
  if (static_cast<Index>(labels.size()) != phi.rows())
    throw InputError("design has " + std::to_string(phi.rows()) + " rows but " +
                     std::to_string(labels.size()) + " labels");
  if (alpha.size() != phi.cols())
    throw InputError("alpha has " + std::to_string(alpha.size()) + " entries for " +
                     std::to_string(phi.cols()) + " columns");
  for (Index m = 0; m < alpha.size(); ++m)
    if (!(alpha[m] > 0.0) || !std::isfinite(alpha[m]))
      throw InputError("alpha must be positive and finite");
}

}  // namespace

Eigen::LLT<Matrix> robust_cholesky(const Matrix& m) {
  Eigen::LLT<Matrix> llt(m);
  if (llt.info() == Eigen::Success) return llt;
  const double scale = m.rows() > 0 ? std::max(m.diagonal().mean(), 1e-300) : 1.0;
  for (double ridge = 1e-10; ridge <= 1e-4 * (1 + 1e-9); ridge *= 10.0) {
    Matrix jittered = m;
    jittered.diagonal().array() += ridge * scale;
    llt.compute(jittered);
    if (llt.info() == Eigen::Success) return llt;
  }
  throw NumericError("Cholesky failed after maximum jitter");
}

double log_posterior(const Vector& w, const Matrix& phi, const Labels& labels, const Vector& alpha,
                     const Thresholds& b, double sigma) {
  check_shapes(phi, labels, alpha);
  return log_likelihood(phi * w, labels, b, sigma) - half_quad(w, alpha);
}

PosteriorState map_estimate(const Matrix& phi, const Labels& labels, const Vector& alpha,
                            const Thresholds& b, double sigma, const Vector& w_init,
                            const NewtonOptions& opts) {
  check_shapes(phi, labels, alpha);
  const Index m = phi.cols();
  if (m < 1) throw InputError("map_estimate needs at least one basis column");

  PosteriorState st;
  Vector w = w_init.size() == m ? w_init : Vector::Zero(m);
  LikelihoodTerms terms = likelihood_terms(phi * w, labels, b, sigma);
  double lp = terms.log_lik - half_quad(w, alpha);
  st.log_posterior_trace.push_back(lp);

  Vector grad;
  for (int it = 0;; ++it) {
    grad = phi.transpose() * terms.delta - alpha.cwiseProduct(w);
    st.grad_norm = grad.lpNorm<Eigen::Infinity>();
    if (st.grad_norm < opts.grad_tol) {
      st.converged = true;
      break;
    }
    if (it >= opts.max_iterations) break;

    Matrix hess = weighted_gram(phi, terms.hess_diag);
    hess.diagonal() += alpha;
    const Vector step = robust_cholesky(hess).solve(grad);
    if (0.5 * grad.dot(step) < opts.decrement_tol) {
      // Within rounding of the optimum: one last full step, kept if it helps.
      const Vector w_try = w + step;
      LikelihoodTerms trial = likelihood_terms(phi * w_try, labels, b, sigma);
      const double lp_try = trial.log_lik - half_quad(w_try, alpha);
      if (lp_try >= lp) {
        w = w_try;
        terms = std::move(trial);
        lp = lp_try;
        st.log_posterior_trace.push_back(lp);
      }
      grad = phi.transpose() * terms.delta - alpha.cwiseProduct(w);
      st.grad_norm = grad.lpNorm<Eigen::Infinity>();
      st.iterations = it + 1;
      st.converged = true;
      break;
    }

    double t = 1.0;
    bool accepted = false;
    for (int k = 0; k <= opts.max_halvings; ++k, t *= 0.5) {
      const Vector w_try = w + t * step;
      LikelihoodTerms trial = likelihood_terms(phi * w_try, labels, b, sigma);
      const double lp_try = trial.log_lik - half_quad(w_try, alpha);
      if (lp_try >= lp) {
        w = w_try;
        terms = std::move(trial);
        lp = lp_try;
        accepted = true;
        break;
      }
    }
    st.iterations = it + 1;
    if (!accepted) {
      // No ascent direction left at working precision: w is as good as it gets.
      st.converged = 0.5 * grad.dot(step) < std::sqrt(opts.decrement_tol);
      break;
    }
    st.log_posterior_trace.push_back(lp);
    if ((t * step).lpNorm<Eigen::Infinity>() < opts.step_tol) {
      grad = phi.transpose() * terms.delta - alpha.cwiseProduct(w);
      st.grad_norm = grad.lpNorm<Eigen::Infinity>();
      st.converged = true;
      break;
    }
  }

  Matrix hess = weighted_gram(phi, terms.hess_diag);
  hess.diagonal() += alpha;
  const auto llt = robust_cholesky(hess);
  st.sigma_post = llt.solve(Matrix::Identity(m, m));
  st.sigma_post = 0.5 * (st.sigma_post + st.sigma_post.transpose()).eval();
  st.w_star = w;
  st.t_hat = terms.delta.cwiseQuotient(terms.hess_diag) + phi * w;

  const double log_det_hess = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  st.log_marginal = terms.log_lik - half_quad(w, alpha) + 0.5 * alpha.array().log().sum() -
                    0.5 * log_det_hess;
  st.terms = std::move(terms);

  if (!st.converged)
    throw NewtonNotConverged("Newton did not converge in " + std::to_string(opts.max_iterations) +
                                 " iterations (|grad| = " + std::to_string(st.grad_norm) + ")",
                             std::move(st));
  return st;
}

double log_marginal_laplace(const PosteriorState& state, const Vector& alpha) {
  if (alpha.size() != state.w_star.size()) throw InputError("alpha/weight size mismatch");
  Eigen::LLT<Matrix> llt(state.sigma_post);
  if (llt.info() != Eigen::Success) throw NumericError("posterior covariance is not positive definite");
  const double log_det_sigma = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  return state.terms.log_lik - half_quad(state.w_star, alpha) + 0.5 * alpha.array().log().sum() +
         0.5 * log_det_sigma;
}

}  // namespace isbor
