#include "reference.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "isbor/errors.hpp"
#include "isbor/kernel.hpp"
#include "isbor/posterior.hpp"

namespace isbor::reference {
namespace {

void check(const Vector& h, const Matrix& phi, const Vector& alpha) {
  if (h.size() > kMaxDirectN)
    throw InputError("direct oracle limited to N <= " + std::to_string(kMaxDirectN));
  if (phi.rows() != h.size() || phi.cols() != alpha.size())
    throw InputError("direct oracle: shape mismatch");
}

Eigen::LLT<Matrix> factor(const Matrix& c) {
  Eigen::LLT<Matrix> llt(c);
  if (llt.info() != Eigen::Success) throw NumericError("C is not positive definite");
  return llt;
}

}  // namespace

Matrix direct_c(const Vector& h, const Matrix& phi, const Vector& alpha) {
  check(h, phi, alpha);
  Matrix c = phi * alpha.cwiseInverse().asDiagonal() * phi.transpose();
  c.diagonal() += h.cwiseInverse();
  return c;
}

double direct_marginal(double log_lik, const Vector& t_hat, const Vector& h, const Matrix& phi,
                       const Vector& alpha) {
  const Matrix c = direct_c(h, phi, alpha);
  const auto llt = factor(c);
  const double log_det = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  return log_lik - 0.5 * log_det - 0.5 * t_hat.dot(llt.solve(t_hat));
}

QS direct_qs(const Vector& phi_j, const Vector& t_hat, const Vector& h, const Matrix& phi,
             const Vector& alpha) {
  const auto llt = factor(direct_c(h, phi, alpha));
  const Vector cinv_phi = llt.solve(phi_j);
  return {cinv_phi.dot(t_hat), cinv_phi.dot(phi_j)};
}

ModelState batch_map(const Dataset& D, double theta, double fixed_alpha, const Thresholds& b,
                     double sigma) {
  if (D.size() > kMaxBatchN)
    throw InputError("batch_map limited to N <= " + std::to_string(kMaxBatchN));
  if (!(fixed_alpha > 0.0)) throw InputError("batch_map: fixed_alpha must be positive");
  auto [Z, scaler] = standardize(D);
  KernelCache cache(Z.X, theta);
  const Matrix phi = cache.gram();
  const Vector alpha = Vector::Constant(Z.size(), fixed_alpha);
  NewtonOptions opts;
  opts.max_iterations = 200;
  PosteriorState post;
  try {
    post = map_estimate(phi, Z.y, alpha, b, sigma, Vector(), opts);
  } catch (const NewtonNotConverged& e) {
    post = e.best();
  }

  ModelState m;
  m.active.resize(static_cast<std::size_t>(Z.size()));
  std::iota(m.active.begin(), m.active.end(), Index{0});
  m.w = post.w_star;
  m.alpha = alpha;
  m.sigma_post = post.sigma_post;
  m.b = b;
  m.sigma = sigma;
  m.kernel.theta = theta;
  m.active_points = Z.X;
  m.scaler = scaler;
  m.label_values = Z.label_values;
  m.log_marginal_history = {post.log_marginal};
  m.info.converged = post.converged;
  return m;
}

}  // namespace isbor::reference
