#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "isbor/likelihood.hpp"
#include "isbor/types.hpp"

namespace isbor::testing {

// Random ordinal regression instance: features, labels covering 1..r,
// thresholds with random gaps, a design matrix and positive precisions.
struct Instance {
  RowMatrix X;
  Labels y;
  int r = 2;
  Thresholds b;
  double sigma = 1.0;
  Matrix phi;
  Vector alpha;
  Vector w;
};

inline Instance random_instance(std::mt19937_64& rng, Index n, Index m, int r) {
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  std::uniform_real_distribution<double> gap(0.5, 2.0);
  std::uniform_real_distribution<double> pos(0.2, 2.0);
  Instance in;
  in.r = r;
  in.X.resize(n, 2);
  for (Index i = 0; i < n; ++i)
    for (Index k = 0; k < 2; ++k) in.X(i, k) = 2.0 * unif(rng);
  in.y.resize(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) in.y[i] = static_cast<int>(i % r) + 1;
  std::vector<double> deltas;
  for (int k = 0; k < r - 2; ++k) deltas.push_back(gap(rng));
  in.b = Thresholds(unif(rng), deltas);
  in.sigma = pos(rng);
  in.phi.resize(n, m);
  for (Index j = 0; j < m; ++j) {
    const Index a = j % n;
    for (Index i = 0; i < n; ++i)
      in.phi(i, j) = std::exp(-0.5 * (in.X.row(i) - in.X.row(a)).squaredNorm());
  }
  in.alpha.resize(m);
  for (Index j = 0; j < m; ++j) in.alpha[j] = pos(rng);
  in.w.resize(m);
  for (Index j = 0; j < m; ++j) in.w[j] = unif(rng);
  return in;
}

inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max(1.0, std::max(std::abs(a), std::abs(b)));
}

inline double rel_err(const Matrix& a, const Matrix& b) {
  return (a - b).cwiseAbs().maxCoeff() / std::max(1.0, std::max(a.cwiseAbs().maxCoeff(),
                                                                b.cwiseAbs().maxCoeff()));
}

}  // namespace isbor::testing

#include <algorithm>

#include "isbor/kernel.hpp"
#include "isbor/posterior.hpp"

namespace isbor::testing {

// A converged posterior over a random active subset of an RBF basis.
struct FittedInstance {
  RowMatrix X;
  Labels y;
  Thresholds b;
  double sigma = 1.0;
  double theta = 0.5;
  std::vector<Index> active;
  Matrix phi;
  Vector alpha;
  PosteriorState state;
};

inline FittedInstance fitted_instance(std::mt19937_64& rng, Index n, Index m, int r) {
  Instance base = random_instance(rng, n, 1, r);
  FittedInstance f;
  f.X = base.X;
  f.y = base.y;
  f.b = base.b;
  f.sigma = base.sigma;
  std::vector<Index> idx(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) idx[i] = i;
  std::shuffle(idx.begin(), idx.end(), rng);
  f.active.assign(idx.begin(), idx.begin() + m);
  f.phi = active_design(f.X, f.active, f.theta).columns;
  std::uniform_real_distribution<double> a(0.05, 2.0);
  f.alpha.resize(m);
  for (Index k = 0; k < m; ++k) f.alpha[k] = a(rng);
  f.state = map_estimate(f.phi, f.y, f.alpha, f.b, f.sigma, Vector());
  return f;
}

}  // namespace isbor::testing
