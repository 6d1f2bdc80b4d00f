#include "isbor/selection.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_map>

#include "isbor/errors.hpp"

namespace isbor {

double delta_ml(double alpha, double s, double q) {
  if (std::isinf(alpha)) return 0.0;
  // ln(alpha) - ln(alpha + s) written to stay accurate for alpha >> s.
  return 0.5 * (-std::log1p(s / alpha) + q * q / (s + alpha));
}

double alpha_update(double s, double q) {
  const double f = q * q - s;
  if (!(f > 0.0)) throw InputError("alpha_update requires q^2 > s");
  return s * s / f;
}

void finish_candidate(CandidateStats& c, double alpha_current, const SelectionOptions& opts) {
  c.eligible = false;
  c.gain = 0.0;
  c.alpha_new = 0.0;
  if (c.in_model) {
    const double denom = alpha_current - c.S;
    if (!(denom > 0.0)) return;  // degenerate: leave ineligible
    c.s = alpha_current * c.S / denom;
    c.q = alpha_current * c.Q / denom;
  } else {
    c.s = c.S;
    c.q = c.Q;
  }
  c.f = c.q * c.q - c.s;
  if (!(c.s > 0.0) || !std::isfinite(c.f)) return;

  if (c.f > 0.0) {
    const double a = c.s * c.s / c.f;
    if (!(a > 0.0) || !std::isfinite(a)) return;
    if (c.in_model) {
      if (!opts.enable_reestimate) return;
      c.gain = delta_ml(a, c.s, c.q) - delta_ml(alpha_current, c.s, c.q);
    } else {
      c.gain = delta_ml(a, c.s, c.q);
    }
    c.alpha_new = a;
    c.eligible = true;
  } else if (c.in_model && opts.allow_delete) {
    c.gain = -delta_ml(alpha_current, c.s, c.q);
    c.alpha_new = std::numeric_limits<double>::infinity();
    c.eligible = true;
  }
}

namespace {

// Orthonormal basis of range(X), X = [H^{1/2} Phi; A^{1/2}], over a subset of
// the samples. With psi = H^{1/2} phi_j and tau = H^{1/2} t,
//   S_j = |(I - P) [psi; 0]|^2 and Q_j = <[psi; 0], (I - P) [tau; 0]>,
// which equal phi_j^T C^{-1} phi_j and phi_j^T C^{-1} t. Forming the
// projected residual avoids the cancellation of the difference form
// phi^T H phi - phi^T H Phi Sigma Phi^T H phi, so S_j >= 0 to working
// precision even for candidates almost in the span of the active set.
struct Complement {
  std::vector<Index> rows;  // samples kept; empty means all
  Vector root_h;            // over the kept samples
  Matrix q1;                // (n_rows + M) x M
  Vector tau_perp;          // top n_rows entries of (I - P) [tau; 0]

  Index n_rows() const { return root_h.size(); }

  // Q and S for candidates whose scaled columns H^{1/2} phi_j, restricted to
  // the kept samples, are the columns of psi.
  void stats(const Eigen::Ref<const Matrix>& psi, Eigen::Ref<Vector> q, Eigen::Ref<Vector> s) const {
    const Index nr = n_rows();
    const Matrix c = q1.topRows(nr).transpose() * psi;
    Matrix resid = psi;
    resid.noalias() -= q1.topRows(nr) * c;
    s = resid.colwise().squaredNorm().transpose() +
        (q1.bottomRows(q1.rows() - nr) * c).colwise().squaredNorm().transpose();
    q.noalias() = psi.transpose() * tau_perp;
  }
};

Complement make_complement(const Matrix& phi, const PosteriorState& state, const Vector& alpha,
                           std::vector<Index> rows) {
  const Vector& h = state.terms.hess_diag;
  const Index m = phi.cols();
  Complement out;
  out.rows = std::move(rows);
  const bool all = out.rows.empty();
  const Index nr = all ? phi.rows() : static_cast<Index>(out.rows.size());
  out.root_h.resize(nr);
  Matrix X(nr + m, m);
  Vector tau = Vector::Zero(nr + m);
  for (Index k = 0; k < nr; ++k) {
    const Index i = all ? k : out.rows[k];
    out.root_h[k] = std::sqrt(h[i]);
    X.row(k) = out.root_h[k] * phi.row(i);
    tau[k] = out.root_h[k] * state.t_hat[i];
  }
  X.bottomRows(m) = alpha.cwiseSqrt().asDiagonal();
  Eigen::HouseholderQR<Matrix> qr(X);
  out.q1 = qr.householderQ() * Matrix::Identity(nr + m, m);
  const Vector proj = out.q1 * (out.q1.transpose() * tau);
  out.tau_perp = (tau - proj).head(nr);
  return out;
}

}  // namespace

CandidateStats candidate_stats(Index j, const Eigen::Ref<const Vector>& phi_j, Index active_pos,
                               const Matrix& phi, const PosteriorState& state, const Vector& alpha,
                               const SelectionOptions& opts) {
  const Vector& h = state.terms.hess_diag;
  if (phi_j.size() != phi.rows() || h.size() != phi.rows())
    throw InputError("candidate_stats: column length mismatch");
  if (alpha.size() != phi.cols()) throw InputError("candidate_stats: alpha size mismatch");
  const Complement comp = make_complement(phi, state, alpha, {});
  const Matrix psi = comp.root_h.cwiseProduct(phi_j);
  Vector q(1), s(1);
  comp.stats(psi, q, s);

  CandidateStats c;
  c.index = j;
  c.in_model = active_pos >= 0;
  c.Q = q[0];
  c.S = s[0];
  finish_candidate(c, c.in_model ? alpha[active_pos] : 0.0, opts);
  return c;
}

namespace {

// Q and S for every candidate through the cached Gram, O(N n_inf M).
void dense_qs(KernelCache& cache, const Matrix& phi, const PosteriorState& state,
              const Vector& alpha, Vector& q_all, Vector& s_all) {
  const Index n = cache.n();
  const Vector& h = state.terms.hess_diag;
  const Vector& delta = state.terms.delta;

  // Samples whose curvature sits at the clamp floor with zero gradient carry
  // no information; the sums run over the remaining ones only.
  std::vector<Index> informative;
  informative.reserve(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i)
    if (h[i] > kHessFloor || delta[i] != 0.0) informative.push_back(i);
  const bool all = static_cast<Index>(informative.size()) == n;
  const Complement comp = make_complement(phi, state, alpha, all ? std::vector<Index>{} : informative);
  const Index nr = comp.n_rows();

  q_all.resize(n);
  s_all.resize(n);
  constexpr Index kBlock = 64;
  Matrix scratch(n, kBlock), psi(nr, kBlock);
  for (Index j = 0; j < n; j += kBlock) {
    const Index bsz = std::min(kBlock, n - j);
    const auto Kb = cache.columns(j, bsz, scratch);
    if (all) {
      psi.leftCols(bsz).noalias() = comp.root_h.asDiagonal() * Kb;
    } else {
      for (Index c = 0; c < bsz; ++c)
        for (Index k = 0; k < nr; ++k) psi(k, c) = comp.root_h[k] * Kb(informative[k], c);
    }
    comp.stats(psi.leftCols(bsz), q_all.segment(j, bsz), s_all.segment(j, bsz));
  }
}

// Same quantities with K = L L^T. In the coordinates of R, where
// H^{1/2} L = Q_u R, the candidate is R l_j and
//   S_j = min_w |R (l_j - L_a^T w)|^2 + w^T A w,
// the squared distance of [R l_j; 0] from the range of X = [R L_a^T; A^{1/2}].
// Projecting with the orthogonal complement of X avoids the cancellation of
// the difference form, so S_j >= 0 to working precision.
void low_rank_qs(const Matrix& L, std::span<const Index> active, const PosteriorState& state,
                 const Vector& alpha, Vector& q_all, Vector& s_all) {
  const Index r = L.cols();
  const Index m = static_cast<Index>(active.size());
  const Vector& h = state.terms.hess_diag;
  const Vector& delta = state.terms.delta;

  // Same informative rows as the dense path.
  std::vector<Index> rows;
  rows.reserve(static_cast<std::size_t>(L.rows()));
  for (Index i = 0; i < L.rows(); ++i)
    if (h[i] > kHessFloor || delta[i] != 0.0) rows.push_back(i);
  const Index nr = static_cast<Index>(rows.size());
  Matrix hl(std::max(nr, r), r);
  Vector tau = Vector::Zero(hl.rows());
  hl.setZero();
  for (Index k = 0; k < nr; ++k) {
    const double rh = std::sqrt(h[rows[k]]);
    hl.row(k) = rh * L.row(rows[k]);
    tau[k] = rh * state.t_hat[rows[k]];
  }

  Eigen::HouseholderQR<Matrix> qu(std::move(hl));
  const Matrix R = qu.matrixQR().topRows(r).triangularView<Eigen::Upper>();
  const Vector c = (qu.householderQ().transpose() * tau).head(r);

  Matrix X(r + m, m);
  Matrix la(r, m);
  for (Index k = 0; k < m; ++k) la.col(k) = L.row(active[k]).transpose();
  X.topRows(r).noalias() = R * la;
  X.bottomRows(m) = alpha.cwiseSqrt().asDiagonal();
  Eigen::HouseholderQR<Matrix> qx(X);
  const Matrix qfull = qx.householderQ();
  const auto comp_top = qfull.topRightCorner(r, r);  // complement of range(X), first r rows

  const Matrix T = comp_top.transpose() * R;
  const Vector y = comp_top.transpose() * c;
  const Matrix Z = L * T.transpose();
  s_all = Z.rowwise().squaredNorm();
  q_all = Z * y;
}

}  // namespace

std::vector<CandidateStats> scan_candidates(KernelCache& cache, std::span<const Index> active,
                                            const Matrix& phi, const PosteriorState& state,
                                            const Vector& alpha, std::span<const char> excluded,
                                            const SelectionOptions& opts) {
  const Index n = cache.n();
  const Index m = phi.cols();
  if (phi.rows() != n || static_cast<Index>(active.size()) != m || alpha.size() != m)
    throw InputError("scan_candidates: inconsistent active set");

  std::unordered_map<Index, Index> pos;
  for (Index k = 0; k < m; ++k) pos.emplace(active[k], k);
  Vector q_all, s_all;
  if (const Matrix* lr = cache.low_rank())
    low_rank_qs(*lr, active, state, alpha, q_all, s_all);
  else
    dense_qs(cache, phi, state, alpha, q_all, s_all);

  std::vector<CandidateStats> out(static_cast<std::size_t>(n));
  for (Index j = 0; j < n; ++j) {
    CandidateStats& c = out[j];
    c.index = j;
    const auto it = pos.find(j);
    c.in_model = it != pos.end();
    if (!excluded.empty() && excluded[j] && !c.in_model) continue;
    c.Q = q_all[j];
    c.S = s_all[j];
    finish_candidate(c, c.in_model ? alpha[it->second] : 0.0, opts);
  }
  return out;
}

Action select_action(std::span<const CandidateStats> stats, std::size_t active_count,
                     double min_gain) {
  const CandidateStats* best = nullptr;
  for (const CandidateStats& c : stats) {
    if (!c.eligible || !(c.gain > 0.0) || !(c.gain >= min_gain)) continue;
    if (c.in_model && c.f <= 0.0 && active_count <= 1) continue;
    if (!best || c.gain > best->gain) best = &c;
  }
  Action a;
  if (!best) return a;
  a.index = best->index;
  a.gain = best->gain;
  a.alpha = best->alpha_new;
  if (!best->in_model)
    a.kind = Action::Kind::Add;
  else if (best->f <= 0.0)
    a.kind = Action::Kind::Delete;
  else
    a.kind = Action::Kind::Reestimate;
  return a;
}

const char* to_string(Action::Kind k) {
  switch (k) {
    case Action::Kind::Add: return "add";
    case Action::Kind::Delete: return "delete";
    case Action::Kind::Reestimate: return "reestimate";
    case Action::Kind::Stop: return "stop";
  }
  return "?";
}

}  // namespace isbor
