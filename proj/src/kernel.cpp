#include "isbor/kernel.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_set>

#include "isbor/errors.hpp"

namespace isbor {
namespace {

double dot(const double* a, const double* b, Index d) {
  double s = 0.0;
  for (Index k = 0; k < d; ++k) s += a[k] * b[k];
  return s;
}

// Expanded form |x|^2 + |z|^2 - 2 x.z, clamped at zero.
double rbf_expanded(double sq_x, double sq_z, double xz, double theta) {
  double d2 = sq_x + sq_z - 2.0 * xz;
  if (d2 < 0.0) d2 = 0.0;
  return std::exp(-theta * d2);
}

// exp(-theta * v) in place. Eigen's vectorized exp peels unaligned heads and
// tails into scalar code with different rounding; running every element
// through the same packet path keeps equal inputs producing equal outputs.
void neg_exp_inplace(Eigen::Ref<Vector> v, double theta) {
  constexpr Index kPad = 16;
  thread_local Vector buf;
  const Index n = v.size();
  const Index padded = (n + kPad - 1) / kPad * kPad;
  if (buf.size() < padded) buf.resize(padded);
  buf.head(n) = v;
  buf.segment(n, padded - n).setZero();
  buf.head(padded) = (-theta * buf.head(padded).array()).exp().matrix();
  v = buf.head(n);
}

void check_indices(std::span<const Index> idx, Index n) {
  std::unordered_set<Index> seen;
  for (Index j : idx) {
    if (j < 0 || j >= n)
      throw InputError("active index " + std::to_string(j) + " out of range [0, " +
                       std::to_string(n) + ")");
    if (!seen.insert(j).second)
      throw InputError("duplicate active index " + std::to_string(j));
  }
}

}  // namespace

double rbf(std::span<const double> x, std::span<const double> z, double theta) {
  if (x.size() != z.size())
    throw InputError("rbf: dimension mismatch (" + std::to_string(x.size()) + " vs " +
                     std::to_string(z.size()) + ")");
  const auto d = static_cast<Index>(x.size());
  return rbf_expanded(dot(x.data(), x.data(), d), dot(z.data(), z.data(), d),
                      dot(x.data(), z.data(), d), theta);
}

Vector design_column(const RowMatrix& X, Index j, double theta) {
  if (j < 0 || j >= X.rows())
    throw InputError("design_column: index " + std::to_string(j) + " out of range");
  const Index d = X.cols();
  const double* xj = X.row(j).data();
  const double sq_j = dot(xj, xj, d);
  Vector col(X.rows());
  for (Index n = 0; n < X.rows(); ++n) {
    const double* xn = X.row(n).data();
    col[n] = rbf_expanded(dot(xn, xn, d), sq_j, dot(xn, xj, d), theta);
  }
  col[j] = 1.0;
  return col;
}

KernelCache::KernelCache(RowMatrix X, double theta, std::size_t max_bytes)
    : X_(std::move(X)), theta_(theta) {
  if (!(theta_ >= 0.0) || !std::isfinite(theta_))
    throw InputError("kernel width theta must be finite and non-negative");
  const auto n = static_cast<std::size_t>(X_.rows());
  caching_ = n == 0 || n <= max_bytes / sizeof(double) / n;
  sq_norms_.resize(X_.rows());
  for (Index i = 0; i < X_.rows(); ++i)
    sq_norms_[i] = dot(X_.row(i).data(), X_.row(i).data(), X_.cols());
}

// Entries depend on the pair only through |x_i|^2 + |x_j|^2 and a dot product
// with a fixed summation order, so K(i, j) and K(j, i) are bit-identical.
void KernelCache::compute(Index j, Eigen::Ref<Vector> out) const {
  const Index d = X_.cols();
  const double* xj = X_.row(j).data();
  for (Index i = 0; i < n(); ++i) {
    const double d2 = sq_norms_[i] + sq_norms_[j] - 2.0 * dot(X_.row(i).data(), xj, d);
    out[i] = d2 < 0.0 ? 0.0 : d2;
  }
  neg_exp_inplace(out, theta_);
  out[j] = 1.0;
}

void KernelCache::ensure(Index j) {
  if (j < 0 || j >= n()) throw InputError("kernel column " + std::to_string(j) + " out of range");
  if (gram_.size() == 0) {
    gram_.resize(n(), n());
    ready_.assign(static_cast<std::size_t>(n()), 0);
  }
  if (ready_[j]) return;
  compute(j, gram_.col(j));
  ready_[j] = 1;
  ++n_ready_;
}

const Eigen::Ref<const Vector> KernelCache::column(Index j) {
  if (caching_) {
    ensure(j);
    return gram_.col(j);
  }
  if (j < 0 || j >= n()) throw InputError("kernel column " + std::to_string(j) + " out of range");
  auto it = loose_.find(j);
  if (it == loose_.end()) {
    it = loose_.emplace(j, Vector(n())).first;
    compute(j, it->second);
  }
  return it->second;
}

Eigen::Ref<const Matrix> KernelCache::columns(Index j0, Index count, Matrix& scratch) {
  if (j0 < 0 || count < 0 || j0 + count > n()) throw InputError("kernel block out of range");
  if (caching_) {
    for (Index j = j0; j < j0 + count; ++j) ensure(j);
    return gram_.middleCols(j0, count);
  }
  scratch.resize(n(), count);
  for (Index c = 0; c < count; ++c) compute(j0 + c, scratch.col(c));
  return scratch;
}

void KernelCache::column_into(Index j, Eigen::Ref<Vector> out) {
  if (caching_) {
    ensure(j);
    out = gram_.col(j);
  } else {
    if (j < 0 || j >= n()) throw InputError("kernel column " + std::to_string(j) + " out of range");
    compute(j, out);
  }
}

const Matrix& KernelCache::gram() {
  if (!caching_) throw InputError("Gram matrix exceeds the kernel cache budget");
  for (Index j = 0; j < n(); ++j) ensure(j);
  return gram_;
}

void KernelCache::warm() {
  if (caching_)
    for (Index j = 0; j < n(); ++j) ensure(j);
  low_rank();
}

Index KernelCache::max_low_rank() const {
  const auto root = static_cast<Index>(2.0 * std::sqrt(static_cast<double>(n())));
  return std::min({n() / 8, root, kMaxLowRank});
}

const Matrix* KernelCache::low_rank() {
  if (!low_rank_enabled_) return nullptr;
  if (!low_rank_tried_) {
    low_rank_tried_ = true;
    low_rank_ = pivoted_cholesky(
        n(), [&](Index j, Eigen::Ref<Vector> out) { column_into(j, out); }, kLowRankTol,
        max_low_rank());
  }
  return low_rank_ ? &*low_rank_ : nullptr;
}

std::optional<Matrix> pivoted_cholesky(Index n,
                                       const std::function<void(Index, Eigen::Ref<Vector>)>& column,
                                       double tol, Index max_rank) {
  Matrix L(n, std::min(n, max_rank));
  Vector resid = Vector::Ones(n);
  Vector col(n);
  for (Index r = 0;; ++r) {
    Index j = 0;
    const double top = n > 0 ? resid.maxCoeff(&j) : 0.0;
    if (top <= tol) {
      L.conservativeResize(Eigen::NoChange, r);
      return L;
    }
    if (r >= L.cols()) return std::nullopt;
    column(j, col);
    if (r > 0) col.noalias() -= L.leftCols(r) * L.row(j).head(r).transpose();
    col /= std::sqrt(top);
    L.col(r) = col;
    resid -= col.cwiseAbs2();
    resid[j] = 0.0;
  }
}

DesignMatrix active_design(KernelCache& cache, std::span<const Index> active_indices) {
  check_indices(active_indices, cache.n());
  DesignMatrix D;
  D.n = cache.n();
  D.column_index.assign(active_indices.begin(), active_indices.end());
  D.columns.resize(cache.n(), static_cast<Index>(active_indices.size()));
  for (Index m = 0; m < D.size(); ++m) D.columns.col(m) = cache.column(D.column_index[m]);
  return D;
}

DesignMatrix active_design(const RowMatrix& X, std::span<const Index> active_indices,
                           double theta) {
  check_indices(active_indices, X.rows());
  DesignMatrix D;
  D.n = X.rows();
  D.column_index.assign(active_indices.begin(), active_indices.end());
  D.columns.resize(X.rows(), static_cast<Index>(active_indices.size()));
  for (Index m = 0; m < D.size(); ++m)
    D.columns.col(m) = design_column(X, D.column_index[m], theta);
  return D;
}

}  // namespace isbor
