#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "isbor/types.hpp"

namespace isbor {

struct KernelConfig {
  double theta = 1.0;  // RBF width: k(x, z) = exp(-theta * |x - z|^2)
};

// exp(-theta * |x - z|^2). Throws InputError on dimension mismatch.
double rbf(std::span<const double> x, std::span<const double> z, double theta);

// Basis values of sample j against every row of X, computed without caching.
Vector design_column(const RowMatrix& X, Index j, double theta);

// Phi restricted to the active set. Column m holds the basis anchored at
// training sample column_index[m].
struct DesignMatrix {
  Matrix columns;
  std::vector<Index> column_index;
  Index n = 0;

  Index size() const { return static_cast<Index>(column_index.size()); }
};

/// Lazily materialized Gram matrix over a training set.
///
/// Columns are computed on first request and kept; `warm()` fills the rest.
/// When N x N doubles exceed `max_bytes` nothing beyond requested single
/// columns is stored and block reads recompute entries. Entries are
/// bit-symmetric and the diagonal is exactly 1. Not safe for concurrent
/// insertion: callers sharing a cache across threads must guard it or warm it
/// first, after which reads are safe.
///
/// Smooth kernels have a Gram of low numerical rank, independent of N. The
/// cache can also hold a pivoted Cholesky factor of K, which turns the
/// candidate scan into O(N r^2) work.
class KernelCache {
 public:
  static constexpr std::size_t kDefaultMaxBytes = std::size_t{2} << 30;
  static constexpr double kLowRankTol = 1e-13;
  static constexpr Index kMaxLowRank = 256;

  KernelCache(RowMatrix X, double theta, std::size_t max_bytes = kDefaultMaxBytes);

  Index n() const { return X_.rows(); }
  Index dim() const { return X_.cols(); }
  double theta() const { return theta_; }
  const RowMatrix& points() const { return X_; }
  bool caching() const { return caching_; }

  const Eigen::Ref<const Vector> column(Index j);
  // Columns j0 .. j0 + count - 1, either a view of the cache or computed into
  // `scratch`.
  Eigen::Ref<const Matrix> columns(Index j0, Index count, Matrix& scratch);
  void column_into(Index j, Eigen::Ref<Vector> out);
  // Full N x N Gram. Computes any missing columns; throws InputError when the
  // cache is disabled.
  const Matrix& gram();
  // Computes the Gram (when caching) and the low-rank factors (when enabled).
  void warm();
  // N x r factor with |K - L L^T| <= kLowRankTol entrywise, or nullptr when
  // disabled or when r would exceed max_low_rank(). Built on first use.
  const Matrix* low_rank();
  // min(N / 8, 2 sqrt(N), kMaxLowRank): above this the dense scan is cheaper.
  Index max_low_rank() const;
  void set_low_rank(bool enabled) { low_rank_enabled_ = enabled; }
  bool low_rank_enabled() const { return low_rank_enabled_; }
  // True while warm() still has something to compute.
  bool warm_pending() const {
    return (caching_ && n_ready_ < n()) || (low_rank_enabled_ && !low_rank_tried_);
  }
  bool is_warm() const { return caching_ && n_ready_ == n(); }
  Index columns_ready() const { return n_ready_; }

 private:
  void ensure(Index j);
  void compute(Index j, Eigen::Ref<Vector> out) const;

  RowMatrix X_;
  double theta_;
  bool caching_;
  Vector sq_norms_;
  Matrix gram_;
  std::vector<char> ready_;
  Index n_ready_ = 0;
  std::unordered_map<Index, Vector> loose_;  // columns kept when not caching
  bool low_rank_enabled_ = true;
  bool low_rank_tried_ = false;
  std::optional<Matrix> low_rank_;
};

// Pivoted Cholesky K ~ L L^T of a PSD matrix with unit diagonal, given by
// its columns. Stops once every diagonal residual is <= tol, which for a PSD
// residual bounds every entry's error; nullopt when more than max_rank
// columns would be needed.
std::optional<Matrix> pivoted_cholesky(Index n,
                                       const std::function<void(Index, Eigen::Ref<Vector>)>& column,
                                       double tol, Index max_rank);

DesignMatrix active_design(KernelCache& cache, std::span<const Index> active_indices);
DesignMatrix active_design(const RowMatrix& X, std::span<const Index> active_indices,
                           double theta);

}  // namespace isbor
