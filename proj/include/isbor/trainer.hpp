#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "isbor/data.hpp"
#include "isbor/hyper.hpp"
#include "isbor/kernel.hpp"
#include "isbor/likelihood.hpp"
#include "isbor/posterior.hpp"
#include "isbor/types.hpp"

namespace isbor {

struct TrainConfig {
  int max_its = 500;
  double min_delta = 1e-3;
  double min_gain = 1e-4;  // actions predicted to gain less count as no improvement
  std::uint64_t seed = 0;
  double alpha_init = 1e-3;
  double sigma_init = 1.0;
  double alpha_prune = 1e12;
  double w_zero_tol = 1e-3;
  bool enable_reestimate = true;
  bool standardize = true;
  bool learn_thresholds = true;
  bool learn_noise = true;
  bool guard_noise = true;  // reject a noise update that lowers the evidence
  // Undo an action whose refit lowers the evidence and try the next best one,
  // at most max_action_tries per iteration.
  bool guard_actions = true;
  int max_action_tries = 8;
  std::size_t kernel_cache_bytes = KernelCache::kDefaultMaxBytes;
  bool low_rank_scan = true;  // scan through low-rank Gram factors when they exist
  NewtonOptions newton;
  ThresholdSchedule thresholds;
};

struct FitInfo {
  int iterations = 0;  // outer iterations that applied an action
  int adds = 0;
  int deletes = 0;
  int reestimates = 0;
  int pruned = 0;
  int newton_failures = 0;
  int noise_kept = 0;      // noise updates with a non-positive denominator
  int noise_rejected = 0;  // noise updates undone by guard_noise
  int actions_rejected = 0;  // actions undone by guard_actions
  bool converged = false;
  std::string stop_reason;
  double fit_seconds = 0.0;
  double kernel_seconds = 0.0;
};

/// Everything needed to predict, plus training diagnostics.
struct ModelState {
  std::vector<Index> active;  // training-row indices of the relevant samples
  Vector w;
  Vector alpha;
  Matrix sigma_post;
  Thresholds b;
  double sigma = 1.0;
  KernelConfig kernel;
  RowMatrix active_points;  // M x d, in the (possibly standardized) model space
  std::optional<Scaler> scaler;
  std::vector<long long> label_values;
  std::vector<double> log_marginal_history;
  FitInfo info;

  int categories() const { return b.categories(); }
  Index dim() const { return active_points.cols(); }
  Index size() const { return static_cast<Index>(active.size()); }
};

/// One random sample per category as the initial basis, alpha = alpha_init,
/// sigma = sigma_init, centred unit-spaced thresholds, then a MAP fit.
/// `D` is taken in model space (no standardization is applied).
ModelState initialize(const Dataset& D, const TrainConfig& cfg, double theta);

/// Incremental sparse training. Standardizes `D` first when cfg.standardize.
ModelState fit(const Dataset& D, const TrainConfig& cfg, double theta);

/// Same, over data already in model space with a caller-owned kernel cache
/// (which may be warm). `scaler` is recorded in the model for prediction.
ModelState fit(const Dataset& D, KernelCache& cache, const TrainConfig& cfg,
               std::optional<Scaler> scaler = std::nullopt);

struct Prediction {
  int category = 0;  // 1..r
  double score = 0.0;
};

// `x` is in raw feature space; the model's scaler is applied.
Prediction predict(const ModelState& model, std::span<const double> x);
std::vector<double> predict_proba(const ModelState& model, std::span<const double> x,
                                  bool widen = true);

Vector predict_scores(const ModelState& model, const RowMatrix& X);
Labels predict_labels(const ModelState& model, const RowMatrix& X);

// Plain-text persistence. load(save(m)) predicts bit-identically.
std::string save_model(const ModelState& model);
ModelState load_model(const std::string& text);
void save_model_file(const ModelState& model, const std::string& path);
ModelState load_model_file(const std::string& path);

}  // namespace isbor
