#include "isbor/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>

#include "isbor/errors.hpp"
#include "isbor/selection.hpp"

namespace isbor {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string join_ints(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + std::to_string(v[i]);
  return s;
}

void remove_column(Matrix& m, Index col) {
  const Index tail = m.cols() - col - 1;
  if (tail > 0) m.middleCols(col, tail) = m.rightCols(tail).eval();
  m.conservativeResize(Eigen::NoChange, m.cols() - 1);
}

void remove_entry(Vector& v, Index i) {
  const Index tail = v.size() - i - 1;
  if (tail > 0) v.segment(i, tail) = v.tail(tail).eval();
  v.conservativeResize(v.size() - 1);
}

/// Mutable state of one training run over a fixed kernel cache.
class Run {
 public:
  Run(const Dataset& D, KernelCache& cache, const TrainConfig& cfg)
      : D_(D), cache_(cache), cfg_(cfg), excluded_(static_cast<std::size_t>(D.size()), 0) {
    sel_.enable_reestimate = cfg.enable_reestimate;
  }

  void initialize() {
    validate(D_);
    if (cache_.n() != D_.size()) throw InputError("kernel cache does not match the dataset");
    if (const auto missing = missing_categories(D_); !missing.empty())
      throw InputError("categories absent from training data: " + join_ints(missing));
    if (cfg_.max_its < 1) throw InputError("max_its must be >= 1");
    if (!(cfg_.min_delta > 0.0)) throw InputError("min_delta must be positive");
    if (!(cfg_.min_gain >= 0.0)) throw InputError("min_gain must be non-negative");
    if (cfg_.max_action_tries < 1) throw InputError("max_action_tries must be >= 1");

    std::mt19937_64 rng(stream_seed(cfg_.seed, Stream::Init));
    std::vector<std::vector<Index>> by_class(static_cast<std::size_t>(D_.r + 1));
    for (Index i = 0; i < D_.size(); ++i) by_class[D_.y[i]].push_back(i);
    for (int k = 1; k <= D_.r; ++k) {
      std::uniform_int_distribution<std::size_t> pick(0, by_class[k].size() - 1);
      active_.push_back(by_class[k][pick(rng)]);
    }
    alpha_ = Vector::Constant(static_cast<Index>(active_.size()), cfg_.alpha_init);
    b_ = Thresholds::centered(D_.r);
    sigma_ = cfg_.sigma_init;
    phi_ = active_design(cache_, active_).columns;
    refit(Vector());
    history_.push_back(post_.log_marginal);
  }

  void train() {
    double ml_old = post_.log_marginal;
    info_.stop_reason = "max_its";
    for (int it = 1; it <= cfg_.max_its; ++it) {
      info_.iterations = it;
      try {
        if (!step(it)) {
          info_.iterations = it - 1;
          info_.converged = true;
          info_.stop_reason = "no improving action";
          break;
        }
      } catch (const NumericError& e) {
        throw NumericError("iteration " + std::to_string(it) + ": " + e.what());
      }
      const double ml = post_.log_marginal;
      history_.push_back(ml);
      if (std::abs(ml - ml_old) < cfg_.min_delta) {
        info_.converged = true;
        info_.stop_reason = "min_delta";
        break;
      }
      ml_old = ml;
    }
  }

  ModelState finish(std::optional<Scaler> scaler) const {
    ModelState m;
    m.active = active_;
    m.w = post_.w_star;
    m.alpha = alpha_;
    m.sigma_post = post_.sigma_post;
    m.b = b_;
    m.sigma = sigma_;
    m.kernel.theta = cache_.theta();
    m.active_points.resize(static_cast<Index>(active_.size()), D_.dim());
    for (std::size_t k = 0; k < active_.size(); ++k)
      m.active_points.row(static_cast<Index>(k)) = D_.X.row(active_[k]);
    m.scaler = std::move(scaler);
    m.label_values = D_.label_values;
    m.log_marginal_history = history_;
    m.info = info_;
    return m;
  }

 private:
  // One outer iteration. Returns false when no action improves the marginal.
  bool step(int it) {
    (void)it;
    auto stats = scan_candidates(cache_, active_, phi_, post_, alpha_, excluded_, sel_);
    Index acted = -1;
    for (int attempt = 0;; ++attempt) {
      const Action act = select_action(stats, active_.size(), cfg_.min_gain);
      if (act.kind == Action::Kind::Stop || attempt == cfg_.max_action_tries) return false;
      if (!cfg_.guard_actions) {
        acted = apply(act);
        break;
      }
      const std::vector<Index> active = active_;
      const Matrix phi = phi_;
      const Vector alpha = alpha_;
      PosteriorState before = post_;
      acted = apply(act);
      if (post_.log_marginal > before.log_marginal) break;
      // The Gaussian prediction of the gain failed once the weights moved.
      active_ = active;
      phi_ = phi;
      alpha_ = alpha;
      post_ = std::move(before);
      stats[static_cast<std::size_t>(act.index)].eligible = false;
      ++info_.actions_rejected;
    }
    count_action();
    // Estimate: the acted-upon precision, thresholds, marginal.
    bool changed = false;
    if (acted >= 0) {
      const CandidateStats c =
          candidate_stats(active_[acted], phi_.col(acted), acted, phi_, post_, alpha_, sel_);
      if (c.f > 0.0 && c.s > 0.0) {
        const double a = alpha_update(c.s, c.q);
        if (std::isfinite(a) && a > 0.0 && a != alpha_[acted]) {
          alpha_[acted] = a;
          changed = true;
        }
      }
    }
    if (cfg_.learn_thresholds) {
      const Vector scores = phi_ * post_.w_star;
      ThresholdSchedule schedule = cfg_.thresholds;
      if (schedule.initial_step == 0.0 && threshold_step_ > 0.0) schedule.initial_step = threshold_step_;
      const ThresholdUpdate tu = update_thresholds(scores, D_.y, b_, sigma_, schedule);
      threshold_step_ = tu.step;
      if (tu.accepted_steps > 0) {
        b_ = tu.b;
        changed = true;
      }
    }
    if (changed) refit(post_.w_star);

    if (cfg_.learn_noise) {
      const NoiseState ns = update_noise(post_.t_hat, phi_, post_.w_star, alpha_,
                                         post_.sigma_post.diagonal(), sigma_);
      if (ns.kept_previous) ++info_.noise_kept;
      if (ns.sigma != sigma_) {
        const double old_sigma = sigma_;
        PosteriorState old_post = post_;
        sigma_ = ns.sigma;
        refit(post_.w_star);
        if (cfg_.guard_noise && post_.log_marginal < old_post.log_marginal) {
          sigma_ = old_sigma;
          post_ = std::move(old_post);
          ++info_.noise_rejected;
        }
      }
    }
    prune();
    return true;
  }

  // Applies an action and refits the weights. Returns the position of the
  // acted-upon basis, or -1 after a deletion.
  Index apply(const Action& act) {
    Vector w = post_.w_star;
    Index acted = -1;
    switch (act.kind) {
      case Action::Kind::Add: {
        active_.push_back(act.index);
        const Index m = phi_.cols();
        phi_.conservativeResize(Eigen::NoChange, m + 1);
        phi_.col(m) = cache_.column(act.index);
        alpha_.conservativeResize(m + 1);
        alpha_[m] = act.alpha;
        w.conservativeResize(m + 1);
        w[m] = 0.0;
        acted = m;
        break;
      }
      case Action::Kind::Delete: {
        const Index pos = position(act.index);
        active_.erase(active_.begin() + pos);
        remove_column(phi_, pos);
        remove_entry(alpha_, pos);
        remove_entry(w, pos);
        break;
      }
      case Action::Kind::Reestimate:
        acted = position(act.index);
        alpha_[acted] = act.alpha;
        break;
      case Action::Kind::Stop: break;
    }
    last_kind_ = act.kind;
    refit(w);
    return acted;
  }

  void count_action() {
    switch (last_kind_) {
      case Action::Kind::Add: ++info_.adds; break;
      case Action::Kind::Delete: ++info_.deletes; break;
      case Action::Kind::Reestimate: ++info_.reestimates; break;
      case Action::Kind::Stop: break;
    }
  }

  // Drops bases whose precision diverged or whose weight is numerically zero,
  // repeating after each refit until none qualify.
  void prune() {
    while (active_.size() > 1) {
      std::vector<Index> drop;
      for (Index k = 0; k < static_cast<Index>(active_.size()); ++k)
        if (alpha_[k] > cfg_.alpha_prune || std::abs(post_.w_star[k]) < cfg_.w_zero_tol)
          drop.push_back(k);
      if (drop.empty()) return;
      if (drop.size() == active_.size()) {
        Index keep = 0;
        post_.w_star.cwiseAbs().maxCoeff(&keep);
        drop.erase(std::find(drop.begin(), drop.end(), keep));
        if (drop.empty()) return;
      }
      Vector w = post_.w_star;
      for (auto it = drop.rbegin(); it != drop.rend(); ++it) {
        excluded_[active_[*it]] = 1;
        active_.erase(active_.begin() + *it);
        remove_column(phi_, *it);
        remove_entry(alpha_, *it);
        remove_entry(w, *it);
        ++info_.pruned;
      }
      refit(w);
    }
  }

  void refit(const Vector& w_init) {
    try {
      post_ = map_estimate(phi_, D_.y, alpha_, b_, sigma_, w_init, cfg_.newton);
    } catch (const NewtonNotConverged& e) {
      post_ = e.best();
      ++info_.newton_failures;
    }
  }

  Index position(Index sample) const {
    const auto it = std::find(active_.begin(), active_.end(), sample);
    if (it == active_.end()) throw NumericError("selected basis is not active");
    return static_cast<Index>(it - active_.begin());
  }

  const Dataset& D_;
  KernelCache& cache_;
  const TrainConfig& cfg_;
  SelectionOptions sel_;
  std::vector<Index> active_;
  Vector alpha_;
  Thresholds b_;
  double sigma_ = 1.0;
  double threshold_step_ = 0.0;  // carried between threshold updates
  Action::Kind last_kind_ = Action::Kind::Stop;
  Matrix phi_;
  PosteriorState post_;
  std::vector<char> excluded_;
  std::vector<double> history_;
  FitInfo info_;
};

}  // namespace

ModelState initialize(const Dataset& D, const TrainConfig& cfg, double theta) {
  KernelCache cache(D.X, theta, cfg.kernel_cache_bytes);
  Run run(D, cache, cfg);
  run.initialize();
  return run.finish(std::nullopt);
}

ModelState fit(const Dataset& D, KernelCache& cache, const TrainConfig& cfg,
               std::optional<Scaler> scaler) {
  const auto t0 = Clock::now();
  cache.set_low_rank(cfg.low_rank_scan);
  const bool pending = cache.warm_pending();
  Run run(D, cache, cfg);
  run.initialize();
  const auto tk = Clock::now();
  cache.warm();
  const double kernel_s = pending ? seconds_since(tk) : 0.0;
  run.train();
  ModelState m = run.finish(std::move(scaler));
  m.info.fit_seconds = seconds_since(t0);
  m.info.kernel_seconds = kernel_s;
  return m;
}

ModelState fit(const Dataset& D, const TrainConfig& cfg, double theta) {
  if (!cfg.standardize) {
    KernelCache cache(D.X, theta, cfg.kernel_cache_bytes);
    return fit(D, cache, cfg);
  }
  auto [Z, scaler] = standardize(D);
  KernelCache cache(Z.X, theta, cfg.kernel_cache_bytes);
  return fit(Z, cache, cfg, std::move(scaler));
}

namespace {

double model_score(const ModelState& m, std::span<const double> x_raw) {
  if (static_cast<Index>(x_raw.size()) != m.dim())
    throw InputError("expected " + std::to_string(m.dim()) + " features, got " +
                     std::to_string(x_raw.size()));
  std::vector<double> x(x_raw.begin(), x_raw.end());
  if (m.scaler) apply_scaler_inplace(*m.scaler, x);
  double f = 0.0;
  for (Index k = 0; k < m.size(); ++k)
    f += m.w[k] * rbf(x, std::span<const double>(m.active_points.row(k).data(),
                                                 static_cast<std::size_t>(m.dim())),
                      m.kernel.theta);
  return f;
}

}  // namespace

Prediction predict(const ModelState& model, std::span<const double> x) {
  const double f = model_score(model, x);
  return {model.b.classify(f), f};
}

std::vector<double> predict_proba(const ModelState& model, std::span<const double> x_raw,
                                  bool widen) {
  if (static_cast<Index>(x_raw.size()) != model.dim())
    throw InputError("expected " + std::to_string(model.dim()) + " features, got " +
                     std::to_string(x_raw.size()));
  std::vector<double> x(x_raw.begin(), x_raw.end());
  if (model.scaler) apply_scaler_inplace(*model.scaler, x);
  Vector phi(model.size());
  for (Index k = 0; k < model.size(); ++k)
    phi[k] = rbf(x, std::span<const double>(model.active_points.row(k).data(),
                                            static_cast<std::size_t>(model.dim())),
                 model.kernel.theta);
  const double f = phi.dot(model.w);
  double var = model.sigma * model.sigma;
  if (widen && model.sigma_post.size() > 0) var += std::max(phi.dot(model.sigma_post * phi), 0.0);
  const double s = std::sqrt(var);

  const int r = model.categories();
  std::vector<double> p(static_cast<std::size_t>(r));
  // Differences of CDFs along the cut-points telescope to exactly 1.
  double prev = 0.0;
  for (int k = 1; k <= r; ++k) {
    const double c = k == r ? 1.0 : normal_cdf((model.b.boundary(k) - f) / s);
    p[k - 1] = c - prev;
    prev = c;
  }
  return p;
}

Vector predict_scores(const ModelState& model, const RowMatrix& X) {
  Vector out(X.rows());
  for (Index i = 0; i < X.rows(); ++i)
    out[i] = model_score(model, std::span<const double>(X.row(i).data(), static_cast<std::size_t>(X.cols())));
  return out;
}

Labels predict_labels(const ModelState& model, const RowMatrix& X) {
  const Vector f = predict_scores(model, X);
  Labels out(static_cast<std::size_t>(f.size()));
  for (Index i = 0; i < f.size(); ++i) out[i] = model.b.classify(f[i]);
  return out;
}

}  // namespace isbor
