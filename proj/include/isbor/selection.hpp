#pragma once

#include <span>
#include <vector>

#include "isbor/kernel.hpp"
#include "isbor/posterior.hpp"
#include "isbor/types.hpp"

namespace isbor {

/// Sparsity and quality factors for one candidate basis.
///
/// Q, S are the projections against the full C^{-1}; q, s remove the
/// candidate's own contribution when it is already in the model. `gain` is
/// the change in log marginal likelihood obtained by acting on the candidate
/// (add, re-estimate or delete), and `alpha_new` the precision that achieves
/// it (+inf for deletion).
struct CandidateStats {
  Index index = -1;
  bool in_model = false;
  bool eligible = false;
  double Q = 0.0;
  double S = 0.0;
  double q = 0.0;
  double s = 0.0;
  double f = 0.0;  // q^2 - s
  double gain = 0.0;
  double alpha_new = 0.0;
};

// g(alpha) = 1/2 [ln alpha - ln(alpha + s) + q^2 / (s + alpha)]; 0 at alpha = +inf.
double delta_ml(double alpha, double s, double q);

// s^2 / (q^2 - s). Throws InputError unless q^2 > s.
double alpha_update(double s, double q);

struct SelectionOptions {
  bool enable_reestimate = true;
  bool allow_delete = true;
};

// Fill s, q, f, gain, alpha_new and eligibility from Q, S. `alpha_current` is
// the candidate's precision when it is in the model, ignored otherwise.
void finish_candidate(CandidateStats& c, double alpha_current, const SelectionOptions& opts = {});

/// Statistics of a single candidate column `phi_j` against the current
/// posterior. `active_pos` is the candidate's column in `phi` or -1.
CandidateStats candidate_stats(Index j, const Eigen::Ref<const Vector>& phi_j, Index active_pos,
                               const Matrix& phi, const PosteriorState& state, const Vector& alpha,
                               const SelectionOptions& opts = {});

/// All N candidates at once through the cached Gram matrix. Entries listed in
/// `excluded` are returned ineligible.
std::vector<CandidateStats> scan_candidates(KernelCache& cache, std::span<const Index> active,
                                            const Matrix& phi, const PosteriorState& state,
                                            const Vector& alpha, std::span<const char> excluded = {},
                                            const SelectionOptions& opts = {});

struct Action {
  enum class Kind { Add, Delete, Reestimate, Stop };
  Kind kind = Kind::Stop;
  Index index = -1;
  double alpha = 0.0;  // new precision for Add/Reestimate
  double gain = 0.0;
};

// Greedy choice of the candidate with the largest gain above min_gain (and
// above zero). Deletion of the last remaining basis is never chosen.
Action select_action(std::span<const CandidateStats> stats, std::size_t active_count,
                     double min_gain = 0.0);

const char* to_string(Action::Kind k);

}  // namespace isbor
