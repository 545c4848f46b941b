#pragma once

#include <functional>

#include "slmm/model_stats.hpp"
#include "slmm/rng.hpp"

namespace slmm {

struct WindowEntry {
  ModelIndicator gamma;
  Real log_prior = 0.0;
  Real log_marginal = 0.0;
  SufficientStats stats;
  PosteriorMoments moments;
};

// Scores one candidate model under the current global parameters.
using ModelEvaluator = std::function<WindowEntry(const ModelIndicator&)>;

ModelEvaluator make_evaluator(const WorkingData& w, const GlobalParams& g,
                              const ModelConventions& conv);

// One individual's window: K distinct models, their cached statistics, and
// normalized weights.
struct OccamWindow {
  std::vector<WindowEntry> entries;
  Vector weights;
  bool score_includes_prior = true;
  int min_index = -1;
  Real min_score = 0.0;  // m-tilde
  int stale_count = 0;   // t_i

  int size() const { return static_cast<int>(entries.size()); }

  Real score(int k) const {
    return (score_includes_prior ? entries[k].log_prior : 0.0) +
           entries[k].log_marginal;
  }

  bool contains(const ModelIndicator& gamma) const;

  // Recompute m-tilde and its index. Score ties evict the entry with the
  // largest p_gamma, then the lowest index.
  void recompute_min();

  // Normalize exp(log_prior + log_marginal) across entries.
  void refresh_weights();

  // Model-averaged inclusion expectation, length p.
  Vector inclusion_expectation() const;

  // Model-averaged posterior mean coefficients: (intercept, effects[p]).
  std::pair<Real, Vector> averaged_beta() const;

  int top_index() const;
};

// Window weights as a standalone operation: recomputes the normalized
// weights from the entry scores. All scores -inf raises NumericalError.
Vector window_weights(const OccamWindow& window);

// Scores every model with 1..p_star included variables (p_star the smallest
// value whose cumulative subset count reaches K) plus the empty model, and
// keeps the top K by score.
OccamWindow initialize_window(const ModelEvaluator& eval, int p, int K,
                              bool score_includes_prior = true);

// Re-evaluate all cached entries under new globals (lazy "dirty" refresh).
void refresh_window(OccamWindow& window, const ModelEvaluator& eval);

// One greedy update: flip a uniformly chosen bit of a uniformly chosen
// member; accept when the proposal is new and beats m-tilde.
bool propose_flip(OccamWindow& window, const ModelEvaluator& eval, int p,
                  Rng& rng);

// Split L search updates across individuals with exponential rates 1 + t_i.
std::vector<int> allocate_updates(const std::vector<int>& stale_counts, int L,
                                  Rng& rng);

}  // namespace slmm
