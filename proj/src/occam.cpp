#include "slmm/occam.hpp"

#include <algorithm>
#include <limits>
#include <memory>

#include "slmm/prior.hpp"

namespace slmm {

namespace {
constexpr Real kNegInf = -std::numeric_limits<Real>::infinity();
}

ModelEvaluator make_evaluator(const WorkingData& w, const GlobalParams& g,
                              const ModelConventions& conv) {
  // The residual is shared across all models of this individual.
  auto r = std::make_shared<Vector>(residual(w, g));
  const int p = w.p();
  return [&w, g, conv, r, p](const ModelIndicator& gamma) {
    WindowEntry e;
    e.gamma = gamma;
    e.log_prior = log_prior_gamma(gamma, g.a1, g.b1, p);
    e.stats = sufficient_stats(w, *r, gamma, g.psi, g.g2);
    e.log_marginal = log_marginal(e.stats, w.n(), gamma.count, g, conv);
    e.moments = posterior_moments(e.stats, w.n(), g, conv);
    return e;
  };
}

bool OccamWindow::contains(const ModelIndicator& gamma) const {
  for (const auto& e : entries)
    if (e.gamma == gamma) return true;
  return false;
}

void OccamWindow::recompute_min() {
  min_index = -1;
  min_score = kNegInf;
  for (int k = 0; k < size(); ++k) {
    const Real s = score(k);
    if (min_index < 0 || s < min_score ||
        (s == min_score && entries[k].gamma.count > entries[min_index].gamma.count)) {
      min_index = k;
      min_score = s;
    }
  }
}

void OccamWindow::refresh_weights() {
  weights = window_weights(*this);
  recompute_min();
}

Vector OccamWindow::inclusion_expectation() const {
  const int p = entries.front().gamma.p();
  Vector e = Vector::Zero(p);
  for (int k = 0; k < size(); ++k)
    for (int j = 0; j < p; ++j)
      if (entries[k].gamma.includes(j)) e(j) += weights(k);
  return e;
}

std::pair<Real, Vector> OccamWindow::averaged_beta() const {
  const int p = entries.front().gamma.p();
  Real intercept = 0.0;
  Vector beta = Vector::Zero(p);
  for (int k = 0; k < size(); ++k) {
    const auto& e = entries[k];
    intercept += weights(k) * e.stats.A(0);
    int col = 1;
    for (int j = 0; j < p; ++j)
      if (e.gamma.includes(j)) beta(j) += weights(k) * e.stats.A(col++);
  }
  return {intercept, beta};
}

int OccamWindow::top_index() const {
  int best = 0;
  for (int k = 1; k < size(); ++k)
    if (weights(k) > weights(best)) best = k;
  return best;
}

Vector window_weights(const OccamWindow& window) {
  const int K = window.size();
  if (K == 0) throw NumericalError("window_weights: empty window");
  Vector ls(K);
  for (int k = 0; k < K; ++k)
    ls(k) = window.entries[k].log_prior + window.entries[k].log_marginal;
  const Real norm = log_sum_exp(ls);
  if (!std::isfinite(norm))
    throw NumericalError("window_weights: all model scores are -inf");
  return (ls.array() - norm).exp();
}

namespace {

void enumerate_subsets(int p, int size, const std::function<void(const ModelIndicator&)>& visit) {
  std::vector<int> idx(size);
  for (int j = 0; j < size; ++j) idx[j] = j;
  for (;;) {
    ModelIndicator gamma(p);
    for (int j : idx) gamma.set(j, true);
    visit(gamma);
    int j = size - 1;
    while (j >= 0 && idx[j] == p - size + j) --j;
    if (j < 0) break;
    ++idx[j];
    for (int l = j + 1; l < size; ++l) idx[l] = idx[l - 1] + 1;
  }
}

}  // namespace

OccamWindow initialize_window(const ModelEvaluator& eval, int p, int K,
                              bool score_includes_prior) {
  if (K < 1) throw DataError("initialize_window: K must be >= 1");
  const Real total_models = std::pow(2.0, p);
  if (K > total_models)
    throw DataError("initialize_window: K exceeds the model space size");

  // Smallest p_star whose cumulative subset count covers K; extended when the
  // enumerated candidate pool (empty model included) still falls short.
  int p_star = 0;
  Real cum = 0.0;
  while (p_star < p && cum < K) {
    ++p_star;
    cum += std::exp(log_binomial(p, p_star));
  }
  while (cum + 1.0 < K && p_star < p) {
    ++p_star;
    cum += std::exp(log_binomial(p, p_star));
  }

  std::vector<WindowEntry> pool;
  pool.push_back(eval(ModelIndicator::empty(p)));
  for (int size = 1; size <= p_star; ++size)
    enumerate_subsets(p, size,
                      [&](const ModelIndicator& gamma) { pool.push_back(eval(gamma)); });

  auto entry_score = [&](const WindowEntry& e) {
    return (score_includes_prior ? e.log_prior : 0.0) + e.log_marginal;
  };
  std::stable_sort(pool.begin(), pool.end(),
                   [&](const WindowEntry& x, const WindowEntry& y) {
                     return entry_score(x) > entry_score(y);
                   });
  pool.resize(K);

  OccamWindow window;
  window.score_includes_prior = score_includes_prior;
  window.entries = std::move(pool);
  window.stale_count = 0;
  window.refresh_weights();
  return window;
}

void refresh_window(OccamWindow& window, const ModelEvaluator& eval) {
  for (auto& e : window.entries) e = eval(e.gamma);
  window.refresh_weights();
}

bool propose_flip(OccamWindow& window, const ModelEvaluator& eval, int p,
                  Rng& rng) {
  const int k = static_cast<int>(rng.uniform() * window.size()) % window.size();
  const int j = static_cast<int>(rng.uniform() * p) % p;
  ModelIndicator proposal = window.entries[k].gamma;
  proposal.flip(j);
  if (window.contains(proposal)) {
    ++window.stale_count;
    return false;
  }
  WindowEntry cand = eval(proposal);
  const Real cand_score =
      (window.score_includes_prior ? cand.log_prior : 0.0) + cand.log_marginal;
  if (cand_score > window.min_score) {
    window.entries[window.min_index] = std::move(cand);
    window.refresh_weights();
    window.stale_count = 0;
    return true;
  }
  ++window.stale_count;
  return false;
}

std::vector<int> allocate_updates(const std::vector<int>& stale_counts, int L,
                                  Rng& rng) {
  const int M = static_cast<int>(stale_counts.size());
  if (L < 0) throw DataError("allocate_updates: L must be >= 0");
  if (L == 0 || M == 0) return std::vector<int>(M, 0);
  Vector rates(M);
  for (int i = 0; i < M; ++i)
    rates(i) = rng.exponential(1.0 + stale_counts[i]);
  rates /= rates.sum();
  return multinomial(rng, L, rates);
}

}  // namespace slmm
