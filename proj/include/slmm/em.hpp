#pragma once

#include <optional>

#include "slmm/occam.hpp"
#include "slmm/solvers.hpp"

namespace slmm {

// How the skewness M-step is computed: Profile maximizes the (c, zeta0,
// q(rho,d))-block objective jointly; Conditional maximizes the printed
// per-parameter objective with the latent moments frozen.
enum class CObjective { Profile, Conditional };

struct FitConfig {
  int K = 30;
  int L = -1;           // window-search updates per iteration; -1 means M
  Real epsilon = 1e-8;  // weight truncation for the M-step sums
  Real rel_tol = 1e-8;
  int max_iter = 200;
  std::uint64_t seed = 0;
  int threads = 1;
  Real init_a = 2.0;
  bool score_includes_prior = true;
  ModelConventions conventions;

  // skew-t options
  int mc_draws = 200;
  std::optional<Real> fix_c;
  std::optional<Real> fix_f;
  bool force_unit_rho = false;  // degenerate latents (normal-limit mode)
  CObjective c_objective = CObjective::Profile;
  bool paper_latents = false;  // use the printed q(d), q(rho|d) family
};

struct IterationRecord {
  int iteration = 0;
  Real q = 0.0;
  GlobalParams globals;
  Real wall_ms = 0.0;
  int window_replacements = 0;
  Real q_mc_se = 0.0;  // skew-t mode only
};

struct EMState {
  GlobalParams globals;
  std::vector<OccamWindow> windows;
  Real q_value = 0.0;
  int iteration = 0;
  bool converged = false;
  std::vector<IterationRecord> trace;
  ModelConventions conventions;
};

// Weighted reductions over (individual, model) pairs with w > epsilon.
struct EStepSums {
  int M = 0;
  Real sum_w_einv = 0.0;
  Real sum_w_eneg_log = 0.0;  // weighted E[log(1/sigma^2)]
  Real sum_w_b1sq = 0.0;
  Real sum_w_brest = 0.0;
  Vector pgamma_hist;  // weighted mass on each p_gamma value, length p+1
  Matrix zeta_lhs;
  Vector zeta_rhs;
};

EStepSums accumulate_sums(const std::vector<WorkingData>& views,
                          const std::vector<OccamWindow>& windows,
                          Real epsilon, int threads);

// Closed-form maximizers and 1-D solvers for the population parameters.
Vector mstep_zeta(const EStepSums& sums);
Real mstep_psi(const EStepSums& sums);
std::pair<Real, Real> solve_ab(const EStepSums& sums,
                               SolverDiagnostics* diag = nullptr);
std::pair<Real, Real> solve_a1_b1(const EStepSums& sums, int p, Real a1_start,
                                  Real b1_start,
                                  SolverDiagnostics* diag = nullptr);
Real solve_g(const EStepSums& sums, Real prev_g,
             SolverDiagnostics* diag = nullptr);

// Per-coordinate scalar objectives (exposed for stationarity checks).
Real a1_objective(const EStepSums& sums, int p, Real a1, Real b1);
Real b1_objective(const EStepSums& sums, int p, Real a1, Real b1);
Real g_objective(const EStepSums& sums, Real g2);

// Expected complete-data log posterior with the double sum truncated to
// weights > epsilon; cached window moments act as the frozen E-step.
Real q_function(const std::vector<WorkingData>& views,
                const std::vector<OccamWindow>& windows, const GlobalParams& g,
                Real epsilon, const ModelConventions& conv);

// Evidence lower bound of the window-restricted posterior:
//   sum_i logsumexp_k [log p(gamma_k) + log m_i(gamma_k)] + log p(chi).
// This is the monotone objective recorded in the iteration trace.
Real elbo(const std::vector<OccamWindow>& windows, const GlobalParams& g);

Real log_hyperprior(const GlobalParams& g);

GlobalParams init_globals(const Dataset& data, const FitConfig& cfg);

// One window-update sweep: exponential-race allocation of L flips followed
// by the per-individual greedy updates. Returns the number of accepted
// replacements. Stream keys depend only on (seed, iteration, individual), so
// em_fit and vb_fit make identical moves under equal seeds.
int window_search_sweep(std::vector<OccamWindow>& windows,
                        const std::vector<WorkingData>& views,
                        const GlobalParams& g, const ModelConventions& conv,
                        int L, std::uint64_t seed, int iteration, int threads);

EMState em_fit(const Dataset& data, const FitConfig& cfg);

}  // namespace slmm
