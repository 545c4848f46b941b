#pragma once

#include <iosfwd>

#include "slmm/skewt.hpp"

namespace slmm {

// Factorial-design cell. The study grid crosses p, h, q_prop, c, f and K;
// M and replicates default to desk scale (the full-size study uses M = 300,
// replicates = 30).
struct SimConfig {
  int M = 50;
  int p = 10;
  Real h = 0.1;       // effect inclusion probability
  Real q_prop = 0.15; // probability of n_i = 200 (else 50)
  Real c = 0.0;
  Real f = 5.0;
  int K = 30;
  int replicates = 5;
  std::uint64_t seed = 0;

  enum class Algorithm { NormalEm, SkewtVb };
  Algorithm algorithm = Algorithm::SkewtVb;

  // Fields outside the study's factor domains are reported, not rejected
  // (edge settings such as f -> inf are useful for checks).
  std::vector<std::string> domain_warnings() const;
};

struct GroundTruth {
  Vector zeta;
  std::vector<Vector> beta;
  std::vector<ModelIndicator> gamma;
  std::vector<Real> sigma2;
  Real c = 0.0;
  Real f = 0.0;
};

// Draws one replicate: zeta_0 = 0 with five N(0,1) fixed effects, n_i = 200
// with probability q_prop else 50, standard normal designs, sigma_i^2 ~
// IG(10, 0.1), beta ~ h N(0,1) + (1-h) delta_0, and skew-t errors built from
// their latent representation. Bit-reproducible for a fixed (seed, replicate).
std::pair<Dataset, GroundTruth> generate(const SimConfig& cfg, int replicate);

// Root mean squared error of the inclusion indicators over (replicate,
// individual, variable) triples, with E[gamma_ij | y] the weighted window
// average. metric_literal drops the square root.
Real rmse_gamma(const std::vector<std::vector<ModelIndicator>>& truth,
                const std::vector<std::vector<Vector>>& inclusion,
                bool metric_literal = false);

Real rmse_scalar(Real true_value, const std::vector<Real>& estimates);

Real constant_predictor_rmse(
    const std::vector<std::vector<ModelIndicator>>& truth, Real constant);

struct CellResult {
  SimConfig config;
  Real rmse_gamma = 0.0;
  Real rmse_c = 0.0;  // skew-t cells only
  Real rmse_f = 0.0;
  Real mean_wall_s = 0.0;
  int failures = 0;
  std::vector<Real> c_estimates, f_estimates;
};

struct StudyResult {
  std::vector<CellResult> cells;
};

StudyResult run_study(const std::vector<SimConfig>& grid,
                      const FitConfig& fit_base, int threads);

void write_results_table(std::ostream& out, const StudyResult& result);

// Per-individual inclusion expectations of a fitted state.
std::vector<Vector> inclusion_expectations(const EMState& state);

}  // namespace slmm
