#pragma once

#include "slmm/math.hpp"
#include "slmm/types.hpp"

namespace slmm {

// Working view of one individual for the conjugate machinery. For the normal
// model this aliases the raw data (response = y, intercept = ones); the
// skew-t path substitutes row-reweighted designs and a transformed response.
struct WorkingData {
  std::string id;
  Vector response;   // length n
  Matrix X;          // n x q
  Vector intercept;  // leading random-effect column, length n
  Matrix S;          // n x p

  int n() const { return static_cast<int>(response.size()); }
  int q() const { return static_cast<int>(X.cols()); }
  int p() const { return static_cast<int>(S.cols()); }
};

WorkingData working_view(const IndividualData& ind);
std::vector<WorkingData> working_views(const Dataset& data);

// Residual r = response - X * zeta_star.
Vector residual(const WorkingData& w, const GlobalParams& g);

// B = (S_g' S_g + Lambda)^-1, A = B S_g' r, C = r'r - A' B^-1 A with
// S_g = [intercept | selected columns] and Lambda = diag(1/psi, 1/g2, ...).
// Solved by LLT; a failed factorization raises NumericalError naming the
// individual and model.
SufficientStats sufficient_stats(const WorkingData& w, const Vector& r,
                                 const ModelIndicator& gamma, Real psi,
                                 Real g2);

SufficientStats sufficient_stats(const IndividualData& ind,
                                 const ModelIndicator& gamma,
                                 const GlobalParams& g);

// Full log marginal likelihood of the model indicator, all constants kept:
//   -(n/2) log 2pi - (1/2) log psi + slab(g2, p_gamma) + (1/2) log|B|
//   + a log b - lgamma(a) + lgamma(s) - s log(b + C/2),  s = shape(a, n).
Real log_marginal(const SufficientStats& stats, int n, int p_gamma,
                  const GlobalParams& g, const ModelConventions& conv);

Real log_marginal(const IndividualData& ind, const ModelIndicator& gamma,
                  const GlobalParams& g,
                  const ModelConventions& conv = ModelConventions{});

// Posterior expectations under sigma^2 | gamma ~ IG(s, b + C/2) and
// beta | sigma^2, gamma ~ N(A, sigma^2 B).
PosteriorMoments posterior_moments(const SufficientStats& stats, int n,
                                   const GlobalParams& g,
                                   const ModelConventions& conv);

}  // namespace slmm
