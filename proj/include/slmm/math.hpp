#pragma once

#include <cmath>
#include <span>

#include "slmm/types.hpp"

namespace slmm {

inline constexpr Real kLog2Pi = 1.8378770664093454836;

// logsumexp over a span; -inf inputs are handled, all -inf returns -inf.
Real log_sum_exp(std::span<const Real> xs);
inline Real log_sum_exp(const Vector& v) {
  return log_sum_exp(std::span<const Real>(v.data(), v.size()));
}

// Digamma via recurrence + asymptotic series; |rel err| < 1e-13 for x > 0.
Real digamma(Real x);

Real log_beta(Real a, Real b);

// Regularized incomplete beta I_x(a, b) by continued fraction.
Real inc_beta(Real a, Real b, Real x);

// Standardized Student-t distribution; caches the dof-dependent constants
// (the hot loops evaluate millions of tail probabilities at a fixed dof).
class StudentT {
 public:
  explicit StudentT(Real dof);
  Real dof() const { return dof_; }
  // log of the upper tail P(T > x); stable far into either tail.
  Real log_sf(Real x) const;
  Real log_cdf(Real x) const { return log_sf(-x); }
  Real cdf(Real x) const { return std::exp(log_cdf(x)); }
  Real log_pdf(Real x) const;
  Real quantile(Real p) const;
  // inverse of the upper tail from log(1-p); accurate arbitrarily far out.
  Real quantile_log_upper(Real log_upper) const;

 private:
  Real dof_, half_dof_, log_beta_, log_pdf_norm_;
};

Real student_t_cdf(Real x, Real dof);
Real student_t_log_sf(Real x, Real dof);
Real student_t_log_cdf(Real x, Real dof);
Real student_t_quantile(Real p, Real dof);
Real student_t_quantile_log_upper(Real log_upper, Real dof);

Real normal_cdf(Real x);

Real log_binomial(int n, int k);

}  // namespace slmm
