#include "slmm/math.hpp"

#include <algorithm>
#include <limits>

namespace slmm {

namespace {
constexpr Real kInf = std::numeric_limits<Real>::infinity();
}

Real log_sum_exp(std::span<const Real> xs) {
  Real m = -kInf;
  for (Real x : xs) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  Real s = 0.0;
  for (Real x : xs) s += std::exp(x - m);
  return m + std::log(s);
}

Real digamma(Real x) {
  if (!(x > 0.0)) throw NumericalError("digamma: x must be positive");
  Real acc = 0.0;
  while (x < 6.0) {
    acc -= 1.0 / x;
    x += 1.0;
  }
  const Real inv = 1.0 / x;
  const Real inv2 = inv * inv;
  // Bernoulli-number asymptotic series.
  Real series = inv2 * (1.0 / 12.0 -
                inv2 * (1.0 / 120.0 -
                inv2 * (1.0 / 252.0 -
                inv2 * (1.0 / 240.0 -
                inv2 * (1.0 / 132.0 -
                inv2 * (691.0 / 32760.0))))));
  return acc + std::log(x) - 0.5 * inv - series;
}

Real log_beta(Real a, Real b) {
  return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
}

namespace {

// Continued fraction for the incomplete beta (Lentz), converging branch.
Real beta_cf(Real a, Real b, Real x) {
  constexpr int kMaxIter = 400;
  constexpr Real kEps = 3e-16;
  constexpr Real kTiny = 1e-300;
  const Real qab = a + b, qap = a + 1.0, qam = a - 1.0;
  Real c = 1.0, d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  Real h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    Real aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const Real del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) return h;
  }
  throw NumericalError("inc_beta: continued fraction did not converge");
}

// log I_x(a, b) on the branch where the continued fraction converges
// directly (x below the crossover); exact for arbitrarily small x.
Real log_inc_beta_lower_branch(Real a, Real b, Real x) {
  if (x <= 0.0) return -kInf;
  return a * std::log(x) + b * std::log1p(-x) - log_beta(a, b) -
         std::log(a) + std::log(beta_cf(a, b, x));
}

}  // namespace

Real inc_beta(Real a, Real b, Real x) {
  if (!(a > 0.0) || !(b > 0.0))
    throw NumericalError("inc_beta: parameters must be positive");
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  if (x < (a + 1.0) / (a + b + 2.0))
    return std::exp(log_inc_beta_lower_branch(a, b, x));
  return 1.0 - std::exp(log_inc_beta_lower_branch(b, a, 1.0 - x));
}

StudentT::StudentT(Real dof)
    : dof_(dof),
      half_dof_(0.5 * dof),
      log_beta_(log_beta(0.5 * dof, 0.5)),
      log_pdf_norm_(std::lgamma(0.5 * (dof + 1.0)) - std::lgamma(0.5 * dof) -
                    0.5 * std::log(dof) - 0.5 * std::log(M_PI)) {
  if (!(dof > 0.0)) throw NumericalError("StudentT: dof must be positive");
}

namespace {

// log I_x(a, 1/2) with precomputed log B(a, 1/2); converging branch only.
Real log_inc_beta_half(Real a, Real x, Real log_beta_ab) {
  if (x <= 0.0) return -kInf;
  return a * std::log(x) + 0.5 * std::log1p(-x) - log_beta_ab - std::log(a) +
         std::log(beta_cf(a, 0.5, x));
}

}  // namespace

Real StudentT::log_sf(Real x) const {
  const Real a = half_dof_, b = 0.5;
  const Real z = dof_ / (dof_ + x * x);
  const Real crossover = (a + 1.0) / (a + b + 2.0);
  if (z < crossover) {
    const Real log_half_iz = std::log(0.5) + log_inc_beta_half(a, z, log_beta_);
    if (x > 0.0) return log_half_iz;
    return std::log1p(-std::exp(log_half_iz));
  }
  const Real comp = std::exp(log_inc_beta_lower_branch(b, a, 1.0 - z));
  if (x > 0.0) return std::log(0.5) + std::log1p(-comp);
  return std::log(0.5) + std::log1p(comp);
}

Real StudentT::log_pdf(Real x) const {
  return log_pdf_norm_ - 0.5 * (dof_ + 1.0) * std::log1p(x * x / dof_);
}

Real StudentT::quantile_log_upper(Real log_upper) const {
  if (log_upper >= std::log(0.5)) return quantile(-std::expm1(log_upper));
  Real lx = (std::log(0.5) - std::log(half_dof_) - log_beta_ +
             half_dof_ * std::log(dof_) - log_upper) / dof_;
  lx = std::max(lx, std::log(std::sqrt(dof_) + 1.0));
  for (int it = 0; it < 60; ++it) {
    const Real x = std::exp(lx);
    const Real g = log_sf(x) - log_upper;
    const Real dg = -std::exp(log_pdf(x) + std::log(x) - log_sf(x));
    if (dg == 0.0) break;
    const Real step = std::clamp(-g / dg, -1.0, 1.0);
    lx += step;
    if (std::fabs(step) < 1e-14) break;
  }
  return std::exp(lx);
}

namespace {

// Acklam's rational approximation to the normal quantile (|rel err| < 1.2e-9).
Real normal_quantile(Real p) {
  static const Real a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                           -2.759285104469687e+02, 1.383577518672690e+02,
                           -3.066479806614716e+01, 2.506628277459239e+00};
  static const Real b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                           -1.556989798598866e+02, 6.680131188771972e+01,
                           -1.328068155288572e+01};
  static const Real c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                           -2.400758277161838e+00, -2.549732539343734e+00,
                           4.374664141464968e+00,  2.938163982698783e+00};
  static const Real d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                           2.445134137142996e+00, 3.754408661907416e+00};
  const Real pl = 0.02425;
  if (p < pl) {
    const Real q = std::sqrt(-2.0 * std::log(p));
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q +
            c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  if (p > 1.0 - pl) return -normal_quantile(1.0 - p);
  const Real q = p - 0.5, r = q * q;
  return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r +
          a[5]) *
         q /
         (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

}  // namespace

Real StudentT::quantile(Real p) const {
  if (!(p > 0.0) || !(p < 1.0))
    throw NumericalError("StudentT::quantile: p must be in (0,1)");
  if (p == 0.5) return 0.0;
  if (p > 0.5) return -quantile(1.0 - p);
  if (p < 0.05) return -quantile_log_upper(std::log(p));
  // Cornish-Fisher style start, polished by safeguarded Newton on the cdf.
  const Real z = normal_quantile(p);
  Real x = z * (1.0 + (z * z + 1.0) / (4.0 * dof_));
  Real lo = -40.0, hi = 0.0;
  for (int it = 0; it < 50; ++it) {
    const Real err = cdf(x) - p;
    if (err > 0.0)
      hi = std::min(hi, x);
    else
      lo = std::max(lo, x);
    const Real step = -err / std::exp(log_pdf(x));
    x += step;
    if (!(x > lo && x < hi)) x = 0.5 * (lo + hi);
    if (std::fabs(step) < 1e-13 * std::max(1.0, std::fabs(x))) break;
  }
  return x;
}

Real student_t_log_sf(Real x, Real dof) { return StudentT(dof).log_sf(x); }

Real student_t_log_cdf(Real x, Real dof) { return StudentT(dof).log_cdf(x); }

Real student_t_cdf(Real x, Real dof) { return StudentT(dof).cdf(x); }

Real student_t_quantile(Real p, Real dof) { return StudentT(dof).quantile(p); }

Real student_t_quantile_log_upper(Real log_upper, Real dof) {
  return StudentT(dof).quantile_log_upper(log_upper);
}

Real normal_cdf(Real x) { return 0.5 * std::erfc(-x * M_SQRT1_2); }

Real log_binomial(int n, int k) {
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) -
         std::lgamma(n - k + 1.0);
}

}  // namespace slmm
