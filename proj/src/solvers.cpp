#include "slmm/solvers.hpp"

#include <cmath>

namespace slmm {

Real golden_max(const std::function<Real(Real)>& f, Real lo, Real hi,
                Real tol, SolverDiagnostics* diag) {
  constexpr Real kInvPhi = 0.6180339887498949;
  Real x1 = hi - kInvPhi * (hi - lo);
  Real x2 = lo + kInvPhi * (hi - lo);
  Real f1 = f(x1), f2 = f(x2);
  int it = 0;
  while (hi - lo > tol && it < 400) {
    ++it;
    if (f1 < f2) {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + kInvPhi * (hi - lo);
      f2 = f(x2);
    } else {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - kInvPhi * (hi - lo);
      f1 = f(x1);
    }
  }
  const Real xm = f1 > f2 ? x1 : x2;
  if (diag) {
    diag->iterations = it;
    diag->converged = hi - lo <= tol * 1.01 + 1e-300;
    diag->at_lower_bound = false;
    diag->at_upper_bound = false;
  }
  return xm;
}

Real golden_max_log(const std::function<Real(Real)>& f, Real lo, Real hi,
                    Real tol, SolverDiagnostics* diag) {
  auto g = [&](Real t) { return f(std::exp(t)); };
  const Real t = golden_max(g, std::log(lo), std::log(hi), tol, diag);
  const Real x = std::exp(t);
  if (diag) {
    const Real span = std::log(hi) - std::log(lo);
    diag->at_lower_bound = t < std::log(lo) + 1e-3 * span;
    diag->at_upper_bound = t > std::log(hi) - 1e-3 * span;
  }
  return x;
}

Real find_root_increasing(const std::function<Real(Real)>& g, Real lo, Real hi,
                          Real tol, SolverDiagnostics* diag) {
  Real glo = g(lo), ghi = g(hi);
  if (!(glo <= 0.0 && ghi >= 0.0)) {
    if (diag) {
      diag->converged = false;
      diag->message = "no sign change in bracket: g(lo)=" +
                      std::to_string(glo) + ", g(hi)=" + std::to_string(ghi);
    }
    throw SolverError("find_root_increasing: no sign change in bracket");
  }
  int it = 0;
  while (hi - lo > tol && it < 400) {
    ++it;
    // Secant candidate, safeguarded toward the midpoint.
    Real mid = 0.5 * (lo + hi);
    if (ghi > glo) {
      const Real sec = lo - glo * (hi - lo) / (ghi - glo);
      if (sec > lo + 0.01 * (hi - lo) && sec < hi - 0.01 * (hi - lo)) mid = sec;
    }
    const Real gm = g(mid);
    if (gm < 0.0) {
      lo = mid;
      glo = gm;
    } else {
      hi = mid;
      ghi = gm;
    }
  }
  if (diag) {
    diag->iterations = it;
    diag->converged = true;
  }
  return 0.5 * (lo + hi);
}

}  // namespace slmm
