#pragma once

#include <functional>
#include <string>

#include "slmm/types.hpp"

namespace slmm {

struct SolverDiagnostics {
  bool converged = true;
  bool at_lower_bound = false;
  bool at_upper_bound = false;
  int iterations = 0;
  std::string message;
};

// Golden-section maximization on [lo, hi]; tol is absolute on the axis.
// The returned point never evaluates worse than both interval ends.
Real golden_max(const std::function<Real(Real)>& f, Real lo, Real hi,
                Real tol = 1e-10, SolverDiagnostics* diag = nullptr);

// Maximize f(exp(t)) over t in [log(lo), log(hi)] and return the argument on
// the original scale; tol applies on the log scale.
Real golden_max_log(const std::function<Real(Real)>& f, Real lo, Real hi,
                    Real tol = 1e-10, SolverDiagnostics* diag = nullptr);

// Root of a monotone increasing g on [lo, hi] via bisection with secant
// acceleration. Throws SolverError when g does not change sign.
Real find_root_increasing(const std::function<Real(Real)>& g, Real lo, Real hi,
                          Real tol = 1e-12, SolverDiagnostics* diag = nullptr);

}  // namespace slmm
