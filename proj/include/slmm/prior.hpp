#pragma once

#include "slmm/types.hpp"

namespace slmm {

// Log beta-binomial prior mass of an inclusion vector with p_gamma set bits:
//   log Gamma(a1+b1)/(Gamma(a1)Gamma(b1))
//     * Gamma(p_gamma+a1) Gamma(p-p_gamma+b1) / Gamma(p+a1+b1)
// Depends on gamma only through the popcount.
Real log_prior_gamma(int p_gamma, Real a1, Real b1, int p);

inline Real log_prior_gamma(const ModelIndicator& gamma, Real a1, Real b1,
                            int p) {
  return log_prior_gamma(gamma.count, a1, b1, p);
}

struct ValidationIssue {
  std::string individual_id;
  std::string message;
};

struct ValidationReport {
  std::vector<ValidationIssue> issues;
  bool ok() const { return issues.empty(); }
  std::string to_string() const;
};

// Checks shape consistency (common q and p), finiteness, and n_i >= 1.
ValidationReport validate_dataset(const Dataset& data);

// Throwing wrapper used by the fitting entry points.
void require_valid(const Dataset& data);

}  // namespace slmm
