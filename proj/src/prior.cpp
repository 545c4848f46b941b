#include "slmm/prior.hpp"

#include <cmath>
#include <sstream>

namespace slmm {

Real log_prior_gamma(int p_gamma, Real a1, Real b1, int p) {
  if (!(a1 > 0.0) || !(b1 > 0.0))
    throw NumericalError("log_prior_gamma: a1 and b1 must be positive");
  if (p_gamma < 0 || p_gamma > p)
    throw NumericalError("log_prior_gamma: p_gamma out of range");
  return std::lgamma(a1 + b1) - std::lgamma(a1) - std::lgamma(b1) +
         std::lgamma(p_gamma + a1) + std::lgamma(p - p_gamma + b1) -
         std::lgamma(p + a1 + b1);
}

std::string ValidationReport::to_string() const {
  std::ostringstream os;
  for (const auto& issue : issues)
    os << (issue.individual_id.empty() ? std::string("<dataset>")
                                       : issue.individual_id)
       << ": " << issue.message << "\n";
  return os.str();
}

ValidationReport validate_dataset(const Dataset& data) {
  ValidationReport report;
  if (data.empty()) {
    report.issues.push_back({"", "no individuals"});
    return report;
  }
  const int q = data.front().q();
  const int p = data.front().p();
  for (const auto& ind : data) {
    if (ind.n() < 1)
      report.issues.push_back({ind.id, "empty response (n_i = 0)"});
    if (ind.X.rows() != ind.n() || ind.S.rows() != ind.n())
      report.issues.push_back(
          {ind.id, "design row count does not match response length"});
    if (ind.q() != q)
      report.issues.push_back(
          {ind.id, "X has " + std::to_string(ind.q()) +
                       " columns, expected " + std::to_string(q)});
    if (ind.p() != p)
      report.issues.push_back(
          {ind.id, "S has " + std::to_string(ind.p()) +
                       " columns, expected " + std::to_string(p)});
    if (!ind.y.allFinite())
      report.issues.push_back({ind.id, "non-finite response values"});
    if (!ind.X.allFinite() || !ind.S.allFinite())
      report.issues.push_back({ind.id, "non-finite design values"});
  }
  return report;
}

void require_valid(const Dataset& data) {
  const ValidationReport report = validate_dataset(data);
  if (!report.ok()) throw DataError("invalid dataset:\n" + report.to_string());
}

}  // namespace slmm
