#include "slmm/rng.hpp"

namespace slmm {

std::vector<int> multinomial(Rng& rng, int total, const Vector& probs) {
  const int m = static_cast<int>(probs.size());
  std::vector<int> counts(m, 0);
  if (total <= 0 || m == 0) return counts;
  Vector cum(m);
  Real acc = 0.0;
  for (int i = 0; i < m; ++i) {
    acc += probs(i);
    cum(i) = acc;
  }
  for (int t = 0; t < total; ++t) {
    const Real u = rng.uniform() * acc;
    int k = 0;
    while (k + 1 < m && u > cum(k)) ++k;
    ++counts[k];
  }
  return counts;
}

}  // namespace slmm
