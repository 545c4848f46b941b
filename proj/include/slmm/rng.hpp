#pragma once

#include <cstdint>
#include <initializer_list>

#include "slmm/types.hpp"

namespace slmm {

// Counter-based keyed stream (splitmix64). A stream is fully determined by
// the key words it was constructed from, so parallel users get reproducible
// draws regardless of scheduling.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(mix(seed ^ 0x9e3779b97f4a7c15ull)) {}

  // Derive an independent stream from (seed, id words...).
  static Rng stream(std::uint64_t seed, std::initializer_list<std::uint64_t> ids) {
    std::uint64_t s = mix(seed ^ 0x9e3779b97f4a7c15ull);
    for (std::uint64_t id : ids) s = mix(s ^ mix(id + 0x632be59bd9b4e019ull));
    Rng r(0);
    r.state_ = s;
    return r;
  }

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ull;
    return mix(state_);
  }

  // Uniform on (0, 1), 53-bit, never exactly 0 or 1.
  Real uniform() {
    return (static_cast<Real>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  Real normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    // Polar Box-Muller.
    Real u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const Real m = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * m;
    have_spare_ = true;
    return u * m;
  }

  Real exponential(Real rate) { return -std::log(uniform()) / rate; }

  // Marsaglia-Tsang; shape, rate parameterization.
  Real gamma(Real shape, Real rate) {
    if (!(shape > 0.0) || !(rate > 0.0))
      throw NumericalError("Rng::gamma: shape and rate must be positive");
    if (shape < 1.0) {
      const Real u = uniform();
      return gamma(shape + 1.0, rate) * std::pow(u, 1.0 / shape);
    }
    const Real d = shape - 1.0 / 3.0;
    const Real c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      Real x, v;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const Real u = uniform();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v / rate;
      if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v / rate;
    }
  }

  Real inverse_gamma(Real shape, Real scale) {
    return 1.0 / gamma(shape, scale);
  }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xbf58476d1ce4e5b9ull;
    z ^= z >> 27;
    z *= 0x94d049bb133111ebull;
    z ^= z >> 31;
    return z;
  }

  std::uint64_t state_;
  bool have_spare_ = false;
  Real spare_ = 0.0;
};

// Multinomial(total, probs) by sequential categorical draws; deterministic
// for a given stream.
std::vector<int> multinomial(Rng& rng, int total, const Vector& probs);

}  // namespace slmm
