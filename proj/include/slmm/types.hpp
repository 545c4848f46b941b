#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace slmm {

using Real = double;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DataError : Error {
  using Error::Error;
};
struct NumericalError : Error {
  using Error::Error;
};
struct SolverError : Error {
  using Error::Error;
};

// One individual's response and design matrices. X carries the all-ones
// intercept column as its first column; S holds the p candidate random-effect
// columns. Immutable after construction.
struct IndividualData {
  std::string id;
  Vector y;   // length n
  Matrix X;   // n x q, first column ones
  Matrix S;   // n x p

  int n() const { return static_cast<int>(y.size()); }
  int q() const { return static_cast<int>(X.cols()); }
  int p() const { return static_cast<int>(S.cols()); }
};

using Dataset = std::vector<IndividualData>;

// Population-level parameter block. g2 is the slab variance factor: an
// included coefficient has prior N(0, g2 * sigma_i^2); the leading individual
// intercept has prior N(0, psi * sigma_i^2). c and f are used by the skew-t
// model only.
struct GlobalParams {
  Vector zeta_star;  // fixed effects, length q
  Real psi = 1.0;
  Real g2 = 1.0;
  Real a = 2.0;
  Real b = 1.0;
  Real a1 = 1.0;
  Real b1 = 1.0;
  Real c = 0.0;
  Real f = 10.0;

  void validate() const {
    auto pos = [](Real v, const char* name) {
      if (!(v > 0.0) || !std::isfinite(v))
        throw DataError(std::string("GlobalParams: ") + name +
                        " must be strictly positive and finite");
    };
    pos(psi, "psi");
    pos(g2, "g2");
    pos(a, "a");
    pos(b, "b");
    pos(a1, "a1");
    pos(b1, "b1");
    pos(f, "f");
    if (!std::isfinite(c)) throw DataError("GlobalParams: c must be finite");
    if (!zeta_star.allFinite())
      throw DataError("GlobalParams: zeta_star must be finite");
  }
};

// Binary inclusion vector for one individual's random effects.
struct ModelIndicator {
  std::vector<std::uint8_t> bits;
  int count = 0;

  ModelIndicator() = default;
  explicit ModelIndicator(int p) : bits(p, 0), count(0) {}

  static ModelIndicator empty(int p) { return ModelIndicator(p); }

  int p() const { return static_cast<int>(bits.size()); }

  bool includes(int j) const { return bits[j] != 0; }

  void set(int j, bool on) {
    if (bits[j] != static_cast<std::uint8_t>(on)) {
      bits[j] = static_cast<std::uint8_t>(on);
      count += on ? 1 : -1;
    }
  }

  void flip(int j) { set(j, bits[j] == 0); }

  std::vector<int> active() const {
    std::vector<int> idx;
    idx.reserve(count);
    for (int j = 0; j < p(); ++j)
      if (bits[j]) idx.push_back(j);
    return idx;
  }

  std::string bitstring() const {
    std::string s(bits.size(), '0');
    for (std::size_t j = 0; j < bits.size(); ++j)
      if (bits[j]) s[j] = '1';
    return s;
  }

  friend bool operator==(const ModelIndicator& x, const ModelIndicator& y) {
    return x.bits == y.bits;
  }
};

// Conjugate posterior blocks for one (individual, model) pair.
//   B = (S_g' S_g + Lambda)^-1,  A = B S_g' r,  C = r'r - A' B^-1 A
// where S_g = [intercept | selected columns of S] and
// Lambda = diag(1/psi, 1/g2, ..., 1/g2).
struct SufficientStats {
  Vector A;          // length p_gamma + 1
  Matrix B;          // (p_gamma+1) x (p_gamma+1), SPD
  Real C = 0.0;      // residual quadratic form, >= 0
  Real log_det_B = 0.0;

  Real m_scalar() const { return A(0); }
  auto M_vec() const { return A.tail(A.size() - 1); }
  Real q_scalar() const { return B(0, 0); }
  Real Q_trace() const {
    return B.bottomRightCorner(B.rows() - 1, B.cols() - 1).trace();
  }
};

// Posterior expectations needed by the Q function and the M-steps.
struct PosteriorMoments {
  Vector e_beta_over_sig2;      // E[beta / sigma^2]
  Real e_b1sq_over_sig2 = 0.0;  // E[beta_1^2 / sigma^2]
  Real e_brest_sq_over_sig2 = 0.0;  // E[beta_2:' beta_2: / sigma^2]
  Real e_inv_sig2 = 0.0;            // E[1 / sigma^2]
  Real e_neg_log_sig2 = 0.0;        // E[-log sigma^2]
};

// Posterior shape for sigma^2 | gamma. HalfN is the conjugate-exact update
// (a + n/2) and matches numerical integration of the marginal; FullN (a + n)
// is retained for comparison.
enum class ExponentConvention { HalfN, FullN };

// Normalization of the slab factor in the marginal likelihood: Half gives
// g2^(-p_gamma/2) (exact for the N(0, g2 sigma^2) slab), Literal g2^(-p_gamma).
enum class SlabNorm { Half, Literal };

struct ModelConventions {
  ExponentConvention exponent = ExponentConvention::HalfN;
  SlabNorm slab = SlabNorm::Half;

  Real posterior_shape(Real a, int n) const {
    return exponent == ExponentConvention::HalfN ? a + 0.5 * n : a + n;
  }
  Real slab_log_factor(Real g2, int p_gamma) const {
    const Real l = std::log(g2);
    return slab == SlabNorm::Half ? -0.5 * p_gamma * l : -p_gamma * l;
  }
};

}  // namespace slmm
