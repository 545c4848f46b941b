#include "slmm/model_stats.hpp"

namespace slmm {

WorkingData working_view(const IndividualData& ind) {
  WorkingData w;
  w.id = ind.id;
  w.response = ind.y;
  w.X = ind.X;
  w.intercept = Vector::Ones(ind.n());
  w.S = ind.S;
  return w;
}

std::vector<WorkingData> working_views(const Dataset& data) {
  std::vector<WorkingData> views;
  views.reserve(data.size());
  for (const auto& ind : data) views.push_back(working_view(ind));
  return views;
}

Vector residual(const WorkingData& w, const GlobalParams& g) {
  return w.response - w.X * g.zeta_star;
}

namespace {

Matrix selected_design(const WorkingData& w, const ModelIndicator& gamma) {
  Matrix St(w.n(), gamma.count + 1);
  St.col(0) = w.intercept;
  int col = 1;
  for (int j = 0; j < gamma.p(); ++j)
    if (gamma.includes(j)) St.col(col++) = w.S.col(j);
  return St;
}

}  // namespace

SufficientStats sufficient_stats(const WorkingData& w, const Vector& r,
                                 const ModelIndicator& gamma, Real psi,
                                 Real g2) {
  const Matrix St = selected_design(w, gamma);
  const int d = static_cast<int>(St.cols());
  Matrix Binv = St.transpose() * St;
  Binv(0, 0) += 1.0 / psi;
  for (int j = 1; j < d; ++j) Binv(j, j) += 1.0 / g2;

  Eigen::LLT<Matrix> llt(Binv);
  if (llt.info() != Eigen::Success)
    throw NumericalError("sufficient_stats: factorization failed for individual '" +
                         w.id + "', model " + gamma.bitstring());

  SufficientStats stats;
  const Vector str = St.transpose() * r;
  stats.A = llt.solve(str);
  stats.B = llt.solve(Matrix::Identity(d, d));
  stats.C = std::max(0.0, r.squaredNorm() - str.dot(stats.A));
  stats.log_det_B = 0.0;
  const auto& L = llt.matrixLLT();
  for (int j = 0; j < d; ++j) stats.log_det_B -= 2.0 * std::log(L(j, j));
  return stats;
}

SufficientStats sufficient_stats(const IndividualData& ind,
                                 const ModelIndicator& gamma,
                                 const GlobalParams& g) {
  const WorkingData w = working_view(ind);
  return sufficient_stats(w, residual(w, g), gamma, g.psi, g.g2);
}

Real log_marginal(const SufficientStats& stats, int n, int p_gamma,
                  const GlobalParams& g, const ModelConventions& conv) {
  const Real scale = g.b + 0.5 * stats.C;
  if (!(scale > 0.0))
    throw NumericalError("log_marginal: b + C/2 must be positive");
  const Real s = conv.posterior_shape(g.a, n);
  return -0.5 * n * kLog2Pi - 0.5 * std::log(g.psi) +
         conv.slab_log_factor(g.g2, p_gamma) + 0.5 * stats.log_det_B +
         g.a * std::log(g.b) - std::lgamma(g.a) + std::lgamma(s) -
         s * std::log(scale);
}

Real log_marginal(const IndividualData& ind, const ModelIndicator& gamma,
                  const GlobalParams& g, const ModelConventions& conv) {
  const SufficientStats stats = sufficient_stats(ind, gamma, g);
  return log_marginal(stats, ind.n(), gamma.count, g, conv);
}

PosteriorMoments posterior_moments(const SufficientStats& stats, int n,
                                   const GlobalParams& g,
                                   const ModelConventions& conv) {
  const Real s = conv.posterior_shape(g.a, n);
  const Real scale = g.b + 0.5 * stats.C;
  PosteriorMoments m;
  m.e_inv_sig2 = s / scale;
  m.e_beta_over_sig2 = m.e_inv_sig2 * stats.A;
  m.e_b1sq_over_sig2 =
      stats.q_scalar() + m.e_inv_sig2 * stats.m_scalar() * stats.m_scalar();
  const auto rest = stats.M_vec();
  m.e_brest_sq_over_sig2 = stats.Q_trace() + m.e_inv_sig2 * rest.dot(rest);
  m.e_neg_log_sig2 = digamma(s) - std::log(scale);
  return m;
}

}  // namespace slmm
