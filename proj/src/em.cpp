#include "slmm/em.hpp"

#include <chrono>
#include <cmath>

#include "slmm/parallel.hpp"
#include "slmm/prior.hpp"

namespace slmm {

namespace {

constexpr std::uint64_t kSearchTag = 0x5ea7c4;
constexpr std::uint64_t kAllocTag = 0xa110c;

struct IndividualSums {
  Real einv = 0.0, eneg_log = 0.0, b1sq = 0.0, brest = 0.0;
  Vector hist;
  Matrix zeta_lhs;
  Vector zeta_rhs;
};

IndividualSums individual_sums(const WorkingData& w, const OccamWindow& win,
                               Real epsilon) {
  const int p = w.p();
  IndividualSums s;
  s.hist = Vector::Zero(p + 1);
  Real w_einv = 0.0;
  Vector acc = Vector::Zero(w.n());
  for (int k = 0; k < win.size(); ++k) {
    const Real wk = win.weights(k);
    if (!(wk > epsilon)) continue;
    const auto& e = win.entries[k];
    const auto& m = e.moments;
    s.einv += wk * m.e_inv_sig2;
    s.eneg_log += wk * m.e_neg_log_sig2;
    s.b1sq += wk * m.e_b1sq_over_sig2;
    s.brest += wk * m.e_brest_sq_over_sig2;
    s.hist(e.gamma.count) += wk;
    w_einv += wk * m.e_inv_sig2;
    // S_g * E[beta/sigma^2] with S_g = [intercept | selected columns]
    Vector fit = w.intercept * m.e_beta_over_sig2(0);
    int col = 1;
    for (int j = 0; j < p; ++j)
      if (e.gamma.includes(j)) fit += w.S.col(j) * m.e_beta_over_sig2(col++);
    acc += wk * (m.e_inv_sig2 * w.response - fit);
  }
  s.zeta_lhs = w.X.transpose() * w.X * w_einv;
  s.zeta_rhs = w.X.transpose() * acc;
  return s;
}

}  // namespace

EStepSums accumulate_sums(const std::vector<WorkingData>& views,
                          const std::vector<OccamWindow>& windows,
                          Real epsilon, int threads) {
  const int M = static_cast<int>(views.size());
  const int p = views.front().p();
  const int q = views.front().q();
  std::vector<IndividualSums> parts(M);
  parallel_for(M, threads, [&](int i) {
    parts[i] = individual_sums(views[i], windows[i], epsilon);
  });
  IndividualSums zero;
  zero.hist = Vector::Zero(p + 1);
  zero.zeta_lhs = Matrix::Zero(q, q);
  zero.zeta_rhs = Vector::Zero(q);
  IndividualSums total = tree_reduce(
      std::move(parts), zero, [](const IndividualSums& x, const IndividualSums& y) {
        IndividualSums r;
        r.einv = x.einv + y.einv;
        r.eneg_log = x.eneg_log + y.eneg_log;
        r.b1sq = x.b1sq + y.b1sq;
        r.brest = x.brest + y.brest;
        r.hist = x.hist + y.hist;
        r.zeta_lhs = x.zeta_lhs + y.zeta_lhs;
        r.zeta_rhs = x.zeta_rhs + y.zeta_rhs;
        return r;
      });
  EStepSums sums;
  sums.M = M;
  sums.sum_w_einv = total.einv;
  sums.sum_w_eneg_log = total.eneg_log;
  sums.sum_w_b1sq = total.b1sq;
  sums.sum_w_brest = total.brest;
  sums.pgamma_hist = total.hist;
  sums.zeta_lhs = total.zeta_lhs;
  sums.zeta_rhs = total.zeta_rhs;
  return sums;
}

Vector mstep_zeta(const EStepSums& sums) {
  Eigen::LLT<Matrix> llt(sums.zeta_lhs);
  if (llt.info() != Eigen::Success)
    throw SolverError("mstep_zeta: normal matrix is rank deficient");
  return llt.solve(sums.zeta_rhs);
}

Real mstep_psi(const EStepSums& sums) {
  return (sums.sum_w_b1sq + 2.0) / (sums.M + 4.0);
}

std::pair<Real, Real> solve_ab(const EStepSums& sums,
                               SolverDiagnostics* diag) {
  const Real M = sums.M;
  if (!(sums.sum_w_einv > 0.0))
    throw SolverError("solve_ab: sum of weighted E[1/sigma^2] must be positive");
  const Real H = sums.sum_w_einv / M;         // mean E[1/sigma^2]
  const Real D = sums.sum_w_eneg_log / M;     // mean E[log(1/sigma^2)]
  const Real rhs = D - std::log(H);           // Jensen gap, negative for proper moments
  if (!(rhs < 0.0)) {
    if (diag) {
      diag->converged = false;
      diag->message = "non-negative Jensen gap: digamma(a)-log(a) has no root";
    }
    throw SolverError(
        "solve_ab: E[log 1/sigma^2] >= log E[1/sigma^2]; a diverges");
  }
  auto gfun = [&](Real la) {
    const Real a = std::exp(la);
    return digamma(a) - la - rhs;
  };
  const Real la = find_root_increasing(gfun, std::log(1e-6), std::log(1e6),
                                       1e-13, diag);
  const Real a = std::exp(la);
  return {a, a / H};
}

Real a1_objective(const EStepSums& sums, int p, Real a1, Real b1) {
  Real acc = std::lgamma(a1 + b1) - std::lgamma(p + a1 + b1) - std::lgamma(a1);
  for (int j = 0; j <= p; ++j)
    if (sums.pgamma_hist(j) != 0.0)
      acc += sums.pgamma_hist(j) * std::lgamma(j + a1) / sums.M;
  return acc;
}

Real b1_objective(const EStepSums& sums, int p, Real a1, Real b1) {
  Real acc = std::lgamma(a1 + b1) - std::lgamma(p + a1 + b1) - std::lgamma(b1);
  for (int j = 0; j <= p; ++j)
    if (sums.pgamma_hist(j) != 0.0)
      acc += sums.pgamma_hist(j) * std::lgamma(p - j + b1) / sums.M;
  return acc;
}

std::pair<Real, Real> solve_a1_b1(const EStepSums& sums, int p, Real a1,
                                  Real b1, SolverDiagnostics* diag) {
  constexpr Real kLo = 1e-6, kHi = 1e6;
  SolverDiagnostics local;
  for (int round = 0; round < 60; ++round) {
    const Real a1_new = golden_max_log(
        [&](Real v) { return a1_objective(sums, p, v, b1); }, kLo, kHi, 1e-11,
        &local);
    const Real b1_new = golden_max_log(
        [&](Real v) { return b1_objective(sums, p, a1_new, v); }, kLo, kHi,
        1e-11, &local);
    const Real delta = std::fabs(std::log(a1_new) - std::log(a1)) +
                       std::fabs(std::log(b1_new) - std::log(b1));
    a1 = a1_new;
    b1 = b1_new;
    if (delta < 1e-8) break;
  }
  if (diag) {
    *diag = local;
    diag->at_lower_bound = a1 < kLo * 1.01 || b1 < kLo * 1.01;
    diag->at_upper_bound = a1 > kHi * 0.99 || b1 > kHi * 0.99;
    if (diag->at_lower_bound)
      diag->message = "a1/b1 driven to the search bound (degenerate windows)";
  }
  return {a1, b1};
}

Real g_objective(const EStepSums& sums, Real g2) {
  Real W = 0.0;
  for (int j = 0; j < sums.pgamma_hist.size(); ++j)
    W += j * sums.pgamma_hist(j);
  return -std::log(g2) * W - sums.sum_w_brest / g2 - std::log(g2) -
         2.0 * std::log1p(g2);
}

Real solve_g(const EStepSums& sums, Real prev_g, SolverDiagnostics* diag) {
  Real W = 0.0;
  for (int j = 0; j < sums.pgamma_hist.size(); ++j)
    W += j * sums.pgamma_hist(j);
  if (W <= 0.0) {
    if (diag) {
      diag->converged = true;
      diag->message = "all window mass on the empty model; g unchanged";
    }
    return prev_g;
  }
  return golden_max_log([&](Real v) { return g_objective(sums, v); }, 1e-9,
                        1e9, 1e-11, diag);
}

Real log_hyperprior(const GlobalParams& g) {
  // psi ~ IG(1,1), sqrt(slab factor) ~ half-Cauchy(1); flat elsewhere.
  return -2.0 * std::log(g.psi) - 1.0 / g.psi - 0.5 * std::log(g.g2) -
         std::log1p(g.g2);
}

Real q_function(const std::vector<WorkingData>& views,
                const std::vector<OccamWindow>& windows, const GlobalParams& g,
                Real epsilon, const ModelConventions& conv) {
  const int p = views.front().p();
  Real q = log_hyperprior(g);
  for (std::size_t i = 0; i < views.size(); ++i) {
    const WorkingData& w = views[i];
    const Vector r = residual(w, g);
    const Real rr = r.squaredNorm();
    const int n = w.n();
    for (int k = 0; k < windows[i].size(); ++k) {
      const Real wk = windows[i].weights(k);
      if (!(wk > epsilon)) continue;
      const auto& e = windows[i].entries[k];
      const auto& m = e.moments;
      const int pg = e.gamma.count;
      // S_g'r and the small Gram matrix of the selected design.
      Matrix Sg(n, pg + 1);
      Sg.col(0) = w.intercept;
      int col = 1;
      for (int j = 0; j < p; ++j)
        if (e.gamma.includes(j)) Sg.col(col++) = w.S.col(j);
      const Vector u = Sg.transpose() * r;
      const Matrix G = Sg.transpose() * Sg;
      const Real quad = m.e_inv_sig2 * rr - 2.0 * u.dot(m.e_beta_over_sig2) +
                        (G * e.stats.B).trace() +
                        m.e_inv_sig2 * e.stats.A.dot(G * e.stats.A);
      const Real lik = -0.5 * quad + 0.5 * n * m.e_neg_log_sig2 -
                       0.5 * n * kLog2Pi;
      const Real beta_prior =
          -0.5 * (std::log(g.psi) + m.e_b1sq_over_sig2 / g.psi +
                  m.e_brest_sq_over_sig2 / g.g2 + (pg + 1) * kLog2Pi) +
          conv.slab_log_factor(g.g2, pg) +
          0.5 * (pg + 1) * m.e_neg_log_sig2;
      const Real sig_prior = g.a * std::log(g.b) - std::lgamma(g.a) +
                             (g.a + 1.0) * m.e_neg_log_sig2 -
                             g.b * m.e_inv_sig2;
      const Real gamma_prior = log_prior_gamma(pg, g.a1, g.b1, p);
      q += wk * (lik + beta_prior + sig_prior + gamma_prior);
    }
  }
  return q;
}

Real elbo(const std::vector<OccamWindow>& windows, const GlobalParams& g) {
  Real total = log_hyperprior(g);
  for (const auto& win : windows) {
    Vector ls(win.size());
    for (int k = 0; k < win.size(); ++k)
      ls(k) = win.entries[k].log_prior + win.entries[k].log_marginal;
    total += log_sum_exp(ls);
  }
  return total;
}

int window_search_sweep(std::vector<OccamWindow>& windows,
                        const std::vector<WorkingData>& views,
                        const GlobalParams& g, const ModelConventions& conv,
                        int L, std::uint64_t seed, int iteration,
                        int threads) {
  const int M = static_cast<int>(windows.size());
  const int p = views.front().p();
  std::vector<int> stales(M);
  for (int i = 0; i < M; ++i) stales[i] = windows[i].stale_count;
  Rng alloc_rng = Rng::stream(seed, {kAllocTag, (std::uint64_t)iteration});
  const std::vector<int> budget = allocate_updates(stales, L, alloc_rng);
  std::vector<int> accepted(M, 0);
  parallel_for(M, threads, [&](int i) {
    Rng rng = Rng::stream(
        seed, {kSearchTag, (std::uint64_t)iteration, (std::uint64_t)i});
    const auto eval = make_evaluator(views[i], g, conv);
    for (int l = 0; l < budget[i]; ++l)
      if (propose_flip(windows[i], eval, p, rng)) ++accepted[i];
  });
  int total = 0;
  for (int i = 0; i < M; ++i) total += accepted[i];
  return total;
}

GlobalParams init_globals(const Dataset& data, const FitConfig& cfg) {
  const int q = data.front().q();
  Matrix xtx = Matrix::Zero(q, q);
  Vector xty = Vector::Zero(q);
  for (const auto& ind : data) {
    const Vector centered = ind.y.array() - ind.y.mean();
    xtx += ind.X.transpose() * ind.X;
    xty += ind.X.transpose() * centered;
  }
  GlobalParams g;
  g.zeta_star = xtx.ldlt().solve(xty);
  // Pooled within-individual residual variance for the error-scale prior.
  Real ss = 0.0;
  Real df = 0.0;
  for (const auto& ind : data) {
    const Vector r = ind.y - ind.X * g.zeta_star;
    ss += (r.array() - r.mean()).square().sum();
    df += std::max(1, ind.n() - 1);
  }
  g.a = cfg.init_a;
  g.b = g.a * std::max(ss / df, 1e-12);
  g.psi = 1.0;
  g.g2 = 1.0;
  g.a1 = 1.0;
  g.b1 = 1.0;
  g.c = cfg.fix_c.value_or(0.0);
  g.f = cfg.fix_f.value_or(10.0);
  return g;
}

EMState em_fit(const Dataset& data, const FitConfig& cfg) {
  require_valid(data);
  const int M = static_cast<int>(data.size());
  const int p = data.front().p();
  const int L = cfg.L < 0 ? M : cfg.L;
  const auto conv = cfg.conventions;

  EMState state;
  state.conventions = conv;
  state.globals = init_globals(data, cfg);

  const std::vector<WorkingData> views = working_views(data);
  state.windows.resize(M);
  parallel_for(M, cfg.threads, [&](int i) {
    state.windows[i] = initialize_window(
        make_evaluator(views[i], state.globals, conv), p, cfg.K,
        cfg.score_includes_prior);
  });

  int quiet_streak = 0;
  Real prev_q = 0.0;
  const auto t_start = std::chrono::steady_clock::now();
  auto last_ms = [&t_start] {
    return std::chrono::duration<Real, std::milli>(
               std::chrono::steady_clock::now() - t_start)
        .count();
  };

  for (int it = 0; it < cfg.max_iter; ++it) {
    const Real ms0 = last_ms();
    EStepSums sums;
    try {
      sums = accumulate_sums(views, state.windows, cfg.epsilon, cfg.threads);
      state.globals.zeta_star = mstep_zeta(sums);
      state.globals.psi = mstep_psi(sums);
      std::tie(state.globals.a, state.globals.b) = solve_ab(sums);
      std::tie(state.globals.a1, state.globals.b1) =
          solve_a1_b1(sums, p, state.globals.a1, state.globals.b1);
      state.globals.g2 = solve_g(sums, state.globals.g2);
    } catch (const Error& err) {
      throw SolverError("em_fit: iteration " + std::to_string(it) + ": " +
                        err.what());
    }

    parallel_for(M, cfg.threads, [&](int i) {
      refresh_window(state.windows[i],
                     make_evaluator(views[i], state.globals, conv));
    });

    const int replacements = window_search_sweep(
        state.windows, views, state.globals, conv, L, cfg.seed, it,
        cfg.threads);

    state.q_value = elbo(state.windows, state.globals);
    state.iteration = it;
    IterationRecord rec;
    rec.iteration = it;
    rec.q = state.q_value;
    rec.globals = state.globals;
    rec.wall_ms = last_ms() - ms0;
    rec.window_replacements = replacements;
    state.trace.push_back(rec);

    if (it > 0 && std::fabs(state.q_value - prev_q) <
                      cfg.rel_tol * std::fabs(state.q_value) &&
        replacements == 0)
      ++quiet_streak;
    else
      quiet_streak = 0;
    prev_q = state.q_value;
    if (quiet_streak >= 3) {
      state.converged = true;
      break;
    }
  }
  return state;
}

}  // namespace slmm
