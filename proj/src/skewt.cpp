#include "slmm/skewt.hpp"

#include <chrono>
#include <cmath>

#include "slmm/parallel.hpp"
#include "slmm/prior.hpp"

namespace slmm {

namespace {
constexpr std::uint64_t kLatentTag = 0x1a7e27;
}

LatentMoments LatentMoments::degenerate(int n) {
  LatentMoments lm;
  lm.e_rho = Vector::Ones(n);
  lm.e_rho_d = Vector::Zero(n);
  lm.e_rho_d2 = Vector::Zero(n);
  lm.e_log_rho = Vector::Zero(n);
  lm.half_a_e_rho = lm.half_b_e_rho = lm.e_rho;
  lm.half_a_e_rho_d = lm.half_b_e_rho_d = lm.e_rho_d;
  lm.half_a_e_rho_d2 = lm.half_b_e_rho_d2 = lm.e_rho_d2;
  lm.half_a_e_log_rho = lm.half_b_e_log_rho = lm.e_log_rho;
  return lm;
}

ResidualMoments residual_moments(const IndividualData& ind,
                                 const OccamWindow& window,
                                 const GlobalParams& g) {
  const int n = ind.n();
  const int p = ind.p();
  const Vector u = ind.y - ind.X * g.zeta_star;
  ResidualMoments rm;
  rm.R0 = 0.0;
  rm.R1 = Vector::Zero(n);
  rm.R2 = Vector::Zero(n);
  for (int k = 0; k < window.size(); ++k) {
    const Real wk = window.weights(k);
    const auto& e = window.entries[k];
    const int d = e.gamma.count + 1;
    Matrix Sg(n, d);
    Sg.col(0).setOnes();
    int col = 1;
    for (int j = 0; j < p; ++j)
      if (e.gamma.includes(j)) Sg.col(col++) = ind.S.col(j);
    const Vector fit = Sg * e.stats.A;
    const Vector lev = ((Sg * e.stats.B).array() * Sg.array()).rowwise().sum();
    const Real einv = e.moments.e_inv_sig2;
    rm.R0 += wk * einv;
    rm.R1 += wk * einv * (u - fit);
    rm.R2 += wk * (einv * (u - fit).array().square().matrix() + lev);
  }
  return rm;
}

TruncTParams trunc_t_params(int obs_index, const ResidualMoments& rm,
                            const GlobalParams& g,
                            const LatentFamily& family) {
  const Real c = g.c, f = g.f;
  const Real c2 = c * c;
  TruncTParams params;
  params.nu = 1.0 / ((1.0 + c2) * rm.R0);
  if (!(params.nu > 0.0) || !std::isfinite(params.nu))
    throw NumericalError("trunc_t_params: non-positive scale");
  params.mu = c * std::sqrt(1.0 + c2) * rm.R1(obs_index) * params.nu;
  params.dof = f + 1.0;
  if (family.paper) {
    params.scale = std::sqrt(params.nu / params.dof);
  } else {
    const Real R1j = rm.R1(obs_index), R2j = rm.R2(obs_index);
    const Real rc = 0.5 * f + 0.5 * ((1.0 + c2) * R2j - c2 * R1j * R1j / rm.R0);
    params.scale = std::sqrt(2.0 * params.nu * rc / params.dof);
  }
  return params;
}

ObsLatentMoments sample_latents(const TruncTParams& params,
                                const GlobalParams& g, Real R0, Real R1j,
                                Real R2j, int n_draws, Rng& rng,
                                const LatentFamily& family) {
  if (n_draws < 1) throw DataError("sample_latents: n_draws must be >= 1");
  const Real c = g.c, f = g.f;
  const StudentT tdist(params.dof);
  const Real alpha = (0.0 - params.mu) / params.scale;
  const Real log_mass = tdist.log_sf(alpha);
  const Real p0 = std::exp(tdist.log_cdf(alpha));
  const Real mass = std::exp(log_mass);

  const Real shape = family.gamma_shape(f);
  const Real dig_shape = digamma(shape);

  ObsLatentMoments m{};
  Real acc[4] = {0, 0, 0, 0};
  Real acc_a[4] = {0, 0, 0, 0};
  const int half = std::max(1, n_draws / 2);
  for (int s = 0; s < n_draws; ++s) {
    const Real u = rng.uniform();
    Real x;
    const Real lower = p0 + mass * u;
    if (lower <= 0.5 && mass > 1e-12) {
      x = tdist.quantile(lower);
    } else {
      // log-space tail inversion; covers truncation mass below 1e-12.
      x = tdist.quantile_log_upper(log_mass + std::log1p(-u));
    }
    const Real d = std::max(0.0, params.mu + params.scale * x);
    const Real rate = family.gamma_rate(c, f, d, R0, R1j, R2j);
    if (!(rate > 0.0) || !std::isfinite(rate))
      throw NumericalError("sample_latents: non-finite gamma rate");
    const Real er = shape / rate;
    const Real vals[4] = {er, d * er, d * d * er, dig_shape - std::log(rate)};
    for (int t = 0; t < 4; ++t) acc[t] += vals[t];
    if (s < half)
      for (int t = 0; t < 4; ++t) acc_a[t] += vals[t];
  }
  m.e_rho = acc[0] / n_draws;
  m.e_rho_d = acc[1] / n_draws;
  m.e_rho_d2 = acc[2] / n_draws;
  m.e_log_rho = acc[3] / n_draws;
  const int nb = std::max(1, n_draws - half);
  m.ha_e_rho = acc_a[0] / half;
  m.ha_e_rho_d = acc_a[1] / half;
  m.ha_e_rho_d2 = acc_a[2] / half;
  m.ha_e_log_rho = acc_a[3] / half;
  m.hb_e_rho = (acc[0] - acc_a[0]) / nb;
  m.hb_e_rho_d = (acc[1] - acc_a[1]) / nb;
  m.hb_e_rho_d2 = (acc[2] - acc_a[2]) / nb;
  m.hb_e_log_rho = (acc[3] - acc_a[3]) / nb;
  if (n_draws == 1) {
    m.hb_e_rho = m.ha_e_rho;
    m.hb_e_rho_d = m.ha_e_rho_d;
    m.hb_e_rho_d2 = m.ha_e_rho_d2;
    m.hb_e_log_rho = m.ha_e_log_rho;
  }
  return m;
}

namespace {

WorkingData pseudo_from(const IndividualData& ind, Real c, const Vector& e_rho,
                        const Vector& e_rho_d) {
  const Real s1c = std::sqrt(1.0 + c * c);
  WorkingData w;
  w.id = ind.id;
  const Vector root_e = e_rho.array().sqrt();
  const Vector scale = root_e * s1c;
  w.X = scale.asDiagonal() * ind.X;
  w.S = scale.asDiagonal() * ind.S;
  w.intercept = scale;
  w.response = (root_e.array() * s1c * ind.y.array()).matrix() - c * e_rho_d;
  return w;
}

}  // namespace

WorkingData pseudo_data(const IndividualData& ind, const GlobalParams& g,
                        const LatentMoments& latents) {
  if ((latents.e_rho.array() <= 0.0).any())
    throw NumericalError("pseudo_data: E[rho] must be positive");
  return pseudo_from(ind, g.c, latents.e_rho, latents.e_rho_d);
}

namespace {

// One individual's profiled term: the log-normalizer of the tilted (rho, d)
// conditional summed over observations, maximized over a location offset xi
// and a precision multiplier omega. Profiling (xi, omega) makes the skewness
// estimate invariant to residual means already absorbed by the intercepts
// and to error-scale distortion from the latent fit.
struct CProfileTerm {
  const ResidualMoments* rm;
  const StudentT* tdist;  // dof = f + 1
  Real xi_center, xi_spread;

  Real term(Real c, Real f, Real xi, Real omega) const {
    const Real c2 = c * c;
    const Real R0 = omega * rm->R0;
    Real acc = 0.0;
    const int n = static_cast<int>(rm->R1.size());
    for (int j = 0; j < n; ++j) {
      const Real r1 = omega * (rm->R1(j) - xi * rm->R0);
      const Real r2 = omega * (rm->R2(j) - 2.0 * xi * rm->R1(j) +
                               xi * xi * rm->R0);
      const Real rc = 0.5 * f + 0.5 * ((1.0 + c2) * r2 - c2 * r1 * r1 / R0);
      const Real z = c * r1 * std::sqrt((f + 1.0) / (2.0 * R0 * rc));
      acc += -0.5 * (f + 1.0) * std::log(rc) + tdist->log_cdf(z);
    }
    return acc + 0.5 * n * std::log(omega);
  }

  Real profiled(Real c, Real f, Real* xi_hat, Real* log_om_hat,
                int budget = 0) const {
    Real xi = xi_hat && std::isfinite(*xi_hat) ? *xi_hat : xi_center;
    Real lom = log_om_hat && std::isfinite(*log_om_hat) ? *log_om_hat : 0.0;
    const bool warm = xi_hat && std::isfinite(*xi_hat);
    constexpr Real kInvPhi = 0.6180339887498949;
    auto golden = [&](auto fn, Real lo, Real hi, int iters) {
      Real x1 = hi - kInvPhi * (hi - lo), x2 = lo + kInvPhi * (hi - lo);
      Real f1 = fn(x1), f2 = fn(x2);
      for (int it = 0; it < iters; ++it) {
        if (f1 < f2) {
          lo = x1;
          x1 = x2;
          f1 = f2;
          x2 = lo + kInvPhi * (hi - lo);
          f2 = fn(x2);
        } else {
          hi = x2;
          x2 = x1;
          f2 = f1;
          x1 = hi - kInvPhi * (hi - lo);
          f1 = fn(x1);
        }
      }
      return 0.5 * (lo + hi);
    };
    const int rounds = (warm ? 1 : 2) + budget;
    const Real xspan = warm ? 1.2 * xi_spread : 6.0 * xi_spread;
    const Real lspan = warm ? 0.6 : 2.3;
    const int xit = warm ? 16 : 24;
    const int oit = warm ? 14 : 20;
    for (int round = 0; round < rounds; ++round) {
      xi = golden([&](Real v) { return term(c, f, v, std::exp(lom)); },
                  xi - xspan, xi + xspan, xit + 8 * budget);
      lom = golden([&](Real v) { return term(c, f, xi, std::exp(v)); },
                   lom - lspan, lom + lspan, oit + 8 * budget);
    }
    if (xi_hat) *xi_hat = xi;
    if (log_om_hat) *log_om_hat = lom;
    return term(c, f, xi, std::exp(lom));
  }
};

std::vector<CProfileTerm> make_profile_terms(
    const std::vector<ResidualMoments>& rms, const StudentT& tdist) {
  std::vector<CProfileTerm> terms;
  terms.reserve(rms.size());
  for (const auto& rm : rms) {
    CProfileTerm t;
    t.rm = &rm;
    t.tdist = &tdist;
    const Real m = rm.R1.mean() / rm.R0;
    const Real v = std::max(rm.R2.mean() / rm.R0 - m * m, 0.0);
    t.xi_center = m;
    t.xi_spread = std::sqrt(v) + std::sqrt(1.0 / rm.R0) + 1e-12;
    terms.push_back(t);
  }
  return terms;
}

}  // namespace

Real c_profile_objective(const std::vector<ResidualMoments>& rms, Real f,
                         Real c) {
  const StudentT tdist(f + 1.0);
  auto terms = make_profile_terms(rms, tdist);
  Real acc = 0.0;
  // High-precision inner solves: this entry point backs stationarity checks.
  for (auto& t : terms) acc += t.profiled(c, f, nullptr, nullptr, 2);
  return acc - 0.5 * c * c / (100.0 * 100.0);
}

Real mstep_c_profile(const std::vector<ResidualMoments>& rms, Real f,
                     Real prev_c, int threads) {
  const StudentT tdist(f + 1.0);
  auto terms = make_profile_terms(rms, tdist);
  const Real nan = std::numeric_limits<Real>::quiet_NaN();
  std::vector<Real> xi(rms.size(), nan), lom(rms.size(), nan);
  std::vector<Real> parts(rms.size());
  const int m = static_cast<int>(rms.size());
  auto objective = [&](Real c) {
    parallel_for(m, threads, [&](int i) {
      parts[i] = terms[i].profiled(c, f, &xi[i], &lom[i]);
    });
    Real acc = -0.5 * c * c / (100.0 * 100.0);
    for (int i = 0; i < m; ++i) acc += parts[i];
    return acc;
  };
  std::vector<Real> grid = {-50, -35, -20, -12, -8, -6, -4, -3, -2, -1, -0.5,
                            0,   0.5, 1,   2,   3,  4,  6,  8,  12, 20,  35,
                            50};
  if (std::isfinite(prev_c)) grid.push_back(std::clamp(prev_c, -50.0, 50.0));
  std::sort(grid.begin(), grid.end());
  int best = 0;
  Real best_val = -std::numeric_limits<Real>::infinity();
  // Fresh nuisance search on the coarse grid; warm-started refinement after.
  for (int i = 0; i < static_cast<int>(grid.size()); ++i) {
    std::fill(xi.begin(), xi.end(), nan);
    std::fill(lom.begin(), lom.end(), nan);
    const Real v = objective(grid[i]);
    if (v > best_val) {
      best_val = v;
      best = i;
    }
  }
  const Real lo = grid[std::max(0, best - 1)];
  const Real hi = grid[std::min<int>(grid.size() - 1, best + 1)];
  return golden_max(objective, lo, hi, 1e-9);
}

CObjectiveTerms c_objective_terms(const std::vector<ResidualMoments>& rms,
                                  const std::vector<LatentMoments>& latents) {
  CObjectiveTerms t;
  for (std::size_t i = 0; i < rms.size(); ++i) {
    t.P2 += 0.5 * (latents[i].e_rho.array() * rms[i].R2.array()).sum();
    t.P1 += 0.5 * (latents[i].e_rho_d.array() * rms[i].R1.array()).sum();
    t.P0 += 0.5 * latents[i].e_rho_d2.sum() * rms[i].R0;
    t.n_total += static_cast<Real>(rms[i].R1.size());
  }
  return t;
}

Real c_conditional_objective(const CObjectiveTerms& t, Real c) {
  const Real c2 = c * c;
  return -(1.0 + c2) * t.P2 + 2.0 * c * std::sqrt(1.0 + c2) * t.P1 -
         c2 * t.P0 + std::log1p(c2) * t.n_total -
         0.5 * c2 / (100.0 * 100.0);
}

Real mstep_c_conditional(const CObjectiveTerms& t, Real prev_c) {
  auto obj = [&](Real c) { return c_conditional_objective(t, c); };
  Real best = std::clamp(prev_c, -50.0, 50.0);
  Real best_val = obj(best);
  for (Real start : {prev_c, 0.0, 1.0, -1.0}) {
    const Real lo = std::max(-50.0, start - 2.0);
    const Real hi = std::min(50.0, start + 2.0);
    const Real cand = golden_max(obj, lo, hi, 1e-9);
    if (obj(cand) > best_val) {
      best = cand;
      best_val = obj(cand);
    }
  }
  for (Real lo : {-50.0, 0.0}) {
    const Real cand = golden_max(obj, lo, lo + 50.0, 1e-9);
    if (obj(cand) > best_val) {
      best = cand;
      best_val = obj(cand);
    }
  }
  return best;
}

Real f_objective(Real f, Real sum_e_log_rho, Real sum_e_rho, Real n_total) {
  return n_total * (0.5 * f * std::log(0.5 * f) - std::lgamma(0.5 * f)) +
         0.5 * (f - 2.0) * sum_e_log_rho - 0.5 * f * sum_e_rho +
         std::log(f) - 0.1 * f;
}

Real mstep_f(Real sum_e_log_rho, Real sum_e_rho, Real n_total) {
  return golden_max_log(
      [&](Real f) { return f_objective(f, sum_e_log_rho, sum_e_rho, n_total); },
      0.5, 500.0, 1e-11);
}

namespace {

Real skew_extra_terms(const std::vector<OccamWindow>& windows,
                      const std::vector<ResidualMoments>& rms,
                      const std::vector<const Vector*>& e_rho,
                      const std::vector<const Vector*>& e_rho_d2,
                      const std::vector<const Vector*>& e_log_rho,
                      const GlobalParams& g, Real epsilon) {
  Real acc = 0.0;
  Real n_total = 0.0, sum_elog = 0.0, sum_e = 0.0;
  for (std::size_t i = 0; i < windows.size(); ++i) {
    const int n = static_cast<int>(e_rho[i]->size());
    n_total += n;
    sum_elog += e_log_rho[i]->sum();
    sum_e += e_rho[i]->sum();
    Real w_eneg = 0.0;
    for (int k = 0; k < windows[i].size(); ++k)
      if (windows[i].weights(k) > epsilon)
        w_eneg += windows[i].weights(k) *
                  windows[i].entries[k].moments.e_neg_log_sig2;
    // truncated-normal latent prior: the extra -n/2 log sigma^2, the
    // quadratic E[rho d^2]/(2 sigma^2), and the (0,inf) doubling.
    acc += 0.5 * n * w_eneg - 0.5 * rms[i].R0 * e_rho_d2[i]->sum() +
           n * std::log(2.0) - 0.5 * n * kLog2Pi;
  }
  acc += 0.5 * n_total * std::log1p(g.c * g.c);
  acc += n_total * (0.5 * g.f * std::log(0.5 * g.f) - std::lgamma(0.5 * g.f));
  acc += 0.5 * g.f * sum_elog - 0.5 * g.f * sum_e;
  acc += std::log(g.f) - 0.1 * g.f;
  acc += -0.5 * g.c * g.c / (100.0 * 100.0);
  return acc;
}

}  // namespace

EMState vb_fit(const Dataset& data, const FitConfig& cfg) {
  require_valid(data);
  const int M = static_cast<int>(data.size());
  const int p = data.front().p();
  const int L = cfg.L < 0 ? M : cfg.L;
  const auto conv = cfg.conventions;
  const LatentFamily family{cfg.paper_latents};

  EMState state;
  state.conventions = conv;
  state.globals = init_globals(data, cfg);

  std::vector<LatentMoments> latents;
  latents.reserve(M);
  for (const auto& ind : data)
    latents.push_back(LatentMoments::degenerate(ind.n()));

  auto build_views = [&](const std::vector<LatentMoments>& lm) {
    std::vector<WorkingData> views(M);
    parallel_for(M, cfg.threads, [&](int i) {
      views[i] = pseudo_data(data[i], state.globals, lm[i]);
    });
    return views;
  };

  std::vector<WorkingData> views = build_views(latents);
  state.windows.resize(M);
  parallel_for(M, cfg.threads, [&](int i) {
    state.windows[i] = initialize_window(
        make_evaluator(views[i], state.globals, conv), p, cfg.K,
        cfg.score_includes_prior);
  });

  const auto t_start = std::chrono::steady_clock::now();
  auto elapsed_ms = [&t_start] {
    return std::chrono::duration<Real, std::milli>(
               std::chrono::steady_clock::now() - t_start)
        .count();
  };

  std::vector<Real> q_trace;
  bool near_convergence = false;

  for (int it = 0; it < cfg.max_iter; ++it) {
    const Real ms0 = elapsed_ms();
    // ---- block 1: population parameters
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
      throw SolverError("vb_fit: iteration " + std::to_string(it) + ": " +
                        err.what());
    }

    const bool need_rms = !cfg.fix_c.has_value() || !cfg.force_unit_rho;
    std::vector<ResidualMoments> rms(M);
    if (need_rms)
      parallel_for(M, cfg.threads, [&](int i) {
        rms[i] = residual_moments(data[i], state.windows[i], state.globals);
      });

    if (!cfg.fix_c.has_value()) {
      state.globals.c =
          cfg.c_objective == CObjective::Profile
              ? mstep_c_profile(rms, state.globals.f, state.globals.c,
                                cfg.threads)
              : mstep_c_conditional(c_objective_terms(rms, latents),
                                    state.globals.c);
    }
    if (!cfg.fix_f.has_value() && it >= 1 && !cfg.force_unit_rho) {
      Real sum_elog = 0.0, sum_e = 0.0, n_total = 0.0;
      for (const auto& lm : latents) {
        sum_elog += lm.e_log_rho.sum();
        sum_e += lm.e_rho.sum();
        n_total += static_cast<Real>(lm.e_rho.size());
      }
      state.globals.f = mstep_f(sum_elog, sum_e, n_total);
    }

    // ---- block 2: latent refresh
    if (!cfg.force_unit_rho) {
      const int draws = cfg.mc_draws * (near_convergence ? 2 : 1);
      parallel_for(M, cfg.threads, [&](int i) {
        Rng rng = Rng::stream(cfg.seed, {kLatentTag, (std::uint64_t)it,
                                         (std::uint64_t)i});
        const int n = data[i].n();
        LatentMoments lm;
        lm.e_rho.resize(n);
        lm.e_rho_d.resize(n);
        lm.e_rho_d2.resize(n);
        lm.e_log_rho.resize(n);
        lm.half_a_e_rho.resize(n);
        lm.half_a_e_rho_d.resize(n);
        lm.half_a_e_rho_d2.resize(n);
        lm.half_a_e_log_rho.resize(n);
        lm.half_b_e_rho.resize(n);
        lm.half_b_e_rho_d.resize(n);
        lm.half_b_e_rho_d2.resize(n);
        lm.half_b_e_log_rho.resize(n);
        for (int j = 0; j < n; ++j) {
          const TruncTParams params =
              trunc_t_params(j, rms[i], state.globals, family);
          const ObsLatentMoments om =
              sample_latents(params, state.globals, rms[i].R0, rms[i].R1(j),
                             rms[i].R2(j), draws, rng, family);
          lm.e_rho(j) = om.e_rho;
          lm.e_rho_d(j) = om.e_rho_d;
          lm.e_rho_d2(j) = om.e_rho_d2;
          lm.e_log_rho(j) = om.e_log_rho;
          lm.half_a_e_rho(j) = om.ha_e_rho;
          lm.half_a_e_rho_d(j) = om.ha_e_rho_d;
          lm.half_a_e_rho_d2(j) = om.ha_e_rho_d2;
          lm.half_a_e_log_rho(j) = om.ha_e_log_rho;
          lm.half_b_e_rho(j) = om.hb_e_rho;
          lm.half_b_e_rho_d(j) = om.hb_e_rho_d;
          lm.half_b_e_rho_d2(j) = om.hb_e_rho_d2;
          lm.half_b_e_log_rho(j) = om.hb_e_log_rho;
        }
        latents[i] = std::move(lm);
      });
    }

    // ---- block 3: window refresh and search on the new pseudo-data
    views = build_views(latents);
    parallel_for(M, cfg.threads, [&](int i) {
      refresh_window(state.windows[i],
                     make_evaluator(views[i], state.globals, conv));
    });
    const int replacements = window_search_sweep(
        state.windows, views, state.globals, conv, L, cfg.seed, it,
        cfg.threads);

    // ---- trace
    if (need_rms)
      parallel_for(M, cfg.threads, [&](int i) {
        rms[i] = residual_moments(data[i], state.windows[i], state.globals);
      });
    auto collect = [&](auto pick_rho, auto pick_rho_d, auto pick_rho_d2,
                       auto pick_log_rho, const std::vector<WorkingData>& vw) {
      std::vector<const Vector*> er(M), erd2(M), elr(M);
      for (int i = 0; i < M; ++i) {
        er[i] = pick_rho(latents[i]);
        erd2[i] = pick_rho_d2(latents[i]);
        elr[i] = pick_log_rho(latents[i]);
      }
      (void)pick_rho_d;
      return q_function(vw, state.windows, state.globals, cfg.epsilon, conv) +
             skew_extra_terms(state.windows, rms, er, erd2, elr,
                              state.globals, cfg.epsilon);
    };
    const Real q_full = collect(
        [](const LatentMoments& l) { return &l.e_rho; },
        [](const LatentMoments& l) { return &l.e_rho_d; },
        [](const LatentMoments& l) { return &l.e_rho_d2; },
        [](const LatentMoments& l) { return &l.e_log_rho; }, views);
    Real mc_se = 0.0;
    if (!cfg.force_unit_rho) {
      std::vector<WorkingData> views_a(M), views_b(M);
      parallel_for(M, cfg.threads, [&](int i) {
        views_a[i] = pseudo_from(data[i], state.globals.c,
                                 latents[i].half_a_e_rho,
                                 latents[i].half_a_e_rho_d);
        views_b[i] = pseudo_from(data[i], state.globals.c,
                                 latents[i].half_b_e_rho,
                                 latents[i].half_b_e_rho_d);
      });
      const Real qa = collect(
          [](const LatentMoments& l) { return &l.half_a_e_rho; },
          [](const LatentMoments& l) { return &l.half_a_e_rho_d; },
          [](const LatentMoments& l) { return &l.half_a_e_rho_d2; },
          [](const LatentMoments& l) { return &l.half_a_e_log_rho; }, views_a);
      const Real qb = collect(
          [](const LatentMoments& l) { return &l.half_b_e_rho; },
          [](const LatentMoments& l) { return &l.half_b_e_rho_d; },
          [](const LatentMoments& l) { return &l.half_b_e_rho_d2; },
          [](const LatentMoments& l) { return &l.half_b_e_log_rho; }, views_b);
      mc_se = 0.5 * std::fabs(qa - qb);
    }

    state.q_value = q_full;
    state.iteration = it;
    q_trace.push_back(q_full);
    IterationRecord rec;
    rec.iteration = it;
    rec.q = q_full;
    rec.globals = state.globals;
    rec.wall_ms = elapsed_ms() - ms0;
    rec.window_replacements = replacements;
    rec.q_mc_se = mc_se;
    state.trace.push_back(rec);

    // Smoothed (window 5) relative-change convergence; the Monte Carlo
    // E-step makes the raw trace stochastic.
    if (static_cast<int>(q_trace.size()) >= 10) {
      Real cur = 0.0, prev = 0.0;
      for (int l = 0; l < 5; ++l) {
        cur += q_trace[q_trace.size() - 1 - l];
        prev += q_trace[q_trace.size() - 6 - l];
      }
      cur /= 5.0;
      prev /= 5.0;
      const Real rel = std::fabs(cur - prev) / std::max(1.0, std::fabs(cur));
      near_convergence = rel < 10.0 * cfg.rel_tol;
      if (rel < cfg.rel_tol) {
        state.converged = true;
        break;
      }
    }
  }
  return state;
}

}  // namespace slmm
