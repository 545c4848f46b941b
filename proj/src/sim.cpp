#include "slmm/sim.hpp"

#include <chrono>
#include <cmath>
#include <ostream>
#include <sstream>

#include "slmm/parallel.hpp"

namespace slmm {

namespace {
constexpr std::uint64_t kSimTag = 0x51317;
constexpr std::uint64_t kFitSeedTag = 0xf17;
constexpr int kFixedEffects = 5;
}  // namespace

std::vector<std::string> SimConfig::domain_warnings() const {
  std::vector<std::string> w;
  auto in = [](Real v, std::initializer_list<Real> set) {
    for (Real s : set)
      if (v == s) return true;
    return false;
  };
  if (p != 10 && p != 20) w.push_back("p outside study domain {10, 20}");
  if (!in(h, {0.1, 0.25})) w.push_back("h outside study domain {0.1, 0.25}");
  if (!in(q_prop, {0.15, 0.3}))
    w.push_back("q_prop outside study domain {0.15, 0.3}");
  if (!in(c, {0.0, 4.0})) w.push_back("c outside study domain {0, 4}");
  if (!in(f, {5.0, 20.0})) w.push_back("f outside study domain {5, 20}");
  if (K != 30 && K != 100) w.push_back("K outside study domain {30, 100}");
  if (replicates < 1) w.push_back("replicates must be >= 1");
  return w;
}

std::pair<Dataset, GroundTruth> generate(const SimConfig& cfg, int replicate) {
  Rng rng = Rng::stream(cfg.seed, {kSimTag, (std::uint64_t)replicate});
  const Real s1c = std::sqrt(1.0 + cfg.c * cfg.c);

  GroundTruth truth;
  truth.c = cfg.c;
  truth.f = cfg.f;
  truth.zeta = Vector::Zero(kFixedEffects + 1);
  for (int j = 1; j <= kFixedEffects; ++j) truth.zeta(j) = rng.normal();

  Dataset data;
  data.reserve(cfg.M);
  for (int i = 0; i < cfg.M; ++i) {
    const int n = rng.uniform() < cfg.q_prop ? 200 : 50;
    IndividualData ind;
    ind.id = "sim" + std::to_string(i);
    ind.X.resize(n, kFixedEffects + 1);
    ind.X.col(0).setOnes();
    for (int r = 0; r < n; ++r)
      for (int j = 1; j <= kFixedEffects; ++j) ind.X(r, j) = rng.normal();
    ind.S.resize(n, cfg.p);
    for (int r = 0; r < n; ++r)
      for (int j = 0; j < cfg.p; ++j) ind.S(r, j) = rng.normal();

    const Real sigma2 = 1.0 / rng.gamma(10.0, 0.1);
    ModelIndicator gamma(cfg.p);
    Vector beta = Vector::Zero(cfg.p);
    for (int j = 0; j < cfg.p; ++j)
      if (rng.uniform() < cfg.h) {
        gamma.set(j, true);
        beta(j) = rng.normal();
      }

    Vector eps(n);
    for (int r = 0; r < n; ++r) {
      const Real rho = rng.gamma(0.5 * cfg.f, 0.5 * cfg.f);
      const Real d = std::fabs(rng.normal()) * std::sqrt(sigma2 / rho);
      eps(r) = cfg.c / s1c * d +
               rng.normal() * std::sqrt(sigma2 / (rho * (1.0 + cfg.c * cfg.c)));
    }
    ind.y = ind.X * truth.zeta + ind.S * beta + eps;

    truth.beta.push_back(beta);
    truth.gamma.push_back(gamma);
    truth.sigma2.push_back(sigma2);
    data.push_back(std::move(ind));
  }
  return {std::move(data), std::move(truth)};
}

Real rmse_gamma(const std::vector<std::vector<ModelIndicator>>& truth,
                const std::vector<std::vector<Vector>>& inclusion,
                bool metric_literal) {
  if (truth.size() != inclusion.size())
    throw DataError("rmse_gamma: replicate count mismatch");
  Real acc = 0.0;
  long count = 0;
  for (std::size_t r = 0; r < truth.size(); ++r) {
    if (truth[r].size() != inclusion[r].size())
      throw DataError("rmse_gamma: individual count mismatch in replicate " +
                      std::to_string(r));
    for (std::size_t i = 0; i < truth[r].size(); ++i) {
      const auto& g = truth[r][i];
      const Vector& e = inclusion[r][i];
      if (e.size() != g.p())
        throw DataError("rmse_gamma: variable count mismatch");
      for (int j = 0; j < g.p(); ++j) {
        const Real diff = (g.includes(j) ? 1.0 : 0.0) - e(j);
        acc += diff * diff;
        ++count;
      }
    }
  }
  const Real mean = acc / count;
  return metric_literal ? mean : std::sqrt(mean);
}

Real rmse_scalar(Real true_value, const std::vector<Real>& estimates) {
  if (estimates.empty()) throw DataError("rmse_scalar: no estimates");
  Real acc = 0.0;
  for (Real e : estimates) acc += (e - true_value) * (e - true_value);
  return std::sqrt(acc / estimates.size());
}

Real constant_predictor_rmse(
    const std::vector<std::vector<ModelIndicator>>& truth, Real constant) {
  Real acc = 0.0;
  long count = 0;
  for (const auto& rep : truth)
    for (const auto& g : rep)
      for (int j = 0; j < g.p(); ++j) {
        const Real diff = (g.includes(j) ? 1.0 : 0.0) - constant;
        acc += diff * diff;
        ++count;
      }
  return std::sqrt(acc / count);
}

std::vector<Vector> inclusion_expectations(const EMState& state) {
  std::vector<Vector> out;
  out.reserve(state.windows.size());
  for (const auto& win : state.windows)
    out.push_back(win.inclusion_expectation());
  return out;
}

StudyResult run_study(const std::vector<SimConfig>& grid,
                      const FitConfig& fit_base, int threads) {
  if (grid.empty()) throw DataError("run_study: empty grid");
  StudyResult result;
  for (const auto& cell : grid) {
    CellResult cr;
    cr.config = cell;
    const int R = cell.replicates;
    std::vector<std::vector<ModelIndicator>> truths(R);
    std::vector<std::vector<Vector>> incl(R);
    std::vector<Real> c_hat(R, std::numeric_limits<Real>::quiet_NaN());
    std::vector<Real> f_hat(R, std::numeric_limits<Real>::quiet_NaN());
    std::vector<Real> wall(R, 0.0);
    std::vector<int> failed(R, 0);
    parallel_for(R, threads, [&](int r) {
      const auto t0 = std::chrono::steady_clock::now();
      try {
        auto [data, truth] = generate(cell, r);
        FitConfig fc = fit_base;
        fc.K = cell.K;
        fc.threads = 1;  // replicate-level parallelism only
        fc.seed = Rng::stream(cell.seed, {kFitSeedTag, (std::uint64_t)r})
                      .next_u64();
        const EMState state = cell.algorithm == SimConfig::Algorithm::NormalEm
                                  ? em_fit(data, fc)
                                  : vb_fit(data, fc);
        truths[r] = truth.gamma;
        incl[r] = inclusion_expectations(state);
        c_hat[r] = state.globals.c;
        f_hat[r] = state.globals.f;
      } catch (const std::exception&) {
        failed[r] = 1;
      }
      wall[r] = std::chrono::duration<Real>(std::chrono::steady_clock::now() -
                                            t0)
                    .count();
    });
    std::vector<std::vector<ModelIndicator>> ok_truths;
    std::vector<std::vector<Vector>> ok_incl;
    for (int r = 0; r < R; ++r) {
      if (failed[r]) {
        ++cr.failures;
        continue;
      }
      ok_truths.push_back(std::move(truths[r]));
      ok_incl.push_back(std::move(incl[r]));
      cr.c_estimates.push_back(c_hat[r]);
      cr.f_estimates.push_back(f_hat[r]);
      cr.mean_wall_s += wall[r];
    }
    if (!ok_truths.empty()) {
      cr.rmse_gamma = rmse_gamma(ok_truths, ok_incl);
      cr.mean_wall_s /= static_cast<Real>(ok_truths.size());
      if (cell.algorithm == SimConfig::Algorithm::SkewtVb) {
        cr.rmse_c = rmse_scalar(cell.c, cr.c_estimates);
        cr.rmse_f = rmse_scalar(cell.f, cr.f_estimates);
      }
    }
    result.cells.push_back(std::move(cr));
  }
  return result;
}

void write_results_table(std::ostream& out, const StudyResult& result) {
  out << "M\tp\th\tq_prop\tc\tf\tK\treplicates\talgorithm\trmse_gamma\t"
         "rmse_c\trmse_f\tmean_wall_s\tfailures\n";
  out.precision(10);
  for (const auto& cr : result.cells) {
    const auto& c = cr.config;
    out << c.M << '\t' << c.p << '\t' << c.h << '\t' << c.q_prop << '\t'
        << c.c << '\t' << c.f << '\t' << c.K << '\t' << c.replicates << '\t'
        << (c.algorithm == SimConfig::Algorithm::NormalEm ? "normal-em"
                                                          : "skewt-vb")
        << '\t' << cr.rmse_gamma << '\t' << cr.rmse_c << '\t' << cr.rmse_f
        << '\t' << cr.mean_wall_s << '\t' << cr.failures << "\n";
  }
}

}  // namespace slmm
