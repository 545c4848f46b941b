#include "slmm/run.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace slmm {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string mode_name(RunMode m) {
  switch (m) {
    case RunMode::NormalEm: return "normal-em";
    case RunMode::SkewtVb: return "skewt-vb";
    case RunMode::Simulate: return "simulate";
  }
  return "?";
}

std::string join_reals(const std::vector<Real>& v) {
  std::ostringstream os;
  os.precision(17);
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
  return os.str();
}

std::string join_ints(const std::vector<int>& v) {
  std::ostringstream os;
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
  return os.str();
}

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream is(s);
  std::string tok;
  while (std::getline(is, tok, ',')) out.push_back(tok);
  return out;
}

std::vector<Real> parse_reals(const std::string& s) {
  std::vector<Real> out;
  for (const auto& t : split_csv(s)) out.push_back(std::stod(t));
  return out;
}

std::vector<int> parse_ints(const std::string& s) {
  std::vector<int> out;
  for (const auto& t : split_csv(s)) out.push_back(std::stoi(t));
  return out;
}

}  // namespace

std::map<std::string, std::string> RunConfig::flat() const {
  std::map<std::string, std::string> m;
  std::ostringstream tmp;
  tmp.precision(17);
  auto put_real = [&](const char* k, Real v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    m[k] = os.str();
  };
  m["mode"] = mode_name(mode);
  m["input"] = input_path;
  m["out_dir"] = out_dir;
  m["K"] = std::to_string(fit.K);
  m["L"] = std::to_string(fit.L);
  put_real("epsilon", fit.epsilon);
  put_real("rel_tol", fit.rel_tol);
  m["max_iter"] = std::to_string(fit.max_iter);
  m["seed"] = std::to_string(fit.seed);
  m["threads"] = std::to_string(fit.threads);
  m["mc_draws"] = std::to_string(fit.mc_draws);
  put_real("init_a", fit.init_a);
  m["score_includes_prior"] = fit.score_includes_prior ? "1" : "0";
  m["exponent_convention"] =
      fit.conventions.exponent == ExponentConvention::HalfN ? "half_n"
                                                            : "full_n";
  m["slab_norm"] =
      fit.conventions.slab == SlabNorm::Half ? "half" : "literal";
  m["c_objective"] =
      fit.c_objective == CObjective::Profile ? "profile" : "conditional";
  m["paper_latents"] = fit.paper_latents ? "1" : "0";
  m["force_unit_rho"] = fit.force_unit_rho ? "1" : "0";
  if (fit.fix_c) put_real("fix_c", *fit.fix_c);
  if (fit.fix_f) put_real("fix_f", *fit.fix_f);
  m["metric_literal"] = metric_literal ? "1" : "0";
  if (!roles.fixed.empty()) {
    std::string s;
    for (const auto& c : roles.fixed) s += (s.empty() ? "" : ",") + c;
    m["fixed_columns"] = s;
  }
  if (!roles.random.empty()) {
    std::string s;
    for (const auto& c : roles.random) s += (s.empty() ? "" : ",") + c;
    m["random_columns"] = s;
  }
  if (!curve_grid_path.empty()) m["curve_grid"] = curve_grid_path;
  if (mode == RunMode::Simulate) {
    m["sim_M"] = std::to_string(sim_M);
    m["sim_p"] = join_ints(sim_p);
    m["sim_h"] = join_reals(sim_h);
    m["sim_q"] = join_reals(sim_q);
    m["sim_c"] = join_reals(sim_c);
    m["sim_f"] = join_reals(sim_f);
    m["sim_K"] = join_ints(sim_K);
    m["sim_replicates"] = std::to_string(sim_replicates);
    m["sim_algorithm"] =
        sim_algorithm == SimConfig::Algorithm::NormalEm ? "normal-em"
                                                        : "skewt-vb";
  }
  return m;
}

void apply_override(RunConfig& cfg, const std::string& key,
                    const std::string& value) {
  auto bad = [&]() {
    throw DataError("config: bad value '" + value + "' for key '" + key + "'");
  };
  try {
    if (key == "mode") {
      if (value == "normal-em") cfg.mode = RunMode::NormalEm;
      else if (value == "skewt-vb") cfg.mode = RunMode::SkewtVb;
      else if (value == "simulate") cfg.mode = RunMode::Simulate;
      else bad();
    } else if (key == "input") cfg.input_path = value;
    else if (key == "out_dir") cfg.out_dir = value;
    else if (key == "K") cfg.fit.K = std::stoi(value);
    else if (key == "L") cfg.fit.L = std::stoi(value);
    else if (key == "epsilon") cfg.fit.epsilon = std::stod(value);
    else if (key == "rel_tol") cfg.fit.rel_tol = std::stod(value);
    else if (key == "max_iter") cfg.fit.max_iter = std::stoi(value);
    else if (key == "seed") cfg.fit.seed = std::stoull(value);
    else if (key == "threads") cfg.fit.threads = std::stoi(value);
    else if (key == "mc_draws") cfg.fit.mc_draws = std::stoi(value);
    else if (key == "init_a") cfg.fit.init_a = std::stod(value);
    else if (key == "score_includes_prior")
      cfg.fit.score_includes_prior = value != "0";
    else if (key == "exponent_convention") {
      if (value == "half_n")
        cfg.fit.conventions.exponent = ExponentConvention::HalfN;
      else if (value == "full_n")
        cfg.fit.conventions.exponent = ExponentConvention::FullN;
      else bad();
    } else if (key == "slab_norm") {
      if (value == "half") cfg.fit.conventions.slab = SlabNorm::Half;
      else if (value == "literal") cfg.fit.conventions.slab = SlabNorm::Literal;
      else bad();
    } else if (key == "c_objective") {
      if (value == "profile") cfg.fit.c_objective = CObjective::Profile;
      else if (value == "conditional")
        cfg.fit.c_objective = CObjective::Conditional;
      else bad();
    } else if (key == "paper_latents") cfg.fit.paper_latents = value != "0";
    else if (key == "force_unit_rho") cfg.fit.force_unit_rho = value != "0";
    else if (key == "fix_c") cfg.fit.fix_c = std::stod(value);
    else if (key == "fix_f") cfg.fit.fix_f = std::stod(value);
    else if (key == "metric_literal") cfg.metric_literal = value != "0";
    else if (key == "fixed_columns") cfg.roles.fixed = split_csv(value);
    else if (key == "random_columns") cfg.roles.random = split_csv(value);
    else if (key == "curve_grid") cfg.curve_grid_path = value;
    else if (key == "sim_M") cfg.sim_M = std::stoi(value);
    else if (key == "sim_p") cfg.sim_p = parse_ints(value);
    else if (key == "sim_h") cfg.sim_h = parse_reals(value);
    else if (key == "sim_q") cfg.sim_q = parse_reals(value);
    else if (key == "sim_c") cfg.sim_c = parse_reals(value);
    else if (key == "sim_f") cfg.sim_f = parse_reals(value);
    else if (key == "sim_K") cfg.sim_K = parse_ints(value);
    else if (key == "sim_replicates") cfg.sim_replicates = std::stoi(value);
    else if (key == "sim_algorithm") {
      if (value == "normal-em")
        cfg.sim_algorithm = SimConfig::Algorithm::NormalEm;
      else if (value == "skewt-vb")
        cfg.sim_algorithm = SimConfig::Algorithm::SkewtVb;
      else bad();
    } else {
      throw DataError("config: unknown key '" + key + "'");
    }
  } catch (const std::invalid_argument&) {
    bad();
  } catch (const std::out_of_range&) {
    bad();
  }
}

RunConfig parse_config_text(const std::string& text) {
  RunConfig cfg;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto eq = line.find('=');
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    if (eq == std::string::npos)
      throw DataError("config line " + std::to_string(lineno) +
                      ": expected key=value");
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    apply_override(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

RunConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config file: " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return parse_config_text(os.str());
}

RunConfig config_from_manifest(const std::string& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw DataError("cannot open manifest: " + manifest_path);
  json j;
  in >> j;
  if (!j.contains("config"))
    throw DataError("manifest has no 'config' object");
  RunConfig cfg;
  for (const auto& [key, value] : j["config"].items())
    apply_override(cfg, key, value.get<std::string>());
  return cfg;
}

std::vector<SimConfig> build_grid(const RunConfig& cfg) {
  std::vector<SimConfig> grid;
  for (int p : cfg.sim_p)
    for (Real h : cfg.sim_h)
      for (Real q : cfg.sim_q)
        for (Real c : cfg.sim_c)
          for (Real f : cfg.sim_f)
            for (int K : cfg.sim_K) {
              SimConfig sc;
              sc.M = cfg.sim_M;
              sc.p = p;
              sc.h = h;
              sc.q_prop = q;
              sc.c = c;
              sc.f = f;
              sc.K = K;
              sc.replicates = cfg.sim_replicates;
              sc.seed = cfg.fit.seed;
              sc.algorithm = cfg.sim_algorithm;
              grid.push_back(sc);
            }
  return grid;
}

Matrix emit_population_curve(const GlobalParams& globals, const Matrix& grid) {
  const int q = static_cast<int>(globals.zeta_star.size());
  if (grid.cols() != q - 1)
    throw DataError("population curve: grid has " +
                    std::to_string(grid.cols()) + " columns, expected " +
                    std::to_string(q - 1));
  Matrix out(grid.rows(), grid.cols() + 1);
  out.leftCols(grid.cols()) = grid;
  Matrix X(grid.rows(), q);
  X.col(0).setOnes();
  X.rightCols(q - 1) = grid;
  out.col(grid.cols()) = X * globals.zeta_star;
  return out;
}

namespace {

json globals_to_json(const GlobalParams& g) {
  json j;
  j["zeta_star"] = std::vector<Real>(g.zeta_star.data(),
                                     g.zeta_star.data() + g.zeta_star.size());
  j["psi"] = g.psi;
  j["g2"] = g.g2;
  j["a"] = g.a;
  j["b"] = g.b;
  j["a1"] = g.a1;
  j["b1"] = g.b1;
  j["c"] = g.c;
  j["f"] = g.f;
  return j;
}

void write_manifest(const RunConfig& cfg) {
  json j;
  j["version"] = kVersion;
  j["mode"] = mode_name(cfg.mode);
  j["seed"] = cfg.fit.seed;
  j["threads"] = cfg.fit.threads;
  json conf;
  for (const auto& [k, v] : cfg.flat()) conf[k] = v;
  j["config"] = conf;
  std::ofstream out(fs::path(cfg.out_dir) / "manifest.json");
  out << j.dump(2) << "\n";
}

void write_fit_outputs(const RunConfig& cfg, const Dataset& data,
                       const EMState& state) {
  const fs::path dir(cfg.out_dir);

  {
    json j;
    j["globals"] = globals_to_json(state.globals);
    j["q"] = state.q_value;
    j["iterations"] = state.iteration + 1;
    j["converged"] = state.converged;
    json inds = json::array();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const auto& win = state.windows[i];
      json ji;
      ji["id"] = data[i].id;
      json models = json::array(), weights = json::array();
      for (int k = 0; k < win.size(); ++k) {
        models.push_back(win.entries[k].gamma.bitstring());
        weights.push_back(win.weights(k));
      }
      ji["models"] = models;
      ji["weights"] = weights;
      const int top = win.top_index();
      const auto& ts = win.entries[top];
      json beta;
      beta["model"] = ts.gamma.bitstring();
      beta["intercept"] = ts.stats.A(0);
      std::vector<Real> eff(data[i].p(), 0.0);
      int col = 1;
      for (int v = 0; v < data[i].p(); ++v)
        if (ts.gamma.includes(v)) eff[v] = ts.stats.A(col++);
      beta["effects"] = eff;
      ji["top_model_beta"] = beta;
      inds.push_back(ji);
    }
    j["individuals"] = inds;
    std::ofstream out(dir / "fit.json");
    out << j.dump(2) << "\n";
  }

  {
    std::ofstream out(dir / "trace.jsonl");
    for (const auto& rec : state.trace) {
      json j;
      j["iteration"] = rec.iteration;
      j["q"] = rec.q;
      j["globals"] = globals_to_json(rec.globals);
      j["wall_ms"] = rec.wall_ms;
      j["window_replacements"] = rec.window_replacements;
      if (cfg.mode == RunMode::SkewtVb) {
        j["c"] = rec.globals.c;
        j["f"] = rec.globals.f;
        j["q_mc_se"] = rec.q_mc_se;
      }
      out << j.dump() << "\n";
    }
  }

  {
    std::ofstream out(dir / "windows.tsv");
    out.precision(17);
    out << "id\tmodel\tlog_marginal\tweight\n";
    for (std::size_t i = 0; i < data.size(); ++i) {
      const auto& win = state.windows[i];
      for (int k = 0; k < win.size(); ++k)
        out << data[i].id << '\t' << win.entries[k].gamma.bitstring() << '\t'
            << win.entries[k].log_marginal << '\t' << win.weights(k) << "\n";
    }
  }

  {
    std::ofstream out(dir / "trajectories.tsv");
    out.precision(17);
    out << "id\tobs\ty\tfixed_fit\tindividual_fit\n";
    for (std::size_t i = 0; i < data.size(); ++i) {
      const auto [alpha, beta] = state.windows[i].averaged_beta();
      const Vector fixed = data[i].X * state.globals.zeta_star;
      const Vector individual =
          fixed + Vector::Constant(data[i].n(), alpha) + data[i].S * beta;
      for (int r = 0; r < data[i].n(); ++r)
        out << data[i].id << '\t' << r << '\t' << data[i].y(r) << '\t'
            << fixed(r) << '\t' << individual(r) << "\n";
    }
  }

  if (!cfg.curve_grid_path.empty()) {
    std::ifstream in(cfg.curve_grid_path);
    if (!in) throw DataError("cannot open curve grid: " + cfg.curve_grid_path);
    std::vector<std::vector<Real>> rows;
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      std::istringstream ls(line);
      std::vector<Real> row;
      Real v;
      while (ls >> v) row.push_back(v);
      if (!row.empty()) rows.push_back(row);
    }
    Matrix grid(rows.size(), rows.empty() ? 0 : rows.front().size());
    for (std::size_t r = 0; r < rows.size(); ++r)
      for (std::size_t ci = 0; ci < rows[r].size(); ++ci)
        grid(r, ci) = rows[r][ci];
    const Matrix curve = emit_population_curve(state.globals, grid);
    std::ofstream out(dir / "population_curve.tsv");
    out.precision(17);
    for (int r = 0; r < curve.rows(); ++r) {
      for (int ci = 0; ci < curve.cols(); ++ci)
        out << curve(r, ci) << (ci + 1 < curve.cols() ? '\t' : '\n');
    }
  }
}

}  // namespace

int run(const RunConfig& cfg) {
  try {
    fs::create_directories(cfg.out_dir);
    if (cfg.mode == RunMode::Simulate) {
      const StudyResult result = run_study(build_grid(cfg), cfg.fit,
                                           cfg.fit.threads);
      std::ofstream out(fs::path(cfg.out_dir) / "results.tsv");
      write_results_table(out, result);
      write_manifest(cfg);
      return 0;
    }
    const Dataset data = load_dataset_file(cfg.input_path, cfg.roles);
    const EMState state = cfg.mode == RunMode::NormalEm
                              ? em_fit(data, cfg.fit)
                              : vb_fit(data, cfg.fit);
    write_fit_outputs(cfg, data, state);
    write_manifest(cfg);
    return 0;
  } catch (const std::exception& err) {
    json j;
    j["error"] = err.what();
    j["mode"] = mode_name(cfg.mode);
    std::error_code ec;
    fs::create_directories(cfg.out_dir, ec);
    std::ofstream out(fs::path(cfg.out_dir) / "error.json");
    out << j.dump(2) << "\n";
    return 1;
  }
}

}  // namespace slmm
