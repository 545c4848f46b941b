#pragma once

#include <map>

#include "slmm/dataset_io.hpp"
#include "slmm/sim.hpp"

namespace slmm {

inline constexpr const char* kVersion = "0.3.0";

enum class RunMode { NormalEm, SkewtVb, Simulate };

struct RunConfig {
  RunMode mode = RunMode::NormalEm;
  std::string input_path;
  std::string out_dir = ".";
  FitConfig fit;
  ColumnRoles roles;
  bool metric_literal = false;

  // simulate mode: factor lists crossed into a grid
  int sim_M = 50;
  std::vector<int> sim_p = {10};
  std::vector<Real> sim_h = {0.1};
  std::vector<Real> sim_q = {0.15};
  std::vector<Real> sim_c = {0.0};
  std::vector<Real> sim_f = {5.0};
  std::vector<int> sim_K = {30};
  int sim_replicates = 5;
  SimConfig::Algorithm sim_algorithm = SimConfig::Algorithm::SkewtVb;

  // optional population-curve evaluation
  std::string curve_grid_path;

  // effective flat key-value view (echoed into the manifest)
  std::map<std::string, std::string> flat() const;
};

// Flat key=value config file; '#' comments and blank lines ignored.
RunConfig parse_config_file(const std::string& path);
RunConfig parse_config_text(const std::string& text);
void apply_override(RunConfig& cfg, const std::string& key,
                    const std::string& value);
RunConfig config_from_manifest(const std::string& manifest_path);

// Executes the selected mode and writes fit.json, trace.jsonl, windows.tsv,
// trajectories.tsv and manifest.json (results.tsv for simulate) under
// out_dir. Returns 0 on success; failures write error.json and return 1.
int run(const RunConfig& cfg);

// Population fixed-effect curve over a user grid (columns x_1..x_{q-1};
// intercept added). Returns the grid with a fitted-value column appended.
Matrix emit_population_curve(const GlobalParams& globals, const Matrix& grid);

std::vector<SimConfig> build_grid(const RunConfig& cfg);

}  // namespace slmm
