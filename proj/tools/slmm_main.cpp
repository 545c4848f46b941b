#include <CLI11.hpp>
#include <iostream>

#include "slmm/run.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Bayesian per-individual variable selection for sparse linear "
               "mixed effects models (normal EM and skew-t VB)"};
  app.set_version_flag("--version", std::string("slmm ") + slmm::kVersion);

  std::string mode, config_path, manifest_path, input, out_dir;
  int K = -1, L = -2, max_iter = -1, threads = -1;
  long long seed = -1;

  app.add_option("--mode", mode, "normal-em | skewt-vb | simulate");
  app.add_option("--config", config_path, "flat key=value config file");
  app.add_option("--from-manifest", manifest_path,
                 "re-run from a previously written manifest.json");
  app.add_option("--input", input, "input data file (id,y,x_*,s_* columns)");
  app.add_option("--out-dir", out_dir, "output directory");
  app.add_option("--seed", seed, "RNG seed");
  app.add_option("--threads", threads, "worker threads");
  app.add_option("--K", K, "Occam window size");
  app.add_option("--L", L, "window-search updates per iteration");
  app.add_option("--max-iter", max_iter, "iteration cap");

  CLI11_PARSE(app, argc, argv);

  try {
    slmm::RunConfig cfg;
    if (!manifest_path.empty())
      cfg = slmm::config_from_manifest(manifest_path);
    else if (!config_path.empty())
      cfg = slmm::parse_config_file(config_path);
    if (!mode.empty()) slmm::apply_override(cfg, "mode", mode);
    if (!input.empty()) slmm::apply_override(cfg, "input", input);
    if (!out_dir.empty()) slmm::apply_override(cfg, "out_dir", out_dir);
    if (seed >= 0) slmm::apply_override(cfg, "seed", std::to_string(seed));
    if (threads > 0)
      slmm::apply_override(cfg, "threads", std::to_string(threads));
    if (K > 0) slmm::apply_override(cfg, "K", std::to_string(K));
    if (L > -2) slmm::apply_override(cfg, "L", std::to_string(L));
    if (max_iter > 0)
      slmm::apply_override(cfg, "max_iter", std::to_string(max_iter));
    return slmm::run(cfg);
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 2;
  }
}
