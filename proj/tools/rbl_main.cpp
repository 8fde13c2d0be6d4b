// rbl: Monte Carlo experiments for rigid-body localization.
//
//   rbl run <config.json> [--out DIR] [--workers N] [--seed S] [--timing]
//   rbl validate <config.json>
//   rbl crlb <config.json> [--out DIR]
//
// Exit codes: 0 success, 2 validation failure, 1 I/O or runtime failure.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "rbl/error.hpp"
#include "rbl/harness.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitIo = 1;
constexpr int kExitInvalid = 2;

int resolve_workers(int cli, const rbl::ExperimentConfig& cfg) {
  if (cli > 0) return cli;
  if (const char* env = std::getenv("RBL_WORKERS")) {
    try {
      const int w = std::stoi(env);
      if (w > 0) return w;
    } catch (const std::exception&) {
    }
    std::cerr << "warning: ignoring invalid RBL_WORKERS='" << env << "'\n";
  }
  return cfg.workers;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Rigid-body localization experiment harness"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  int workers = 0;
  std::uint64_t seed = 0;
  bool timing = false;

  auto* run = app.add_subcommand("run", "Run a Monte Carlo experiment");
  run->add_option("config", config_path, "Experiment config (JSON)")->required();
  auto* out_opt = run->add_option("--out", out_dir, "Output directory (overrides config)");
  run->add_option("--workers", workers, "Worker threads (falls back to RBL_WORKERS)")->check(CLI::PositiveNumber);
  auto* seed_opt = run->add_option("--seed", seed, "Master seed (overrides config)");
  run->add_flag("--timing", timing, "Record per-trial wall time (makes trials.csv non-reproducible)");

  auto* validate = app.add_subcommand("validate", "Validate a config without running it");
  validate->add_option("config", config_path, "Experiment config (JSON)")->required();

  auto* crlb = app.add_subcommand("crlb", "Evaluate the Cramer-Rao bound at the true poses");
  crlb->add_option("config", config_path, "Experiment config (JSON)")->required();
  auto* crlb_out = crlb->add_option("--out", out_dir, "Also write crlb.json into this directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInvalid;
  }

  rbl::ExperimentConfig cfg;
  try {
    cfg = rbl::load_config(config_path);
  } catch (const rbl::ValidationError& e) {
    std::cerr << e.what() << '\n';
    return kExitInvalid;
  } catch (const rbl::IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitIo;
  }

  if (*validate) {
    std::cout << "config OK: " << cfg.bodies.size() << " bod" << (cfg.bodies.size() == 1 ? "y" : "ies") << ", "
              << cfg.estimators.size() << " estimator(s), " << cfg.sigmas.size() << " sigma level(s), " << cfg.trials
              << " trial(s) per cell\n";
    return kExitOk;
  }

  try {
    if (*crlb) {
      const rbl::Json report = rbl::crlb_report(cfg);
      std::cout << report.dump(2) << '\n';
      if (*crlb_out) {
        std::filesystem::create_directories(out_dir);
        std::ofstream f(std::filesystem::path(out_dir) / "crlb.json");
        if (!(f << report.dump(2) << '\n')) throw rbl::IoError("cannot write crlb.json under " + out_dir);
      }
      return kExitOk;
    }

    if (*seed_opt) cfg.master_seed = seed;
    if (*out_opt) cfg.out_dir = out_dir;
    if (timing) cfg.record_timing = true;
    const int w = resolve_workers(workers, cfg);
    const auto out = rbl::run_experiment(cfg, w);
    rbl::emit_outputs(cfg, out, cfg.out_dir);
    std::cout << "wrote " << out.trials.size() << " trials to " << cfg.out_dir << '\n';
    for (const auto& c : out.summary.cells) {
      std::cout << "  " << c.estimator << " sigma=" << c.sigma << " node_rmse=" << c.node_rmse.rmse
                << " converged=" << c.converged << "/" << c.trials;
      if (c.crlb) std::cout << " crlb_trans=" << c.crlb->translation_rmse_bound;
      std::cout << '\n';
    }
    return kExitOk;
  } catch (const rbl::IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitIo;
  }
}
