#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rbl/gpr.hpp"
#include "rbl/serialization.hpp"
#include "rbl/soft_connection.hpp"
#include "rbl/stats.hpp"

namespace rbl {

struct BodySpec {
  RigidBodyTemplate tmpl;
  Pose truth;
};

// RSSI -> position training set laid out on a regular grid.
struct GprSetup {
  Vector grid_min;
  Vector grid_max;
  std::vector<int> steps;
  GprHyper init;
  bool optimize = true;
  GprTrainOptions train;
};

struct ExperimentConfig {
  int schema = 1;
  std::vector<BodySpec> bodies;
  std::optional<AnchorSet> anchors;
  std::vector<SoftConstraint> constraints;
  Modality modality = Modality::Range;
  std::vector<double> sigmas;
  double nlos_prob = 0.0;
  double nlos_bias = 0.0;
  RssiModelParams rssi;
  std::vector<std::string> estimators;
  int trials = 1;
  std::uint64_t master_seed = 0;
  std::string out_dir = "out";
  int workers = 0; // 0: not set
  bool record_timing = false;
  std::optional<GprSetup> gpr;
  SoftOptions solver;
};

// Known estimator names and the modalities each accepts.
const std::vector<std::string>& estimator_names();

// Parses and validates a schema-1 config; throws ValidationError listing every
// violation found.
ExperimentConfig parse_config(const Json& j);
ExperimentConfig load_config(const std::string& path);

struct TrialResult {
  std::string estimator;
  int sigma_index = 0;
  double sigma = 0.0;
  int trial = 0;
  double angle_err = 0.0; // rad, RMS over bodies
  double trans_err = 0.0; // m, RMS over bodies
  double node_rmse = 0.0; // m, over all nodes of all bodies
  double objective = 0.0;
  bool converged = false;
  double wall_s = 0.0;
};

struct CrlbOverlay {
  double translation_rmse_bound = 0.0;
  double angle_rmse_bound = 0.0;
};

struct CellSummary {
  std::string estimator;
  double sigma = 0.0;
  int trials = 0;
  int converged = 0;
  MetricSummary node_rmse;
  MetricSummary angle_err;
  MetricSummary trans_err;
  std::optional<CrlbOverlay> crlb;
};

struct SummaryStats {
  std::vector<CellSummary> cells;
};

// Per-trial seed: mix64 over FNV-1a of (master_seed as 8 little-endian bytes,
// estimator name, sigma_index as 8 LE bytes, trial as 8 LE bytes).
std::uint64_t trial_seed(std::uint64_t master_seed, const std::string& estimator, int sigma_index, int trial);

// Runs a single (estimator, sigma, trial) cell entry.
TrialResult run_trial(const ExperimentConfig& cfg, const std::string& estimator, int sigma_index, int trial,
                      const std::vector<std::optional<GprModel>>& gpr_models);

// Trained GPR model per sigma level (empty optionals when no estimator needs one).
std::vector<std::optional<GprModel>> prepare_gpr_models(const ExperimentConfig& cfg);

// Trials in canonical order (estimator, sigma, trial). `workers` == 1 runs the
// serial reference loop; otherwise OpenMP with that many threads (0: runtime
// default). Results are identical either way.
std::vector<TrialResult> run_trials(const ExperimentConfig& cfg, int workers);
std::vector<TrialResult> run_trials_serial(const ExperimentConfig& cfg);

// CRLB reference for a cell, when defined for the estimator and modality.
std::optional<CrlbOverlay> crlb_overlay(const ExperimentConfig& cfg, const std::string& estimator, double sigma);

SummaryStats summarize_trials(const ExperimentConfig& cfg, const std::vector<TrialResult>& results);

struct ExperimentOutput {
  std::vector<TrialResult> trials;
  SummaryStats summary;
};

ExperimentOutput run_experiment(const ExperimentConfig& cfg, int workers = 0);

std::string trials_csv(const std::vector<TrialResult>& results);
Json summary_json(const ExperimentConfig& cfg, const SummaryStats& stats);
// sigma,trials,node_rmse,node_rmse_lo,node_rmse_hi,trans_rmse,angle_rmse,crlb_trans,crlb_angle
std::string plotdata_csv(const SummaryStats& stats, const std::string& estimator);

// Writes trials.csv, summary.json and plotdata/<estimator>.csv under
// `out_dir`. Everything is staged to temporary files first; nothing is
// renamed into place unless every file was written.
void emit_outputs(const ExperimentConfig& cfg, const ExperimentOutput& out, const std::string& out_dir);

// Bound-only evaluation: per sigma and body, the CRLB at the true pose.
Json crlb_report(const ExperimentConfig& cfg);

} // namespace rbl
