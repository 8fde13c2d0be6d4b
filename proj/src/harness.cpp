#include "rbl/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <omp.h>

#include "rbl/error.hpp"
#include "rbl/random.hpp"

namespace rbl {

namespace fs = std::filesystem;

const std::vector<std::string>& estimator_names() {
  static const std::vector<std::string> names = {"point_ls", "doa_rbl", "range_rbl_cwls", "rssi_rbl",
                                                 "gpr",      "gpr_rbl", "soft_joint"};
  return names;
}

namespace {

bool accepts(const std::string& est, Modality m) {
  if (est == "doa_rbl") return m == Modality::Doa;
  if (est == "range_rbl_cwls") return m == Modality::Range;
  if (est == "rssi_rbl" || est == "gpr" || est == "gpr_rbl") return m == Modality::Rssi;
  return true;
}

bool has_crlb(const std::string& est) { return est == "doa_rbl" || est == "range_rbl_cwls" || est == "rssi_rbl"; }

bool needs_gpr(const std::string& est) { return est == "gpr" || est == "gpr_rbl"; }

// Runs `f`, turning any exception into a recorded violation.
template <class F>
void collect(std::vector<std::string>& errs, const std::string& where, F&& f) {
  try {
    f();
  } catch (const ValidationError& e) {
    for (const auto& v : e.violations()) errs.push_back(where + ": " + v);
  } catch (const std::exception& e) {
    errs.push_back(where + ": " + e.what());
  }
}

int reference_from_json(const Json& j) {
  if (j.is_string()) {
    if (j.get<std::string>() == "centroid") return kCentroid;
    throw InvalidParameter("reference point must be \"centroid\" or a node index");
  }
  return j.get<int>();
}

} // namespace

ExperimentConfig parse_config(const Json& j) {
  std::vector<std::string> errs;
  ExperimentConfig cfg;
  if (!j.is_object()) throw ValidationError({"config must be a JSON object"});

  collect(errs, "schema", [&] {
    cfg.schema = j.at("schema").get<int>();
    if (cfg.schema != 1) throw InvalidParameter("unsupported schema version " + std::to_string(cfg.schema));
  });

  collect(errs, "modality", [&] { cfg.modality = modality_from_string(j.at("modality").get<std::string>()); });

  if (!j.contains("scenario") || !j["scenario"].is_object()) {
    errs.push_back("scenario: missing object");
  } else {
    const Json& sc = j["scenario"];
    collect(errs, "scenario.anchors", [&] { cfg.anchors.emplace(points_from_json(sc.at("anchors"), "anchors")); });
    if (!sc.contains("bodies") || !sc["bodies"].is_array() || sc["bodies"].empty()) {
      errs.push_back("scenario.bodies: need a non-empty array");
    } else {
      for (std::size_t b = 0; b < sc["bodies"].size(); ++b) {
        collect(errs, "scenario.bodies[" + std::to_string(b) + "]", [&] {
          const Json& body = sc["bodies"][b];
          cfg.bodies.push_back({template_from_json(body.at("template")), pose_from_json(body.at("pose"))});
          const auto& bs = cfg.bodies.back();
          if (bs.tmpl.dim() != bs.truth.dim()) throw DimensionMismatch("template and pose dimensions differ");
        });
      }
    }
    if (sc.contains("constraints")) {
      for (std::size_t c = 0; c < sc["constraints"].size(); ++c) {
        collect(errs, "scenario.constraints[" + std::to_string(c) + "]", [&] {
          const Json& cj = sc["constraints"][c];
          SoftConstraint con;
          con.kind = constraint_kind_from_string(cj.at("kind").get<std::string>());
          const auto bodies = cj.at("bodies").get<std::vector<int>>();
          if (bodies.size() != 2) throw InvalidParameter("\"bodies\" must list exactly two body indices");
          con.body_i = bodies[0];
          con.body_j = bodies[1];
          if (cj.contains("reference_points")) {
            con.ref_i = reference_from_json(cj["reference_points"].at(0));
            con.ref_j = reference_from_json(cj["reference_points"].at(1));
          }
          con.lower = cj.at("lower").get<double>();
          con.upper = cj.at("upper").get<double>();
          con.weight = cj.value("weight", 1.0);
          cfg.constraints.push_back(con);
        });
      }
    }
  }

  collect(errs, "sigmas", [&] {
    cfg.sigmas = j.at("sigmas").get<std::vector<double>>();
    if (cfg.sigmas.empty()) throw InvalidParameter("need at least one sigma value");
    for (double s : cfg.sigmas)
      if (!(s >= 0.0) || !std::isfinite(s)) throw InvalidParameter("sigma values must be >= 0");
  });
  if (j.contains("noise")) {
    collect(errs, "noise", [&] {
      cfg.nlos_prob = j["noise"].value("nlos_prob", 0.0);
      cfg.nlos_bias = j["noise"].value("nlos_bias", 0.0);
      NoiseSpec{0.0, cfg.nlos_prob, cfg.nlos_bias}.validate();
    });
  }
  if (j.contains("rssi_model")) {
    collect(errs, "rssi_model", [&] {
      cfg.rssi.p0 = j["rssi_model"].value("p0", cfg.rssi.p0);
      cfg.rssi.d0 = j["rssi_model"].value("d0", cfg.rssi.d0);
      cfg.rssi.eta = j["rssi_model"].value("eta", cfg.rssi.eta);
      cfg.rssi.validate();
    });
  }
  collect(errs, "estimators", [&] {
    cfg.estimators = j.at("estimators").get<std::vector<std::string>>();
    if (cfg.estimators.empty()) throw InvalidParameter("need at least one estimator");
  });
  for (const auto& e : cfg.estimators) {
    const auto& names = estimator_names();
    if (std::find(names.begin(), names.end(), e) == names.end()) {
      errs.push_back("estimators: unknown estimator '" + e + "'");
    } else if (!accepts(e, cfg.modality)) {
      errs.push_back("estimators: '" + e + "' does not accept " + std::string(to_string(cfg.modality)) +
                     " observations");
    } else if (needs_gpr(e) && !j.contains("gpr")) {
      errs.push_back("estimators: '" + e + "' needs a \"gpr\" section");
    }
  }
  for (std::size_t a = 0; a < cfg.estimators.size(); ++a)
    for (std::size_t b = a + 1; b < cfg.estimators.size(); ++b)
      if (cfg.estimators[a] == cfg.estimators[b]) errs.push_back("estimators: '" + cfg.estimators[a] + "' listed twice");

  collect(errs, "trials", [&] {
    cfg.trials = j.at("trials").get<int>();
    if (cfg.trials < 1) throw InvalidParameter("trials must be >= 1");
  });
  collect(errs, "master_seed", [&] { cfg.master_seed = j.at("master_seed").get<std::uint64_t>(); });
  if (j.contains("output")) collect(errs, "output", [&] { cfg.out_dir = j["output"].value("dir", cfg.out_dir); });
  if (j.contains("workers")) {
    collect(errs, "workers", [&] {
      cfg.workers = j["workers"].get<int>();
      if (cfg.workers < 1) throw InvalidParameter("workers must be >= 1");
    });
  }
  cfg.record_timing = j.value("record_timing", false);

  if (j.contains("solver")) {
    collect(errs, "solver", [&] {
      const Json& s = j["solver"];
      auto& gn = cfg.solver.estimator.gauss_newton;
      gn.max_iterations = s.value("max_iterations", gn.max_iterations);
      gn.gradient_tol = s.value("gradient_tol", gn.gradient_tol);
      gn.step_tol = s.value("step_tol", gn.step_tol);
      cfg.solver.estimator.multistart_angles = s.value("multistart_angles", cfg.solver.estimator.multistart_angles);
      cfg.solver.penalty_rounds = s.value("penalty_rounds", cfg.solver.penalty_rounds);
      cfg.solver.penalty_growth = s.value("penalty_growth", cfg.solver.penalty_growth);
      if (gn.max_iterations < 1 || cfg.solver.estimator.multistart_angles < 1 || cfg.solver.penalty_rounds < 1 ||
          !(cfg.solver.penalty_growth >= 1.0))
        throw InvalidParameter("solver limits must be positive (penalty_growth >= 1)");
    });
  }
  cfg.solver.estimator.rssi = cfg.rssi;

  if (j.contains("gpr")) {
    collect(errs, "gpr", [&] {
      const Json& g = j["gpr"];
      GprSetup setup;
      const auto lo = g.at("grid_min").get<std::vector<double>>();
      const auto hi = g.at("grid_max").get<std::vector<double>>();
      setup.steps = g.at("steps").get<std::vector<int>>();
      if (lo.size() != hi.size() || lo.size() != setup.steps.size())
        throw DimensionMismatch("grid_min, grid_max and steps must have equal length");
      for (int s : setup.steps)
        if (s < 2) throw InvalidParameter("grid steps must be >= 2 per axis");
      setup.grid_min = Eigen::Map<const Vector>(lo.data(), static_cast<Eigen::Index>(lo.size()));
      setup.grid_max = Eigen::Map<const Vector>(hi.data(), static_cast<Eigen::Index>(hi.size()));
      setup.optimize = g.value("optimize", true);
      setup.train.max_iterations = g.value("max_iterations", setup.train.max_iterations);
      setup.init.amp = 0.0; // 0 marks "derive from data"
      if (g.contains("hyper")) {
        const Json& h = g["hyper"];
        setup.init.amp = h.value("amp", 0.0);
        setup.init.lin = h.value("lin", 0.0);
        setup.init.noise_var = h.value("noise_var", 0.0);
        if (h.contains("length_scales")) {
          const auto ls = h["length_scales"].get<std::vector<double>>();
          setup.init.length_scales = Eigen::Map<const Vector>(ls.data(), static_cast<Eigen::Index>(ls.size()));
        }
      }
      cfg.gpr = setup;
    });
  }

  // Cross-field checks.
  if (cfg.anchors) {
    for (std::size_t b = 0; b < cfg.bodies.size(); ++b)
      if (cfg.bodies[b].tmpl.dim() != cfg.anchors->dim())
        errs.push_back("scenario.bodies[" + std::to_string(b) + "]: dimension differs from the anchors");
    if (cfg.gpr && cfg.gpr->grid_min.size() != cfg.anchors->dim())
      errs.push_back("gpr: grid dimension differs from the anchors");
    if (cfg.gpr && cfg.gpr->init.length_scales.size() != 0 &&
        cfg.gpr->init.length_scales.size() != cfg.anchors->size())
      errs.push_back("gpr.hyper.length_scales: need one per anchor");
  }
  if (cfg.modality == Modality::Doa)
    for (std::size_t b = 0; b < cfg.bodies.size(); ++b)
      if (cfg.bodies[b].tmpl.dim() != 2) errs.push_back("scenario.bodies[" + std::to_string(b) + "]: DoA needs 2D");
  if (!cfg.bodies.empty()) {
    MultiBodyModel shape;
    for (const auto& b : cfg.bodies) {
      shape.bodies.push_back(b.tmpl);
      shape.poses.push_back(b.truth);
    }
    for (std::size_t c = 0; c < cfg.constraints.size(); ++c)
      collect(errs, "scenario.constraints[" + std::to_string(c) + "]",
              [&] { cfg.constraints[c].validate(shape); });
  }

  if (!errs.empty()) throw ValidationError(std::move(errs));
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path);
  Json j;
  try {
    in >> j;
  } catch (const Json::exception& e) {
    throw ValidationError({std::string("config is not valid JSON: ") + e.what()});
  }
  return parse_config(j);
}

std::uint64_t trial_seed(std::uint64_t master_seed, const std::string& estimator, int sigma_index, int trial) {
  auto le_bytes = [](std::uint64_t v) {
    std::string s(8, '\0');
    for (int i = 0; i < 8; ++i) s[static_cast<std::size_t>(i)] = static_cast<char>((v >> (8 * i)) & 0xFF);
    return s;
  };
  std::uint64_t h = fnv1a64(le_bytes(master_seed));
  h = fnv1a64(estimator, h);
  h = fnv1a64(le_bytes(static_cast<std::uint64_t>(sigma_index)), h);
  h = fnv1a64(le_bytes(static_cast<std::uint64_t>(trial)), h);
  return mix64(h);
}

namespace {

Pose pose_from_points(const RigidBodyTemplate& tmpl, const Matrix& pts) {
  if (tmpl.size() == 1) {
    Pose p = Pose::identity(tmpl.dim());
    p.translation = pts.col(0) - tmpl.nodes().col(0);
    return p;
  }
  return procrustes_align(tmpl, pts).pose;
}

GprHyper default_hyper(const GprSetup& setup, const Matrix& inputs, const Matrix& targets) {
  GprHyper h = setup.init;
  if (!(h.amp > 0.0)) {
    const Matrix c = targets.colwise() - targets.rowwise().mean();
    h.amp = std::max(c.squaredNorm() / static_cast<double>(targets.size()), 1e-6);
  }
  if (h.length_scales.size() == 0) {
    h.length_scales.resize(inputs.rows());
    for (Eigen::Index m = 0; m < inputs.rows(); ++m) {
      const Vector row = inputs.row(m).transpose();
      const double var = (row.array() - row.mean()).square().mean();
      h.length_scales(m) = std::max(var, 1e-6);
    }
  }
  if (!setup.optimize && h.noise_var == 0.0) h.noise_var = 1e-6 * h.amp;
  return h;
}

} // namespace

std::vector<std::optional<GprModel>> prepare_gpr_models(const ExperimentConfig& cfg) {
  std::vector<std::optional<GprModel>> models(cfg.sigmas.size());
  const bool needed = std::any_of(cfg.estimators.begin(), cfg.estimators.end(), needs_gpr);
  if (!needed || !cfg.gpr) return models;
  const GprSetup& setup = *cfg.gpr;
  const int d = static_cast<int>(setup.grid_min.size());
  int n = 1;
  for (int s : setup.steps) n *= s;
  Matrix grid(d, n);
  for (int i = 0; i < n; ++i) {
    int rem = i;
    for (int a = 0; a < d; ++a) {
      const int idx = rem % setup.steps[static_cast<std::size_t>(a)];
      rem /= setup.steps[static_cast<std::size_t>(a)];
      const double f = static_cast<double>(idx) / (setup.steps[static_cast<std::size_t>(a)] - 1);
      grid(a, i) = setup.grid_min(a) + f * (setup.grid_max(a) - setup.grid_min(a));
    }
  }
  for (std::size_t s = 0; s < cfg.sigmas.size(); ++s) {
    const NoiseSpec noise{cfg.sigmas[s], 0.0, 0.0};
    const ObservationSet train = gen_rssi(TransformedBody{grid}, *cfg.anchors, cfg.rssi, noise,
                                          derive_seed(cfg.master_seed, {0x677072ULL, s}));
    const GprHyper h = default_hyper(setup, train.values, grid);
    models[s] = setup.optimize ? gpr_train(train.values, grid, h, setup.train) : gpr_fit(train.values, grid, h);
  }
  return models;
}

TrialResult run_trial(const ExperimentConfig& cfg, const std::string& estimator, int sigma_index, int trial,
                      const std::vector<std::optional<GprModel>>& gpr_models) {
  const auto t0 = std::chrono::steady_clock::now();
  TrialResult tr;
  tr.estimator = estimator;
  tr.sigma_index = sigma_index;
  tr.sigma = cfg.sigmas[static_cast<std::size_t>(sigma_index)];
  tr.trial = trial;

  const std::uint64_t seed = trial_seed(cfg.master_seed, estimator, sigma_index, trial);
  const NoiseSpec noise{tr.sigma, cfg.nlos_prob, cfg.nlos_bias};
  const AnchorSet& anchors = *cfg.anchors;
  const int b_count = static_cast<int>(cfg.bodies.size());

  try {
    std::vector<ObservationSet> obs;
    std::vector<RigidBodyTemplate> templates;
    for (int b = 0; b < b_count; ++b) {
      const auto& body = cfg.bodies[static_cast<std::size_t>(b)];
      obs.push_back(generate(cfg.modality, apply_pose(body.tmpl, body.truth), anchors, noise, cfg.rssi,
                             derive_seed(seed, {static_cast<std::uint64_t>(b)})));
      templates.push_back(body.tmpl);
    }

    std::vector<Pose> poses;
    std::vector<Matrix> nodes;
    bool converged = true;
    double objective = 0.0;
    auto take = [&](const EstimationResult& r, const RigidBodyTemplate& tmpl) {
      poses.push_back(r.pose ? *r.pose : pose_from_points(tmpl, r.node_positions));
      nodes.push_back(r.node_positions);
      converged = converged && r.converged;
      objective += r.objective;
    };
    const auto& eopts = cfg.solver.estimator;

    if (estimator == "soft_joint") {
      const JointResult jr = joint_estimate_soft(obs, {anchors}, templates, cfg.constraints, std::nullopt, cfg.solver);
      for (int b = 0; b < b_count; ++b) {
        const auto& r = jr.bodies[static_cast<std::size_t>(b)];
        if (!r.pose) throw Error("joint estimation failed for body " + std::to_string(b) + ": " + r.note);
        take(r, templates[static_cast<std::size_t>(b)]);
      }
    } else {
      for (int b = 0; b < b_count; ++b) {
        const auto& ob = obs[static_cast<std::size_t>(b)];
        const auto& tmpl = templates[static_cast<std::size_t>(b)];
        if (estimator == "point_ls") {
          take(point_ls_locate(ob, anchors, anchors.positions().rowwise().mean(), eopts), tmpl);
        } else if (estimator == "gpr" || estimator == "gpr_rbl") {
          const auto& model = gpr_models[static_cast<std::size_t>(sigma_index)];
          if (!model) throw Error("no GPR model prepared");
          const Matrix means = gpr_locate(*model, ob.values);
          if (estimator == "gpr_rbl") {
            EstimationResult r = gpr_rbl_project(means, tmpl);
            r.converged = r.converged && model->converged;
            take(r, tmpl);
          } else {
            EstimationResult r;
            r.node_positions = means;
            r.converged = model->converged;
            take(r, tmpl);
          }
        } else {
          take(estimate_rbl(ob, anchors, tmpl, std::nullopt, eopts), tmpl);
        }
      }
    }

    double ang2 = 0.0, tr2 = 0.0, node2 = 0.0;
    int node_count = 0;
    for (int b = 0; b < b_count; ++b) {
      const auto& body = cfg.bodies[static_cast<std::size_t>(b)];
      const auto ub = static_cast<std::size_t>(b);
      const double da = rotation_distance(poses[ub].rotation, body.truth.rotation);
      ang2 += da * da;
      tr2 += (poses[ub].translation - body.truth.translation).squaredNorm();
      node2 += (nodes[ub] - apply_pose(body.tmpl, body.truth).positions).squaredNorm();
      node_count += body.tmpl.size();
    }
    tr.angle_err = std::sqrt(ang2 / b_count);
    tr.trans_err = std::sqrt(tr2 / b_count);
    tr.node_rmse = std::sqrt(node2 / node_count);
    tr.objective = objective;
    tr.converged = converged;
  } catch (const Error&) {
    tr.angle_err = tr.trans_err = tr.node_rmse = tr.objective = std::nan("");
    tr.converged = false;
  }
  if (cfg.record_timing)
    tr.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return tr;
}

namespace {

struct Task {
  std::size_t estimator;
  int sigma_index;
  int trial;
};

std::vector<Task> task_list(const ExperimentConfig& cfg) {
  std::vector<Task> tasks;
  for (std::size_t e = 0; e < cfg.estimators.size(); ++e)
    for (int s = 0; s < static_cast<int>(cfg.sigmas.size()); ++s)
      for (int t = 0; t < cfg.trials; ++t) tasks.push_back({e, s, t});
  return tasks;
}

} // namespace

std::vector<TrialResult> run_trials_serial(const ExperimentConfig& cfg) {
  const auto models = prepare_gpr_models(cfg);
  const auto tasks = task_list(cfg);
  std::vector<TrialResult> results;
  results.reserve(tasks.size());
  for (const auto& t : tasks) results.push_back(run_trial(cfg, cfg.estimators[t.estimator], t.sigma_index, t.trial, models));
  return results;
}

std::vector<TrialResult> run_trials(const ExperimentConfig& cfg, int workers) {
  if (workers == 1) return run_trials_serial(cfg);
  const auto models = prepare_gpr_models(cfg);
  const auto tasks = task_list(cfg);
  std::vector<TrialResult> results(tasks.size());
  const int threads = workers > 0 ? workers : omp_get_max_threads();
  std::exception_ptr failure;
  const auto n = static_cast<long>(tasks.size());
#pragma omp parallel for schedule(dynamic) num_threads(threads)
  for (long i = 0; i < n; ++i) {
    try {
      const Task& t = tasks[static_cast<std::size_t>(i)];
      results[static_cast<std::size_t>(i)] = run_trial(cfg, cfg.estimators[t.estimator], t.sigma_index, t.trial, models);
    } catch (...) {
#pragma omp critical(rbl_trial_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return results;
}

std::optional<CrlbOverlay> crlb_overlay(const ExperimentConfig& cfg, const std::string& estimator, double sigma) {
  if (!has_crlb(estimator) || !accepts(estimator, cfg.modality) || !(sigma > 0.0)) return std::nullopt;
  double t2 = 0.0, a2 = 0.0;
  try {
    for (const auto& b : cfg.bodies) {
      const CrlbResult c = crlb_numeric(b.truth, b.tmpl, *cfg.anchors, cfg.modality, sigma, cfg.rssi);
      t2 += std::pow(c.translation_rmse_bound(), 2);
      a2 += std::pow(c.angle_rmse_bound(), 2);
    }
  } catch (const Error&) {
    return std::nullopt;
  }
  const double nb = static_cast<double>(cfg.bodies.size());
  return CrlbOverlay{std::sqrt(t2 / nb), std::sqrt(a2 / nb)};
}

SummaryStats summarize_trials(const ExperimentConfig& cfg, const std::vector<TrialResult>& results) {
  SummaryStats stats;
  std::map<std::pair<std::string, int>, std::vector<const TrialResult*>> cells;
  for (const auto& r : results) cells[{r.estimator, r.sigma_index}].push_back(&r);

  for (const auto& est : cfg.estimators) {
    for (int s = 0; s < static_cast<int>(cfg.sigmas.size()); ++s) {
      auto it = cells.find({est, s});
      if (it == cells.end()) continue;
      CellSummary cell;
      cell.estimator = est;
      cell.sigma = cfg.sigmas[static_cast<std::size_t>(s)];
      std::vector<double> node, ang, trans;
      for (const TrialResult* r : it->second) {
        ++cell.trials;
        if (r->converged) ++cell.converged;
        if (std::isfinite(r->node_rmse)) node.push_back(r->node_rmse);
        if (std::isfinite(r->angle_err)) ang.push_back(r->angle_err);
        if (std::isfinite(r->trans_err)) trans.push_back(r->trans_err);
      }
      const std::uint64_t base = derive_seed(cfg.master_seed, {fnv1a64(est), static_cast<std::uint64_t>(s)});
      cell.node_rmse = summarize(node, derive_seed(base, {0}));
      cell.angle_err = summarize(ang, derive_seed(base, {1}));
      cell.trans_err = summarize(trans, derive_seed(base, {2}));
      cell.crlb = crlb_overlay(cfg, est, cell.sigma);
      stats.cells.push_back(std::move(cell));
    }
  }
  return stats;
}

ExperimentOutput run_experiment(const ExperimentConfig& cfg, int workers) {
  ExperimentOutput out;
  out.trials = run_trials(cfg, workers);
  out.summary = summarize_trials(cfg, out.trials);
  return out;
}

std::string trials_csv(const std::vector<TrialResult>& results) {
  std::ostringstream os;
  os << "estimator,sigma,trial,angle_err,trans_err,node_rmse,objective,converged,wall_s\n";
  for (const auto& r : results) {
    os << r.estimator << ',' << format_double(r.sigma) << ',' << r.trial << ',' << format_double(r.angle_err) << ','
       << format_double(r.trans_err) << ',' << format_double(r.node_rmse) << ',' << format_double(r.objective) << ','
       << (r.converged ? 1 : 0) << ',' << format_double(r.wall_s) << '\n';
  }
  return os.str();
}

namespace {

Json metric_json(const MetricSummary& m) {
  return Json{{"n", m.n},
              {"mean", m.mean},
              {"median", m.median},
              {"rmse", m.rmse},
              {"mean_ci", {m.mean_ci.lo, m.mean_ci.hi}},
              {"median_ci", {m.median_ci.lo, m.median_ci.hi}},
              {"rmse_ci", {m.rmse_ci.lo, m.rmse_ci.hi}}};
}

} // namespace

Json summary_json(const ExperimentConfig& cfg, const SummaryStats& stats) {
  Json cells = Json::array();
  for (const auto& c : stats.cells) {
    Json cj{{"estimator", c.estimator},
            {"sigma", c.sigma},
            {"trials", c.trials},
            {"converged", c.converged},
            {"node_rmse", metric_json(c.node_rmse)},
            {"angle_err", metric_json(c.angle_err)},
            {"trans_err", metric_json(c.trans_err)}};
    if (c.crlb)
      cj["crlb"] = Json{{"translation_rmse_bound", c.crlb->translation_rmse_bound},
                        {"angle_rmse_bound", c.crlb->angle_rmse_bound}};
    cells.push_back(std::move(cj));
  }
  return Json{{"schema", 1},
              {"modality", std::string(to_string(cfg.modality))},
              {"master_seed", cfg.master_seed},
              {"trials_per_cell", cfg.trials},
              {"cells", std::move(cells)}};
}

std::string plotdata_csv(const SummaryStats& stats, const std::string& estimator) {
  std::ostringstream os;
  os << "sigma,trials,node_rmse,node_rmse_lo,node_rmse_hi,trans_rmse,angle_rmse,crlb_trans,crlb_angle\n";
  for (const auto& c : stats.cells) {
    if (c.estimator != estimator) continue;
    os << format_double(c.sigma) << ',' << c.trials << ',' << format_double(c.node_rmse.rmse) << ','
       << format_double(c.node_rmse.rmse_ci.lo) << ',' << format_double(c.node_rmse.rmse_ci.hi) << ','
       << format_double(c.trans_err.rmse) << ',' << format_double(c.angle_err.rmse) << ',';
    if (c.crlb) os << format_double(c.crlb->translation_rmse_bound) << ',' << format_double(c.crlb->angle_rmse_bound);
    else os << ',';
    os << '\n';
  }
  return os.str();
}

void emit_outputs(const ExperimentConfig& cfg, const ExperimentOutput& out, const std::string& out_dir) {
  const fs::path root(out_dir);
  std::error_code ec;
  fs::create_directories(root / "plotdata", ec);
  if (ec) throw IoError("cannot create output directory " + (root / "plotdata").string() + ": " + ec.message());

  std::vector<std::pair<fs::path, std::string>> files;
  files.emplace_back(root / "trials.csv", trials_csv(out.trials));
  for (const auto& est : cfg.estimators)
    files.emplace_back(root / "plotdata" / (est + ".csv"), plotdata_csv(out.summary, est));
  files.emplace_back(root / "summary.json", summary_json(cfg, out.summary).dump(2) + "\n");

  std::vector<fs::path> staged;
  auto discard = [&] {
    for (const auto& p : staged) fs::remove(p, ec);
  };
  for (const auto& [path, text] : files) {
    fs::path tmp = path;
    tmp += ".tmp";
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) {
      discard();
      throw IoError("cannot write " + tmp.string());
    }
    staged.push_back(tmp);
    f << text;
    f.close();
    if (!f) {
      discard();
      throw IoError("failed writing " + tmp.string());
    }
  }
  for (std::size_t i = 0; i < files.size(); ++i) {
    fs::rename(staged[i], files[i].first, ec);
    if (ec) throw IoError("cannot move " + staged[i].string() + " into place: " + ec.message());
  }
}

Json crlb_report(const ExperimentConfig& cfg) {
  Json cells = Json::array();
  for (double sigma : cfg.sigmas) {
    Json bodies = Json::array();
    for (const auto& b : cfg.bodies) {
      Json bj{{"label", b.tmpl.label()}};
      if (!(sigma > 0.0)) {
        bj["error"] = "sigma must be > 0";
      } else {
        try {
          const CrlbResult c = crlb_numeric(b.truth, b.tmpl, *cfg.anchors, cfg.modality, sigma, cfg.rssi);
          bj["translation_rmse_bound"] = c.translation_rmse_bound();
          bj["angle_rmse_bound"] = c.angle_rmse_bound();
          Json cov = Json::array();
          for (Eigen::Index i = 0; i < c.covariance.rows(); ++i) {
            Json row = Json::array();
            for (Eigen::Index k = 0; k < c.covariance.cols(); ++k) row.push_back(c.covariance(i, k));
            cov.push_back(std::move(row));
          }
          bj["covariance"] = std::move(cov);
        } catch (const RankDeficiency& e) {
          bj["error"] = e.what();
          bj["null_space"] = e.directions();
        } catch (const Error& e) {
          bj["error"] = e.what();
        }
      }
      bodies.push_back(std::move(bj));
    }
    cells.push_back(Json{{"sigma", sigma}, {"bodies", std::move(bodies)}});
  }
  return Json{{"modality", std::string(to_string(cfg.modality))}, {"cells", std::move(cells)}};
}

} // namespace rbl
