#include "rbl/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "rbl/error.hpp"
#include "rbl/pose_model.hpp"

namespace rbl {

namespace {

void check_shapes(const ObservationSet& obs, const AnchorSet& anchors) {
  if (obs.anchor_count() != anchors.size())
    throw DimensionMismatch("observations list " + std::to_string(obs.anchor_count()) +
                            " anchors but the anchor set has " + std::to_string(anchors.size()));
  if (!obs.values.allFinite()) throw InvalidParameter("observations must be finite");
}

std::optional<Matrix> parameter_covariance(const Matrix& jtj, double sigma) {
  if (!(sigma > 0.0) || jtj.size() == 0) return std::nullopt;
  Eigen::FullPivLU<Matrix> lu(jtj);
  if (!lu.isInvertible()) return std::nullopt;
  return Matrix((sigma * sigma) * lu.inverse());
}

EstimationResult pose_result(const GaussNewtonReport& rep, const RigidBodyTemplate& tmpl, double sigma) {
  EstimationResult res;
  res.pose = Pose::from_vector(rep.x, tmpl.dim());
  res.node_positions = apply_pose(tmpl, *res.pose).positions;
  res.objective = rep.cost;
  res.iterations = rep.iterations;
  res.converged = rep.converged;
  res.gradient_norm = rep.gradient_norm;
  res.gradient_tolerance = rep.gradient_tolerance;
  res.objective_trace = rep.trace;
  res.covariance_est = parameter_covariance(rep.jtj, sigma);
  if (!rep.converged) res.note = "gauss-newton stopped: " + std::string(to_string(rep.termination));
  return res;
}

// True when `a` should be preferred over `b`.
bool better_pose(const EstimationResult& a, const EstimationResult& b) {
  if (std::abs(a.objective - b.objective) > 1e-12) return a.objective < b.objective;
  const double aa = std::abs(a.pose->rotation[0]), ba = std::abs(b.pose->rotation[0]);
  if (aa != ba) return aa < ba;
  const Vector& ta = a.pose->translation;
  const Vector& tb = b.pose->translation;
  return std::lexicographical_compare(ta.data(), ta.data() + ta.size(), tb.data(), tb.data() + tb.size());
}

std::vector<std::string> pose_parameter_names(int dim) {
  if (dim == 2) return {"alpha", "t_x", "t_y"};
  return {"alpha", "beta", "gamma", "t_x", "t_y", "t_z"};
}

std::vector<std::string> describe_null_space(const Matrix& null_space, const std::vector<std::string>& names) {
  std::vector<std::string> out;
  for (Eigen::Index c = 0; c < null_space.cols(); ++c) {
    std::ostringstream os;
    bool first = true;
    for (Eigen::Index i = 0; i < null_space.rows(); ++i) {
      const double v = null_space(i, c);
      if (std::abs(v) < 0.05) continue;
      if (!first) os << (v < 0 ? " - " : " + ");
      else if (v < 0) os << "-";
      os << std::abs(v) << "*" << names[static_cast<std::size_t>(i)];
      first = false;
    }
    out.push_back(os.str());
  }
  return out;
}

std::string join(const std::vector<std::string>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "; " : "") + v[i];
  return s;
}

} // namespace

EstimationResult point_ls_locate(const ObservationSet& obs, const AnchorSet& anchors, const Vector& init,
                                 const EstimatorOptions& opts) {
  check_shapes(obs, anchors);
  const int d = anchors.dim();
  if (init.size() != d) throw DimensionMismatch("initial point has wrong dimension");
  const int m_count = anchors.size();
  if (obs.modality == Modality::Doa) {
    if (d != 2) throw InvalidParameter("DoA localization is defined in 2D only");
    if (m_count < 2)
      throw IdentifiabilityError("a single bearing leaves each node free along a ray; need >= 2 anchors");
  } else if (m_count < d + 1) {
    throw IdentifiabilityError("point localization from " + std::string(to_string(obs.modality)) +
                               " needs >= " + std::to_string(d + 1) + " anchors, got " +
                               std::to_string(m_count));
  }

  const int k_count = obs.node_count();
  EstimationResult res;
  res.node_positions.resize(d, k_count);
  res.converged = true;
  std::vector<std::vector<double>> traces;
  for (int k = 0; k < k_count; ++k) {
    const Vector y = obs.values.col(k);
    const Modality mod = obs.modality;
    auto fn = [&](const Vector& s, Vector& r, Matrix* jac) {
      predict_point(s, anchors, mod, opts.rssi, r, jac);
      r -= y;
      if (mod == Modality::Doa)
        for (Eigen::Index i = 0; i < r.size(); ++i) r(i) = wrap_angle(r(i));
    };
    const GaussNewtonReport rep = gauss_newton(fn, init, opts.gauss_newton);
    res.node_positions.col(k) = rep.x;
    res.objective += rep.cost;
    res.iterations = std::max(res.iterations, rep.iterations);
    res.converged = res.converged && rep.converged;
    res.gradient_norm = std::max(res.gradient_norm, rep.gradient_norm);
    res.gradient_tolerance = std::max(res.gradient_tolerance, rep.gradient_tolerance);
    traces.push_back(rep.trace);
    if (!rep.converged && res.note.empty())
      res.note = "node " + std::to_string(k) + ": " + std::string(to_string(rep.termination));
  }
  std::size_t len = 0;
  for (const auto& t : traces) len = std::max(len, t.size());
  res.objective_trace.assign(len, 0.0);
  for (const auto& t : traces)
    for (std::size_t i = 0; i < len; ++i) res.objective_trace[i] += t[std::min(i, t.size() - 1)];
  return res;
}

EstimationResult refine_pose(const ObservationSet& obs, const AnchorSet& anchors, const RigidBodyTemplate& tmpl,
                             const Pose& init, const EstimatorOptions& opts) {
  check_shapes(obs, anchors);
  if (init.dim() != tmpl.dim()) throw DimensionMismatch("initial pose and template differ in dimension");
  const PoseMeasurementModel model(tmpl, anchors, obs.modality, opts.rssi);
  const GaussNewtonReport rep =
      gauss_newton(model.residual(obs), init.to_vector(), opts.gauss_newton, pose_normalizer(tmpl.dim()));
  return pose_result(rep, tmpl, obs.noise.sigma);
}

EstimationResult doa_rbl_estimate(const ObservationSet& obs, const AnchorSet& anchors,
                                  const RigidBodyTemplate& tmpl, const std::optional<Pose>& init,
                                  const EstimatorOptions& opts) {
  check_shapes(obs, anchors);
  if (obs.modality != Modality::Doa) throw InvalidParameter("doa_rbl_estimate needs DoA observations");
  if (tmpl.dim() != 2) throw InvalidParameter("DoA rigid-body estimation is 2D only");
  if (obs.node_count() != tmpl.size()) throw DimensionMismatch("observations and template differ in node count");
  const int m_count = anchors.size(), k_count = tmpl.size();
  if (m_count == 1 && k_count == 1)
    throw IdentifiabilityError("one bearing to one node: no diversity and no constraint");
  if (m_count * k_count < 3)
    throw IdentifiabilityError("need at least 3 bearings for 3 pose parameters, got " +
                               std::to_string(m_count * k_count));

  if (init) return refine_pose(obs, anchors, tmpl, *init, opts);

  const int starts = std::max(1, opts.multistart_angles);
  std::optional<EstimationResult> best;
  bool any_converged = false;
  for (int s = 0; s < starts; ++s) {
    const double alpha0 = wrap_angle(2.0 * kPi * s / starts);
    const Matrix q = rotation_matrix(RotationParam({alpha0}));
    // Each bearing constrains its node to a line: n^T (Q x_k + t - a_m) = 0.
    Matrix a(m_count * k_count, 2);
    Vector b(m_count * k_count);
    for (int m = 0; m < m_count; ++m) {
      const Vector am = anchors.positions().col(m);
      for (int k = 0; k < k_count; ++k) {
        const double th = obs.values(m, k);
        const Eigen::Vector2d n(-std::sin(th), std::cos(th));
        const int row = m * k_count + k;
        a.row(row) = n.transpose();
        b(row) = n.dot(am - q * tmpl.nodes().col(k));
      }
    }
    const Vector t0 = Eigen::CompleteOrthogonalDecomposition<Matrix>(a).solve(b);
    EstimationResult r = refine_pose(obs, anchors, tmpl, Pose(RotationParam({alpha0}), t0), opts);
    any_converged = any_converged || r.converged;
    if (!best || (r.converged && !best->converged) ||
        (r.converged == best->converged && better_pose(r, *best)))
      best = std::move(r);
  }
  if (!any_converged) best->note = "no multi-start run converged; " + best->note;
  return *best;
}

CwlsSystem build_cwls_system(const ObservationSet& obs, const AnchorSet& anchors, const RigidBodyTemplate& tmpl,
                             const std::optional<Matrix>& weights) {
  check_shapes(obs, anchors);
  if (obs.modality != Modality::Range) throw InvalidParameter("CWLS needs range observations");
  if (obs.node_count() != tmpl.size()) throw DimensionMismatch("observations and template differ in node count");
  if (tmpl.dim() != anchors.dim()) throw DimensionMismatch("template and anchors differ in dimension");
  const int d = tmpl.dim(), m_count = anchors.size(), k_count = tmpl.size();
  const int rows = m_count * k_count;
  const int cols = d * d + d + k_count;

  CwlsSystem sys;
  sys.design = Matrix::Zero(rows, cols);
  sys.target.resize(rows);
  const char axis[] = {'x', 'y', 'z'};
  for (int j = 0; j < d; ++j)
    for (int i = 0; i < d; ++i) sys.unknown_layout.push_back("Q(" + std::to_string(i) + "," + std::to_string(j) + ")");
  for (int i = 0; i < d; ++i) sys.unknown_layout.push_back(std::string("t_") + axis[i]);
  for (int k = 0; k < k_count; ++k) sys.unknown_layout.push_back("rho_" + std::to_string(k));

  for (int m = 0; m < m_count; ++m) {
    const Vector am = anchors.positions().col(m);
    for (int k = 0; k < k_count; ++k) {
      const int row = m * k_count + k;
      const Vector xk = tmpl.nodes().col(k);
      for (int j = 0; j < d; ++j)
        for (int i = 0; i < d; ++i) sys.design(row, i + d * j) = -2.0 * am(i) * xk(j);
      for (int i = 0; i < d; ++i) sys.design(row, d * d + i) = -2.0 * am(i);
      sys.design(row, d * d + d + k) = 1.0;
      const double r = obs.values(m, k);
      sys.target(row) = r * r - am.squaredNorm();
    }
  }

  if (weights) {
    if (weights->rows() != rows || weights->cols() != rows)
      throw DimensionMismatch("CWLS weight matrix must be " + std::to_string(rows) + "x" + std::to_string(rows));
    if ((*weights - weights->transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, weights->cwiseAbs().maxCoeff()))
      throw InvalidParameter("CWLS weight matrix must be symmetric");
    Eigen::SelfAdjointEigenSolver<Matrix> eig(*weights, Eigen::EigenvaluesOnly);
    if (eig.eigenvalues()(0) < -1e-12 * std::max(1.0, eig.eigenvalues().cwiseAbs().maxCoeff()))
      throw InvalidParameter("CWLS weight matrix must be positive semidefinite");
    sys.weights = *weights;
  } else {
    const double s = obs.noise.sigma;
    sys.weights = Matrix::Identity(rows, rows) * (s > 0.0 ? 1.0 / (s * s) : 1.0);
  }
  return sys;
}

EstimationResult range_rbl_cwls(const ObservationSet& obs, const AnchorSet& anchors, const RigidBodyTemplate& tmpl,
                                const EstimatorOptions& opts) {
  const CwlsSystem sys = build_cwls_system(obs, anchors, tmpl, opts.cwls_weights);
  const int d = tmpl.dim();

  const Matrix normal = sys.design.transpose() * sys.weights * sys.design;
  const Vector rhs = sys.design.transpose() * sys.weights * sys.target;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(normal);
  const Vector& ev = eig.eigenvalues();
  const double emax = std::max(ev(ev.size() - 1), 0.0);
  int deficient = 0;
  while (deficient < ev.size() && ev(deficient) <= 1e-12 * emax) ++deficient;
  if (emax == 0.0 || deficient > 0) {
    const Matrix ns = eig.eigenvectors().leftCols(emax == 0.0 ? ev.size() : deficient);
    const auto dirs = describe_null_space(ns, sys.unknown_layout);
    throw RankDeficiency("CWLS normal matrix is singular (rank " + std::to_string(ev.size() - ns.cols()) + " of " +
                             std::to_string(ev.size()) + "); undetermined directions: " + join(dirs),
                         static_cast<int>(ev.size() - ns.cols()), ns, dirs);
  }
  const Vector y = normal.ldlt().solve(rhs);

  Matrix q_free(d, d);
  for (int j = 0; j < d; ++j)
    for (int i = 0; i < d; ++i) q_free(i, j) = y(i + d * j);
  const Matrix q = project_to_rotation(q_free);
  const Vector t = y.segment(d * d, d) + (q_free - q) * tmpl.centroid();
  const Pose stage1(rotation_from_matrix(q), t);

  EstimationResult refined = refine_pose(obs, anchors, tmpl, stage1, opts);
  if (refined.converged && std::isfinite(refined.objective)) return refined;

  const PoseMeasurementModel model(tmpl, anchors, Modality::Range);
  Vector r;
  model.residual(obs)(stage1.to_vector(), r, nullptr);
  EstimationResult res;
  res.pose = stage1;
  res.node_positions = apply_pose(tmpl, stage1).positions;
  res.objective = r.squaredNorm();
  res.objective_trace = {res.objective};
  res.converged = false;
  res.refined = false;
  res.note = "refinement did not converge (" + refined.note + "); returning linear stage";
  return res;
}

EstimationResult estimate_rbl(const ObservationSet& obs, const AnchorSet& anchors, const RigidBodyTemplate& tmpl,
                              const std::optional<Pose>& init, const EstimatorOptions& opts) {
  switch (obs.modality) {
  case Modality::Range:
    if (init) return refine_pose(obs, anchors, tmpl, *init, opts);
    return range_rbl_cwls(obs, anchors, tmpl, opts);
  case Modality::Doa: return doa_rbl_estimate(obs, anchors, tmpl, init, opts);
  case Modality::Rssi: {
    if (init) return refine_pose(obs, anchors, tmpl, *init, opts);
    const Vector start = anchors.positions().rowwise().mean();
    const EstimationResult pts = point_ls_locate(obs, anchors, start, opts);
    Pose p0 = Pose::identity(tmpl.dim());
    if (tmpl.size() == 1) {
      p0.translation = pts.node_positions.col(0) - tmpl.nodes().col(0);
    } else {
      p0 = procrustes_align(tmpl, pts.node_positions).pose;
    }
    return refine_pose(obs, anchors, tmpl, p0, opts);
  }
  }
  throw InvalidParameter("unknown modality");
}

double CrlbResult::translation_rmse_bound() const {
  const int d = static_cast<int>(covariance.rows()) - angle_count;
  return std::sqrt(covariance.bottomRightCorner(d, d).trace());
}

double CrlbResult::angle_rmse_bound() const {
  return std::sqrt(covariance.topLeftCorner(angle_count, angle_count).trace());
}

CrlbResult crlb_numeric(const Pose& truth, const RigidBodyTemplate& tmpl, const AnchorSet& anchors, Modality modality,
                        double sigma, const RssiModelParams& rssi) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw InvalidParameter("CRLB needs sigma > 0");
  if (truth.dim() != tmpl.dim()) throw DimensionMismatch("pose and template differ in dimension");
  const PoseMeasurementModel model(tmpl, anchors, modality, rssi);
  const Vector eta = truth.to_vector();
  Vector mu;
  Matrix jac;
  model.predict(eta, mu, &jac);
  const Matrix fd = model.jacobian_fd(eta, 1e-6);
  const double scale = std::max(jac.norm(), 1e-300);
  if ((jac - fd).norm() > 1e-4 * scale)
    throw Error("analytic measurement Jacobian disagrees with finite differences (relative error " +
                std::to_string((jac - fd).norm() / scale) + ")");

  const Matrix info = jac.transpose() * jac;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(info);
  const Vector& ev = eig.eigenvalues();
  const double emax = std::max(ev(ev.size() - 1), 0.0);
  int deficient = 0;
  while (deficient < ev.size() && ev(deficient) <= 1e-10 * emax) ++deficient;
  if (emax == 0.0) deficient = static_cast<int>(ev.size());
  if (deficient > 0) {
    const Matrix ns = eig.eigenvectors().leftCols(deficient);
    const auto dirs = describe_null_space(ns, pose_parameter_names(tmpl.dim()));
    throw RankDeficiency("Fisher information is singular (rank " + std::to_string(ev.size() - deficient) + " of " +
                             std::to_string(ev.size()) + "); unidentifiable directions: " + join(dirs),
                         static_cast<int>(ev.size() - deficient), ns, dirs);
  }

  CrlbResult out;
  out.angle_count = truth.rotation.angle_count();
  const Matrix inv = eig.eigenvectors() * ev.cwiseInverse().asDiagonal() * eig.eigenvectors().transpose();
  out.covariance = (sigma * sigma) * (0.5 * (inv + inv.transpose()));
  out.fisher = info / (sigma * sigma);
  return out;
}

} // namespace rbl
