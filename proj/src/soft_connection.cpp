#include "rbl/soft_connection.hpp"

#include <cmath>
#include <numeric>

#include "rbl/error.hpp"
#include "rbl/pose_model.hpp"

namespace rbl {

void MultiBodyModel::validate() const {
  if (bodies.empty()) throw InvalidParameter("multi-body model needs at least one body");
  if (poses.size() != bodies.size())
    throw DimensionMismatch("multi-body model has " + std::to_string(bodies.size()) + " bodies but " +
                            std::to_string(poses.size()) + " poses");
  const int d = bodies.front().dim();
  for (std::size_t i = 0; i < bodies.size(); ++i)
    if (bodies[i].dim() != d || poses[i].dim() != d)
      throw DimensionMismatch("body " + std::to_string(i) + " does not share the model dimension");
}

Matrix apply_multi_pose(const MultiBodyModel& model) {
  model.validate();
  const int d = model.dim();
  const int b_count = model.body_count();
  int total = 0;
  for (const auto& b : model.bodies) total += b.size();

  Matrix rotations(d, d * b_count);
  Matrix blocks = Matrix::Zero(d * b_count, total);
  Matrix shifts(d, total);
  int col = 0;
  for (int i = 0; i < b_count; ++i) {
    const auto& c = model.bodies[static_cast<std::size_t>(i)];
    const auto& p = model.poses[static_cast<std::size_t>(i)];
    rotations.middleCols(d * i, d) = rotation_matrix(p.rotation);
    blocks.block(d * i, col, d, c.size()) = c.nodes();
    shifts.middleCols(col, c.size()).colwise() = p.translation;
    col += c.size();
  }
  return rotations * blocks + shifts;
}

std::string_view to_string(ConstraintKind k) {
  return k == ConstraintKind::InterBodyDistance ? "inter_body_distance" : "relative_angle";
}

ConstraintKind constraint_kind_from_string(std::string_view s) {
  if (s == "inter_body_distance") return ConstraintKind::InterBodyDistance;
  if (s == "relative_angle") return ConstraintKind::RelativeAngle;
  throw InvalidParameter("unknown constraint kind '" + std::string(s) + "'");
}

void SoftConstraint::validate(const MultiBodyModel& model) const {
  const int b = model.body_count();
  if (body_i < 0 || body_i >= b || body_j < 0 || body_j >= b)
    throw InvalidParameter("constraint body index out of range");
  if (body_i == body_j) throw InvalidParameter("constraint must link two different bodies");
  if (!(lower <= upper)) throw InvalidParameter("constraint lower bound exceeds upper bound");
  if (!(weight >= 0.0) || !std::isfinite(weight)) throw InvalidParameter("constraint weight must be >= 0");
  if (kind == ConstraintKind::InterBodyDistance) {
    auto check_ref = [&](int body, int ref) {
      if (ref != kCentroid && (ref < 0 || ref >= model.bodies[static_cast<std::size_t>(body)].size()))
        throw InvalidParameter("constraint reference node out of range");
    };
    check_ref(body_i, ref_i);
    check_ref(body_j, ref_j);
  }
}

namespace {

Vector reference_local(const RigidBodyTemplate& tmpl, int ref) {
  return ref == kCentroid ? tmpl.centroid() : Vector(tmpl.nodes().col(ref));
}

Vector reference_world(const RigidBodyTemplate& tmpl, const Pose& pose, int ref) {
  return rotation_matrix(pose.rotation) * reference_local(tmpl, ref) + pose.translation;
}

double relative_angle(const Pose& a, const Pose& b) {
  if (a.dim() == 2) return angle_diff(b.rotation[0], a.rotation[0]);
  return rotation_distance(a.rotation, b.rotation);
}

} // namespace

double constraint_value(const MultiBodyModel& model, const SoftConstraint& c) {
  const auto& pi = model.poses[static_cast<std::size_t>(c.body_i)];
  const auto& pj = model.poses[static_cast<std::size_t>(c.body_j)];
  if (c.kind == ConstraintKind::RelativeAngle) return relative_angle(pi, pj);
  const Vector a = reference_world(model.bodies[static_cast<std::size_t>(c.body_i)], pi, c.ref_i);
  const Vector b = reference_world(model.bodies[static_cast<std::size_t>(c.body_j)], pj, c.ref_j);
  return (b - a).norm();
}

double constraint_violation(double value, const SoftConstraint& c) {
  return std::max({0.0, c.lower - value, value - c.upper});
}

double penalty(const MultiBodyModel& model, const std::vector<SoftConstraint>& constraints) {
  model.validate();
  double total = 0.0;
  for (const auto& c : constraints) {
    c.validate(model);
    const double v = constraint_violation(constraint_value(model, c), c);
    total += c.weight * v * v;
  }
  return total;
}

namespace {

struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(int n) : parent(static_cast<std::size_t>(n)) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int x) {
    while (parent[static_cast<std::size_t>(x)] != x) x = parent[static_cast<std::size_t>(x)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
    return x;
  }
  void unite(int a, int b) { parent[static_cast<std::size_t>(find(a))] = find(b); }
};

// Value of a constraint and its gradient with respect to the two pose vectors.
double constraint_with_gradient(const SoftConstraint& c, const RigidBodyTemplate& ti, const RigidBodyTemplate& tj,
                                const Vector& eta_i, const Vector& eta_j, Vector& grad_i, Vector& grad_j) {
  const int d = ti.dim();
  const int na = d == 2 ? 1 : 3;
  const Pose pi = Pose::from_vector(eta_i, d);
  const Pose pj = Pose::from_vector(eta_j, d);
  grad_i = Vector::Zero(na + d);
  grad_j = Vector::Zero(na + d);

  if (c.kind == ConstraintKind::RelativeAngle) {
    const double v = relative_angle(pi, pj);
    if (d == 2) {
      grad_i(0) = -1.0;
      grad_j(0) = 1.0;
    } else {
      // Geodesic angle: central differences over the six angles.
      const double h = 1e-7;
      for (int k = 0; k < na; ++k) {
        Vector ep = eta_i, em = eta_i;
        ep(k) += h;
        em(k) -= h;
        grad_i(k) = (relative_angle(Pose::from_vector(ep, d), pj) - relative_angle(Pose::from_vector(em, d), pj)) / (2 * h);
        ep = eta_j;
        em = eta_j;
        ep(k) += h;
        em(k) -= h;
        grad_j(k) = (relative_angle(pi, Pose::from_vector(ep, d)) - relative_angle(pi, Pose::from_vector(em, d))) / (2 * h);
      }
    }
    return v;
  }

  const Vector xi = reference_local(ti, c.ref_i);
  const Vector xj = reference_local(tj, c.ref_j);
  const Vector a = rotation_matrix(pi.rotation) * xi + pi.translation;
  const Vector b = rotation_matrix(pj.rotation) * xj + pj.translation;
  const double v = (b - a).norm();
  if (v == 0.0) return v;
  const Vector u = (b - a) / v;
  const auto dqi = rotation_derivatives(pi.rotation);
  const auto dqj = rotation_derivatives(pj.rotation);
  for (int k = 0; k < na; ++k) {
    grad_i(k) = -u.dot(dqi[static_cast<std::size_t>(k)] * xi);
    grad_j(k) = u.dot(dqj[static_cast<std::size_t>(k)] * xj);
  }
  grad_i.tail(d) = -u;
  grad_j.tail(d) = u;
  return v;
}

double measurement_cost(const ObservationSet& obs, const AnchorSet& anchors, const RigidBodyTemplate& tmpl,
                        const Pose& pose, const RssiModelParams& rssi) {
  const PoseMeasurementModel model(tmpl, anchors, obs.modality, rssi);
  Vector r;
  model.residual(obs)(pose.to_vector(), r, nullptr);
  return r.squaredNorm();
}

} // namespace

JointResult joint_estimate_soft(const std::vector<ObservationSet>& obs, const std::vector<AnchorSet>& anchors,
                                const std::vector<RigidBodyTemplate>& templates,
                                const std::vector<SoftConstraint>& constraints,
                                const std::optional<std::vector<Pose>>& init, const SoftOptions& opts) {
  const int b_count = static_cast<int>(templates.size());
  if (b_count < 1) throw InvalidParameter("joint estimation needs at least one body");
  if (static_cast<int>(obs.size()) != b_count)
    throw DimensionMismatch("need one observation set per body");
  if (anchors.size() != 1 && static_cast<int>(anchors.size()) != b_count)
    throw DimensionMismatch("need one anchor set, or one per body");
  if (init && static_cast<int>(init->size()) != b_count) throw DimensionMismatch("need one initial pose per body");
  const int d = templates.front().dim();
  auto anchors_of = [&](int b) -> const AnchorSet& {
    return anchors.size() == 1 ? anchors.front() : anchors[static_cast<std::size_t>(b)];
  };

  MultiBodyModel shape{templates, std::vector<Pose>(static_cast<std::size_t>(b_count), Pose::identity(d))};
  shape.validate();
  for (const auto& c : constraints) c.validate(shape);

  // Independent estimates.
  std::vector<std::optional<EstimationResult>> indep(static_cast<std::size_t>(b_count));
  std::vector<std::string> failure(static_cast<std::size_t>(b_count));
  for (int b = 0; b < b_count; ++b) {
    const auto ub = static_cast<std::size_t>(b);
    try {
      std::optional<Pose> start;
      if (init) start = (*init)[ub];
      indep[ub] = estimate_rbl(obs[ub], anchors_of(b), templates[ub], start, opts.estimator);
    } catch (const Error& e) {
      failure[ub] = e.what();
    }
  }

  UnionFind uf(b_count);
  for (const auto& c : constraints)
    if (c.weight > 0.0) uf.unite(c.body_i, c.body_j);

  JointResult out;
  out.bodies.resize(static_cast<std::size_t>(b_count));
  out.coupled.assign(static_cast<std::size_t>(b_count), false);

  auto failed_result = [&](int b, const std::string& why) {
    EstimationResult r;
    r.node_positions = Matrix::Constant(d, templates[static_cast<std::size_t>(b)].size(), std::nan(""));
    r.objective = std::nan("");
    r.converged = false;
    r.note = why;
    return r;
  };

  const int p = Pose::parameter_count(d);
  for (int root = 0; root < b_count; ++root) {
    std::vector<int> members;
    for (int b = 0; b < b_count; ++b)
      if (uf.find(b) == root) members.push_back(b);
    if (members.empty()) continue;

    if (members.size() == 1) {
      const int b = members.front();
      const auto ub = static_cast<std::size_t>(b);
      out.bodies[ub] = indep[ub] ? *indep[ub] : failed_result(b, failure[ub]);
      continue;
    }

    const int nb = static_cast<int>(members.size());
    std::vector<int> slot(static_cast<std::size_t>(b_count), -1);
    for (int i = 0; i < nb; ++i) slot[static_cast<std::size_t>(members[static_cast<std::size_t>(i)])] = i;

    // Starting poses, borrowing from linked bodies where the independent fit failed.
    std::vector<std::optional<Pose>> start(static_cast<std::size_t>(nb));
    for (int i = 0; i < nb; ++i) {
      const auto ub = static_cast<std::size_t>(members[static_cast<std::size_t>(i)]);
      if (init) start[static_cast<std::size_t>(i)] = (*init)[ub];
      else if (indep[ub]) start[static_cast<std::size_t>(i)] = indep[ub]->pose;
    }
    for (bool changed = true; changed;) {
      changed = false;
      for (const auto& c : constraints) {
        if (c.weight <= 0.0 || slot[static_cast<std::size_t>(c.body_i)] < 0) continue;
        auto& si = start[static_cast<std::size_t>(slot[static_cast<std::size_t>(c.body_i)])];
        auto& sj = start[static_cast<std::size_t>(slot[static_cast<std::size_t>(c.body_j)])];
        if (si && !sj) { sj = si; changed = true; }
        if (sj && !si) { si = sj; changed = true; }
      }
    }
    if (!start.front()) {
      for (int b : members) out.bodies[static_cast<std::size_t>(b)] = failed_result(b, "no body in the coupled group could be initialized");
      continue;
    }

    Vector x(p * nb);
    for (int i = 0; i < nb; ++i) x.segment(p * i, p) = start[static_cast<std::size_t>(i)]->to_vector();

    std::vector<PoseMeasurementModel> models;
    std::vector<ResidualFn> residuals;
    std::vector<int> rows;
    models.reserve(static_cast<std::size_t>(nb));
    int total_rows = 0;
    for (int i = 0; i < nb; ++i) {
      const auto ub = static_cast<std::size_t>(members[static_cast<std::size_t>(i)]);
      models.emplace_back(templates[ub], anchors_of(members[static_cast<std::size_t>(i)]), obs[ub].modality,
                          opts.estimator.rssi);
      const double s = obs[ub].noise.sigma > 0.0 ? obs[ub].noise.sigma : 1.0;
      residuals.push_back(models.back().residual(obs[ub], s));
      rows.push_back(models.back().measurement_count());
      total_rows += rows.back();
    }
    std::vector<const SoftConstraint*> active;
    for (const auto& c : constraints)
      if (c.weight > 0.0 && slot[static_cast<std::size_t>(c.body_i)] >= 0) active.push_back(&c);

    double scale = 1.0;
    auto fn = [&](const Vector& eta, Vector& r, Matrix* jac) {
      r.resize(total_rows + static_cast<int>(active.size()));
      if (jac) jac->setZero(r.size(), eta.size());
      int row = 0;
      Vector rb;
      Matrix jb;
      for (int i = 0; i < nb; ++i) {
        residuals[static_cast<std::size_t>(i)](eta.segment(p * i, p), rb, jac ? &jb : nullptr);
        r.segment(row, rows[static_cast<std::size_t>(i)]) = rb;
        if (jac) jac->block(row, p * i, rows[static_cast<std::size_t>(i)], p) = jb;
        row += rows[static_cast<std::size_t>(i)];
      }
      Vector gi, gj;
      for (const SoftConstraint* c : active) {
        const int si = slot[static_cast<std::size_t>(c->body_i)], sj = slot[static_cast<std::size_t>(c->body_j)];
        const double v = constraint_with_gradient(*c, templates[static_cast<std::size_t>(c->body_i)],
                                                  templates[static_cast<std::size_t>(c->body_j)],
                                                  eta.segment(p * si, p), eta.segment(p * sj, p), gi, gj);
        const double sw = std::sqrt(c->weight * scale);
        double sign = 0.0, viol = 0.0;
        if (v > c->upper) { viol = v - c->upper; sign = 1.0; }
        else if (v < c->lower) { viol = c->lower - v; sign = -1.0; }
        r(row) = sw * viol;
        if (jac) {
          jac->block(row, p * si, 1, p) += sw * sign * gi.transpose();
          jac->block(row, p * sj, 1, p) += sw * sign * gj.transpose();
        }
        ++row;
      }
    };

    GaussNewtonReport rep;
    int iterations = 0;
    bool ok = true;
    for (int round = 0; round < opts.penalty_rounds; ++round) {
      scale = std::pow(opts.penalty_growth, round);
      rep = gauss_newton(fn, x, opts.estimator.gauss_newton, pose_normalizer(d, nb));
      iterations += rep.iterations;
      if (!rep.x.allFinite()) {
        ok = false;
        break;
      }
      x = rep.x;
    }
    ok = ok && rep.converged;

    if (!ok) {
      out.fallback = true;
      for (int b : members) {
        const auto ub = static_cast<std::size_t>(b);
        out.bodies[ub] = indep[ub] ? *indep[ub] : failed_result(b, failure[ub]);
        out.bodies[ub].fallback = true;
        out.bodies[ub].note = "joint estimation did not converge (" + std::string(to_string(rep.termination)) +
                              "); independent estimate used";
      }
      continue;
    }

    for (int i = 0; i < nb; ++i) {
      const int b = members[static_cast<std::size_t>(i)];
      const auto ub = static_cast<std::size_t>(b);
      EstimationResult r;
      r.pose = Pose::from_vector(x.segment(p * i, p), d);
      r.node_positions = apply_pose(templates[ub], *r.pose).positions;
      r.objective = measurement_cost(obs[ub], anchors_of(b), templates[ub], *r.pose, opts.estimator.rssi);
      r.iterations = iterations;
      r.converged = rep.converged;
      r.gradient_norm = rep.gradient_norm;
      r.gradient_tolerance = rep.gradient_tolerance;
      r.objective_trace = rep.trace;
      out.bodies[ub] = std::move(r);
      out.coupled[ub] = true;
    }
  }

  MultiBodyModel final_model{templates, {}};
  for (int b = 0; b < b_count; ++b) {
    const auto& r = out.bodies[static_cast<std::size_t>(b)];
    final_model.poses.push_back(r.pose ? *r.pose : Pose::identity(d));
  }
  for (const auto& c : constraints) {
    ConstraintReport rep;
    rep.value = constraint_value(final_model, c);
    rep.violation = constraint_violation(rep.value, c);
    rep.penalty = c.weight * rep.violation * rep.violation;
    out.coupling.push_back(rep);
  }
  return out;
}

JointResult track_sequence_detailed(const TrackingSequence& seq, const AnchorSet& anchors,
                                    const RigidBodyTemplate& tmpl, const SoftOptions& opts) {
  const int t_count = static_cast<int>(seq.frames.size());
  if (t_count < 1) throw InvalidParameter("tracking needs at least one frame");
  const auto& mb = seq.bounds;
  if (!(mb.min_translation >= 0.0) || !(mb.max_translation >= mb.min_translation) || !(mb.max_rotation >= 0.0) ||
      !(mb.weight >= 0.0))
    throw InvalidParameter("motion bounds must be nonnegative with min_translation <= max_translation");

  std::vector<SoftConstraint> constraints;
  for (int t = 0; t + 1 < t_count; ++t) {
    SoftConstraint step;
    step.kind = ConstraintKind::InterBodyDistance;
    step.body_i = t;
    step.body_j = t + 1;
    step.lower = mb.min_translation;
    step.upper = mb.max_translation;
    step.weight = mb.weight;
    constraints.push_back(step);

    SoftConstraint turn;
    turn.kind = ConstraintKind::RelativeAngle;
    turn.body_i = t;
    turn.body_j = t + 1;
    turn.lower = tmpl.dim() == 2 ? -mb.max_rotation : 0.0;
    turn.upper = mb.max_rotation;
    turn.weight = mb.weight;
    constraints.push_back(turn);
  }
  const std::vector<RigidBodyTemplate> templates(static_cast<std::size_t>(t_count), tmpl);
  return joint_estimate_soft(seq.frames, {anchors}, templates, constraints, std::nullopt, opts);
}

std::vector<Pose> track_sequence(const TrackingSequence& seq, const AnchorSet& anchors, const RigidBodyTemplate& tmpl,
                                 const SoftOptions& opts) {
  const JointResult jr = track_sequence_detailed(seq, anchors, tmpl, opts);
  std::vector<Pose> poses;
  for (const auto& r : jr.bodies) {
    if (!r.pose) throw Error("tracking failed for a frame: " + r.note);
    poses.push_back(*r.pose);
  }
  return poses;
}

} // namespace rbl
