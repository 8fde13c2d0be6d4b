#pragma once

#include <optional>
#include <string_view>
#include <vector>

#include "rbl/estimators.hpp"

namespace rbl {

// Several rigid bodies with their poses. Intra-body distances are fixed by
// each template; bodies are related only through soft constraints.
struct MultiBodyModel {
  std::vector<RigidBodyTemplate> bodies;
  std::vector<Pose> poses;

  int dim() const { return bodies.front().dim(); }
  int body_count() const { return static_cast<int>(bodies.size()); }
  void validate() const;
};

// Block form S = [Q_1 | ... | Q_B] * blockdiag(C_1, ..., C_B) + [t_1 1^T | ... | t_B 1^T].
Matrix apply_multi_pose(const MultiBodyModel& model);

enum class ConstraintKind { InterBodyDistance, RelativeAngle };
std::string_view to_string(ConstraintKind k);
ConstraintKind constraint_kind_from_string(std::string_view s);

inline constexpr int kCentroid = -1;

// Bounded (inequality) coupling between two bodies. The constrained quantity
// is the distance between one reference point of each body (node index or
// kCentroid), or the relative rotation: wrapped alpha_j - alpha_i in 2D, the
// geodesic angle of Q_i^T Q_j in 3D.
struct SoftConstraint {
  ConstraintKind kind = ConstraintKind::InterBodyDistance;
  int body_i = 0;
  int body_j = 1;
  int ref_i = kCentroid;
  int ref_j = kCentroid;
  double lower = 0.0;
  double upper = 0.0;
  double weight = 1.0;

  void validate(const MultiBodyModel& model) const;
};

double constraint_value(const MultiBodyModel& model, const SoftConstraint& c);
// max(0, lower - v, v - upper); bounds are closed.
double constraint_violation(double value, const SoftConstraint& c);
// Sum of weight * violation^2.
double penalty(const MultiBodyModel& model, const std::vector<SoftConstraint>& constraints);

struct SoftOptions {
  EstimatorOptions estimator;
  int penalty_rounds = 5;
  double penalty_growth = 10.0;
};

struct ConstraintReport {
  double value = 0.0;
  double violation = 0.0;
  double penalty = 0.0; // at the constraint's base weight
};

struct JointResult {
  std::vector<EstimationResult> bodies;
  std::vector<ConstraintReport> coupling;
  // Bodies solved jointly (member of a component with a positive-weight constraint).
  std::vector<bool> coupled;
  bool fallback = false;
};

// Minimizes sum_i |r_i / sigma_i|^2 + sum_c w_c * violation_c^2 over all poses
// at once (sigma_i = 1 for noiseless observations), ramping every weight by
// `penalty_growth` per round. Bodies not linked by a positive-weight
// constraint are estimated independently. Without `init`, each body starts at
// its independent estimate; a body whose independent estimate fails starts
// at the pose of a linked body.
JointResult joint_estimate_soft(const std::vector<ObservationSet>& obs, const std::vector<AnchorSet>& anchors,
                                const std::vector<RigidBodyTemplate>& templates,
                                const std::vector<SoftConstraint>& constraints,
                                const std::optional<std::vector<Pose>>& init = {}, const SoftOptions& opts = {});

struct MotionBounds {
  double min_translation = 0.0;
  double max_translation = 0.0;
  double max_rotation = 0.0;
  double weight = 100.0;
};

struct TrackingSequence {
  std::vector<ObservationSet> frames;
  MotionBounds bounds;
};

// Treats the frames as soft-connected copies of one body, with each pair of
// consecutive frames bounded in centroid displacement and rotation.
std::vector<Pose> track_sequence(const TrackingSequence& seq, const AnchorSet& anchors,
                                 const RigidBodyTemplate& tmpl, const SoftOptions& opts = {});

// Same as track_sequence but returns the full joint result.
JointResult track_sequence_detailed(const TrackingSequence& seq, const AnchorSet& anchors,
                                    const RigidBodyTemplate& tmpl, const SoftOptions& opts = {});

} // namespace rbl
