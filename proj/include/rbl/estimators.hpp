#pragma once

#include <optional>
#include <string>
#include <vector>

#include "rbl/gauss_newton.hpp"
#include "rbl/geometry.hpp"
#include "rbl/measurement.hpp"

namespace rbl {

struct EstimationResult {
  std::optional<Pose> pose;   // absent for point-based estimators
  Matrix node_positions;      // d x K, apply_pose(template, pose) when pose is set
  double objective = 0.0;     // sum of squared (wrapped) measurement residuals
  int iterations = 0;
  bool converged = false;
  double gradient_norm = 0.0;
  double gradient_tolerance = 0.0;
  std::vector<double> objective_trace;
  std::optional<Matrix> covariance_est;

  bool refined = true;                 // range CWLS: false if stage 2 was abandoned
  bool rotation_indeterminate = false; // K = 1 projection
  bool fallback = false;               // joint estimation fell back to independent
  std::string note;
};

struct EstimatorOptions {
  GaussNewtonOptions gauss_newton;
  RssiModelParams rssi;
  int multistart_angles = 8;
  // Weight matrix for the linear CWLS stage (MK x MK); identity / sigma^2 when unset.
  std::optional<Matrix> cwls_weights;
};

// Independent per-node Gauss-Newton fit of every column of `obs`, starting
// each node from `init`. `pose` is left unset.
EstimationResult point_ls_locate(const ObservationSet& obs, const AnchorSet& anchors, const Vector& init,
                                 const EstimatorOptions& opts = {});

// Gauss-Newton over the pose of a rigid body from any modality.
EstimationResult refine_pose(const ObservationSet& obs, const AnchorSet& anchors,
                             const RigidBodyTemplate& tmpl, const Pose& init,
                             const EstimatorOptions& opts = {});

// Bearing-only rigid-body pose. Without `init`, runs one start per evenly
// spaced angle with the translation solved linearly from the bearing lines,
// then keeps the lowest objective (ties: smallest |alpha|, then translation
// lexicographically).
EstimationResult doa_rbl_estimate(const ObservationSet& obs, const AnchorSet& anchors,
                                  const RigidBodyTemplate& tmpl, const std::optional<Pose>& init = {},
                                  const EstimatorOptions& opts = {});

// Linearized squared-range system. Unknowns y = [vec(Q) (column-major, d*d);
// t (d); rho_1..rho_K] with rho_k standing in for |s_k|^2. Row (m, k):
//   -2 a_m^T Q x_k - 2 a_m^T t + rho_k = r_mk^2 - |a_m|^2
struct CwlsSystem {
  Matrix design;  // G
  Vector target;  // h
  Matrix weights; // W
  std::vector<std::string> unknown_layout;
};

CwlsSystem build_cwls_system(const ObservationSet& obs, const AnchorSet& anchors,
                             const RigidBodyTemplate& tmpl, const std::optional<Matrix>& weights = {});

// Two-stage range estimator: weighted LS on the linearized system with the
// rotation block projected onto SO(d), then Gauss-Newton on raw ranges.
EstimationResult range_rbl_cwls(const ObservationSet& obs, const AnchorSet& anchors,
                                const RigidBodyTemplate& tmpl, const EstimatorOptions& opts = {});

// Dispatches to the rigid-body estimator of the observation's modality.
// RSSI starts from the Procrustes fit of a point-based solution.
EstimationResult estimate_rbl(const ObservationSet& obs, const AnchorSet& anchors,
                              const RigidBodyTemplate& tmpl, const std::optional<Pose>& init = {},
                              const EstimatorOptions& opts = {});

struct CrlbResult {
  Matrix fisher;     // J
  Matrix covariance; // J^-1, parameter order (angles..., translation...)
  int angle_count = 1;

  // Root of the trace of the translation / angle blocks.
  double translation_rmse_bound() const;
  double angle_rmse_bound() const;
};

// Fisher information of the pose under iid Gaussian noise of std `sigma`.
// The analytic Jacobian is cross-checked against central differences
// (step 1e-6, relative 1e-4). Throws RankDeficiency carrying the null space
// when the pose is not identifiable.
CrlbResult crlb_numeric(const Pose& truth, const RigidBodyTemplate& tmpl, const AnchorSet& anchors,
                        Modality modality, double sigma, const RssiModelParams& rssi = {});

} // namespace rbl
