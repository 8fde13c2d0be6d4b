#pragma once

#include "rbl/gauss_newton.hpp"
#include "rbl/geometry.hpp"
#include "rbl/measurement.hpp"

namespace rbl {

// Noiseless measurement model of one rigid body as a function of the pose
// vector eta = (angles..., translation...). Entries are ordered anchor-major:
// index m * K + k.
class PoseMeasurementModel {
public:
  PoseMeasurementModel(const RigidBodyTemplate& tmpl, const AnchorSet& anchors, Modality modality,
                       RssiModelParams rssi = {});

  int measurement_count() const { return anchors_.size() * tmpl_.size(); }
  int parameter_count() const { return Pose::parameter_count(tmpl_.dim()); }
  int dim() const { return tmpl_.dim(); }
  Modality modality() const { return modality_; }

  // Predictions and (optionally) the analytic Jacobian d mu / d eta.
  void predict(const Vector& eta, Vector& mu, Matrix* jac) const;
  // Central finite-difference Jacobian; bearing differences are wrapped.
  Matrix jacobian_fd(const Vector& eta, double step = 1e-6) const;

  // Residual mu(eta) - observed (wrapped for DoA), scaled by 1/scale.
  ResidualFn residual(const ObservationSet& obs, double scale = 1.0) const;

private:
  const RigidBodyTemplate& tmpl_;
  const AnchorSet& anchors_;
  Modality modality_;
  RssiModelParams rssi_;
};

// Measurement model of a free point (no rigidity), parameter = position.
void predict_point(const Vector& s, const AnchorSet& anchors, Modality modality,
                   const RssiModelParams& rssi, Vector& mu, Matrix* jac);

// Row-major flattening of an M x K observation matrix.
Vector flatten_observations(const ObservationSet& obs);

// Wraps the angle block of a stacked vector of `bodies` pose vectors.
NormalizeFn pose_normalizer(int dim, int bodies = 1);

} // namespace rbl
