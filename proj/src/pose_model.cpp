#include "rbl/pose_model.hpp"

#include <cmath>

#include "rbl/error.hpp"

namespace rbl {

namespace {

constexpr double kLn10 = 2.302585092994045684;

// Measurement value and gradient with respect to the node position.
double measure(const Vector& s, const Vector& a, Modality modality, const RssiModelParams& rssi,
               Vector* grad) {
  const Vector diff = s - a;
  const double rho2 = diff.squaredNorm();
  const double rho = std::sqrt(rho2);
  switch (modality) {
  case Modality::Range:
    if (grad) *grad = rho > 0.0 ? Vector(diff / rho) : Vector(Vector::Zero(s.size()));
    return rho;
  case Modality::Doa:
    if (grad) {
      grad->resize(2);
      if (rho2 > 0.0) {
        (*grad)(0) = -diff(1) / rho2;
        (*grad)(1) = diff(0) / rho2;
      } else {
        grad->setZero();
      }
    }
    return std::atan2(diff(1), diff(0));
  case Modality::Rssi:
    if (grad)
      *grad = rho2 > 0.0 ? Vector(-10.0 * rssi.eta / kLn10 * diff / rho2) : Vector(Vector::Zero(s.size()));
    return rssi_at_distance(rho, rssi);
  }
  return 0.0;
}

} // namespace

PoseMeasurementModel::PoseMeasurementModel(const RigidBodyTemplate& tmpl, const AnchorSet& anchors,
                                           Modality modality, RssiModelParams rssi)
    : tmpl_(tmpl), anchors_(anchors), modality_(modality), rssi_(rssi) {
  if (tmpl.dim() != anchors.dim()) throw DimensionMismatch("template and anchors differ in dimension");
  if (modality == Modality::Doa && tmpl.dim() != 2)
    throw InvalidParameter("DoA model is defined for 2D bodies only");
}

void PoseMeasurementModel::predict(const Vector& eta, Vector& mu, Matrix* jac) const {
  const int d = dim();
  const int na = d == 2 ? 1 : 3;
  const int k_nodes = tmpl_.size();
  const RotationParam rot(std::vector<double>(eta.data(), eta.data() + na));
  const Matrix q = rotation_matrix(rot);
  const Vector t = eta.tail(d);

  std::vector<Matrix> dq;
  if (jac) {
    dq = rotation_derivatives(rot);
    jac->setZero(measurement_count(), parameter_count());
  }
  mu.resize(measurement_count());

  Matrix world = q * tmpl_.nodes();
  world.colwise() += t;
  // ds_k / d eta, one d x p block per node.
  std::vector<Matrix> ds(static_cast<std::size_t>(jac ? k_nodes : 0));
  for (int k = 0; jac && k < k_nodes; ++k) {
    Matrix b(d, na + d);
    for (int i = 0; i < na; ++i) b.col(i) = dq[static_cast<std::size_t>(i)] * tmpl_.nodes().col(k);
    b.rightCols(d).setIdentity();
    ds[static_cast<std::size_t>(k)] = std::move(b);
  }

  Vector grad;
  for (int m = 0; m < anchors_.size(); ++m) {
    const Vector a = anchors_.positions().col(m);
    for (int k = 0; k < k_nodes; ++k) {
      const int row = m * k_nodes + k;
      mu(row) = measure(world.col(k), a, modality_, rssi_, jac ? &grad : nullptr);
      if (jac) jac->row(row) = grad.transpose() * ds[static_cast<std::size_t>(k)];
    }
  }
}

Matrix PoseMeasurementModel::jacobian_fd(const Vector& eta, double step) const {
  Matrix j(measurement_count(), parameter_count());
  Vector plus, minus;
  for (int i = 0; i < parameter_count(); ++i) {
    Vector ep = eta, em = eta;
    ep(i) += step;
    em(i) -= step;
    predict(ep, plus, nullptr);
    predict(em, minus, nullptr);
    for (int r = 0; r < measurement_count(); ++r) {
      const double diff = modality_ == Modality::Doa ? angle_diff(plus(r), minus(r)) : plus(r) - minus(r);
      j(r, i) = diff / (2.0 * step);
    }
  }
  return j;
}

ResidualFn PoseMeasurementModel::residual(const ObservationSet& obs, double scale) const {
  if (obs.anchor_count() != anchors_.size() || obs.node_count() != tmpl_.size())
    throw DimensionMismatch("observation matrix is " + std::to_string(obs.anchor_count()) + "x" +
                            std::to_string(obs.node_count()) + " but the model expects " +
                            std::to_string(anchors_.size()) + "x" + std::to_string(tmpl_.size()));
  if (obs.modality != modality_) throw InvalidParameter("observation modality does not match the model");
  Vector y = flatten_observations(obs);
  const double inv = 1.0 / scale;
  return [this, y = std::move(y), inv](const Vector& eta, Vector& r, Matrix* jac) {
    predict(eta, r, jac);
    r -= y;
    if (modality_ == Modality::Doa)
      for (Eigen::Index i = 0; i < r.size(); ++i) r(i) = wrap_angle(r(i));
    r *= inv;
    if (jac) *jac *= inv;
  };
}

void predict_point(const Vector& s, const AnchorSet& anchors, Modality modality,
                   const RssiModelParams& rssi, Vector& mu, Matrix* jac) {
  const int m_count = anchors.size();
  mu.resize(m_count);
  if (jac) jac->resize(m_count, s.size());
  Vector grad;
  for (int m = 0; m < m_count; ++m) {
    mu(m) = measure(s, anchors.positions().col(m), modality, rssi, jac ? &grad : nullptr);
    if (jac) jac->row(m) = grad.transpose();
  }
}

Vector flatten_observations(const ObservationSet& obs) {
  const int m_count = obs.anchor_count(), k_count = obs.node_count();
  Vector y(m_count * k_count);
  for (int m = 0; m < m_count; ++m)
    for (int k = 0; k < k_count; ++k) y(m * k_count + k) = obs.values(m, k);
  return y;
}

NormalizeFn pose_normalizer(int dim, int bodies) {
  const int na = dim == 2 ? 1 : 3;
  const int p = na + dim;
  return [na, p, bodies](Vector& x) {
    for (int b = 0; b < bodies; ++b)
      for (int i = 0; i < na; ++i) x(b * p + i) = wrap_angle(x(b * p + i));
  };
}

} // namespace rbl
