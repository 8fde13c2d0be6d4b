#include "rbl/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "rbl/error.hpp"

namespace rbl {

double wrap_angle(double a) {
  double r = std::remainder(a, 2.0 * kPi);
  if (r <= -kPi) r += 2.0 * kPi;
  return r;
}

double angle_diff(double a, double b) { return wrap_angle(a - b); }

RigidBodyTemplate::RigidBodyTemplate(Matrix nodes, std::string label)
    : nodes_(std::move(nodes)), label_(std::move(label)) {
  if (nodes_.rows() != 2 && nodes_.rows() != 3)
    throw InvalidParameter("template dimension must be 2 or 3, got " +
                           std::to_string(nodes_.rows()));
  if (nodes_.cols() < 1) throw InvalidParameter("template needs at least one node");
  if (!nodes_.allFinite()) throw InvalidParameter("template coordinates must be finite");
  for (Eigen::Index i = 0; i < nodes_.cols(); ++i)
    for (Eigen::Index j = i + 1; j < nodes_.cols(); ++j)
      if (nodes_.col(i) == nodes_.col(j))
        throw InvalidParameter("template nodes " + std::to_string(i) + " and " +
                               std::to_string(j) + " coincide");
}

RotationParam::RotationParam(std::vector<double> angles) : angles_(std::move(angles)) {
  if (angles_.size() != 1 && angles_.size() != 3)
    throw InvalidParameter("rotation needs 1 (2D) or 3 (3D) angles, got " +
                           std::to_string(angles_.size()));
  for (double& a : angles_) {
    if (!std::isfinite(a)) throw InvalidParameter("rotation angle must be finite");
    a = wrap_angle(a);
  }
}

RotationParam RotationParam::identity(int dim) {
  return RotationParam(std::vector<double>(dim == 2 ? 1 : 3, 0.0));
}

Pose::Pose(RotationParam r, Vector t) : rotation(std::move(r)), translation(std::move(t)) {
  if (translation.size() != rotation.dim())
    throw DimensionMismatch("translation has " + std::to_string(translation.size()) +
                            " entries for a " + std::to_string(rotation.dim()) +
                            "D rotation");
  if (!translation.allFinite()) throw InvalidParameter("translation must be finite");
}

Pose Pose::identity(int dim) { return Pose(RotationParam::identity(dim), Vector::Zero(dim)); }

Vector Pose::to_vector() const {
  const int na = rotation.angle_count();
  Vector eta(na + translation.size());
  for (int i = 0; i < na; ++i) eta(i) = rotation[i];
  eta.tail(translation.size()) = translation;
  return eta;
}

Pose Pose::from_vector(const Vector& eta, int dim) {
  const int na = dim == 2 ? 1 : 3;
  if (eta.size() != na + dim)
    throw DimensionMismatch("pose vector has wrong length for dimension " + std::to_string(dim));
  std::vector<double> angles(eta.data(), eta.data() + na);
  return Pose(RotationParam(std::move(angles)), eta.tail(dim));
}

DistanceMatrix::DistanceMatrix(Matrix entries, double tol) : entries_(std::move(entries)) {
  const Eigen::Index k = entries_.rows();
  if (entries_.cols() != k) throw DimensionMismatch("distance matrix must be square");
  if (!entries_.allFinite()) throw InvalidParameter("distance matrix entries must be finite");
  for (Eigen::Index i = 0; i < k; ++i) {
    if (std::abs(entries_(i, i)) > tol) throw InvalidParameter("distance matrix diagonal must be zero");
    for (Eigen::Index j = 0; j < k; ++j) {
      if (entries_(i, j) < -tol) throw InvalidParameter("distance matrix entries must be nonnegative");
      if (std::abs(entries_(i, j) - entries_(j, i)) > tol)
        throw InvalidParameter("distance matrix must be symmetric");
    }
  }
  for (Eigen::Index i = 0; i < k; ++i)
    for (Eigen::Index j = 0; j < k; ++j)
      for (Eigen::Index m = 0; m < k; ++m)
        if (entries_(i, j) > entries_(i, m) + entries_(m, j) + tol)
          throw InvalidParameter("distance matrix violates the triangle inequality at (" +
                                 std::to_string(i) + "," + std::to_string(j) + ")");
}

namespace {

Matrix rz(double a) {
  Matrix r = Matrix::Identity(3, 3);
  r(0, 0) = std::cos(a); r(0, 1) = -std::sin(a);
  r(1, 0) = std::sin(a); r(1, 1) = std::cos(a);
  return r;
}
Matrix ry(double b) {
  Matrix r = Matrix::Identity(3, 3);
  r(0, 0) = std::cos(b); r(0, 2) = std::sin(b);
  r(2, 0) = -std::sin(b); r(2, 2) = std::cos(b);
  return r;
}
Matrix rx(double c) {
  Matrix r = Matrix::Identity(3, 3);
  r(1, 1) = std::cos(c); r(1, 2) = -std::sin(c);
  r(2, 1) = std::sin(c); r(2, 2) = std::cos(c);
  return r;
}

// Derivatives of the elementary rotations.
Matrix drz(double a) {
  Matrix r = Matrix::Zero(3, 3);
  r(0, 0) = -std::sin(a); r(0, 1) = -std::cos(a);
  r(1, 0) = std::cos(a); r(1, 1) = -std::sin(a);
  return r;
}
Matrix dry(double b) {
  Matrix r = Matrix::Zero(3, 3);
  r(0, 0) = -std::sin(b); r(0, 2) = std::cos(b);
  r(2, 0) = -std::cos(b); r(2, 2) = -std::sin(b);
  return r;
}
Matrix drx(double c) {
  Matrix r = Matrix::Zero(3, 3);
  r(1, 1) = -std::sin(c); r(1, 2) = -std::cos(c);
  r(2, 1) = std::cos(c); r(2, 2) = -std::sin(c);
  return r;
}

} // namespace

Matrix rotation_matrix(const RotationParam& param) {
  if (param.dim() == 2) {
    const double c = std::cos(param[0]), s = std::sin(param[0]);
    Matrix q(2, 2);
    q << c, -s, s, c;
    return q;
  }
  return rz(param[0]) * ry(param[1]) * rx(param[2]);
}

std::vector<Matrix> rotation_derivatives(const RotationParam& param) {
  if (param.dim() == 2) {
    const double c = std::cos(param[0]), s = std::sin(param[0]);
    Matrix dq(2, 2);
    dq << -s, -c, c, -s;
    return {dq};
  }
  const double a = param[0], b = param[1], c = param[2];
  return {drz(a) * ry(b) * rx(c), rz(a) * dry(b) * rx(c), rz(a) * ry(b) * drx(c)};
}

RotationParam rotation_from_matrix(const Matrix& q) {
  if (q.rows() == 2 && q.cols() == 2) return RotationParam({std::atan2(q(1, 0), q(0, 0))});
  if (q.rows() != 3 || q.cols() != 3) throw DimensionMismatch("rotation matrix must be 2x2 or 3x3");
  const double sb = std::clamp(-q(2, 0), -1.0, 1.0);
  const double b = std::asin(sb);
  if (std::abs(sb) > 1.0 - 1e-12) {
    // Gimbal lock: only a +/- c is observable; put it all on a.
    return RotationParam({std::atan2(-q(0, 1), q(1, 1)), b, 0.0});
  }
  return RotationParam({std::atan2(q(1, 0), q(0, 0)), b, std::atan2(q(2, 1), q(2, 2))});
}

double rotation_distance(const RotationParam& a, const RotationParam& b) {
  if (a.dim() != b.dim()) throw DimensionMismatch("rotations of different dimension");
  if (a.dim() == 2) return std::abs(angle_diff(a[0], b[0]));
  const Matrix r = rotation_matrix(a).transpose() * rotation_matrix(b);
  const Eigen::Vector3d w(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1));
  return std::atan2(0.5 * w.norm(), 0.5 * (r.trace() - 1.0));
}

TransformedBody apply_pose(const RigidBodyTemplate& tmpl, const Pose& pose) {
  if (tmpl.dim() != pose.dim())
    throw DimensionMismatch("template is " + std::to_string(tmpl.dim()) + "D but pose is " +
                            std::to_string(pose.dim()) + "D");
  Matrix s = rotation_matrix(pose.rotation) * tmpl.nodes();
  s.colwise() += pose.translation;
  return {std::move(s)};
}

DistanceMatrix distance_matrix(const Matrix& body) {
  if (body.cols() < 1) throw InvalidParameter("distance matrix needs at least one node");
  if (!body.allFinite()) throw InvalidParameter("node coordinates must be finite");
  const Eigen::Index k = body.cols();
  Matrix d = Matrix::Zero(k, k);
  for (Eigen::Index i = 0; i < k; ++i)
    for (Eigen::Index j = i + 1; j < k; ++j) d(i, j) = d(j, i) = (body.col(i) - body.col(j)).norm();
  return DistanceMatrix(std::move(d));
}

RigidBodyTemplate recover_template_mds(const DistanceMatrix& dm, int dim, std::string label) {
  if (dim != 2 && dim != 3) throw InvalidParameter("embedding dimension must be 2 or 3");
  const Eigen::Index k = dm.size();
  const Matrix d2 = dm.entries().array().square();
  const Matrix centering = Matrix::Identity(k, k) - Matrix::Constant(k, k, 1.0 / static_cast<double>(k));
  const Matrix gram = -0.5 * centering * d2 * centering;

  Eigen::SelfAdjointEigenSolver<Matrix> eig(gram);
  const Vector& lambda = eig.eigenvalues(); // ascending
  const double lmax = std::max(lambda(k - 1), 0.0);
  const double tol = 1e-8 * lmax;
  if (lambda(0) < -tol && lambda(0) < -1e-300) {
    std::ostringstream os;
    os << "distance matrix is not Euclidean: Gram eigenvalue " << lambda(0)
       << " is below tolerance -" << tol;
    throw EmbeddingError(os.str(), -lambda(0) - tol);
  }

  Matrix x = Matrix::Zero(dim, k);
  for (int i = 0; i < dim && i < k; ++i) {
    const Eigen::Index idx = k - 1 - i;
    const double l = std::max(lambda(idx), 0.0);
    x.row(i) = std::sqrt(l) * eig.eigenvectors().col(idx).transpose();
  }
  x.colwise() -= x.rowwise().mean();
  return RigidBodyTemplate(std::move(x), std::move(label));
}

Matrix project_to_rotation(const Matrix& m) {
  Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Matrix u = svd.matrixU();
  const Matrix& v = svd.matrixV();
  if ((u * v.transpose()).determinant() < 0.0) u.col(u.cols() - 1) *= -1.0;
  return u * v.transpose();
}

Alignment procrustes_align(const RigidBodyTemplate& tmpl, const Matrix& observed) {
  const int d = tmpl.dim();
  if (observed.rows() != d || observed.cols() != tmpl.size())
    throw DimensionMismatch("observed matrix shape does not match template");
  if (!observed.allFinite()) throw InvalidParameter("observed coordinates must be finite");

  const Vector xbar = tmpl.centroid();
  const Vector ybar = observed.rowwise().mean();
  const Matrix xc = tmpl.nodes().colwise() - xbar;
  const Matrix yc = observed.colwise() - ybar;

  Eigen::JacobiSVD<Matrix> shape(xc);
  const auto& sv = shape.singularValues();
  const double scale = std::max(tmpl.nodes().cwiseAbs().maxCoeff(), 1.0);
  int rank = 0;
  for (int i = 0; i < sv.size(); ++i)
    if (sv(i) > 1e-10 * scale) ++rank;
  const int needed = d == 2 ? 1 : 2;
  if (rank < needed) {
    throw RankDeficiency("template is degenerate for " + std::to_string(d) +
                             "D alignment: centered node matrix has rank " + std::to_string(rank) +
                             ", need " + std::to_string(needed),
                         rank, Matrix());
  }

  // Rotation maximizing tr(Q^T Y X^T): SVD of the cross-covariance.
  const Matrix h = yc * xc.transpose();
  Eigen::JacobiSVD<Matrix> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Matrix u = svd.matrixU();
  if ((u * svd.matrixV().transpose()).determinant() < 0.0) u.col(d - 1) *= -1.0;
  const Matrix q = u * svd.matrixV().transpose();

  Pose pose(rotation_from_matrix(q), ybar - q * xbar);
  const double residual = (apply_pose(tmpl, pose).positions - observed).norm();
  return {std::move(pose), residual};
}

} // namespace rbl
