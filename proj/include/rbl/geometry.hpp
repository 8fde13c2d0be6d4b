#pragma once

#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace rbl {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

constexpr double kPi = 3.14159265358979323846;

// Reduces an angle to (-pi, pi].
double wrap_angle(double a);
// Wrapped difference a - b in (-pi, pi].
double angle_diff(double a, double b);

// Node coordinates of a rigid body in its own frame, one column per node.
class RigidBodyTemplate {
public:
  RigidBodyTemplate(Matrix nodes, std::string label = {});

  int dim() const { return static_cast<int>(nodes_.rows()); }
  int size() const { return static_cast<int>(nodes_.cols()); }
  const Matrix& nodes() const { return nodes_; }
  const std::string& label() const { return label_; }
  Vector centroid() const { return nodes_.rowwise().mean(); }

private:
  Matrix nodes_;
  std::string label_;
};

// Rotation angles in radians: [alpha] in 2D, [alpha, beta, gamma] in 3D
// applied as Rz(alpha) * Ry(beta) * Rx(gamma). Angles are stored wrapped.
class RotationParam {
public:
  RotationParam() : angles_{0.0} {}
  explicit RotationParam(std::vector<double> angles);
  static RotationParam identity(int dim);

  int dim() const { return angles_.size() == 1 ? 2 : 3; }
  int angle_count() const { return static_cast<int>(angles_.size()); }
  const std::vector<double>& angles() const { return angles_; }
  double operator[](int i) const { return angles_[static_cast<std::size_t>(i)]; }

private:
  std::vector<double> angles_;
};

struct Pose {
  Pose() : translation(Vector::Zero(2)) {}
  Pose(RotationParam r, Vector t);
  static Pose identity(int dim);

  int dim() const { return rotation.dim(); }
  // Packs (angles..., translation...) into one parameter vector.
  Vector to_vector() const;
  static Pose from_vector(const Vector& eta, int dim);
  static int parameter_count(int dim) { return dim == 2 ? 3 : 6; }

  RotationParam rotation;
  Vector translation;
};

// World-frame node coordinates produced by a pose.
struct TransformedBody {
  Matrix positions;
  int dim() const { return static_cast<int>(positions.rows()); }
  int size() const { return static_cast<int>(positions.cols()); }
};

class DistanceMatrix {
public:
  // Validates symmetry, zero diagonal, nonnegativity and the triangle
  // inequality within `tol`.
  explicit DistanceMatrix(Matrix entries, double tol = 1e-9);

  int size() const { return static_cast<int>(entries_.rows()); }
  const Matrix& entries() const { return entries_; }
  double operator()(int i, int j) const { return entries_(i, j); }

private:
  Matrix entries_;
};

Matrix rotation_matrix(const RotationParam& param);
// d Q / d angle_i for each angle, same order as RotationParam::angles().
std::vector<Matrix> rotation_derivatives(const RotationParam& param);
// Angles of a proper rotation matrix (inverse of rotation_matrix).
RotationParam rotation_from_matrix(const Matrix& q);
// Geodesic angle between two rotations in [0, pi].
double rotation_distance(const RotationParam& a, const RotationParam& b);

TransformedBody apply_pose(const RigidBodyTemplate& tmpl, const Pose& pose);

DistanceMatrix distance_matrix(const Matrix& body);

// Classical MDS: double-centered Gram matrix, top-`dim` eigenpairs. The
// result is centered at the origin and unique up to a rigid motion and
// reflection.
RigidBodyTemplate recover_template_mds(const DistanceMatrix& dm, int dim,
                                       std::string label = "mds");

struct Alignment {
  Pose pose;
  double residual = 0.0;
};

// Closed-form least-squares rigid alignment of `tmpl` onto `observed`
// (proper rotations only).
Alignment procrustes_align(const RigidBodyTemplate& tmpl, const Matrix& observed);

// Nearest proper rotation to an arbitrary square matrix in Frobenius norm.
Matrix project_to_rotation(const Matrix& m);

} // namespace rbl
