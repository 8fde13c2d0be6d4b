#include <doctest.h>

#include <cmath>
#include <limits>

#include "rbl/error.hpp"
#include "rbl/geometry.hpp"
#include "test_support.hpp"

using namespace rbl;
using rbl::testing::random_pose;
using rbl::testing::random_template;

namespace {

// Independent oracle: plain loops, no Eigen expression templates.
Matrix oracle_apply(const Matrix& q, const Vector& t, const Matrix& c) {
  Matrix s(c.rows(), c.cols());
  for (int k = 0; k < c.cols(); ++k)
    for (int i = 0; i < c.rows(); ++i) {
      double acc = t(i);
      for (int j = 0; j < c.rows(); ++j) acc += q(i, j) * c(j, k);
      s(i, k) = acc;
    }
  return s;
}

double oracle_dist(const Matrix& x, int i, int j) {
  double s = 0.0;
  for (int r = 0; r < x.rows(); ++r) s += (x(r, i) - x(r, j)) * (x(r, i) - x(r, j));
  return std::sqrt(s);
}

// MDS output is defined up to reflection; align against both handednesses.
double mds_residual(const RigidBodyTemplate& truth, const RigidBodyTemplate& rec) {
  Matrix mirrored = rec.nodes();
  mirrored.row(0) *= -1.0;
  return std::min(procrustes_align(truth, rec.nodes()).residual, procrustes_align(truth, mirrored).residual);
}

Vector vec2(double a, double b) {
  Vector v(2);
  v << a, b;
  return v;
}

} // namespace

TEST_CASE("wrap_angle maps into (-pi, pi]") {
  CHECK(wrap_angle(kPi) == doctest::Approx(kPi));
  CHECK(wrap_angle(-kPi) == doctest::Approx(kPi));
  CHECK(wrap_angle(3 * kPi) == doctest::Approx(kPi));
  CHECK(wrap_angle(0.25) == 0.25);
  CHECK(angle_diff(kPi - 0.1, -kPi + 0.1) == doctest::Approx(-0.2));
  Rng rng(11);
  for (int i = 0; i < 1000; ++i) {
    const double a = wrap_angle(rbl::testing::uniform(rng, -50, 50));
    CHECK(a > -kPi);
    CHECK(a <= kPi);
  }
}

TEST_CASE("rotation_matrix examples") {
  CHECK((rotation_matrix(RotationParam({0.0})) - Matrix::Identity(2, 2)).norm() == 0.0);
  CHECK((rotation_matrix(RotationParam({0.0, 0.0, 0.0})) - Matrix::Identity(3, 3)).norm() == 0.0);

  Matrix quarter(2, 2);
  quarter << 0, -1, 1, 0;
  CHECK((rotation_matrix(RotationParam({kPi / 2})) - quarter).cwiseAbs().maxCoeff() < 1e-15);

  const double a = kPi / 6;
  const Matrix q = rotation_matrix(RotationParam({a}));
  CHECK(std::abs(q(0, 0) - std::cos(a)) <= 1e-15);
  CHECK(std::abs(q(0, 1) + std::sin(a)) <= 1e-15);
  CHECK(std::abs(q(1, 0) - std::sin(a)) <= 1e-15);
  CHECK(std::abs(q(1, 1) - std::cos(a)) <= 1e-15);

  CHECK_THROWS_AS(RotationParam({std::numeric_limits<double>::quiet_NaN()}), InvalidParameter);
  CHECK_THROWS_AS(RotationParam({0.0, std::numeric_limits<double>::infinity(), 0.0}), InvalidParameter);
  CHECK_THROWS_AS(RotationParam({0.0, 1.0}), InvalidParameter);
}

TEST_CASE("3D rotation follows the Z-Y-X convention") {
  const double a = 0.3, b = -0.7, c = 1.1;
  Matrix rz(3, 3), ry(3, 3), rx(3, 3);
  rz << std::cos(a), -std::sin(a), 0, std::sin(a), std::cos(a), 0, 0, 0, 1;
  ry << std::cos(b), 0, std::sin(b), 0, 1, 0, -std::sin(b), 0, std::cos(b);
  rx << 1, 0, 0, 0, std::cos(c), -std::sin(c), 0, std::sin(c), std::cos(c);
  CHECK((rotation_matrix(RotationParam({a, b, c})) - rz * ry * rx).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("rotation invariants on random angles") {
  Rng rng(2024);
  for (int i = 0; i < 500; ++i) {
    const int dim = i % 2 ? 3 : 2;
    const Pose p = random_pose(rng, dim);
    const Matrix q = rotation_matrix(p.rotation);
    CHECK((q.transpose() * q - Matrix::Identity(dim, dim)).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(std::abs(q.determinant() - 1.0) <= 1e-12);
    for (double ang : p.rotation.angles()) {
      CHECK(ang > -kPi);
      CHECK(ang <= kPi);
    }
  }
}

TEST_CASE("rotation_derivatives match central differences") {
  Rng rng(5);
  for (int i = 0; i < 50; ++i) {
    const int dim = i % 2 ? 3 : 2;
    const Pose p = random_pose(rng, dim);
    const auto dq = rotation_derivatives(p.rotation);
    for (int a = 0; a < p.rotation.angle_count(); ++a) {
      auto plus = p.rotation.angles(), minus = p.rotation.angles();
      plus[a] += 1e-6;
      minus[a] -= 1e-6;
      const Matrix fd =
          (rotation_matrix(RotationParam(plus)) - rotation_matrix(RotationParam(minus))) / 2e-6;
      CHECK((fd - dq[a]).cwiseAbs().maxCoeff() < 1e-8);
    }
  }
}

TEST_CASE("rotation_from_matrix inverts rotation_matrix") {
  Rng rng(8);
  for (int i = 0; i < 200; ++i) {
    const int dim = i % 2 ? 3 : 2;
    const Pose p = random_pose(rng, dim);
    const Matrix q = rotation_matrix(p.rotation);
    CHECK((rotation_matrix(rotation_from_matrix(q)) - q).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(rotation_distance(rotation_from_matrix(q), p.rotation) < 1e-7);
  }
  // Gimbal lock still yields the same matrix.
  const Matrix lock = rotation_matrix(RotationParam({0.4, kPi / 2, -0.2}));
  CHECK((rotation_matrix(rotation_from_matrix(lock)) - lock).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("rotation_distance is the geodesic angle") {
  CHECK(rotation_distance(RotationParam({0.1}), RotationParam({-0.2})) == doctest::Approx(0.3));
  CHECK(rotation_distance(RotationParam({kPi - 0.1}), RotationParam({-kPi + 0.1})) == doctest::Approx(0.2));
  CHECK(rotation_distance(RotationParam({0.5, 0, 0}), RotationParam({0, 0, 0})) == doctest::Approx(0.5));
}

TEST_CASE("apply_pose examples") {
  Rng rng(1);
  const auto tmpl = random_template(rng, 2, 5);
  CHECK((apply_pose(tmpl, Pose::identity(2)).positions - tmpl.nodes()).norm() == 0.0);

  Matrix one(2, 1);
  one << 1, 0;
  const auto s = apply_pose(RigidBodyTemplate(one), Pose(RotationParam({kPi / 2}), Vector::Zero(2)));
  CHECK(std::abs(s.positions(0, 0)) < 1e-15);
  CHECK(std::abs(s.positions(1, 0) - 1.0) < 1e-15);

  Matrix tri(2, 3);
  tri << 0, 2, 0.5, 0, 0, 1.5;
  const Pose p(RotationParam({kPi / 4}), vec2(1, 2));
  const Matrix got = apply_pose(RigidBodyTemplate(tri), p).positions;
  const double c = std::cos(kPi / 4), sn = std::sin(kPi / 4);
  Matrix q(2, 2);
  q << c, -sn, sn, c;
  CHECK((got - oracle_apply(q, vec2(1, 2), tri)).cwiseAbs().maxCoeff() <= 1e-12);

  CHECK_THROWS_AS(apply_pose(tmpl, Pose::identity(3)), DimensionMismatch);
}

TEST_CASE("apply_pose is rigid and matches the per-column oracle") {
  Rng rng(77);
  for (int i = 0; i < 300; ++i) {
    const int dim = i % 2 ? 3 : 2;
    const int k = 1 + static_cast<int>(rng.below(8));
    const auto tmpl = random_template(rng, dim, k, 2.0);
    const Pose p = random_pose(rng, dim, 20.0);
    const Matrix s = apply_pose(tmpl, p).positions;
    CHECK((s - oracle_apply(rotation_matrix(p.rotation), p.translation, tmpl.nodes())).cwiseAbs().maxCoeff() <=
          1e-12);
    const Matrix d0 = distance_matrix(tmpl.nodes()).entries();
    const Matrix d1 = distance_matrix(s).entries();
    CHECK((d0 - d1).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("apply_pose is equivariant under composition") {
  Rng rng(99);
  for (int i = 0; i < 200; ++i) {
    const int dim = i % 2 ? 3 : 2;
    const auto tmpl = random_template(rng, dim, 4);
    const Pose p1 = random_pose(rng, dim), p2 = random_pose(rng, dim);
    const Matrix q1 = rotation_matrix(p1.rotation), q2 = rotation_matrix(p2.rotation);
    // p2 applied after p1, as a single pose
    const Pose composed(rotation_from_matrix(q2 * q1), q2 * p1.translation + p2.translation);
    const Matrix twice = apply_pose(RigidBodyTemplate(apply_pose(tmpl, p1).positions), p2).positions;
    CHECK((apply_pose(tmpl, composed).positions - twice).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK((rotation_matrix(composed.rotation) - q2 * q1).cwiseAbs().maxCoeff() <= 1e-12);
  }
  // 2D: angles simply add
  const double a1 = 2.5, a2 = 1.9;
  CHECK((rotation_matrix(RotationParam({a1 + a2})) -
         rotation_matrix(RotationParam({a1})) * rotation_matrix(RotationParam({a2})))
            .cwiseAbs()
            .maxCoeff() <= 1e-12);
}

TEST_CASE("template validation") {
  Matrix dup(2, 2);
  dup << 1, 1, 2, 2;
  CHECK_THROWS_AS(RigidBodyTemplate{dup}, InvalidParameter);
  CHECK_THROWS_AS(RigidBodyTemplate(Matrix::Zero(4, 2)), InvalidParameter);
  Matrix bad(2, 1);
  bad << 0, std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(RigidBodyTemplate{bad}, InvalidParameter);
  CHECK_THROWS_AS(Pose(RotationParam({0.0}), Vector::Zero(3)), DimensionMismatch);
}

TEST_CASE("distance_matrix examples") {
  CHECK(distance_matrix(Matrix::Zero(2, 1)).entries() == Matrix::Zero(1, 1));

  Matrix two(2, 2);
  two << 0, 3, 0, 4;
  const auto d = distance_matrix(two);
  CHECK(d(0, 1) == 5.0);
  CHECK(d(1, 0) == 5.0);

  Matrix sq(2, 4);
  sq << 0, 1, 1, 0, 0, 0, 1, 1;
  const auto ds = distance_matrix(sq);
  const double r2 = std::sqrt(2.0);
  const double expected[4][4] = {{0, 1, r2, 1}, {1, 0, 1, r2}, {r2, 1, 0, 1}, {1, r2, 1, 0}};
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) CHECK(ds(i, j) == doctest::Approx(expected[i][j]).epsilon(1e-15));

  Matrix nan(2, 2);
  nan << 0, 1, 0, std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(distance_matrix(nan), InvalidParameter);

  Rng rng(4);
  for (int i = 0; i < 50; ++i) {
    const auto t = random_template(rng, 3, 6);
    const auto dm = distance_matrix(t.nodes());
    for (int a = 0; a < 6; ++a)
      for (int b = 0; b < 6; ++b) CHECK(std::abs(dm(a, b) - oracle_dist(t.nodes(), a, b)) < 1e-14);
  }
}

TEST_CASE("DistanceMatrix validation") {
  Matrix asym(2, 2);
  asym << 0, 1, 2, 0;
  CHECK_THROWS_AS(DistanceMatrix{asym}, InvalidParameter);
  Matrix tri(3, 3);
  tri << 0, 1, 5, 1, 0, 1, 5, 1, 0;
  CHECK_THROWS_AS(DistanceMatrix{tri}, InvalidParameter);
  Matrix neg(2, 2);
  neg << 0, -1, -1, 0;
  CHECK_THROWS_AS(DistanceMatrix{neg}, InvalidParameter);
}

TEST_CASE("recover_template_mds examples") {
  Matrix two(2, 2);
  two << 0, 2, 0, 0;
  const auto x = recover_template_mds(DistanceMatrix(distance_matrix(two).entries()), 2);
  CHECK(std::abs(std::abs(x.nodes()(0, 0)) - 1.0) < 1e-12);
  CHECK(std::abs(x.nodes()(0, 0) + x.nodes()(0, 1)) < 1e-12);
  CHECK(std::abs(x.nodes()(1, 0)) < 1e-12);
  CHECK(std::abs(x.nodes()(1, 1)) < 1e-12);

  Matrix sq(2, 4);
  sq << 0, 1, 1, 0, 0, 0, 1, 1;
  const RigidBodyTemplate square(sq);
  const auto rec = recover_template_mds(distance_matrix(sq), 2);
  CHECK(rec.centroid().norm() < 1e-12);
  CHECK(mds_residual(square, rec) < 1e-9);

  Rng rng(31);
  const auto five = random_template(rng, 2, 5);
  CHECK(mds_residual(five, recover_template_mds(distance_matrix(five.nodes()), 2)) < 1e-9);
}

TEST_CASE("recover_template_mds round trip up to reflection") {
  Rng rng(123);
  for (int i = 0; i < 100; ++i) {
    const int dim = i % 2 ? 3 : 2;
    const auto t = random_template(rng, dim, dim + 2 + static_cast<int>(rng.below(4)));
    const auto rec = recover_template_mds(distance_matrix(t.nodes()), dim);
    CHECK((distance_matrix(rec.nodes()).entries() - distance_matrix(t.nodes()).entries()).cwiseAbs().maxCoeff() <
          1e-6);
    CHECK(mds_residual(t, rec) < 1e-9);
  }
}

TEST_CASE("recover_template_mds rejects non-Euclidean distances") {
  // A 4-cycle of unit edges with diagonals of 2 satisfies the triangle
  // inequality but has no planar embedding.
  Matrix d(4, 4);
  d << 0, 1, 2, 1, 1, 0, 1, 2, 2, 1, 0, 1, 1, 2, 1, 0;
  try {
    recover_template_mds(DistanceMatrix(d), 2);
    FAIL("expected EmbeddingError");
  } catch (const EmbeddingError& e) {
    CHECK(e.deficit() > 0.0);
  }
}

TEST_CASE("procrustes_align examples") {
  Matrix c(2, 3);
  c << 0, 2, 0.5, 0, 0, 1.5;
  const RigidBodyTemplate tmpl(c);
  const auto self = procrustes_align(tmpl, c);
  CHECK(std::abs(self.pose.rotation[0]) < 1e-12);
  CHECK(self.pose.translation.norm() < 1e-12);
  CHECK(self.residual < 1e-12);

  const Pose truth(RotationParam({kPi / 6}), vec2(2, -1));
  const auto fwd = procrustes_align(tmpl, apply_pose(tmpl, truth).positions);
  CHECK(std::abs(fwd.pose.rotation[0] - kPi / 6) < 1e-9);
  CHECK((fwd.pose.translation - truth.translation).norm() < 1e-9);
  CHECK(fwd.residual < 1e-12);

  CHECK_THROWS_AS(procrustes_align(tmpl, Matrix::Zero(2, 4)), DimensionMismatch);
}

TEST_CASE("procrustes_align beats a local grid search on noisy data") {
  Rng rng(2718);
  for (int inst = 0; inst < 3; ++inst) {
    const auto tmpl = random_template(rng, 2, 5);
    const Pose truth = random_pose(rng, 2);
    Matrix obs = apply_pose(tmpl, truth).positions;
    for (int i = 0; i < obs.size(); ++i) obs.data()[i] += 0.05 * rng.normal();
    const auto best = procrustes_align(tmpl, obs);
    double grid_min = std::numeric_limits<double>::infinity();
    for (int a = -10; a <= 10; ++a)
      for (int x = -10; x <= 10; ++x)
        for (int y = -10; y <= 10; ++y) {
          Vector t = best.pose.translation;
          t(0) += 0.01 * x;
          t(1) += 0.01 * y;
          const Pose p(RotationParam({best.pose.rotation[0] + 0.001 * a}), t);
          const Matrix q = rotation_matrix(p.rotation);
          grid_min = std::min(grid_min, (oracle_apply(q, t, tmpl.nodes()) - obs).norm());
        }
    CHECK(best.residual <= grid_min + 1e-12);
  }
}

TEST_CASE("procrustes_align round trip") {
  Rng rng(42);
  for (int i = 0; i < 200; ++i) {
    const int dim = i % 2 ? 3 : 2;
    const auto tmpl = random_template(rng, dim, dim + 1 + static_cast<int>(rng.below(4)));
    const Pose truth = random_pose(rng, dim, 10.0);
    const auto al = procrustes_align(tmpl, apply_pose(tmpl, truth).positions);
    CHECK(rotation_distance(al.pose.rotation, truth.rotation) < 1e-9);
    for (int a = 0; a < truth.rotation.angle_count(); ++a)
      CHECK(std::abs(angle_diff(al.pose.rotation[a], truth.rotation[a])) < 1e-9);
    CHECK((al.pose.translation - truth.translation).norm() < 1e-9);
  }
}

TEST_CASE("procrustes_align reports degenerate 3D templates") {
  Matrix line(3, 3);
  line << 0, 1, 2, 0, 1, 2, 0, 1, 2;
  try {
    procrustes_align(RigidBodyTemplate(line), line);
    FAIL("expected RankDeficiency");
  } catch (const RankDeficiency& e) {
    CHECK(e.rank() == 1);
  }
}

TEST_CASE("project_to_rotation") {
  Rng rng(3);
  for (int i = 0; i < 50; ++i) {
    const int dim = i % 2 ? 3 : 2;
    const Matrix m = Matrix::Random(dim, dim);
    const Matrix r = project_to_rotation(m);
    CHECK((r.transpose() * r - Matrix::Identity(dim, dim)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(r.determinant() == doctest::Approx(1.0));
    const Matrix q = rotation_matrix(random_pose(rng, dim).rotation);
    CHECK((project_to_rotation(q) - q).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("pose vector packing") {
  Rng rng(6);
  for (int dim : {2, 3}) {
    const Pose p = random_pose(rng, dim);
    const Vector v = p.to_vector();
    CHECK(v.size() == Pose::parameter_count(dim));
    const Pose back = Pose::from_vector(v, dim);
    CHECK((back.to_vector() - v).norm() == 0.0);
  }
}
