#include <doctest.h>

#include <cmath>

#include "rbl/error.hpp"
#include "rbl/gpr.hpp"
#include "test_support.hpp"

using namespace rbl;
using namespace rbl::testing;

namespace {

GprHyper hyper(int m, double amp = 1.0, double ls = 1.0, double lin = 0.0, double noise = 0.0) {
  GprHyper h;
  h.amp = amp;
  h.length_scales = Vector::Constant(m, ls);
  h.lin = lin;
  h.noise_var = noise;
  return h;
}

// Dense Gaussian elimination with partial pivoting; deliberately not Eigen.
std::vector<double> solve_naive(std::vector<std::vector<double>> a, std::vector<double> b) {
  const std::size_t n = b.size();
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::abs(a[r][c]) > std::abs(a[piv][c])) piv = r;
    std::swap(a[c], a[piv]);
    std::swap(b[c], b[piv]);
    for (std::size_t r = c + 1; r < n; ++r) {
      const double f = a[r][c] / a[c][c];
      for (std::size_t k = c; k < n; ++k) a[r][k] -= f * a[c][k];
      b[r] -= f * b[c];
    }
  }
  std::vector<double> x(n);
  for (std::size_t i = n; i-- > 0;) {
    double s = b[i];
    for (std::size_t k = i + 1; k < n; ++k) s -= a[i][k] * x[k];
    x[i] = s / a[i][i];
  }
  return x;
}

// Brute-force 1D GP posterior mean with a squared-exponential kernel and
// mean-centered targets.
double brute_force_mean(const std::vector<double>& xs, const std::vector<double>& ys, double ls2, double q) {
  const std::size_t n = xs.size();
  double mean = 0.0;
  for (double y : ys) mean += y / static_cast<double>(n);
  std::vector<std::vector<double>> k(n, std::vector<double>(n));
  std::vector<double> yc(n);
  for (std::size_t i = 0; i < n; ++i) {
    yc[i] = ys[i] - mean;
    for (std::size_t j = 0; j < n; ++j) k[i][j] = std::exp(-0.5 * (xs[i] - xs[j]) * (xs[i] - xs[j]) / ls2);
  }
  const auto alpha = solve_naive(k, yc);
  double out = mean;
  for (std::size_t i = 0; i < n; ++i) out += std::exp(-0.5 * (q - xs[i]) * (q - xs[i]) / ls2) * alpha[i];
  return out;
}

struct TrainingSet {
  Matrix inputs;  // M x N
  Matrix targets; // 2 x N
};

TrainingSet random_training_set(Rng& rng, int m, int n) {
  const auto anchors = ring_anchors(m, 10.0, uniform(rng, 0, 1));
  Matrix pts(2, n);
  for (int i = 0; i < pts.size(); ++i) pts.data()[i] = uniform(rng, -6, 6);
  const auto obs = gen_rssi(TransformedBody{pts}, anchors, {}, {2.0, 0, 0}, rng.next());
  return {obs.values, pts};
}

} // namespace

TEST_CASE("kernel examples") {
  Vector p(2), q(2);
  p << 1, 0;
  q << 0, 1;
  CHECK(gpr_kernel(p, p, hyper(2)) == 1.0);
  const double v = gpr_kernel(p, q, hyper(2, 1.0, 1.0, 0.5, 0.1));
  CHECK(v == doctest::Approx(std::exp(-1.0)).epsilon(1e-15));
  CHECK(v == doctest::Approx(0.3679).epsilon(1e-4));
  // noise only on the same sample
  CHECK(gpr_kernel(p, p, hyper(2, 1.0, 1.0, 0.0, 0.1), true) == doctest::Approx(1.1));

  Rng rng(3);
  for (int i = 0; i < 100; ++i) {
    Vector a(4), b(4);
    for (int j = 0; j < 4; ++j) {
      a(j) = uniform(rng, -60, -20);
      b(j) = uniform(rng, -60, -20);
    }
    const auto h = hyper(4, 2.0, 30.0, 0.01, 0.0);
    CHECK(gpr_kernel(a, b, h) == gpr_kernel(b, a, h));
    // direct formula
    double quad = 0.0;
    for (int j = 0; j < 4; ++j) quad += (a(j) - b(j)) * (a(j) - b(j)) / 30.0;
    CHECK(gpr_kernel(a, b, h) == doctest::Approx(2.0 * std::exp(-0.5 * quad) + 0.01 * a.dot(b)).epsilon(1e-13));
  }
}

TEST_CASE("hyperparameter validation") {
  CHECK_THROWS_AS(hyper(2, 0.0).validate(2), InvalidParameter);
  CHECK_THROWS_AS(hyper(2, 1.0, -1.0).validate(2), InvalidParameter);
  CHECK_THROWS_AS(hyper(2, 1.0, 1.0, -0.1).validate(2), InvalidParameter);
  CHECK_THROWS_AS(hyper(3).validate(2), DimensionMismatch);
}

TEST_CASE("noiseless interpolation at training inputs") {
  Rng rng(21);
  for (int s = 0; s < 20; ++s) {
    const auto ts = random_training_set(rng, 4, 25);
    const auto model = gpr_fit(ts.inputs, ts.targets, hyper(4, 4.0, 25.0));
    for (int i = 0; i < ts.inputs.cols(); ++i) {
      const auto pr = gpr_predict(model, ts.inputs.col(i));
      CHECK((pr.mean - ts.targets.col(i)).cwiseAbs().maxCoeff() < 1e-6);
      CHECK(pr.variance.minCoeff() >= 0.0);
    }
  }
}

TEST_CASE("far queries revert to the prior variance") {
  Rng rng(5);
  const auto ts = random_training_set(rng, 3, 20);
  const auto model = gpr_fit(ts.inputs, ts.targets, hyper(3, 2.5, 4.0));
  Vector far = ts.inputs.rowwise().mean();
  far(0) += 100.0; // Mahalanobis distance 50
  const auto pr = gpr_predict(model, far);
  for (int c = 0; c < 2; ++c) CHECK(std::abs(pr.variance(c) - 2.5) <= 0.05 * 2.5);
  CHECK((pr.mean - model.target_mean).norm() < 1e-6);

  Vector bad = far;
  bad(1) = std::nan("");
  CHECK_THROWS_AS(gpr_predict(model, bad), InvalidParameter);
  CHECK_THROWS_AS(gpr_predict(model, Vector::Zero(5)), DimensionMismatch);
}

TEST_CASE("1D predictions between neighbours") {
  const std::vector<double> xs = {0, 1, 2, 3, 4};
  const std::vector<double> ys = {0.0, 1.0, 2.5, 3.0, 4.5};
  Matrix in(1, 5), tg(1, 5);
  for (int i = 0; i < 5; ++i) {
    in(0, i) = xs[i];
    tg(0, i) = ys[i];
  }
  const auto model = gpr_fit(in, tg, hyper(1, 1.0, 1.0));
  for (int i = 0; i + 1 < 5; ++i) {
    const double q = 0.5 * (xs[i] + xs[i + 1]);
    const double mean = gpr_predict(model, Vector::Constant(1, q)).mean(0);
    CHECK(mean == doctest::Approx(brute_force_mean(xs, ys, 1.0, q)).epsilon(1e-9));
    CHECK(mean >= std::min(ys[i], ys[i + 1]));
    CHECK(mean <= std::max(ys[i], ys[i + 1]));
  }
}

TEST_CASE("kernel matrices are PSD after jitter") {
  Rng rng(100);
  for (int s = 0; s < 100; ++s) {
    auto ts = random_training_set(rng, 3, 10 + static_cast<int>(rng.below(20)));
    // duplicate an input to make the noiseless kernel singular
    ts.inputs.col(1) = ts.inputs.col(0);
    const auto h = hyper(3, uniform(rng, 0.5, 5.0), uniform(rng, 1.0, 50.0), s % 2 ? 0.0 : 1e-3);
    const Matrix k = gpr_kernel_matrix(ts.inputs, h);
    Eigen::SelfAdjointEigenSolver<Matrix> es(k);
    CHECK(es.eigenvalues().minCoeff() >= -1e-8 * k.trace());
    const auto model = gpr_fit(ts.inputs, ts.targets, h);
    CHECK(model.jitter <= 1e-4);
    const Matrix rebuilt = model.chol_lower * model.chol_lower.transpose();
    Matrix kj = k;
    kj.diagonal().array() += model.jitter;
    CHECK((rebuilt - kj).cwiseAbs().maxCoeff() < 1e-9 * k.cwiseAbs().maxCoeff());
    CHECK(std::isfinite(model.log_likelihood));
  }
}

TEST_CASE("hopeless conditioning is reported") {
  Matrix in(1, 2);
  in << 1.0, 1.0;
  Matrix tg(1, 2);
  tg << 0.0, 1.0;
  CHECK_THROWS_AS(gpr_fit(in, tg, hyper(1, 1e20, 1.0)), ConditioningError);
}

TEST_CASE("marginal likelihood gradient matches finite differences") {
  Rng rng(77);
  for (int s = 0; s < 30; ++s) {
    const auto ts = random_training_set(rng, 3, 15);
    const GprHyper h = hyper(3, uniform(rng, 0.5, 5.0), uniform(rng, 5.0, 60.0), 1e-4 * uniform(rng, 0.5, 2),
                             uniform(rng, 0.01, 0.5));
    const GprLayout layout{3, true, true};
    const auto ml = gpr_log_marginal_likelihood(h, layout, ts.inputs, ts.targets);
    REQUIRE(ml.gradient.size() == layout.size());
    const Vector x = layout.pack(h);
    for (int i = 0; i < x.size(); ++i) {
      Vector xp = x, xm = x;
      xp(i) += 1e-6;
      xm(i) -= 1e-6;
      const double fp = gpr_log_marginal_likelihood(layout.unpack(xp, h), layout, ts.inputs, ts.targets).value;
      const double fm = gpr_log_marginal_likelihood(layout.unpack(xm, h), layout, ts.inputs, ts.targets).value;
      const double fd = (fp - fm) / 2e-6;
      CHECK(std::abs(ml.gradient(i) - fd) <= 1e-4 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST_CASE("training raises the marginal likelihood") {
  Rng rng(9);
  const auto ts = random_training_set(rng, 4, 30);
  const GprHyper init = hyper(4, 1.0, 10.0, 0.0, 0.1);
  const GprLayout layout{4, false, true};
  const double before = gpr_log_marginal_likelihood(init, layout, ts.inputs, ts.targets).value;
  const auto model = gpr_train(ts.inputs, ts.targets, init);
  CHECK(model.log_likelihood >= before);
  CHECK(model.iterations <= 500);
  CHECK(model.hyper.lin == 0.0); // not fitted when it starts at zero
  CHECK(model.hyper.noise_var > 0.0);
  if (model.converged) {
    const auto ml = gpr_log_marginal_likelihood(model.hyper, layout, ts.inputs, ts.targets);
    CHECK(ml.gradient.norm() < 1e-6);
  }
}

TEST_CASE("gpr_locate predicts every column") {
  Rng rng(12);
  const auto ts = random_training_set(rng, 4, 40);
  const auto model = gpr_fit(ts.inputs, ts.targets, hyper(4, 10.0, 20.0, 0.0, 0.01));
  const Matrix out = gpr_locate(model, ts.inputs.leftCols(3));
  CHECK(out.rows() == 2);
  CHECK(out.cols() == 3);
  for (int k = 0; k < 3; ++k) CHECK((out.col(k) - gpr_predict(model, ts.inputs.col(k)).mean).norm() == 0.0);
}

TEST_CASE("gpr_rbl_project") {
  Rng rng(1);
  const auto tmpl = square_template();
  const Pose truth = random_pose(rng, 2);
  const Matrix exact = apply_pose(tmpl, truth).positions;
  const auto r = gpr_rbl_project(exact, tmpl);
  CHECK(r.objective < 1e-20);
  CHECK((r.node_positions - exact).cwiseAbs().maxCoeff() < 1e-12);

  Matrix one(2, 1);
  one << 0.2, -0.1;
  Matrix est(2, 1);
  est << 3.0, 4.0;
  const auto single = gpr_rbl_project(est, RigidBodyTemplate(one));
  CHECK(single.rotation_indeterminate);
  CHECK((single.node_positions - est).norm() < 1e-15);

  CHECK_THROWS_AS(gpr_rbl_project(Matrix::Zero(2, 3), tmpl), DimensionMismatch);
}

TEST_CASE("projection reduces node error in most trials") {
  Rng rng(500);
  int wins = 0;
  for (int t = 0; t < 500; ++t) {
    const auto tmpl = random_template(rng, 2, 4 + static_cast<int>(rng.below(4)), 2.0);
    const Matrix truth = apply_pose(tmpl, random_pose(rng, 2)).positions;
    Matrix noisy = truth;
    for (int i = 0; i < noisy.size(); ++i) noisy.data()[i] += 0.3 * rng.normal();
    const auto r = gpr_rbl_project(noisy, tmpl);
    if ((r.node_positions - truth).norm() <= (noisy - truth).norm()) ++wins;
  }
  CHECK(wins >= 475);
}
