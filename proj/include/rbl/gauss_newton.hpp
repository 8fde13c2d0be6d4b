#pragma once

#include <functional>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace rbl {

struct GaussNewtonOptions {
  int max_iterations = 200;
  double gradient_tol = 1e-10;
  double step_tol = 1e-12;
  // Gradient threshold, relative to 1 + |J|_F |r|, accepted as converged when
  // progress stalls at the floating-point floor. The threshold is never below
  // 10 sqrt(eps) |J|_F |r|, where a step's cost decrease is no longer resolvable.
  double stall_gradient_rel = 1e-8;
  int max_backtracks = 40;
};

enum class Termination { Gradient, Step, LineSearch, MaxIterations, NonFinite };
std::string_view to_string(Termination t);

struct GaussNewtonReport {
  Eigen::VectorXd x;
  double cost = 0.0;          // sum of squared residuals
  double gradient_norm = 0.0; // |J^T r|
  double gradient_tolerance = 0.0;
  int iterations = 0;
  bool converged = false;
  Termination termination = Termination::MaxIterations;
  std::vector<double> trace; // cost of every accepted iterate, starting point first
  Eigen::MatrixXd jtj;       // J^T J at the returned point
};

// Fills the residual vector and, when `jac` is non-null, its Jacobian.
using ResidualFn = std::function<void(const Eigen::VectorXd& x, Eigen::VectorXd& r, Eigen::MatrixXd* jac)>;
// Maps a parameter vector back to its canonical chart (e.g. wraps angles).
using NormalizeFn = std::function<void(Eigen::VectorXd& x)>;

// Gauss-Newton with Armijo backtracking. Steps are minimum-norm least-squares
// solutions, so rank-deficient Jacobians move only along determined directions.
// Accepted costs never increase.
GaussNewtonReport gauss_newton(const ResidualFn& residual, Eigen::VectorXd x0,
                               const GaussNewtonOptions& opts = {},
                               const NormalizeFn& normalize = {});

} // namespace rbl
