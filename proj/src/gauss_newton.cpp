#include "rbl/gauss_newton.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace rbl {

std::string_view to_string(Termination t) {
  switch (t) {
  case Termination::Gradient: return "gradient";
  case Termination::Step: return "step";
  case Termination::LineSearch: return "line_search";
  case Termination::MaxIterations: return "max_iterations";
  case Termination::NonFinite: return "non_finite";
  }
  return "unknown";
}

GaussNewtonReport gauss_newton(const ResidualFn& residual, Eigen::VectorXd x0,
                               const GaussNewtonOptions& opts, const NormalizeFn& normalize) {
  using Eigen::MatrixXd;
  using Eigen::VectorXd;

  GaussNewtonReport rep;
  if (normalize) normalize(x0);
  VectorXd x = std::move(x0);
  VectorXd r;
  MatrixXd jac;
  residual(x, r, &jac);
  double cost = r.squaredNorm();
  rep.trace.push_back(cost);

  auto finish = [&](Termination why) {
    const VectorXd g = jac.transpose() * r;
    rep.x = x;
    rep.cost = cost;
    rep.gradient_norm = g.norm();
    rep.termination = why;
    rep.jtj = jac.transpose() * jac;
    // Below ~sqrt(eps) |J| |r| a Gauss-Newton step lowers the cost by less
    // than its rounding error, so the line search cannot make progress.
    const double resolvable = 10.0 * std::sqrt(std::numeric_limits<double>::epsilon()) * jac.norm() * r.norm();
    const double stall_tol = std::max(opts.stall_gradient_rel * (1.0 + jac.norm() * r.norm()), resolvable);
    if (why == Termination::NonFinite) {
      rep.converged = false;
    } else if (rep.gradient_norm <= opts.gradient_tol) {
      rep.converged = true;
      rep.gradient_tolerance = opts.gradient_tol;
    } else if ((why == Termination::Step || why == Termination::LineSearch) &&
               rep.gradient_norm <= stall_tol) {
      rep.converged = true;
      rep.gradient_tolerance = stall_tol;
    } else {
      rep.converged = false;
      rep.gradient_tolerance = opts.gradient_tol;
    }
    return rep;
  };

  if (!std::isfinite(cost) || !jac.allFinite()) return finish(Termination::NonFinite);

  for (int it = 0; it < opts.max_iterations; ++it) {
    const VectorXd g = jac.transpose() * r;
    if (g.norm() <= opts.gradient_tol) return finish(Termination::Gradient);

    const VectorXd step = -Eigen::CompleteOrthogonalDecomposition<MatrixXd>(jac).solve(r);
    if (!step.allFinite()) return finish(Termination::NonFinite);
    if (step.norm() < opts.step_tol) return finish(Termination::Step);

    // Armijo condition on f = |r|^2, whose directional derivative is 2 g.step.
    const double slope = 2.0 * g.dot(step);
    double lambda = 1.0;
    bool accepted = false;
    VectorXd xn, rn;
    for (int bt = 0; bt < opts.max_backtracks; ++bt, lambda *= 0.5) {
      xn = x + lambda * step;
      if (normalize) normalize(xn);
      residual(xn, rn, nullptr);
      const double cn = rn.squaredNorm();
      if (std::isfinite(cn) && cn <= cost + 1e-4 * lambda * std::min(slope, 0.0) && cn <= cost) {
        accepted = true;
        break;
      }
    }
    if (!accepted) return finish(Termination::LineSearch);

    const double prev_x_norm = (lambda * step).norm();
    x = std::move(xn);
    residual(x, r, &jac);
    cost = r.squaredNorm();
    rep.trace.push_back(cost);
    rep.iterations = it + 1;
    if (!std::isfinite(cost) || !jac.allFinite()) return finish(Termination::NonFinite);
    if (prev_x_norm < opts.step_tol) return finish(Termination::Step);
  }
  const VectorXd g = jac.transpose() * r;
  if (g.norm() <= opts.gradient_tol) return finish(Termination::Gradient);
  return finish(Termination::MaxIterations);
}

} // namespace rbl
