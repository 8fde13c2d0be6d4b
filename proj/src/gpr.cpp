#include "rbl/gpr.hpp"

#include <cmath>

#include "rbl/error.hpp"

namespace rbl {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

struct Factor {
  Matrix lower;
  double jitter = 0.0;
};

Factor factorize(const Matrix& k) {
  const Eigen::Index n = k.rows();
  double jitter = 0.0;
  for (int attempt = 0; attempt < 6; ++attempt) {
    Matrix kj = k;
    if (jitter > 0.0) kj.diagonal().array() += jitter;
    Eigen::LLT<Matrix> llt(kj);
    if (llt.info() == Eigen::Success && llt.matrixL().toDenseMatrix().diagonal().minCoeff() > 0.0)
      return {llt.matrixL().toDenseMatrix(), jitter};
    jitter = jitter == 0.0 ? 1e-8 : jitter * 10.0;
  }
  throw ConditioningError("GPR kernel matrix (" + std::to_string(n) + "x" + std::to_string(n) +
                          ") is not positive definite even with jitter 1e-4");
}

Matrix squared_exponential(const Matrix& inputs, const GprHyper& h) {
  const Eigen::Index n = inputs.cols();
  Matrix se(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    se(i, i) = h.amp;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double q = ((inputs.col(i) - inputs.col(j)).array().square() / h.length_scales.array()).sum();
      se(i, j) = se(j, i) = h.amp * std::exp(-0.5 * q);
    }
  }
  return se;
}

void check_training_data(const Matrix& inputs, const Matrix& targets) {
  if (inputs.cols() < 2) throw InvalidParameter("GPR training needs at least 2 samples");
  if (targets.cols() != inputs.cols())
    throw DimensionMismatch("GPR inputs have " + std::to_string(inputs.cols()) + " samples but targets have " +
                            std::to_string(targets.cols()));
  if (inputs.rows() < 1 || targets.rows() < 1) throw InvalidParameter("GPR inputs and targets must be non-empty");
  if (!inputs.allFinite() || !targets.allFinite()) throw InvalidParameter("GPR training data must be finite");
}

} // namespace

void GprHyper::validate(int input_dim) const {
  if (!(amp > 0.0) || !std::isfinite(amp)) throw InvalidParameter("GPR amplitude must be > 0");
  if (length_scales.size() != input_dim)
    throw DimensionMismatch("GPR needs " + std::to_string(input_dim) + " length scales, got " +
                            std::to_string(length_scales.size()));
  if (!(length_scales.array() > 0.0).all() || !length_scales.allFinite())
    throw InvalidParameter("GPR length scales must be > 0");
  if (!(lin >= 0.0) || !std::isfinite(lin)) throw InvalidParameter("GPR linear weight must be >= 0");
  if (!(noise_var >= 0.0) || !std::isfinite(noise_var)) throw InvalidParameter("GPR noise variance must be >= 0");
}

double gpr_kernel(const Vector& p, const Vector& q, const GprHyper& h, bool same_sample) {
  const double mahal = ((p - q).array().square() / h.length_scales.array()).sum();
  return h.amp * std::exp(-0.5 * mahal) + h.lin * p.dot(q) + (same_sample ? h.noise_var : 0.0);
}

Matrix gpr_kernel_matrix(const Matrix& inputs, const GprHyper& h) {
  Matrix k = squared_exponential(inputs, h);
  if (h.lin != 0.0) k += h.lin * inputs.transpose() * inputs;
  k.diagonal().array() += h.noise_var;
  return k;
}

Vector GprLayout::pack(const GprHyper& h) const {
  Vector x(size());
  int i = 0;
  x(i++) = std::log(h.amp);
  for (int m = 0; m < input_dim; ++m) x(i++) = std::log(h.length_scales(m));
  if (fit_lin) x(i++) = std::log(h.lin);
  if (fit_noise) x(i++) = std::log(h.noise_var);
  return x;
}

GprHyper GprLayout::unpack(const Vector& x, const GprHyper& base) const {
  GprHyper h = base;
  int i = 0;
  h.amp = std::exp(x(i++));
  h.length_scales.resize(input_dim);
  for (int m = 0; m < input_dim; ++m) h.length_scales(m) = std::exp(x(i++));
  if (fit_lin) h.lin = std::exp(x(i++));
  if (fit_noise) h.noise_var = std::exp(x(i++));
  return h;
}

MarginalLikelihood gpr_log_marginal_likelihood(const GprHyper& h, const GprLayout& layout, const Matrix& inputs,
                                               const Matrix& targets) {
  const Eigen::Index n = inputs.cols();
  const double outputs = static_cast<double>(targets.rows());
  const Matrix se = squared_exponential(inputs, h);
  const Matrix gram = inputs.transpose() * inputs;
  Matrix k = se + h.lin * gram;
  k.diagonal().array() += h.noise_var;
  const Factor f = factorize(k);

  const Matrix yc = (targets.colwise() - targets.rowwise().mean()).transpose(); // N x d
  const auto llt = f.lower.triangularView<Eigen::Lower>();
  const Matrix alpha = llt.transpose().solve(llt.solve(yc));
  Matrix kinv = llt.solve(Matrix::Identity(n, n));
  kinv = llt.transpose().solve(kinv);

  MarginalLikelihood out;
  out.jitter = f.jitter;
  out.value = -0.5 * (yc.array() * alpha.array()).sum() - outputs * f.lower.diagonal().array().log().sum() -
              0.5 * outputs * static_cast<double>(n) * kLog2Pi;

  // dL/dtheta = 0.5 * tr(W dK/dtheta), W = alpha alpha^T - d K^-1.
  const Matrix w = alpha * alpha.transpose() - outputs * kinv;
  out.gradient.resize(layout.size());
  int i = 0;
  out.gradient(i++) = 0.5 * (w.array() * se.array()).sum(); // d/d log amp
  for (int m = 0; m < layout.input_dim; ++m) {
    double g = 0.0;
    for (Eigen::Index a = 0; a < n; ++a)
      for (Eigen::Index b = 0; b < n; ++b) {
        const double diff = inputs(m, a) - inputs(m, b);
        g += w(a, b) * se(a, b) * 0.5 * diff * diff / h.length_scales(m);
      }
    out.gradient(i++) = 0.5 * g;
  }
  if (layout.fit_lin) out.gradient(i++) = 0.5 * h.lin * (w.array() * gram.array()).sum();
  if (layout.fit_noise) out.gradient(i++) = 0.5 * h.noise_var * w.trace();
  return out;
}

GprModel gpr_fit(const Matrix& inputs, const Matrix& targets, const GprHyper& hyper) {
  check_training_data(inputs, targets);
  hyper.validate(static_cast<int>(inputs.rows()));
  GprModel model;
  model.hyper = hyper;
  model.training_inputs = inputs;
  model.training_targets = targets;
  model.target_mean = targets.rowwise().mean();
  const Factor f = factorize(gpr_kernel_matrix(inputs, hyper));
  model.chol_lower = f.lower;
  model.jitter = f.jitter;
  const Matrix yc = (targets.colwise() - model.target_mean).transpose();
  const auto llt = f.lower.triangularView<Eigen::Lower>();
  model.alpha = llt.transpose().solve(llt.solve(yc));
  const double outputs = static_cast<double>(targets.rows());
  model.log_likelihood = -0.5 * (yc.array() * model.alpha.array()).sum() -
                         outputs * f.lower.diagonal().array().log().sum() -
                         0.5 * outputs * static_cast<double>(inputs.cols()) * kLog2Pi;
  model.converged = true;
  return model;
}

GprModel gpr_train(const Matrix& inputs, const Matrix& targets, const GprHyper& init, const GprTrainOptions& opts) {
  check_training_data(inputs, targets);
  init.validate(static_cast<int>(inputs.rows()));
  GprLayout layout{static_cast<int>(inputs.rows()), init.lin > 0.0, init.noise_var > 0.0};

  Vector x = layout.pack(init);
  MarginalLikelihood cur = gpr_log_marginal_likelihood(init, layout, inputs, targets);
  double step = opts.initial_step;
  int iterations = 0;
  bool converged = false;
  while (iterations < opts.max_iterations) {
    if (cur.gradient.norm() < opts.gradient_tol) {
      converged = true;
      break;
    }
    bool accepted = false;
    for (int bt = 0; bt < 60 && !accepted; ++bt, step *= 0.5) {
      const Vector xn = (x + step * cur.gradient).cwiseMax(-30.0).cwiseMin(30.0);
      try {
        MarginalLikelihood next = gpr_log_marginal_likelihood(layout.unpack(xn, init), layout, inputs, targets);
        if (std::isfinite(next.value) && next.value > cur.value) {
          x = xn;
          cur = std::move(next);
          accepted = true;
        }
      } catch (const ConditioningError&) {
        // Rejected step; shrink and retry.
      }
    }
    if (!accepted) break;
    step *= 3.0; // undo the last halving and grow
    ++iterations;
  }
  // A stalled line search at a gradient small relative to the objective is
  // the rounding floor of the likelihood, not a failure.
  if (!converged && cur.gradient.norm() < opts.gradient_tol * (1.0 + std::abs(cur.value))) converged = true;

  GprModel model = gpr_fit(inputs, targets, layout.unpack(x, init));
  model.iterations = iterations;
  model.converged = converged;
  return model;
}

GprPrediction gpr_predict(const GprModel& model, const Vector& query) {
  if (query.size() != model.training_inputs.rows())
    throw DimensionMismatch("GPR query has length " + std::to_string(query.size()) + ", model expects " +
                            std::to_string(model.training_inputs.rows()));
  if (!query.allFinite()) throw InvalidParameter("GPR query must be finite");
  const Eigen::Index n = model.training_inputs.cols();
  Vector kstar(n);
  for (Eigen::Index i = 0; i < n; ++i) kstar(i) = gpr_kernel(query, model.training_inputs.col(i), model.hyper);
  GprPrediction p;
  p.mean = model.target_mean + model.alpha.transpose() * kstar;
  const Vector v = model.chol_lower.triangularView<Eigen::Lower>().solve(kstar);
  const double prior = model.hyper.amp + model.hyper.lin * query.squaredNorm();
  p.variance = Vector::Constant(model.training_targets.rows(), std::max(prior - v.squaredNorm(), 0.0));
  return p;
}

Matrix gpr_locate(const GprModel& model, const Matrix& rssi_columns) {
  Matrix out(model.training_targets.rows(), rssi_columns.cols());
  for (Eigen::Index k = 0; k < rssi_columns.cols(); ++k) out.col(k) = gpr_predict(model, rssi_columns.col(k)).mean;
  return out;
}

EstimationResult gpr_rbl_project(const Matrix& per_node_estimates, const RigidBodyTemplate& tmpl) {
  if (per_node_estimates.rows() != tmpl.dim() || per_node_estimates.cols() != tmpl.size())
    throw DimensionMismatch("per-node estimates do not match the template shape");
  EstimationResult res;
  res.converged = true;
  if (tmpl.size() == 1) {
    Pose p = Pose::identity(tmpl.dim());
    p.translation = per_node_estimates.col(0) - tmpl.nodes().col(0);
    res.pose = p;
    res.rotation_indeterminate = true;
    res.note = "single node: rotation is not observable";
  } else {
    res.pose = procrustes_align(tmpl, per_node_estimates).pose;
  }
  res.node_positions = apply_pose(tmpl, *res.pose).positions;
  res.objective = (res.node_positions - per_node_estimates).squaredNorm();
  res.objective_trace = {res.objective};
  return res;
}

} // namespace rbl
