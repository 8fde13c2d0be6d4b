#pragma once

#include "rbl/estimators.hpp"
#include "rbl/geometry.hpp"

namespace rbl {

// Kernel hyperparameters:
//   k(p, q) = amp * exp(-0.5 (p - q)^T B^-1 (p - q)) + lin * p^T q + noise_var * [p is q]
// with B = diag(length_scales).
struct GprHyper {
  double amp = 1.0;
  Vector length_scales;
  double lin = 0.0;
  double noise_var = 0.0;

  void validate(int input_dim) const;
};

double gpr_kernel(const Vector& p, const Vector& q, const GprHyper& h, bool same_sample = false);
// N x N kernel matrix over input columns, noise term on the diagonal.
Matrix gpr_kernel_matrix(const Matrix& inputs, const GprHyper& h);

// Free hyperparameters live in log space. amp and every length scale are
// always fitted; lin and noise_var are fitted only when their initial value
// is positive, otherwise they stay at zero.
struct GprLayout {
  int input_dim = 0;
  bool fit_lin = false;
  bool fit_noise = false;

  int size() const { return 1 + input_dim + (fit_lin ? 1 : 0) + (fit_noise ? 1 : 0); }
  Vector pack(const GprHyper& h) const;
  GprHyper unpack(const Vector& log_params, const GprHyper& base) const;
};

struct MarginalLikelihood {
  double value = 0.0;
  Vector gradient; // with respect to the packed log parameters
  double jitter = 0.0;
};

// Sum over output coordinates of the Gaussian log marginal likelihood of the
// mean-centered targets (d x N) given inputs (M x N). Throws
// ConditioningError if the kernel cannot be factored with jitter <= 1e-4.
MarginalLikelihood gpr_log_marginal_likelihood(const GprHyper& h, const GprLayout& layout, const Matrix& inputs,
                                               const Matrix& targets);

struct GprTrainOptions {
  int max_iterations = 2000;
  double gradient_tol = 1e-6;
  double initial_step = 0.1;
};

struct GprModel {
  GprHyper hyper;
  Matrix training_inputs;  // M x N
  Matrix training_targets; // d x N
  Vector target_mean;      // d
  Matrix chol_lower;       // Cholesky factor of the (jittered) kernel matrix
  Matrix alpha;            // N x d, K^-1 (targets - mean)
  double jitter = 0.0;
  double log_likelihood = 0.0;
  int iterations = 0;
  bool converged = false;
};

// Condition a model on fixed hyperparameters without optimizing them.
GprModel gpr_fit(const Matrix& inputs, const Matrix& targets, const GprHyper& hyper);
// Gradient ascent of the log marginal likelihood in log-hyperparameter space.
GprModel gpr_train(const Matrix& inputs, const Matrix& targets, const GprHyper& init,
                   const GprTrainOptions& opts = {});

struct GprPrediction {
  Vector mean;
  Vector variance; // latent-function variance, one entry per output coordinate
};

GprPrediction gpr_predict(const GprModel& model, const Vector& query);

// Predicted coordinates for every node (column) of an RSSI observation matrix.
Matrix gpr_locate(const GprModel& model, const Matrix& rssi_columns);

// Rigid-body projection of per-node estimates: Procrustes fit of the template
// to the estimates, positions replaced by the fitted template.
EstimationResult gpr_rbl_project(const Matrix& per_node_estimates, const RigidBodyTemplate& tmpl);

} // namespace rbl
