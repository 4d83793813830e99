#pragma once

#include "balancekit/types.hpp"

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace balancekit {

struct FitOptions {
  int max_iter = 100;
  double grad_tol = 1e-8;
  // Optional l2 stabilizer on slope coefficients, for separation. Default off.
  double ridge = 0.0;
};

// Multinomial logistic model with group 1 as reference (alpha_1 = 0,
// beta_1 = 0). theta stacks (alpha_j, beta_j) blocks for j = 2..J, each of
// length p+1, so dim(theta) = (J-1)(p+1).
struct GpsModel {
  Eigen::VectorXd theta;
  int groups = 0;
  int covariates = 0;
  int reference_group = 1;
  bool converged = false;
  int iterations = 0;
  double final_gradient_norm = 0.0;
  double log_likelihood = 0.0;
  std::vector<std::string> covariate_names;
  std::vector<std::string> warnings;

  Eigen::Index dim() const { return theta.size(); }
};

// Newton-Raphson maximum likelihood with step-halving. Non-convergence is
// reported on the returned model, not thrown; rank-deficient designs throw
// NumericalError naming the dependent columns.
GpsModel fit_multinomial(const ObservationalSample& sample, const FitOptions& options = {});

// Softmax over linear predictors with the group-1 predictor pinned at zero.
PropensityMatrix predict_gps(const GpsModel& model, const Eigen::Ref<const Eigen::MatrixXd>& covariates);

// Per-unit log-likelihood gradient contributions S_i, one row per unit
// (n x dim(theta)). Column sums vanish at the MLE.
Eigen::MatrixXd score_vectors(const GpsModel& model, const ObservationalSample& sample);

// Outer-product information estimate (1/n) sum_i S_i S_i^T.
Eigen::MatrixXd information_matrix(const GpsModel& model, const ObservationalSample& sample);

// Hessian-based information -(1/n) d^2 l / d theta^2, for cross-checks.
Eigen::MatrixXd information_matrix_hessian(const GpsModel& model, const ObservationalSample& sample);

double log_likelihood(const GpsModel& model, const ObservationalSample& sample);

std::string gps_model_to_json(const GpsModel& model);
GpsModel gps_model_from_json(const std::string& text);

}  // namespace balancekit
