#include "balancekit/gps.hpp"

#include "balancekit/log.hpp"

#include <json.hpp>

#include <Eigen/Cholesky>
#include <Eigen/QR>

#include <cmath>
#include <sstream>

namespace balancekit {

namespace {

// Design matrix with a leading intercept column.
Eigen::MatrixXd with_intercept(const Eigen::Ref<const Eigen::MatrixXd>& covariates) {
  Eigen::MatrixXd design(covariates.rows(), covariates.cols() + 1);
  design.col(0).setOnes();
  design.rightCols(covariates.cols()) = covariates;
  return design;
}

// Linear predictors eta (n x J), group-1 column pinned at zero.
Eigen::MatrixXd linear_predictors(const Eigen::VectorXd& theta, const Eigen::MatrixXd& design,
                                  int groups) {
  const Eigen::Index block = design.cols();
  Eigen::MatrixXd eta = Eigen::MatrixXd::Zero(design.rows(), groups);
  for (int j = 2; j <= groups; ++j)
    eta.col(j - 1) = design * theta.segment((j - 2) * block, block);
  return eta;
}

Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& eta) {
  Eigen::MatrixXd probs(eta.rows(), eta.cols());
  for (Eigen::Index i = 0; i < eta.rows(); ++i) {
    const double m = eta.row(i).maxCoeff();
    const Eigen::RowVectorXd ex = (eta.row(i).array() - m).exp();
    probs.row(i) = ex / ex.sum();
  }
  return probs;
}

double multinomial_loglik(const Eigen::MatrixXd& eta, const Eigen::VectorXi& treatment) {
  double ll = 0.0;
  for (Eigen::Index i = 0; i < eta.rows(); ++i) {
    const double m = eta.row(i).maxCoeff();
    const double lse = m + std::log((eta.row(i).array() - m).exp().sum());
    ll += eta(i, treatment[i] - 1) - lse;
  }
  return ll;
}

// Ridge penalty applies to slope coefficients only, never intercepts.
double penalty(const Eigen::VectorXd& theta, Eigen::Index block, double ridge) {
  if (ridge == 0.0) return 0.0;
  double ss = 0.0;
  for (Eigen::Index k = 0; k < theta.size(); ++k)
    if (k % block != 0) ss += theta[k] * theta[k];
  return 0.5 * ridge * ss;
}

struct FitWorkspace {
  Eigen::MatrixXd design;
  Eigen::VectorXi treatment;
  Eigen::MatrixXd indicators;  // n x J
  int groups = 0;
};

Eigen::VectorXd gradient(const FitWorkspace& ws, const Eigen::MatrixXd& probs,
                         const Eigen::VectorXd& theta, double ridge) {
  const Eigen::Index block = ws.design.cols();
  Eigen::VectorXd grad((ws.groups - 1) * block);
  for (int j = 2; j <= ws.groups; ++j) {
    const Eigen::VectorXd resid = ws.indicators.col(j - 1) - probs.col(j - 1);
    grad.segment((j - 2) * block, block) = ws.design.transpose() * resid;
  }
  if (ridge != 0.0) {
    for (Eigen::Index k = 0; k < grad.size(); ++k)
      if (k % block != 0) grad[k] -= ridge * theta[k];
  }
  return grad;
}

// Negative Hessian of the log-likelihood,
// (negH)_{jk} = sum_i e_ij (delta_jk - e_ik) x_i x_i^T; positive semi-definite.
Eigen::MatrixXd neg_hessian(const FitWorkspace& ws, const Eigen::MatrixXd& probs, double ridge) {
  const Eigen::Index block = ws.design.cols();
  const Eigen::Index dim = (ws.groups - 1) * block;
  Eigen::MatrixXd neg_h = Eigen::MatrixXd::Zero(dim, dim);
  for (int j = 2; j <= ws.groups; ++j) {
    for (int k = j; k <= ws.groups; ++k) {
      const Eigen::ArrayXd v =
          probs.col(j - 1).array() * ((j == k ? 1.0 : 0.0) - probs.col(k - 1).array());
      const Eigen::MatrixXd blk = ws.design.transpose() * v.matrix().asDiagonal() * ws.design;
      neg_h.block((j - 2) * block, (k - 2) * block, block, block) = blk;
      if (k != j)
        neg_h.block((k - 2) * block, (j - 2) * block, block, block) = blk.transpose();
    }
  }
  if (ridge != 0.0) {
    for (Eigen::Index d = 0; d < dim; ++d)
      if (d % block != 0) neg_h(d, d) += ridge;
  }
  return neg_h;
}

void check_design_rank(const Eigen::MatrixXd& design, const std::vector<std::string>& names) {
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  const Eigen::Index rank = qr.rank();
  if (rank >= design.cols()) return;
  const auto perm = qr.colsPermutation().indices();
  std::ostringstream msg;
  msg << "design matrix is rank deficient (rank " << rank << " of " << design.cols()
      << "); dependent columns:";
  for (Eigen::Index k = rank; k < design.cols(); ++k) {
    const Eigen::Index col = perm[k];
    if (col == 0) {
      msg << " intercept";
    } else if (col - 1 < static_cast<Eigen::Index>(names.size())) {
      msg << " '" << names[col - 1] << "'";
    } else {
      msg << " x" << col;
    }
  }
  throw NumericalError(msg.str());
}

}  // namespace

GpsModel fit_multinomial(const ObservationalSample& sample, const FitOptions& options) {
  validate_sample(sample);
  const int groups = sample.groups;
  const Eigen::Index n = sample.size();
  const Eigen::Index block = sample.covariate_count() + 1;
  const Eigen::Index dim = (groups - 1) * block;
  if (n <= dim)
    throw NumericalError("sample size " + std::to_string(n) +
                         " is too small for dim(theta) = " + std::to_string(dim));

  FitWorkspace ws;
  ws.design = with_intercept(sample.covariates);
  ws.treatment = sample.treatment;
  ws.groups = groups;
  ws.indicators = Eigen::MatrixXd::Zero(n, groups);
  for (Eigen::Index i = 0; i < n; ++i) ws.indicators(i, sample.treatment[i] - 1) = 1.0;

  check_design_rank(ws.design, sample.covariate_names);

  GpsModel model;
  model.groups = groups;
  model.covariates = static_cast<int>(sample.covariate_count());
  model.covariate_names = sample.covariate_names;
  model.theta = Eigen::VectorXd::Zero(dim);

  Eigen::MatrixXd eta = linear_predictors(model.theta, ws.design, groups);
  double ll = multinomial_loglik(eta, ws.treatment) - penalty(model.theta, block, options.ridge);
  double grad_norm = 0.0;
  int iter = 0;

  for (; iter < options.max_iter; ++iter) {
    const Eigen::MatrixXd probs = softmax_rows(eta);
    const Eigen::VectorXd grad = gradient(ws, probs, model.theta, options.ridge);
    grad_norm = grad.lpNorm<Eigen::Infinity>();
    if (grad_norm <= options.grad_tol) break;

    Eigen::MatrixXd neg_h = neg_hessian(ws, probs, options.ridge);
    Eigen::VectorXd step;
    double jitter = 0.0;
    for (int attempt = 0; attempt < 6; ++attempt) {
      Eigen::LDLT<Eigen::MatrixXd> ldlt(neg_h);
      step = ldlt.solve(grad);
      if (ldlt.info() == Eigen::Success && step.allFinite()) break;
      // Fisher-style stabilization when the solve degenerates.
      jitter = jitter == 0.0 ? 1e-8 * (1.0 + neg_h.diagonal().maxCoeff()) : jitter * 100.0;
      neg_h.diagonal().array() += jitter;
      step.setZero();
    }
    if (!step.allFinite() || step.isZero()) break;

    double scale = 1.0;
    Eigen::VectorXd candidate;
    double ll_new = ll;
    bool accepted = false;
    for (int halving = 0; halving < 40; ++halving) {
      candidate = model.theta + scale * step;
      eta = linear_predictors(candidate, ws.design, groups);
      ll_new = multinomial_loglik(eta, ws.treatment) - penalty(candidate, block, options.ridge);
      if (std::isfinite(ll_new) && ll_new >= ll - 1e-12 * (1.0 + std::abs(ll))) {
        accepted = true;
        break;
      }
      scale *= 0.5;
    }
    if (!accepted) break;
    model.theta = candidate;
    ll = ll_new;
  }

  eta = linear_predictors(model.theta, ws.design, groups);
  const Eigen::MatrixXd probs = softmax_rows(eta);
  grad_norm =
      gradient(ws, probs, model.theta, options.ridge).lpNorm<Eigen::Infinity>();
  model.converged = grad_norm <= options.grad_tol;
  model.iterations = iter;
  model.final_gradient_norm = grad_norm;
  model.log_likelihood = multinomial_loglik(eta, ws.treatment);
  if (!model.converged) {
    std::ostringstream msg;
    msg << "Newton-Raphson did not converge in " << options.max_iter
        << " iterations (gradient max-norm " << grad_norm << ")";
    model.warnings.push_back(msg.str());
    log_warn(msg.str());
  }
  if (probs.minCoeff() < 1e-12) {
    model.warnings.push_back("fitted score below 1e-12: possible quasi-separation");
    log_warn(model.warnings.back());
  }
  return model;
}

PropensityMatrix predict_gps(const GpsModel& model,
                             const Eigen::Ref<const Eigen::MatrixXd>& covariates) {
  if (covariates.cols() != model.covariates)
    throw ValidationError("covariate count " + std::to_string(covariates.cols()) +
                          " does not match the model's " + std::to_string(model.covariates));
  const Eigen::MatrixXd design = with_intercept(covariates);
  const Eigen::MatrixXd eta = linear_predictors(model.theta, design, model.groups);
  return PropensityMatrix{softmax_rows(eta), ScoreSource::fitted};
}

Eigen::MatrixXd score_vectors(const GpsModel& model, const ObservationalSample& sample) {
  if (!model.converged)
    log_warn("score vectors requested from a non-converged model; proceeding");
  if (sample.covariate_count() != model.covariates)
    throw ValidationError("sample covariates do not match the model");
  const Eigen::Index n = sample.size();
  const Eigen::Index block = model.covariates + 1;
  const Eigen::MatrixXd design = with_intercept(sample.covariates);
  const Eigen::MatrixXd probs =
      softmax_rows(linear_predictors(model.theta, design, model.groups));
  Eigen::MatrixXd scores(n, model.dim());
  for (int j = 2; j <= model.groups; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const double resid = (sample.treatment[i] == j ? 1.0 : 0.0) - probs(i, j - 1);
      scores.row(i).segment((j - 2) * block, block) = resid * design.row(i);
    }
  }
  return scores;
}

Eigen::MatrixXd information_matrix(const GpsModel& model, const ObservationalSample& sample) {
  const Eigen::MatrixXd scores = score_vectors(model, sample);
  const Eigen::Index dim = scores.cols();
  Eigen::MatrixXd info = Eigen::MatrixXd::Zero(dim, dim);
  info.selfadjointView<Eigen::Lower>().rankUpdate(scores.transpose(),
                                                  1.0 / static_cast<double>(scores.rows()));
  info.triangularView<Eigen::Upper>() = info.transpose();
  return info;
}

Eigen::MatrixXd information_matrix_hessian(const GpsModel& model,
                                           const ObservationalSample& sample) {
  FitWorkspace ws;
  ws.design = with_intercept(sample.covariates);
  ws.treatment = sample.treatment;
  ws.groups = model.groups;
  const Eigen::MatrixXd probs =
      softmax_rows(linear_predictors(model.theta, ws.design, model.groups));
  return neg_hessian(ws, probs, 0.0) / static_cast<double>(sample.size());
}

double log_likelihood(const GpsModel& model, const ObservationalSample& sample) {
  const Eigen::MatrixXd design = with_intercept(sample.covariates);
  const Eigen::MatrixXd eta = linear_predictors(model.theta, design, model.groups);
  return multinomial_loglik(eta, sample.treatment);
}

std::string gps_model_to_json(const GpsModel& model) {
  nlohmann::json j;
  j["model"] = "multinomial_logistic";
  j["groups"] = model.groups;
  j["covariates"] = model.covariates;
  j["reference_group"] = model.reference_group;
  j["theta"] = std::vector<double>(model.theta.data(), model.theta.data() + model.theta.size());
  j["converged"] = model.converged;
  j["iterations"] = model.iterations;
  j["final_gradient_norm"] = model.final_gradient_norm;
  j["log_likelihood"] = model.log_likelihood;
  j["covariate_names"] = model.covariate_names;
  j["warnings"] = model.warnings;
  return j.dump(2);
}

GpsModel gps_model_from_json(const std::string& text) {
  const nlohmann::json j = nlohmann::json::parse(text);
  GpsModel model;
  model.groups = j.at("groups").get<int>();
  model.covariates = j.at("covariates").get<int>();
  model.reference_group = j.value("reference_group", 1);
  const auto theta = j.at("theta").get<std::vector<double>>();
  model.theta = Eigen::Map<const Eigen::VectorXd>(theta.data(), theta.size());
  model.converged = j.at("converged").get<bool>();
  model.iterations = j.value("iterations", 0);
  model.final_gradient_norm = j.value("final_gradient_norm", 0.0);
  model.log_likelihood = j.value("log_likelihood", 0.0);
  if (j.contains("covariate_names"))
    model.covariate_names = j["covariate_names"].get<std::vector<std::string>>();
  if (j.contains("warnings")) model.warnings = j["warnings"].get<std::vector<std::string>>();
  return model;
}

}  // namespace balancekit
