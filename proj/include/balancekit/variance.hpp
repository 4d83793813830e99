#pragma once

#include "balancekit/estimators.hpp"
#include "balancekit/gps.hpp"
#include "balancekit/tilt.hpp"
#include "balancekit/types.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

namespace balancekit {

// Analytic d w_ij / d theta for schemes smooth in theta, one n x dim(theta)
// matrix per group. Non-smooth schemes (matching, trimming, restricted,
// custom indicators) throw MethodError directing to the bootstrap.
std::vector<Eigen::MatrixXd> weight_gradient(const TiltScheme& scheme, const GpsModel& model,
                                             const Eigen::Ref<const Eigen::MatrixXd>& covariates);

// Estimated influence values psi_ij and the score-correction pieces.
// psi_ij = D_ij (Y_i - m_j) w_ij + B_j I^{-1} S_i with
// B_j = (1/n) sum_i D_ij (Y_i - m_j) d w_ij / d theta^T.
struct InfluenceDecomposition {
  Eigen::MatrixXd psi;         // n x J
  Eigen::MatrixXd correction;  // J x dim(theta), rows B_j
  double h_sum = 0.0;
  bool information_pseudo_inverted = false;
};

struct SandwichOptions {
  bool include_score_correction = true;  // false treats theta as known
  double level = 0.95;
};

InfluenceDecomposition influence_decomposition(const ObservationalSample& sample,
                                               const WeightSet& weights, const GpsModel& model,
                                               const SandwichOptions& options = {});

// Closed-form variance for every pairwise contrast:
// V = sum_i (psi_ij - psi_ij')^2 / (sum_i h_i)^2, normal-quantile CI.
std::vector<ContrastEstimate> sandwich_pairwise(const ObservationalSample& sample,
                                                const WeightSet& weights, const GpsModel& model,
                                                const SandwichOptions& options = {});

struct BootstrapOptions {
  int reps = 1000;
  std::uint64_t seed = 0;
  int workers = 0;  // 0 => hardware concurrency
  double level = 0.95;
  FitOptions fit;
  std::string replicate_csv_path;  // when set, per-replicate taus land here for audit
};

// Nonparametric bootstrap over units with GPS refit (and re-trimming, for
// trimming schemes) in every resample. Percentile intervals; deterministic
// under a fixed seed regardless of worker count.
std::vector<ContrastEstimate> bootstrap_pairwise(const ObservationalSample& sample,
                                                 const TiltScheme& scheme,
                                                 const BootstrapOptions& options);

}  // namespace balancekit
