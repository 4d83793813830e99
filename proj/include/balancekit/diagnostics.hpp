#pragma once

#include "balancekit/tilt.hpp"
#include "balancekit/types.hpp"

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace balancekit {

// Balance metrics for one covariate. PSD_j compares the weighted group-j
// mean against the h-weighted target-population mean; ASD compares weighted
// group means pairwise. Both standardize by the square root of the averaged
// unweighted group variances.
struct CovariateBalance {
  std::string name;
  Eigen::VectorXd psd;  // J
  double max_psd = 0.0;
  Eigen::VectorXd asd;  // J(J-1)/2, pairwise order
  double max_asd = 0.0;
  bool degenerate = false;  // zero pooled variance
};

struct BalanceReport {
  std::vector<CovariateBalance> covariates;
  std::string scheme;
};

BalanceReport balance_report(const ObservationalSample& sample, const WeightSet& weights);

struct EssReport {
  Eigen::VectorXd per_group;  // (sum w)^2 / sum w^2 over kept group members
  double total = 0.0;
};

EssReport effective_sample_size(const WeightSet& weights, const Eigen::VectorXi& treatment);

// Literal pooled form: all kept units' own-group weights in one ratio.
double effective_sample_size_pooled(const WeightSet& weights, const Eigen::VectorXi& treatment);

// Within each group, replace every kept unit's index value with the
// equivalently ranked unweighted value: the type-1 (left-continuous step)
// quantile of the group's original values at the unit's weighted rank.
// Excluded units keep their original values. Ties break by original position.
Eigen::VectorXd rank_and_replace(const Eigen::Ref<const Eigen::VectorXd>& index,
                                 const WeightSet& weights, const Eigen::VectorXi& treatment);

}  // namespace balancekit
