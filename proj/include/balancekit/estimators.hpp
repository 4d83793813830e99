#pragma once

#include "balancekit/tilt.hpp"
#include "balancekit/types.hpp"

#include <vector>

namespace balancekit {

struct GroupMeanEstimate {
  int group = 0;
  double m_hat = 0.0;
  double sum_weights = 0.0;
  int n_used = 0;
  bool variance_unreliable = false;  // single kept unit
};

enum class VarianceMethod { none, sandwich, bootstrap };

struct ContrastEstimate {
  ContrastSpec spec;
  double tau_hat = 0.0;
  double variance = std::numeric_limits<double>::quiet_NaN();
  double se = std::numeric_limits<double>::quiet_NaN();
  double ci_low = std::numeric_limits<double>::quiet_NaN();
  double ci_high = std::numeric_limits<double>::quiet_NaN();
  VarianceMethod method = VarianceMethod::none;
};

inline constexpr double kNormalQuantile975 = 1.959963984540054;

// Hajek ratio estimator per group over kept units (self-normalized).
std::vector<GroupMeanEstimate> weighted_group_means(const ObservationalSample& sample,
                                                    const WeightSet& weights);

// tau = sum_j a_j m_hat_j. Variance left unset.
ContrastEstimate estimate_contrast(const std::vector<GroupMeanEstimate>& means,
                                   const ContrastSpec& spec);

// All pairwise contrasts, variance unset.
std::vector<ContrastEstimate> all_pairwise(const ObservationalSample& sample,
                                           const WeightSet& weights);

// Raw difference in means with the two-sample large-sample variance.
std::vector<ContrastEstimate> difference_in_means(const ObservationalSample& sample);

}  // namespace balancekit
