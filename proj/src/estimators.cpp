#include "balancekit/estimators.hpp"

#include <cmath>

namespace balancekit {

std::vector<GroupMeanEstimate> weighted_group_means(const ObservationalSample& sample,
                                                    const WeightSet& weights) {
  require_outcome(sample, "weighted group means");
  if (weights.size() != sample.size())
    throw ValidationError("weight set and sample sizes differ");
  const int groups = sample.groups;
  if (weights.w.cols() != groups)
    throw ValidationError("weight set group count does not match the sample");

  std::vector<GroupMeanEstimate> means(groups);
  Eigen::VectorXd numer = Eigen::VectorXd::Zero(groups);
  Eigen::VectorXd denom = Eigen::VectorXd::Zero(groups);
  Eigen::VectorXi used = Eigen::VectorXi::Zero(groups);
  for (Eigen::Index i = 0; i < sample.size(); ++i) {
    if (!weights.kept[i]) continue;
    const int j = sample.treatment[i] - 1;
    const double w = weights.w(i, j);
    numer[j] += w * sample.outcome[i];
    denom[j] += w;
    used[j] += 1;
  }
  for (int j = 0; j < groups; ++j) {
    if (used[j] == 0 || !(denom[j] > 0.0))
      throw NumericalError("scheme '" + weights.scheme.name() + "' gives zero weight mass in group " +
                           std::to_string(j + 1));
    means[j].group = j + 1;
    means[j].m_hat = numer[j] / denom[j];
    means[j].sum_weights = denom[j];
    means[j].n_used = used[j];
    means[j].variance_unreliable = used[j] == 1;
  }
  return means;
}

ContrastEstimate estimate_contrast(const std::vector<GroupMeanEstimate>& means,
                                   const ContrastSpec& spec) {
  if (spec.a.size() != static_cast<Eigen::Index>(means.size()))
    throw ValidationError("contrast length " + std::to_string(spec.a.size()) +
                          " does not match " + std::to_string(means.size()) + " group means");
  ContrastEstimate est;
  est.spec = spec;
  double tau = 0.0;
  for (std::size_t j = 0; j < means.size(); ++j) tau += spec.a[static_cast<Eigen::Index>(j)] * means[j].m_hat;
  est.tau_hat = tau;
  return est;
}

std::vector<ContrastEstimate> all_pairwise(const ObservationalSample& sample,
                                           const WeightSet& weights) {
  const auto means = weighted_group_means(sample, weights);
  std::vector<ContrastEstimate> out;
  for (const ContrastSpec& spec : pairwise_contrasts(sample.groups))
    out.push_back(estimate_contrast(means, spec));
  return out;
}

std::vector<ContrastEstimate> difference_in_means(const ObservationalSample& sample) {
  require_outcome(sample, "difference in means");
  const int groups = sample.groups;
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(groups);
  Eigen::VectorXd ss = Eigen::VectorXd::Zero(groups);
  Eigen::VectorXi count = Eigen::VectorXi::Zero(groups);
  for (Eigen::Index i = 0; i < sample.size(); ++i) {
    const int j = sample.treatment[i] - 1;
    count[j] += 1;
    mean[j] += sample.outcome[i];
  }
  for (int j = 0; j < groups; ++j) {
    if (count[j] == 0) throw ValidationError("empty group " + std::to_string(j + 1));
    mean[j] /= count[j];
  }
  for (Eigen::Index i = 0; i < sample.size(); ++i) {
    const int j = sample.treatment[i] - 1;
    const double d = sample.outcome[i] - mean[j];
    ss[j] += d * d;
  }

  std::vector<ContrastEstimate> out;
  for (const ContrastSpec& spec : pairwise_contrasts(groups)) {
    ContrastEstimate est;
    est.spec = spec;
    double tau = 0.0;
    double var = 0.0;
    for (int j = 0; j < groups; ++j) {
      const double a = spec.a[j];
      if (a == 0.0) continue;
      tau += a * mean[j];
      const double group_var = count[j] > 1 ? ss[j] / (count[j] - 1) : 0.0;
      var += a * a * group_var / count[j];
    }
    est.tau_hat = tau;
    est.variance = var;
    est.se = std::sqrt(var);
    est.ci_low = tau - kNormalQuantile975 * est.se;
    est.ci_high = tau + kNormalQuantile975 * est.se;
    est.method = VarianceMethod::sandwich;
    out.push_back(est);
  }
  return out;
}

}  // namespace balancekit
