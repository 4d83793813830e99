#include "balancekit/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace balancekit {

BalanceReport balance_report(const ObservationalSample& sample, const WeightSet& weights) {
  if (weights.size() != sample.size())
    throw ValidationError("weight set and sample sizes differ");
  const int groups = sample.groups;
  const Eigen::Index p = sample.covariate_count();
  const auto pairs = pairwise_contrasts(groups);

  BalanceReport report;
  report.scheme = weights.scheme.name();
  report.covariates.reserve(p);

  for (Eigen::Index c = 0; c < p; ++c) {
    CovariateBalance bal;
    bal.name = c < static_cast<Eigen::Index>(sample.covariate_names.size())
                   ? sample.covariate_names[c]
                   : "x" + std::to_string(c + 1);

    // Weighted group means over kept units; h-weighted target mean.
    Eigen::VectorXd wsum = Eigen::VectorXd::Zero(groups);
    Eigen::VectorXd wmean = Eigen::VectorXd::Zero(groups);
    double target_num = 0.0, target_den = 0.0;
    for (Eigen::Index i = 0; i < sample.size(); ++i) {
      if (!weights.kept[i]) continue;
      const int j = sample.treatment[i] - 1;
      const double w = weights.w(i, j);
      wmean[j] += w * sample.covariates(i, c);
      wsum[j] += w;
      target_num += weights.h[i] * sample.covariates(i, c);
      target_den += weights.h[i];
    }
    for (int j = 0; j < groups; ++j) {
      if (!(wsum[j] > 0.0))
        throw NumericalError("scheme '" + weights.scheme.name() +
                             "' keeps no weight in group " + std::to_string(j + 1));
      wmean[j] /= wsum[j];
    }
    const double target_mean = target_num / target_den;

    // Unweighted within-group variances over kept units.
    Eigen::VectorXd gmean = Eigen::VectorXd::Zero(groups);
    Eigen::VectorXd gss = Eigen::VectorXd::Zero(groups);
    Eigen::VectorXi gcount = Eigen::VectorXi::Zero(groups);
    for (Eigen::Index i = 0; i < sample.size(); ++i) {
      if (!weights.kept[i]) continue;
      const int j = sample.treatment[i] - 1;
      gcount[j] += 1;
      gmean[j] += sample.covariates(i, c);
    }
    for (int j = 0; j < groups; ++j)
      if (gcount[j] > 0) gmean[j] /= gcount[j];
    for (Eigen::Index i = 0; i < sample.size(); ++i) {
      if (!weights.kept[i]) continue;
      const int j = sample.treatment[i] - 1;
      const double d = sample.covariates(i, c) - gmean[j];
      gss[j] += d * d;
    }
    double pooled = 0.0;
    for (int j = 0; j < groups; ++j)
      pooled += gcount[j] > 1 ? gss[j] / (gcount[j] - 1) : 0.0;
    pooled /= groups;
    const double sd = std::sqrt(pooled);

    bal.psd.resize(groups);
    bal.asd.resize(static_cast<Eigen::Index>(pairs.size()));
    if (!(sd > 0.0)) {
      bal.degenerate = true;
      bal.psd.setZero();
      bal.asd.setZero();
      bal.max_psd = 0.0;
      bal.max_asd = 0.0;
      report.covariates.push_back(std::move(bal));
      continue;
    }
    for (int j = 0; j < groups; ++j) bal.psd[j] = std::abs(wmean[j] - target_mean) / sd;
    for (std::size_t k = 0; k < pairs.size(); ++k) {
      int j = -1, jp = -1;
      for (Eigen::Index g = 0; g < pairs[k].a.size(); ++g) {
        if (pairs[k].a[g] > 0.0) j = static_cast<int>(g);
        if (pairs[k].a[g] < 0.0) jp = static_cast<int>(g);
      }
      bal.asd[static_cast<Eigen::Index>(k)] = std::abs(wmean[j] - wmean[jp]) / sd;
    }
    bal.max_psd = bal.psd.maxCoeff();
    bal.max_asd = bal.asd.maxCoeff();
    report.covariates.push_back(std::move(bal));
  }
  return report;
}

EssReport effective_sample_size(const WeightSet& weights, const Eigen::VectorXi& treatment) {
  if (weights.size() != treatment.size())
    throw ValidationError("weight set and treatment sizes differ");
  const int groups = static_cast<int>(weights.w.cols());
  EssReport report;
  report.per_group = Eigen::VectorXd::Zero(groups);
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(groups);
  Eigen::VectorXd sq = Eigen::VectorXd::Zero(groups);
  for (Eigen::Index i = 0; i < weights.size(); ++i) {
    if (!weights.kept[i]) continue;
    const int j = treatment[i] - 1;
    const double w = weights.w(i, j);
    sum[j] += w;
    sq[j] += w * w;
  }
  for (int j = 0; j < groups; ++j)
    report.per_group[j] = sq[j] > 0.0 ? sum[j] * sum[j] / sq[j] : 0.0;
  report.total = report.per_group.sum();
  return report;
}

double effective_sample_size_pooled(const WeightSet& weights, const Eigen::VectorXi& treatment) {
  double sum = 0.0, sq = 0.0;
  for (Eigen::Index i = 0; i < weights.size(); ++i) {
    if (!weights.kept[i]) continue;
    const double w = weights.w(i, treatment[i] - 1);
    sum += w;
    sq += w * w;
  }
  return sq > 0.0 ? sum * sum / sq : 0.0;
}

Eigen::VectorXd rank_and_replace(const Eigen::Ref<const Eigen::VectorXd>& index,
                                 const WeightSet& weights, const Eigen::VectorXi& treatment) {
  if (index.size() != weights.size() || index.size() != treatment.size())
    throw ValidationError("index, weights and treatment sizes differ");
  for (Eigen::Index i = 0; i < index.size(); ++i)
    if (!std::isfinite(index[i])) throw ValidationError("non-finite index value");

  const int groups = static_cast<int>(weights.w.cols());
  Eigen::VectorXd adjusted = index;

  for (int g = 1; g <= groups; ++g) {
    std::vector<Eigen::Index> members;
    for (Eigen::Index i = 0; i < index.size(); ++i)
      if (treatment[i] == g && weights.kept[i]) members.push_back(i);
    if (members.empty()) continue;
    const std::size_t m = members.size();

    // Stable order by (value, original position); ties keep input order.
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      const double va = index[members[a]];
      const double vb = index[members[b]];
      if (va != vb) return va < vb;
      return members[a] < members[b];
    });

    std::vector<double> sorted_values(m);
    double total_weight = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
      sorted_values[k] = index[members[order[k]]];
      total_weight += weights.w(members[order[k]], g - 1);
    }
    if (!(total_weight > 0.0)) continue;

    // Weighted rank = cumulative normalized weight; replacement value is the
    // type-1 quantile of the unweighted values at that rank.
    double cum = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
      cum += weights.w(members[order[k]], g - 1);
      const double rank = cum / total_weight;
      auto pos = static_cast<std::size_t>(std::ceil(rank * static_cast<double>(m)));
      pos = std::clamp<std::size_t>(pos, 1, m);
      adjusted[members[order[k]]] = sorted_values[pos - 1];
    }
  }
  return adjusted;
}

}  // namespace balancekit
