#pragma once

// Randomized property suites shared by the unit tests and the acceptance
// runner. Each suite runs `cases` independent randomized cases and reports
// how many violated the property.

#include "balancekit/diagnostics.hpp"
#include "balancekit/estimators.hpp"
#include "balancekit/rng.hpp"
#include "balancekit/tilt.hpp"
#include "balancekit/types.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "helpers.hpp"

namespace properties {

using namespace balancekit;

struct SuiteResult {
  std::string name;
  int cases = 0;
  int failures = 0;
  bool passed() const { return failures == 0; }
};

// Multiplying h by any positive constant leaves group means and contrasts
// unchanged (the estimators self-normalize).
inline SuiteResult scale_invariance_suite(int cases, std::uint64_t seed) {
  SuiteResult result{"scale invariance of estimates in h", cases, 0};
  RngStream rng(seed, {0xA1});
  for (int t = 0; t < cases; ++t) {
    const int groups = 2 + static_cast<int>(rng.uniform_index(3));
    const Eigen::Index n = 4 * groups + static_cast<Eigen::Index>(rng.uniform_index(40));
    const Eigen::MatrixXd e = testutil::random_simplex_rows(rng, n, groups);
    const ObservationalSample sample = testutil::random_sample(rng, n, groups, 2);
    const TiltScheme scheme = t % 3 == 0   ? TiltScheme::overlap()
                              : t % 3 == 1 ? TiltScheme::ipw()
                                           : TiltScheme::matching();
    WeightSet w = compute_tilt(scheme, {e, ScoreSource::fitted});
    const auto base = all_pairwise(sample, w);
    const double c = std::exp(4.0 * (rng.uniform01() - 0.5));
    w.h *= c;
    w.w *= c;
    const auto scaled = all_pairwise(sample, w);
    for (std::size_t k = 0; k < base.size(); ++k) {
      const double tol = 1e-10 * std::max(1.0, std::abs(base[k].tau_hat));
      if (std::abs(base[k].tau_hat - scaled[k].tau_hat) > tol) {
        ++result.failures;
        break;
      }
    }
  }
  return result;
}

// tau(j,j') + tau(j',j'') telescopes to tau(j,j'') over a common population,
// and reversing a pair flips the sign exactly.
inline SuiteResult contrast_algebra_suite(int cases, std::uint64_t seed) {
  SuiteResult result{"contrast additivity and antisymmetry", cases, 0};
  RngStream rng(seed, {0xA2});
  for (int t = 0; t < cases; ++t) {
    const int groups = 3 + static_cast<int>(rng.uniform_index(3));
    const Eigen::Index n = 4 * groups + static_cast<Eigen::Index>(rng.uniform_index(40));
    const Eigen::MatrixXd e = testutil::random_simplex_rows(rng, n, groups);
    const ObservationalSample sample = testutil::random_sample(rng, n, groups, 2);
    const WeightSet w = compute_tilt(TiltScheme::overlap(), {e, ScoreSource::fitted});
    const auto means = weighted_group_means(sample, w);
    const int a = 1 + static_cast<int>(rng.uniform_index(groups));
    int b = 1 + static_cast<int>(rng.uniform_index(groups));
    int c = 1 + static_cast<int>(rng.uniform_index(groups));
    while (b == a) b = 1 + static_cast<int>(rng.uniform_index(groups));
    while (c == a || c == b) c = 1 + static_cast<int>(rng.uniform_index(groups));

    const double ab = estimate_contrast(means, ContrastSpec::pairwise(a, b, groups)).tau_hat;
    const double bc = estimate_contrast(means, ContrastSpec::pairwise(b, c, groups)).tau_hat;
    const double ac = estimate_contrast(means, ContrastSpec::pairwise(a, c, groups)).tau_hat;
    const double ba = estimate_contrast(means, ContrastSpec::pairwise(b, a, groups)).tau_hat;
    const double scale = std::max({1.0, std::abs(ab), std::abs(bc), std::abs(ac)});
    if (std::abs(ab + bc - ac) > 1e-12 * scale) ++result.failures;
    if (ba != -ab) ++result.failures;
  }
  return result;
}

// ESS_j <= n_j always; equality exactly at constant within-group weights.
inline SuiteResult ess_suite(int cases, std::uint64_t seed) {
  SuiteResult result{"ESS <= n_j with equality iff constant weights", cases, 0};
  RngStream rng(seed, {0xA3});
  for (int t = 0; t < cases; ++t) {
    const int groups = 2 + static_cast<int>(rng.uniform_index(3));
    const Eigen::Index n = 6 * groups + static_cast<Eigen::Index>(rng.uniform_index(60));
    Eigen::VectorXi z(n);
    for (Eigen::Index i = 0; i < n; ++i) z[i] = 1 + static_cast<int>(rng.uniform_index(groups));
    for (int j = 1; j <= groups; ++j) z[j - 1] = j;
    WeightSet w = unit_weights(n, groups);
    const bool constant = t % 2 == 0;
    double spread = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double weight = constant ? 1.7 : 0.2 + 3.0 * rng.uniform01();
      w.w.row(i).setConstant(weight);
      w.h[i] = weight;
      spread = std::max(spread, weight);
    }
    const EssReport ess = effective_sample_size(w, z);
    const Eigen::VectorXi sizes = [&] {
      Eigen::VectorXi s = Eigen::VectorXi::Zero(groups);
      for (Eigen::Index i = 0; i < n; ++i) s[z[i] - 1] += 1;
      return s;
    }();
    for (int j = 0; j < groups; ++j) {
      const double nj = sizes[j];
      if (ess.per_group[j] > nj * (1.0 + 1e-12)) ++result.failures;
      if (constant && std::abs(ess.per_group[j] - nj) > 1e-9 * nj) ++result.failures;
      if (!constant && sizes[j] >= 2 && ess.per_group[j] >= nj * (1.0 - 1e-12)) {
        // Strict inequality unless the group's weights happen to be equal;
        // random continuous draws make that a null event.
        ++result.failures;
      }
    }
  }
  return result;
}

// Marginal restoration of rank-and-replace under the type-1 rule:
// (a) each unit's adjusted value sits at the unweighted CDF level within
//     1/n_j of its weighted rank, and
// (b) the weighted CDF of adjusted values is within max(1/n_j, max w-share)
//     of the original unweighted CDF everywhere.
inline SuiteResult rank_and_replace_suite(int cases, std::uint64_t seed) {
  SuiteResult result{"rank-and-replace marginal restoration", cases, 0};
  RngStream rng(seed, {0xA4});
  for (int t = 0; t < cases; ++t) {
    const Eigen::Index n = 8 + static_cast<Eigen::Index>(rng.uniform_index(80));
    Eigen::VectorXi z = Eigen::VectorXi::Ones(n);
    Eigen::VectorXd index(n);
    WeightSet w = unit_weights(n, 1);
    for (Eigen::Index i = 0; i < n; ++i) {
      index[i] = rng.normal();
      const double weight = 0.2 + 4.0 * rng.uniform01();
      w.w(i, 0) = weight;
      w.h[i] = weight;
    }
    const Eigen::VectorXd adjusted = rank_and_replace(index, w, z);

    std::vector<double> sorted(index.data(), index.data() + n);
    std::sort(sorted.begin(), sorted.end());
    std::vector<Eigen::Index> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](Eigen::Index a, Eigen::Index b) { return index[a] < index[b]; });

    const double total = w.h.sum();
    const double inv_n = 1.0 / static_cast<double>(n);
    double max_share = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) max_share = std::max(max_share, w.h[i] / total);

    bool ok = true;
    double cum = 0.0;
    std::vector<double> ranks(n);
    for (Eigen::Index k = 0; k < n; ++k) {
      cum += w.h[order[k]];
      ranks[k] = cum / total;
      const auto pos = std::lower_bound(sorted.begin(), sorted.end(), adjusted[order[k]]) -
                       sorted.begin() + 1;
      const double level = static_cast<double>(pos) / static_cast<double>(n);
      if (std::abs(level - ranks[k]) > inv_n + 1e-12) ok = false;
    }

    // Kolmogorov distance between the weighted CDF of adjusted values and
    // the unweighted CDF of originals, evaluated at every original value.
    for (Eigen::Index k = 0; k < n; ++k) {
      const double x = sorted[k];
      double weighted_cdf = 0.0;
      for (Eigen::Index i = 0; i < n; ++i)
        if (adjusted[i] <= x) weighted_cdf += w.h[i] / total;
      const double unweighted_cdf = static_cast<double>(k + 1) / static_cast<double>(n);
      if (std::abs(weighted_cdf - unweighted_cdf) > std::max(inv_n, max_share) + 1e-12) ok = false;
    }
    if (!ok) ++result.failures;
  }
  return result;
}

// Softmax-produced rows always validate; broken rows always fail.
inline SuiteResult simplex_suite(int cases, std::uint64_t seed) {
  SuiteResult result{"propensity simplex validation", cases, 0};
  RngStream rng(seed, {0xA5});
  for (int t = 0; t < cases; ++t) {
    const int groups = 2 + static_cast<int>(rng.uniform_index(4));
    const Eigen::Index n = 2 + static_cast<Eigen::Index>(rng.uniform_index(30));
    Eigen::MatrixXd e = testutil::random_simplex_rows(rng, n, groups, 3.0);
    bool ok = true;
    try {
      validate_propensities({e, ScoreSource::fitted});
    } catch (const ValidationError&) {
      ok = false;
    }
    // Break one row and expect rejection.
    Eigen::MatrixXd bad = e;
    const Eigen::Index row = static_cast<Eigen::Index>(rng.uniform_index(n));
    if (t % 2 == 0) {
      bad(row, 0) += 1e-6;  // off the simplex
    } else {
      bad(row, 0) = 0.0;  // positivity violation
      bad(row, 1) = e(row, 0) + e(row, 1);
    }
    bool rejected = false;
    try {
      validate_propensities({bad, ScoreSource::fitted});
    } catch (const ValidationError&) {
      rejected = true;
    }
    if (!ok || !rejected) ++result.failures;
  }
  return result;
}

// w_ij e_ij = h_i reconstruction (Eq.-(3) identity) across the scheme menu.
inline SuiteResult reconstruction_suite(int cases, std::uint64_t seed) {
  SuiteResult result{"weight reconstruction w*e = h", cases, 0};
  RngStream rng(seed, {0xA6});
  for (int t = 0; t < cases; ++t) {
    const int groups = 2 + static_cast<int>(rng.uniform_index(4));
    const Eigen::Index n = 4 + static_cast<Eigen::Index>(rng.uniform_index(40));
    const Eigen::MatrixXd e = testutil::random_simplex_rows(rng, n, groups);
    const int focal = 1 + static_cast<int>(rng.uniform_index(groups));
    const TiltScheme menu[5] = {TiltScheme::ipw(), TiltScheme::overlap(), TiltScheme::matching(),
                                TiltScheme::treated(focal), TiltScheme::variance_weighted(focal)};
    const WeightSet w = compute_tilt(menu[t % 5], {e, ScoreSource::fitted});
    for (Eigen::Index i = 0; i < n && result.failures < cases; ++i) {
      if (!w.kept[i]) continue;
      for (int j = 0; j < groups; ++j) {
        if (std::abs(w.w(i, j) * e(i, j) - w.h[i]) > 1e-12 * std::max(1.0, w.h[i])) {
          ++result.failures;
          break;
        }
      }
    }
    // Normalized overlap shares live strictly inside (0,1).
    if (menu[t % 5].kind == TiltKind::overlap) {
      for (Eigen::Index i = 0; i < n; ++i) {
        const double total = w.w.row(i).sum();
        for (int j = 0; j < groups; ++j) {
          const double share = w.w(i, j) / total;
          if (!(share > 0.0 && share < 1.0)) ++result.failures;
        }
      }
    }
  }
  return result;
}

inline std::vector<SuiteResult> run_all(int cases, std::uint64_t seed) {
  return {
      scale_invariance_suite(cases, seed),
      contrast_algebra_suite(cases, seed),
      ess_suite(cases, seed),
      rank_and_replace_suite(cases, seed),
      simplex_suite(cases, seed),
      reconstruction_suite(cases, seed),
  };
}

}  // namespace properties
