#include "balancekit/tilt.hpp"

#include "balancekit/log.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace balancekit {

namespace {

TiltScheme scheme_of(TiltKind kind, int focal_group = 0) {
  TiltScheme scheme;
  scheme.kind = kind;
  scheme.focal_group = focal_group;
  return scheme;
}

}  // namespace

TiltScheme TiltScheme::ipw() { return scheme_of(TiltKind::combined); }
TiltScheme TiltScheme::overlap() { return scheme_of(TiltKind::overlap); }
TiltScheme TiltScheme::matching() { return scheme_of(TiltKind::matching); }

TiltScheme TiltScheme::treated(int focal_group) {
  return scheme_of(TiltKind::treated, focal_group);
}

TiltScheme TiltScheme::treated_restricted(int focal_group) {
  return scheme_of(TiltKind::treated_restricted, focal_group);
}

TiltScheme TiltScheme::variance_weighted(int focal_group) {
  return scheme_of(TiltKind::variance_weighted, focal_group);
}

TiltScheme TiltScheme::trimming(double alpha) {
  TiltScheme scheme = scheme_of(TiltKind::trimming);
  scheme.alpha = alpha;
  return scheme;
}

TiltScheme TiltScheme::custom(IndicatorFn indicator) {
  TiltScheme scheme = scheme_of(TiltKind::custom_indicator);
  scheme.indicator = std::move(indicator);
  return scheme;
}

bool TiltScheme::smooth_in_theta() const {
  switch (kind) {
    case TiltKind::combined:
    case TiltKind::treated:
    case TiltKind::variance_weighted:
    case TiltKind::overlap:
      return true;
    default:
      return false;
  }
}

std::string TiltScheme::name() const {
  switch (kind) {
    case TiltKind::combined:
      return "ipw";
    case TiltKind::treated:
      return "treated:" + std::to_string(focal_group);
    case TiltKind::treated_restricted:
      return "restricted:" + std::to_string(focal_group);
    case TiltKind::trimming:
      return "trim";
    case TiltKind::matching:
      return "matching";
    case TiltKind::variance_weighted:
      return "varwt:" + std::to_string(focal_group);
    case TiltKind::overlap:
      return "overlap";
    case TiltKind::custom_indicator:
      return "custom";
  }
  return "unknown";
}

Eigen::Index WeightSet::kept_count() const {
  Eigen::Index count = 0;
  for (Eigen::Index i = 0; i < kept.size(); ++i)
    if (kept[i]) ++count;
  return count;
}

double WeightSet::h_sum() const { return h.sum(); }

namespace {

void check_focal_group(const TiltScheme& scheme, int groups) {
  if (scheme.focal_group < 1 || scheme.focal_group > groups)
    throw ValidationError("scheme '" + scheme.name() + "' needs a focal group in 1.." +
                          std::to_string(groups));
}

WeightSet finish_weights(const TiltScheme& scheme, const PropensityMatrix& scores,
                         Eigen::VectorXd h) {
  WeightSet out;
  out.scheme = scheme;
  out.h = std::move(h);
  out.kept = out.h.array() > 0.0;
  out.w = out.h.asDiagonal() * scores.e.cwiseInverse();
  for (Eigen::Index i = 0; i < out.h.size(); ++i)
    if (!out.kept[i]) out.w.row(i).setZero();
  return out;
}

}  // namespace

WeightSet compute_tilt(const TiltScheme& scheme, const PropensityMatrix& scores) {
  if (scheme.needs_treatment_labels())
    throw ValidationError("scheme '" + scheme.name() + "' needs treatment labels; pass the sample");
  if (scheme.needs_covariates())
    throw ValidationError("custom indicator schemes need covariates; pass the sample");
  validate_propensities(scores);
  const Eigen::Index n = scores.size();
  Eigen::VectorXd h(n);

  switch (scheme.kind) {
    case TiltKind::combined:
      h.setOnes();
      break;
    case TiltKind::treated:
      check_focal_group(scheme, scores.groups());
      h = scores.e.col(scheme.focal_group - 1);
      break;
    case TiltKind::trimming: {
      double alpha = scheme.alpha;
      TiltScheme realized = scheme;
      if (std::isnan(alpha)) {
        alpha = optimal_alpha(scores).alpha;
        realized.alpha = alpha;
      }
      const Eigen::VectorXd s = scores.e.cwiseInverse().rowwise().sum();
      h = (s.array() <= alpha).cast<double>();
      return finish_weights(realized, scores, std::move(h));
    }
    case TiltKind::matching:
      h = scores.e.rowwise().minCoeff();
      break;
    case TiltKind::variance_weighted:
      check_focal_group(scheme, scores.groups());
      h = scores.e.col(scheme.focal_group - 1).array() *
          (1.0 - scores.e.col(scheme.focal_group - 1).array());
      break;
    case TiltKind::overlap:
      h = scores.e.cwiseInverse().rowwise().sum().cwiseInverse();
      break;
    default:
      throw ValidationError("unsupported scheme in scores-only compute_tilt");
  }
  return finish_weights(scheme, scores, std::move(h));
}

WeightSet compute_tilt(const TiltScheme& scheme, const PropensityMatrix& scores,
                       const ObservationalSample& sample) {
  if (sample.size() != scores.size())
    throw ValidationError("sample and propensity matrix row counts differ");

  if (scheme.kind == TiltKind::treated_restricted) {
    validate_propensities(scores);
    check_focal_group(scheme, scores.groups());
    const auto eligible = eligibility_indicators(scores, sample.treatment);
    Eigen::VectorXd h(scores.size());
    for (Eigen::Index i = 0; i < scores.size(); ++i) {
      const bool all = eligible.row(i).all();
      h[i] = all ? scores.e(i, scheme.focal_group - 1) : 0.0;
    }
    return finish_weights(scheme, scores, std::move(h));
  }
  if (scheme.kind == TiltKind::custom_indicator) {
    if (!scheme.indicator) throw ValidationError("custom scheme has no indicator predicate");
    validate_propensities(scores);
    Eigen::VectorXd h(scores.size());
    for (Eigen::Index i = 0; i < scores.size(); ++i) {
      const Eigen::RowVectorXd row = sample.covariates.row(i);
      h[i] = scheme.indicator(row) ? 1.0 : 0.0;
    }
    return finish_weights(scheme, scores, std::move(h));
  }
  return compute_tilt(scheme, scores);
}

WeightSet unit_weights(Eigen::Index n, int groups) {
  WeightSet out;
  out.scheme = TiltScheme::custom([](const Eigen::RowVectorXd&) { return true; });
  out.h = Eigen::VectorXd::Ones(n);
  out.w = Eigen::MatrixXd::Ones(n, groups);
  out.kept = Eigen::Array<bool, Eigen::Dynamic, 1>::Constant(n, true);
  return out;
}

TrimResult optimal_alpha(const PropensityMatrix& scores) {
  validate_propensities(scores);
  const Eigen::Index n = scores.size();
  if (n < 2) throw ValidationError("optimal_alpha needs at least two units");

  Eigen::VectorXd s = scores.e.cwiseInverse().rowwise().sum();
  std::sort(s.data(), s.data() + n);

  // The empirical criterion is a step function of alpha, so the optimum sits
  // on an observed value of S. Scan candidates from the largest down and take
  // the first satisfying alpha <= 2 * mean(S | S <= alpha) / Pr(S <= alpha),
  // with sample analogues for the expectation and the probability.
  Eigen::VectorXd prefix(n);
  std::partial_sum(s.data(), s.data() + n, prefix.data());
  for (Eigen::Index k = n - 1; k >= 0; --k) {
    const double alpha = s[k];
    const double mean_below = prefix[k] / static_cast<double>(k + 1);
    const double prob_below = static_cast<double>(k + 1) / static_cast<double>(n);
    if (alpha <= 2.0 * mean_below / prob_below) {
      TrimResult result;
      result.alpha = alpha;
      result.kept_fraction = prob_below;
      return result;
    }
  }
  TrimResult result;
  result.alpha = s[n - 1];
  result.kept_fraction = 1.0;
  result.no_candidate = true;
  log_warn("no trimming threshold satisfied the inequality; keeping the full sample");
  return result;
}

Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> eligibility_indicators(
    const PropensityMatrix& scores, const Eigen::VectorXi& treatment) {
  validate_propensities(scores);
  if (treatment.size() != scores.size())
    throw ValidationError("treatment labels and propensity rows differ");
  const int groups = scores.groups();
  const Eigen::Index n = scores.size();
  int max_label = 0;
  for (Eigen::Index i = 0; i < n; ++i) max_label = std::max(max_label, treatment[i]);
  if (max_label > groups) throw ValidationError("treatment label exceeds the score columns");

  Eigen::MatrixXd group_min = Eigen::MatrixXd::Constant(groups, groups, 1.0);
  Eigen::MatrixXd group_max = Eigen::MatrixXd::Constant(groups, groups, 0.0);
  Eigen::VectorXi counts = Eigen::VectorXi::Zero(groups);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int l = treatment[i] - 1;
    counts[l] += 1;
    for (int j = 0; j < groups; ++j) {
      group_min(l, j) = std::min(group_min(l, j), scores.e(i, j));
      group_max(l, j) = std::max(group_max(l, j), scores.e(i, j));
    }
  }
  for (int l = 0; l < groups; ++l) {
    if (counts[l] == 0)
      throw ValidationError("group " + std::to_string(l + 1) + " has no units");
    if (counts[l] == 1)
      log_warn("group " + std::to_string(l + 1) + " has a single unit; eligibility bounds are degenerate");
  }

  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> eligible(n, groups);
  for (int j = 0; j < groups; ++j) {
    const double lo = group_min.col(j).maxCoeff();
    const double hi = group_max.col(j).minCoeff();
    eligible.col(j) = (scores.e.col(j).array() >= lo) && (scores.e.col(j).array() <= hi);
  }
  return eligible;
}

}  // namespace balancekit
