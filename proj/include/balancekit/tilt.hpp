#pragma once

#include "balancekit/types.hpp"

#include <Eigen/Dense>

#include <functional>
#include <limits>
#include <string>

namespace balancekit {

// Tilting function menu. Each choice of h(X) induces balancing weights
// w_j = h / e_j and a target population with density proportional to f*h.
enum class TiltKind {
  combined,            // h = 1 (IPW)
  treated,             // h = e_{j'}
  treated_restricted,  // h = e_{j'} * prod_j E_j(X), empirical eligibility
  trimming,            // h = 1{sum_j 1/e_j <= alpha}
  matching,            // h = min_k e_k
  variance_weighted,   // h = e_{j'} (1 - e_{j'})
  overlap,             // h = (sum_k 1/e_k)^{-1}, harmonic mean
  custom_indicator,    // h = 1{predicate(x_i)}
};

using IndicatorFn = std::function<bool(const Eigen::RowVectorXd&)>;

struct TiltScheme {
  TiltKind kind = TiltKind::combined;
  int focal_group = 0;  // j' for treated / treated_restricted / variance_weighted
  double alpha = std::numeric_limits<double>::quiet_NaN();  // trimming; NaN => optimal
  IndicatorFn indicator;

  static TiltScheme ipw();
  static TiltScheme overlap();
  static TiltScheme matching();
  static TiltScheme treated(int focal_group);
  static TiltScheme treated_restricted(int focal_group);
  static TiltScheme variance_weighted(int focal_group);
  static TiltScheme trimming(double alpha = std::numeric_limits<double>::quiet_NaN());
  static TiltScheme custom(IndicatorFn indicator);

  // Smooth in theta, hence eligible for the closed-form sandwich variance.
  bool smooth_in_theta() const;
  bool needs_treatment_labels() const { return kind == TiltKind::treated_restricted; }
  bool needs_covariates() const { return kind == TiltKind::custom_indicator; }
  std::string name() const;
};

// Per-unit tilting values and induced weights. h is emitted unnormalized
// (estimators self-normalize); excluded units carry h = 0 and kept = false.
struct WeightSet {
  Eigen::VectorXd h;                           // n
  Eigen::MatrixXd w;                           // n x J, w_ij = h_i / e_ij
  Eigen::Array<bool, Eigen::Dynamic, 1> kept;  // n
  TiltScheme scheme;

  Eigen::Index size() const { return h.size(); }
  Eigen::Index kept_count() const;
  double h_sum() const;
};

WeightSet compute_tilt(const TiltScheme& scheme, const PropensityMatrix& scores);
// Full form for schemes needing treatment labels (restricted) or raw
// covariates (custom indicators).
WeightSet compute_tilt(const TiltScheme& scheme, const PropensityMatrix& scores,
                       const ObservationalSample& sample);

// Unweighted analysis expressed as a WeightSet (h = w = 1), for crude
// balance reporting.
WeightSet unit_weights(Eigen::Index n, int groups);

struct TrimResult {
  double alpha = std::numeric_limits<double>::quiet_NaN();
  double kept_fraction = 1.0;
  // True when no observed value satisfied the threshold inequality; alpha
  // falls back to max S and nothing is trimmed.
  bool no_candidate = false;
};

// Empirical optimal trimming threshold: the largest observed value of
// S_i = sum_j 1/e_ij with S <= 2 * mean(S | S <= alpha). Units with
// S_i <= alpha are kept.
TrimResult optimal_alpha(const PropensityMatrix& scores);

// Empirical eligibility indicators E_ij = 1{lo_j <= e_ij <= hi_j} where
// lo_j = max over groups l of the within-group minimum of e_j and
// hi_j = min over groups l of the within-group maximum.
Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> eligibility_indicators(
    const PropensityMatrix& scores, const Eigen::VectorXi& treatment);

}  // namespace balancekit
