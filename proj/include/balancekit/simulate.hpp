#pragma once

#include "balancekit/estimators.hpp"
#include "balancekit/gps.hpp"
#include "balancekit/tilt.hpp"
#include "balancekit/types.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

namespace balancekit {

// Data-generating process for the simulation study. Covariates: (X1,X2,X3)
// trivariate normal, X4 ~ Uniform[-3,3], X5 ~ chi^2_1, X6 ~ Bernoulli(0.5).
// Assignment is multinomial logistic with group-1 predictor zero; potential
// outcomes are linear in (1, X) with shared noise across arms.
struct DgpSpec {
  int groups = 3;
  Eigen::VectorXd kappa;            // J-1 slope multipliers
  Eigen::MatrixXd beta_directions;  // (J-1) x 6
  Eigen::VectorXd alpha_offsets;    // J-1; NaN => calibrate before use
  Eigen::MatrixXd gamma;            // J x 7 outcome coefficients
  Eigen::VectorXd target_shares;    // J marginal treatment proportions
  Eigen::Vector3d normal_mean{2.0, 1.0, 1.0};
  // Pairwise covariances (12, 13, 23) of the normal block; variances default
  // to one. The pairwise reading is projected when it is not PSD.
  Eigen::Vector3d normal_covariances{1.0, -1.0, -0.5};
  Eigen::Vector3d normal_variances{1.0, 1.0, 1.0};
  int sample_size = 1500;
  double noise_sd = 1.0;
  std::string name = "custom";

  Eigen::MatrixXd beta() const;  // J x 6, zero first row
  bool calibrated() const;

  static DgpSpec with_kappa(double kappa2, double kappa3);
  static DgpSpec adequate_overlap();  // kappa = (0.2, 0.1)
  static DgpSpec lack_of_overlap();   // kappa = (0.8, 0.4)
};

// The pairwise-covariance reading of the normal block is not positive
// semi-definite, so the sampler projects it: eigenvalues are clipped from
// below at kCovarianceEigenFloor to keep the design full rank. The matrix
// actually used is reported alongside every run.
inline constexpr double kCovarianceEigenFloor = 0.05;

struct CovarianceChoice {
  Eigen::Matrix3d requested;
  Eigen::Matrix3d used;
  bool clipped = false;
};

CovarianceChoice resolve_covariance(const DgpSpec& spec);

// Covariate draws from the spec's X law (n x 6).
Eigen::MatrixXd draw_covariates(const DgpSpec& spec, Eigen::Index n, std::uint64_t seed);

// True scores for given covariates under the spec's assignment model.
PropensityMatrix true_scores(const DgpSpec& spec, const Eigen::Ref<const Eigen::MatrixXd>& covariates);

// Intercepts solving mean e_j(X) = target over an mc_n-draw covariate
// sample (Newton root-finding).
Eigen::VectorXd calibrate_intercepts(const DgpSpec& spec, const Eigen::VectorXd& target_shares,
                                     int mc_n = 1000000, std::uint64_t seed = 777001);

// Returns a copy with alpha_offsets filled in when they are NaN.
DgpSpec calibrated_spec(DgpSpec spec, int mc_n = 1000000, std::uint64_t seed = 777001);

struct GeneratedData {
  ObservationalSample sample;
  PropensityMatrix scores;              // true assignment probabilities
  Eigen::MatrixXd potential_outcomes;   // n x J
};

GeneratedData generate_dataset(const DgpSpec& spec, std::uint64_t seed);

// Target estimand for a scheme and contrast: closed form for the combined
// population (h = 1), otherwise an h-weighted Monte Carlo average of
// sum_j a_j m_j(X) over fresh covariate draws using true scores.
double true_estimand(const DgpSpec& spec, const TiltScheme& scheme, const ContrastSpec& contrast,
                     int mc_n = 1000000, std::uint64_t seed = 777002);

// Large-sample variance functional of the self-normalized moment estimator
// under homoscedastic residual variance v:
//   Q(a, h) = E[ (sum_j a_j^2 v / e_j) h^2 ] / E[h]^2.
// The harmonic-mean tilt minimizes Q(1_J, h) over h.
double q_functional(const DgpSpec& spec, const TiltScheme& scheme, const Eigen::VectorXd& a,
                    int mc_n = 1000000, double v = 1.0, std::uint64_t seed = 777003);

// Simplex lattice of resolution R with the harmonic-mean tilting value,
// rows (e1, e2, e3, h); boundary points carry h = 0.
Eigen::MatrixXd ternary_grid(int resolution);

enum class Method { dif, ipw, tipw, gmw, gow };

std::string method_name(Method method);
Method method_from_name(const std::string& name);

struct EstimatorConfig {
  Method method = Method::gow;
  VarianceMethod variance = VarianceMethod::sandwich;
  int bootstrap_reps = 1000;
};

// DIF/IPW/TIPW with sandwich intervals, GMW with bootstrap, GOW with
// sandwich, mirroring the simulation study.
std::vector<EstimatorConfig> default_roster();

struct McOptions {
  int reps = 1000;
  std::uint64_t seed = 1;
  int workers = 0;            // 0 => hardware concurrency
  int estimand_draws = 1000000;
  double max_failure_rate = 0.01;
  FitOptions fit;
  bool ablate_score_correction = false;  // diagnostics: treat theta as known
};

struct McCell {
  double truth = 0.0;
  double abs_bias = 0.0;
  double rmse = 0.0;
  double coverage = std::numeric_limits<double>::quiet_NaN();
  double mc_sd = 0.0;
  double mean_se = std::numeric_limits<double>::quiet_NaN();
};

struct McResult {
  std::vector<EstimatorConfig> roster;
  std::vector<ContrastSpec> contrasts;
  std::vector<std::vector<McCell>> cells;  // [estimator][contrast]
  int reps = 0;       // successful replicates
  int attempted = 0;
  int failed = 0;
  double trim_kept_fraction_mean = std::numeric_limits<double>::quiet_NaN();
  CovarianceChoice covariance;
  Eigen::VectorXd alpha_offsets;
  std::uint64_t seed = 0;
  std::string scenario;
};

// Replicated comparison of the roster against each scheme's own target
// estimand: per replicate generate, fit (refit after trimming), estimate,
// interval; aggregate absolute bias, RMSE and coverage.
McResult run_monte_carlo(const DgpSpec& spec, const std::vector<EstimatorConfig>& roster,
                         const McOptions& options);

std::string dgp_spec_to_json(const DgpSpec& spec);
DgpSpec dgp_spec_from_json(const std::string& text);

}  // namespace balancekit
