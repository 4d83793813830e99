#include "balancekit/simulate.hpp"

#include "balancekit/estimators.hpp"
#include "balancekit/log.hpp"
#include "balancekit/pipeline.hpp"
#include "balancekit/rng.hpp"
#include "balancekit/variance.hpp"

#include <json.hpp>

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

namespace balancekit {

namespace {

// Stream purpose tags: data generation never shares a stream with anything
// downstream, so roster changes cannot perturb the generated datasets.
constexpr std::uint64_t kTagNormalBlock = 0x01;
constexpr std::uint64_t kTagUniform = 0x02;
constexpr std::uint64_t kTagChiSq = 0x03;
constexpr std::uint64_t kTagBernoulli = 0x04;
constexpr std::uint64_t kTagAssign = 0x05;
constexpr std::uint64_t kTagNoise = 0x06;
constexpr std::uint64_t kTagReplicate = 0x10;
constexpr std::uint64_t kTagEstimatorBoot = 0x11;

int resolve_workers(int requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

Eigen::Matrix3d pairwise_covariance(const DgpSpec& spec) {
  Eigen::Matrix3d m;
  m << spec.normal_variances[0], spec.normal_covariances[0], spec.normal_covariances[1],
      spec.normal_covariances[0], spec.normal_variances[1], spec.normal_covariances[2],
      spec.normal_covariances[1], spec.normal_covariances[2], spec.normal_variances[2];
  return m;
}

TiltScheme scheme_for(Method method) {
  switch (method) {
    case Method::ipw:
      return TiltScheme::ipw();
    case Method::tipw:
      return TiltScheme::trimming();
    case Method::gmw:
      return TiltScheme::matching();
    case Method::gow:
      return TiltScheme::overlap();
    case Method::dif:
      return TiltScheme::ipw();  // truth target: combined population
  }
  return TiltScheme::ipw();
}

}  // namespace

Eigen::MatrixXd DgpSpec::beta() const {
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(groups, beta_directions.cols());
  for (int j = 1; j < groups; ++j) b.row(j) = kappa[j - 1] * beta_directions.row(j - 1);
  return b;
}

bool DgpSpec::calibrated() const {
  return alpha_offsets.size() == groups - 1 && alpha_offsets.allFinite();
}

DgpSpec DgpSpec::with_kappa(double kappa2, double kappa3) {
  DgpSpec spec;
  spec.groups = 3;
  spec.kappa.resize(2);
  spec.kappa << kappa2, kappa3;
  spec.beta_directions.resize(2, 6);
  spec.beta_directions.row(0) << 1, 1, 1, -1, -1, 1;
  spec.beta_directions.row(1) << 1, 1, 1, 1, 1, 1;
  spec.alpha_offsets = Eigen::VectorXd::Constant(2, std::numeric_limits<double>::quiet_NaN());
  spec.gamma.resize(3, 7);
  spec.gamma.row(0) << -1.5, 1, 1, 1, 1, 1, 1;
  spec.gamma.row(1) << -4, 2, 3, 1, 2, 2, 2;
  spec.gamma.row(2) << 3, 3, 1, 2, -1, -1, -1;
  spec.target_shares.resize(3);
  spec.target_shares << 0.3, 0.4, 0.3;
  return spec;
}

DgpSpec DgpSpec::adequate_overlap() {
  DgpSpec spec = with_kappa(0.2, 0.1);
  spec.name = "adequate_overlap";
  return spec;
}

DgpSpec DgpSpec::lack_of_overlap() {
  DgpSpec spec = with_kappa(0.8, 0.4);
  spec.name = "lack_of_overlap";
  return spec;
}

CovarianceChoice resolve_covariance(const DgpSpec& spec) {
  CovarianceChoice choice;
  choice.requested = pairwise_covariance(spec);
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(choice.requested);
  if (eig.eigenvalues().minCoeff() >= kCovarianceEigenFloor) {
    choice.used = choice.requested;
    choice.clipped = false;
    return choice;
  }
  // Not positive definite under the pairwise reading: clip eigenvalues from
  // below. The floor keeps the normal block full rank so the GPS design
  // stays identifiable.
  Eigen::Vector3d values = eig.eigenvalues().cwiseMax(kCovarianceEigenFloor);
  choice.used = eig.eigenvectors() * values.asDiagonal() * eig.eigenvectors().transpose();
  choice.clipped = true;
  return choice;
}

Eigen::MatrixXd draw_covariates(const DgpSpec& spec, Eigen::Index n, std::uint64_t seed) {
  const CovarianceChoice cov = resolve_covariance(spec);
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov.used);
  const Eigen::Matrix3d transform =
      eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();

  Eigen::MatrixXd x(n, 6);
  RngStream normal_stream(seed, {kTagNormalBlock});
  RngStream uniform_stream(seed, {kTagUniform});
  RngStream chisq_stream(seed, {kTagChiSq});
  RngStream bern_stream(seed, {kTagBernoulli});
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Vector3d z(normal_stream.normal(), normal_stream.normal(),
                            normal_stream.normal());
    x.row(i).head<3>() = (spec.normal_mean + transform * z).transpose();
    x(i, 3) = uniform_stream.uniform(-3.0, 3.0);
    x(i, 4) = chisq_stream.chi_squared1();
    x(i, 5) = bern_stream.bernoulli(0.5) ? 1.0 : 0.0;
  }
  return x;
}

PropensityMatrix true_scores(const DgpSpec& spec,
                             const Eigen::Ref<const Eigen::MatrixXd>& covariates) {
  if (!spec.calibrated()) throw ValidationError("DGP intercepts are not calibrated");
  const Eigen::MatrixXd beta = spec.beta();
  const Eigen::Index n = covariates.rows();
  Eigen::MatrixXd eta = Eigen::MatrixXd::Zero(n, spec.groups);
  for (int j = 1; j < spec.groups; ++j)
    eta.col(j) = (covariates * beta.row(j).transpose()).array() + spec.alpha_offsets[j - 1];
  Eigen::MatrixXd probs(n, spec.groups);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double m = eta.row(i).maxCoeff();
    const Eigen::RowVectorXd ex = (eta.row(i).array() - m).exp();
    probs.row(i) = ex / ex.sum();
  }
  return PropensityMatrix{std::move(probs), ScoreSource::true_scores};
}

Eigen::VectorXd calibrate_intercepts(const DgpSpec& spec, const Eigen::VectorXd& target_shares,
                                     int mc_n, std::uint64_t seed) {
  if (target_shares.size() != spec.groups)
    throw ValidationError("target shares must have J entries");
  if (std::abs(target_shares.sum() - 1.0) > 1e-8 || target_shares.minCoeff() <= 0.0)
    throw ValidationError("target shares must be a positive probability vector");

  const Eigen::MatrixXd x = draw_covariates(spec, mc_n, seed);
  const Eigen::MatrixXd beta = spec.beta();
  Eigen::MatrixXd slope(mc_n, spec.groups);  // X beta_j, fixed across iterations
  slope.col(0).setZero();
  for (int j = 1; j < spec.groups; ++j) slope.col(j) = x * beta.row(j).transpose();

  const int dim = spec.groups - 1;
  const auto evaluate = [&](const Eigen::VectorXd& alpha, Eigen::MatrixXd* jac_out) {
    Eigen::MatrixXd eta = slope;
    for (int j = 1; j < spec.groups; ++j) eta.col(j).array() += alpha[j - 1];
    Eigen::VectorXd shares = Eigen::VectorXd::Zero(spec.groups);
    if (jac_out != nullptr) jac_out->setZero(dim, dim);
    Eigen::RowVectorXd probs(spec.groups);
    for (Eigen::Index i = 0; i < mc_n; ++i) {
      const double m = eta.row(i).maxCoeff();
      probs = (eta.row(i).array() - m).exp();
      probs /= probs.sum();
      shares += probs.transpose();
      if (jac_out != nullptr) {
        for (int j = 1; j < spec.groups; ++j)
          for (int k = 1; k < spec.groups; ++k)
            (*jac_out)(j - 1, k - 1) += probs[j] * ((j == k ? 1.0 : 0.0) - probs[k]);
      }
    }
    shares /= static_cast<double>(mc_n);
    if (jac_out != nullptr) *jac_out /= static_cast<double>(mc_n);
    return Eigen::VectorXd(shares.tail(dim) - target_shares.tail(dim));
  };

  // Damped Newton: the share map saturates for strong covariate effects, so
  // steps are clamped and backtracked on the residual norm.
  Eigen::VectorXd alpha = Eigen::VectorXd::Zero(dim);
  Eigen::MatrixXd jac(dim, dim);
  for (int iter = 0; iter < 100; ++iter) {
    const Eigen::VectorXd residual = evaluate(alpha, &jac);
    const double rnorm = residual.lpNorm<Eigen::Infinity>();
    if (rnorm < 1e-6) return alpha;
    Eigen::VectorXd step = jac.fullPivLu().solve(residual);
    if (!step.allFinite()) throw NumericalError("intercept calibration produced a singular Jacobian");
    const double snorm = step.lpNorm<Eigen::Infinity>();
    if (snorm > 2.0) step *= 2.0 / snorm;
    bool accepted = false;
    double scale = 1.0;
    for (int halving = 0; halving < 12; ++halving) {
      const Eigen::VectorXd trial = alpha - scale * step;
      if (evaluate(trial, nullptr).lpNorm<Eigen::Infinity>() < rnorm) {
        alpha = trial;
        accepted = true;
        break;
      }
      scale *= 0.5;
    }
    if (!accepted) break;
  }
  throw NumericalError("intercept calibration did not converge");
}

DgpSpec calibrated_spec(DgpSpec spec, int mc_n, std::uint64_t seed) {
  if (!spec.calibrated())
    spec.alpha_offsets = calibrate_intercepts(spec, spec.target_shares, mc_n, seed);
  return spec;
}

GeneratedData generate_dataset(const DgpSpec& spec, std::uint64_t seed) {
  if (!spec.calibrated()) throw ValidationError("calibrate the DGP intercepts before generating");
  const Eigen::Index n = spec.sample_size;
  GeneratedData out;
  Eigen::MatrixXd x = draw_covariates(spec, n, seed);
  out.scores = true_scores(spec, x);

  RngStream assign_stream(seed, {kTagAssign});
  Eigen::VectorXi z(n);
  for (Eigen::Index i = 0; i < n; ++i) z[i] = assign_stream.categorical(out.scores.e.row(i));

  RngStream noise_stream(seed, {kTagNoise});
  out.potential_outcomes.resize(n, spec.groups);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double eps = spec.noise_sd * noise_stream.normal();
    for (int j = 0; j < spec.groups; ++j) {
      double m = spec.gamma(j, 0);
      for (int c = 0; c < 6; ++c) m += spec.gamma(j, c + 1) * x(i, c);
      out.potential_outcomes(i, j) = m + eps;
    }
    y[i] = out.potential_outcomes(i, z[i] - 1);
  }

  std::vector<std::string> names = {"x1", "x2", "x3", "x4", "x5", "x6"};
  std::vector<std::string> levels;
  for (int j = 1; j <= spec.groups; ++j) levels.push_back(std::to_string(j));
  out.sample = make_sample(std::move(x), std::move(z), std::move(y), std::move(names),
                           std::move(levels));
  return out;
}

double true_estimand(const DgpSpec& spec, const TiltScheme& scheme, const ContrastSpec& contrast,
                     int mc_n, std::uint64_t seed) {
  if (contrast.a.size() != spec.groups)
    throw ValidationError("contrast length does not match the DGP's group count");

  if (scheme.kind == TiltKind::combined) {
    // Closed form: tau = sum_j a_j gamma_j . (1, E[X]).
    Eigen::VectorXd moments(7);
    moments << 1.0, spec.normal_mean[0], spec.normal_mean[1], spec.normal_mean[2], 0.0, 1.0, 0.5;
    double tau = 0.0;
    for (int j = 0; j < spec.groups; ++j) tau += contrast.a[j] * spec.gamma.row(j).dot(moments);
    return tau;
  }

  const Eigen::MatrixXd x = draw_covariates(spec, mc_n, seed);
  const PropensityMatrix scores = true_scores(spec, x);

  Eigen::VectorXd h;
  if (scheme.kind == TiltKind::trimming && std::isnan(scheme.alpha)) {
    // Population threshold from the Monte Carlo sample itself.
    const TrimResult trim = optimal_alpha(scores);
    const Eigen::VectorXd s = scores.e.cwiseInverse().rowwise().sum();
    h = (s.array() <= trim.alpha).cast<double>();
  } else if (scheme.needs_covariates()) {
    if (!scheme.indicator) throw ValidationError("custom scheme has no indicator predicate");
    h.resize(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const Eigen::RowVectorXd row = x.row(i);
      h[i] = scheme.indicator(row) ? 1.0 : 0.0;
    }
  } else if (scheme.needs_treatment_labels()) {
    RngStream assign_stream(seed, {kTagAssign});
    Eigen::VectorXi z(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) z[i] = assign_stream.categorical(scores.e.row(i));
    ObservationalSample pop = make_sample(x, z);
    h = compute_tilt(scheme, scores, pop).h;
  } else {
    h = compute_tilt(scheme, scores).h;
  }

  double numerator = 0.0, denominator = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    if (h[i] == 0.0) continue;
    double value = 0.0;
    for (int j = 0; j < spec.groups; ++j) {
      if (contrast.a[j] == 0.0) continue;
      double m = spec.gamma(j, 0);
      for (int c = 0; c < 6; ++c) m += spec.gamma(j, c + 1) * x(i, c);
      value += contrast.a[j] * m;
    }
    numerator += h[i] * value;
    denominator += h[i];
  }
  if (!(denominator > 0.0)) throw NumericalError("tilting function vanished on the MC sample");
  return numerator / denominator;
}

double q_functional(const DgpSpec& spec, const TiltScheme& scheme, const Eigen::VectorXd& a,
                    int mc_n, double v, std::uint64_t seed) {
  if (a.size() != spec.groups) throw ValidationError("coefficient length does not match J");
  const Eigen::MatrixXd x = draw_covariates(spec, mc_n, seed);
  const PropensityMatrix scores = true_scores(spec, x);

  Eigen::VectorXd h;
  if (scheme.kind == TiltKind::trimming && std::isnan(scheme.alpha)) {
    const TrimResult trim = optimal_alpha(scores);
    const Eigen::VectorXd s = scores.e.cwiseInverse().rowwise().sum();
    h = (s.array() <= trim.alpha).cast<double>();
  } else {
    h = compute_tilt(scheme, scores).h;
  }

  double integrand_sum = 0.0, h_sum = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    double inv = 0.0;
    for (int j = 0; j < spec.groups; ++j) inv += a[j] * a[j] * v / scores.e(i, j);
    integrand_sum += inv * h[i] * h[i];
    h_sum += h[i];
  }
  const double mean_h = h_sum / static_cast<double>(mc_n);
  return (integrand_sum / static_cast<double>(mc_n)) / (mean_h * mean_h);
}

Eigen::MatrixXd ternary_grid(int resolution) {
  if (resolution < 1) throw ValidationError("ternary grid resolution must be positive");
  std::vector<Eigen::Vector4d> rows;
  for (int i = 0; i <= resolution; ++i) {
    for (int j = 0; j <= resolution - i; ++j) {
      const int k = resolution - i - j;
      const double e1 = static_cast<double>(i) / resolution;
      const double e2 = static_cast<double>(j) / resolution;
      const double e3 = static_cast<double>(k) / resolution;
      double h = 0.0;
      if (i > 0 && j > 0 && k > 0) h = 1.0 / (1.0 / e1 + 1.0 / e2 + 1.0 / e3);
      rows.emplace_back(e1, e2, e3, h);
    }
  }
  Eigen::MatrixXd grid(static_cast<Eigen::Index>(rows.size()), 4);
  for (std::size_t r = 0; r < rows.size(); ++r) grid.row(static_cast<Eigen::Index>(r)) = rows[r];
  return grid;
}

std::string method_name(Method method) {
  switch (method) {
    case Method::dif:
      return "DIF";
    case Method::ipw:
      return "IPW";
    case Method::tipw:
      return "TIPW";
    case Method::gmw:
      return "GMW";
    case Method::gow:
      return "GOW";
  }
  return "?";
}

Method method_from_name(const std::string& name) {
  std::string upper = name;
  std::transform(upper.begin(), upper.end(), upper.begin(), ::toupper);
  if (upper == "DIF") return Method::dif;
  if (upper == "IPW") return Method::ipw;
  if (upper == "TIPW") return Method::tipw;
  if (upper == "GMW") return Method::gmw;
  if (upper == "GOW") return Method::gow;
  throw ValidationError("unknown estimator '" + name + "' (expected DIF, IPW, TIPW, GMW or GOW)");
}

std::vector<EstimatorConfig> default_roster() {
  return {
      {Method::dif, VarianceMethod::sandwich, 0},
      {Method::ipw, VarianceMethod::sandwich, 0},
      {Method::tipw, VarianceMethod::sandwich, 0},
      {Method::gmw, VarianceMethod::bootstrap, 1000},
      {Method::gow, VarianceMethod::sandwich, 0},
  };
}

namespace {

struct ReplicateOutcome {
  bool failed = false;
  std::string error;
  // [estimator][contrast]: point estimate, CI bounds, SE.
  std::vector<Eigen::VectorXd> tau, lo, hi, se;
  double trim_kept_fraction = std::numeric_limits<double>::quiet_NaN();
};

}  // namespace

McResult run_monte_carlo(const DgpSpec& raw_spec, const std::vector<EstimatorConfig>& roster,
                         const McOptions& options) {
  if (options.reps < 1) throw ValidationError("reps must be at least 1");
  if (roster.empty()) throw ValidationError("empty estimator roster");
  const DgpSpec spec = calibrated_spec(raw_spec);

  McResult result;
  result.roster = roster;
  result.contrasts = pairwise_contrasts(spec.groups);
  result.covariance = resolve_covariance(spec);
  result.alpha_offsets = spec.alpha_offsets;
  result.seed = options.seed;
  result.scenario = spec.name;
  const std::size_t pairs = result.contrasts.size();

  // Each estimator is judged against its own scheme's target estimand.
  std::vector<Eigen::VectorXd> truths(roster.size());
  for (std::size_t m = 0; m < roster.size(); ++m) {
    truths[m].resize(static_cast<Eigen::Index>(pairs));
    for (std::size_t p = 0; p < pairs; ++p)
      truths[m][static_cast<Eigen::Index>(p)] =
          true_estimand(spec, scheme_for(roster[m].method), result.contrasts[p],
                        options.estimand_draws, options.seed);
  }

  std::vector<ReplicateOutcome> outcomes(options.reps);
  std::atomic<int> next{0};

  const auto worker = [&]() {
    for (;;) {
      const int rep = next.fetch_add(1);
      if (rep >= options.reps) return;
      ReplicateOutcome& out = outcomes[rep];
      out.tau.assign(roster.size(), Eigen::VectorXd::Constant(pairs, 0.0));
      out.lo.assign(roster.size(), Eigen::VectorXd::Constant(pairs, std::numeric_limits<double>::quiet_NaN()));
      out.hi.assign(roster.size(), Eigen::VectorXd::Constant(pairs, std::numeric_limits<double>::quiet_NaN()));
      out.se.assign(roster.size(), Eigen::VectorXd::Constant(pairs, std::numeric_limits<double>::quiet_NaN()));
      try {
        RngStream rep_seed_stream(options.seed, {kTagReplicate, static_cast<std::uint64_t>(rep)});
        const std::uint64_t data_seed = rep_seed_stream.next_u64();
        const GeneratedData data = generate_dataset(spec, data_seed);

        for (std::size_t m = 0; m < roster.size(); ++m) {
          const EstimatorConfig& cfg = roster[m];
          if (cfg.method == Method::dif) {
            const auto estimates = difference_in_means(data.sample);
            for (std::size_t p = 0; p < pairs; ++p) {
              out.tau[m][p] = estimates[p].tau_hat;
              out.lo[m][p] = estimates[p].ci_low;
              out.hi[m][p] = estimates[p].ci_high;
              out.se[m][p] = estimates[p].se;
            }
            continue;
          }
          const TiltScheme scheme = scheme_for(cfg.method);
          const DesignPipelineResult pl = run_design_pipeline(data.sample, scheme, options.fit);
          if (cfg.method == Method::tipw) out.trim_kept_fraction = pl.trim.kept_fraction;

          std::vector<ContrastEstimate> estimates;
          if (cfg.variance == VarianceMethod::sandwich) {
            SandwichOptions sopt;
            sopt.include_score_correction = !options.ablate_score_correction;
            estimates = sandwich_pairwise(pl.analysis_sample, pl.weights, pl.model, sopt);
          } else if (cfg.variance == VarianceMethod::bootstrap) {
            BootstrapOptions bopt;
            bopt.reps = cfg.bootstrap_reps;
            bopt.seed = RngStream(options.seed,
                                  {kTagEstimatorBoot, static_cast<std::uint64_t>(rep),
                                   static_cast<std::uint64_t>(m)})
                            .next_u64();
            bopt.workers = 1;  // replicates already run in parallel
            bopt.fit = options.fit;
            estimates = bootstrap_pairwise(data.sample, scheme, bopt);
          } else {
            estimates = all_pairwise(pl.analysis_sample, pl.weights);
          }
          for (std::size_t p = 0; p < pairs; ++p) {
            out.tau[m][p] = estimates[p].tau_hat;
            out.lo[m][p] = estimates[p].ci_low;
            out.hi[m][p] = estimates[p].ci_high;
            out.se[m][p] = estimates[p].se;
          }
        }
      } catch (const std::exception& e) {
        out.failed = true;
        out.error = e.what();
      }
    }
  };

  const int workers = std::min(resolve_workers(options.workers), options.reps);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int t = 0; t < workers; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();

  int failed = 0;
  for (const auto& out : outcomes)
    if (out.failed) ++failed;
  result.attempted = options.reps;
  result.failed = failed;
  result.reps = options.reps - failed;
  if (failed > 0)
    log_warn(std::to_string(failed) + " of " + std::to_string(options.reps) +
             " replicates failed; first error: " +
             std::find_if(outcomes.begin(), outcomes.end(), [](const auto& o) { return o.failed; })
                 ->error);
  if (static_cast<double>(failed) > options.max_failure_rate * options.reps)
    throw SimulationError("replicate failure rate " + std::to_string(failed) + "/" +
                          std::to_string(options.reps) + " exceeds the quality gate");
  if (result.reps == 0) throw SimulationError("no replicate succeeded");

  result.cells.assign(roster.size(), std::vector<McCell>(pairs));
  double trim_sum = 0.0;
  int trim_count = 0;
  for (const auto& out : outcomes) {
    if (out.failed || std::isnan(out.trim_kept_fraction)) continue;
    trim_sum += out.trim_kept_fraction;
    ++trim_count;
  }
  if (trim_count > 0) result.trim_kept_fraction_mean = trim_sum / trim_count;

  for (std::size_t m = 0; m < roster.size(); ++m) {
    for (std::size_t p = 0; p < pairs; ++p) {
      McCell& cell = result.cells[m][p];
      cell.truth = truths[m][static_cast<Eigen::Index>(p)];
      double sum = 0.0, sum_sq_err = 0.0;
      double se_sum = 0.0;
      int covered = 0, with_ci = 0;
      for (const auto& out : outcomes) {
        if (out.failed) continue;
        const double tau = out.tau[m][p];
        sum += tau;
        const double err = tau - cell.truth;
        sum_sq_err += err * err;
        if (!std::isnan(out.lo[m][p]) && !std::isnan(out.hi[m][p])) {
          ++with_ci;
          if (out.lo[m][p] <= cell.truth && cell.truth <= out.hi[m][p]) ++covered;
        }
        if (!std::isnan(out.se[m][p])) se_sum += out.se[m][p];
      }
      const double mean_tau = sum / result.reps;
      cell.abs_bias = std::abs(mean_tau - cell.truth);
      cell.rmse = std::sqrt(sum_sq_err / result.reps);
      double ss = 0.0;
      for (const auto& out : outcomes) {
        if (out.failed) continue;
        const double d = out.tau[m][p] - mean_tau;
        ss += d * d;
      }
      cell.mc_sd = result.reps > 1 ? std::sqrt(ss / (result.reps - 1)) : 0.0;
      if (with_ci > 0) {
        cell.coverage = static_cast<double>(covered) / with_ci;
        cell.mean_se = se_sum / with_ci;
      }
    }
  }
  return result;
}

std::string dgp_spec_to_json(const DgpSpec& spec) {
  nlohmann::json j;
  j["name"] = spec.name;
  j["groups"] = spec.groups;
  j["kappa"] = std::vector<double>(spec.kappa.data(), spec.kappa.data() + spec.kappa.size());
  const auto matrix_rows = [](const Eigen::MatrixXd& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      std::vector<double> row(m.cols());
      for (Eigen::Index c = 0; c < m.cols(); ++c) row[c] = m(r, c);
      rows.push_back(row);
    }
    return rows;
  };
  j["beta_directions"] = matrix_rows(spec.beta_directions);
  if (spec.calibrated())
    j["alpha_offsets"] = std::vector<double>(spec.alpha_offsets.data(),
                                             spec.alpha_offsets.data() + spec.alpha_offsets.size());
  j["gamma"] = matrix_rows(spec.gamma);
  j["target_shares"] = std::vector<double>(spec.target_shares.data(),
                                           spec.target_shares.data() + spec.target_shares.size());
  j["normal_mean"] = {spec.normal_mean[0], spec.normal_mean[1], spec.normal_mean[2]};
  j["normal_covariances"] = {spec.normal_covariances[0], spec.normal_covariances[1],
                             spec.normal_covariances[2]};
  j["normal_variances"] = {spec.normal_variances[0], spec.normal_variances[1],
                           spec.normal_variances[2]};
  j["sample_size"] = spec.sample_size;
  j["noise_sd"] = spec.noise_sd;
  return j.dump(2);
}

DgpSpec dgp_spec_from_json(const std::string& text) {
  const nlohmann::json j = nlohmann::json::parse(text);
  DgpSpec spec;
  spec.name = j.value("name", "custom");
  spec.groups = j.at("groups").get<int>();
  const auto kappa = j.at("kappa").get<std::vector<double>>();
  spec.kappa = Eigen::Map<const Eigen::VectorXd>(kappa.data(), kappa.size());
  const auto dirs = j.at("beta_directions").get<std::vector<std::vector<double>>>();
  spec.beta_directions.resize(static_cast<Eigen::Index>(dirs.size()),
                              static_cast<Eigen::Index>(dirs.empty() ? 0 : dirs[0].size()));
  for (std::size_t r = 0; r < dirs.size(); ++r)
    for (std::size_t c = 0; c < dirs[r].size(); ++c)
      spec.beta_directions(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = dirs[r][c];
  if (j.contains("alpha_offsets")) {
    const auto alpha = j["alpha_offsets"].get<std::vector<double>>();
    spec.alpha_offsets = Eigen::Map<const Eigen::VectorXd>(alpha.data(), alpha.size());
  } else {
    spec.alpha_offsets =
        Eigen::VectorXd::Constant(spec.groups - 1, std::numeric_limits<double>::quiet_NaN());
  }
  const auto gam = j.at("gamma").get<std::vector<std::vector<double>>>();
  spec.gamma.resize(static_cast<Eigen::Index>(gam.size()),
                    static_cast<Eigen::Index>(gam.empty() ? 0 : gam[0].size()));
  for (std::size_t r = 0; r < gam.size(); ++r)
    for (std::size_t c = 0; c < gam[r].size(); ++c)
      spec.gamma(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = gam[r][c];
  const auto shares = j.at("target_shares").get<std::vector<double>>();
  spec.target_shares = Eigen::Map<const Eigen::VectorXd>(shares.data(), shares.size());
  if (j.contains("normal_mean")) {
    const auto m = j["normal_mean"].get<std::vector<double>>();
    spec.normal_mean = Eigen::Vector3d(m[0], m[1], m[2]);
  }
  if (j.contains("normal_covariances")) {
    const auto c = j["normal_covariances"].get<std::vector<double>>();
    spec.normal_covariances = Eigen::Vector3d(c[0], c[1], c[2]);
  }
  if (j.contains("normal_variances")) {
    const auto v = j["normal_variances"].get<std::vector<double>>();
    spec.normal_variances = Eigen::Vector3d(v[0], v[1], v[2]);
  }
  spec.sample_size = j.value("sample_size", 1500);
  spec.noise_sd = j.value("noise_sd", 1.0);
  return spec;
}

}  // namespace balancekit
