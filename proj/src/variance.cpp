#include "balancekit/variance.hpp"

#include "balancekit/io.hpp"
#include "balancekit/log.hpp"
#include "balancekit/pipeline.hpp"
#include "balancekit/rng.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <thread>

namespace balancekit {

namespace {

constexpr std::uint64_t kBootstrapTag = 0xb007;

// Symmetric positive-definite inverse with an eigenvalue pseudo-inverse
// fallback when the condition number exceeds 1e12.
Eigen::MatrixXd spd_inverse(const Eigen::MatrixXd& m, bool* pseudo_inverted) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m);
  const Eigen::VectorXd& values = eig.eigenvalues();
  const double max_ev = values.maxCoeff();
  const double min_ev = values.minCoeff();
  if (min_ev > 0.0 && max_ev / min_ev < 1e12) {
    if (pseudo_inverted != nullptr) *pseudo_inverted = false;
    return eig.eigenvectors() * values.cwiseInverse().asDiagonal() *
           eig.eigenvectors().transpose();
  }
  log_warn("information matrix is singular or ill-conditioned; using a pseudo-inverse");
  if (pseudo_inverted != nullptr) *pseudo_inverted = true;
  const double cutoff = max_ev * 1e-12;
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(values.size());
  for (Eigen::Index k = 0; k < values.size(); ++k)
    if (values[k] > cutoff) inv[k] = 1.0 / values[k];
  return eig.eigenvectors() * inv.asDiagonal() * eig.eigenvectors().transpose();
}

int resolve_workers(int requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

// Type-7 empirical quantile over a sorted vector.
double sorted_quantile(const std::vector<double>& sorted, double p) {
  const std::size_t n = sorted.size();
  if (n == 1) return sorted[0];
  const double pos = p * static_cast<double>(n - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, n - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

}  // namespace

std::vector<Eigen::MatrixXd> weight_gradient(const TiltScheme& scheme, const GpsModel& model,
                                             const Eigen::Ref<const Eigen::MatrixXd>& covariates) {
  if (!scheme.smooth_in_theta())
    throw MethodError("scheme '" + scheme.name() +
                      "' is not differentiable in theta; use bootstrap intervals");
  if ((scheme.kind == TiltKind::treated || scheme.kind == TiltKind::variance_weighted) &&
      (scheme.focal_group < 1 || scheme.focal_group > model.groups))
    throw ValidationError("scheme '" + scheme.name() + "' needs a focal group in 1.." +
                          std::to_string(model.groups));
  const PropensityMatrix scores = predict_gps(model, covariates);
  const Eigen::MatrixXd& e = scores.e;
  const Eigen::Index n = e.rows();
  const int groups = model.groups;
  const Eigen::Index block = model.covariates + 1;
  const Eigen::Index dim = model.dim();

  Eigen::MatrixXd design(n, block);
  design.col(0).setOnes();
  design.rightCols(block - 1) = covariates;

  // d e_ik / d theta_block(j) = e_ik (delta_kj - e_ij) x_i, j = 2..J.
  // With w_g = h / e_g and scheme-specific dh = sum_k ch_k de_k,
  // d w_g = (dh - w_g de_g) / e_g, so each theta block scales x_i by
  // coef_{g,j} = (sum_k ch_k c_kj - w_g c_gj) / e_g.
  std::vector<Eigen::MatrixXd> grads(groups);
  for (int g = 0; g < groups; ++g) grads[g].resize(n, dim);

  Eigen::VectorXd h(n);
  switch (scheme.kind) {
    case TiltKind::combined:
      h.setOnes();
      break;
    case TiltKind::treated:
      h = e.col(scheme.focal_group - 1);
      break;
    case TiltKind::variance_weighted:
      h = e.col(scheme.focal_group - 1).array() * (1.0 - e.col(scheme.focal_group - 1).array());
      break;
    case TiltKind::overlap:
      h = e.cwiseInverse().rowwise().sum().cwiseInverse();
      break;
    default:
      throw MethodError("unreachable scheme");
  }

  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::RowVectorXd ei = e.row(i);
    Eigen::RowVectorXd ch = Eigen::RowVectorXd::Zero(groups);  // dh = sum_k ch_k de_k
    switch (scheme.kind) {
      case TiltKind::combined:
        break;
      case TiltKind::treated:
        ch[scheme.focal_group - 1] = 1.0;
        break;
      case TiltKind::variance_weighted:
        ch[scheme.focal_group - 1] = 1.0 - 2.0 * ei[scheme.focal_group - 1];
        break;
      case TiltKind::overlap:
        ch = (h[i] * h[i]) * ei.array().square().inverse().matrix();
        break;
      default:
        break;
    }
    // c(k, j) = e_k (delta_kj - e_j) over target blocks j = 2..J.
    for (int g = 0; g < groups; ++g) {
      const double wg = h[i] / ei[g];
      for (int j = 2; j <= groups; ++j) {
        double dh_j = 0.0;
        for (int k = 0; k < groups; ++k) {
          const double ckj = ei[k] * ((k == j - 1 ? 1.0 : 0.0) - ei[j - 1]);
          dh_j += ch[k] * ckj;
        }
        const double cgj = ei[g] * ((g == j - 1 ? 1.0 : 0.0) - ei[j - 1]);
        const double coef = (dh_j - wg * cgj) / ei[g];
        grads[g].row(i).segment((j - 2) * block, block) = coef * design.row(i);
      }
    }
  }
  return grads;
}

InfluenceDecomposition influence_decomposition(const ObservationalSample& sample,
                                               const WeightSet& weights, const GpsModel& model,
                                               const SandwichOptions& options) {
  require_outcome(sample, "sandwich variance");
  if (!weights.scheme.smooth_in_theta())
    throw MethodError("scheme '" + weights.scheme.name() +
                      "' is not differentiable in theta; use bootstrap intervals");
  const Eigen::Index n = sample.size();
  const int groups = sample.groups;
  const auto means = weighted_group_means(sample, weights);

  InfluenceDecomposition out;
  out.h_sum = weights.h_sum();
  out.psi.resize(n, groups);
  out.correction = Eigen::MatrixXd::Zero(groups, model.dim());

  // Residual term: D_ij (Y_i - m_j) w_ij.
  for (Eigen::Index i = 0; i < n; ++i) {
    out.psi.row(i).setZero();
    if (!weights.kept[i]) continue;
    const int j = sample.treatment[i] - 1;
    out.psi(i, j) = (sample.outcome[i] - means[j].m_hat) * weights.w(i, j);
  }

  if (options.include_score_correction) {
    auto grads = weight_gradient(weights.scheme, model, sample.covariates);
    // Gradients are formed at the scheme's canonical h scale; the supplied
    // weight set may carry h rescaled by a positive constant (the estimators
    // self-normalize, so any scale is legal). Match scales so psi stays
    // homogeneous in h.
    const double canonical_h_sum =
        compute_tilt(weights.scheme, predict_gps(model, sample.covariates)).h_sum();
    const double scale = weights.h_sum() / canonical_h_sum;
    if (scale != 1.0)
      for (auto& g : grads) g *= scale;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!weights.kept[i]) continue;
      const int j = sample.treatment[i] - 1;
      out.correction.row(j) += (sample.outcome[i] - means[j].m_hat) * grads[j].row(i);
    }
    out.correction /= static_cast<double>(n);

    const Eigen::MatrixXd scores = score_vectors(model, sample);
    const Eigen::MatrixXd info = information_matrix(model, sample);
    const Eigen::MatrixXd info_inv = spd_inverse(info, &out.information_pseudo_inverted);
    // psi_ij += B_j I^{-1} S_i for every unit, all groups.
    out.psi.noalias() += scores * info_inv * out.correction.transpose();
  }
  return out;
}

std::vector<ContrastEstimate> sandwich_pairwise(const ObservationalSample& sample,
                                                const WeightSet& weights, const GpsModel& model,
                                                const SandwichOptions& options) {
  const auto means = weighted_group_means(sample, weights);
  const InfluenceDecomposition dec = influence_decomposition(sample, weights, model, options);
  const double denominator = dec.h_sum * dec.h_sum;
  const double z = kNormalQuantile975;

  std::vector<ContrastEstimate> out;
  for (const ContrastSpec& spec : pairwise_contrasts(sample.groups)) {
    ContrastEstimate est = estimate_contrast(means, spec);
    int j = -1, jp = -1;
    for (Eigen::Index g = 0; g < spec.a.size(); ++g) {
      if (spec.a[g] > 0.0) j = static_cast<int>(g);
      if (spec.a[g] < 0.0) jp = static_cast<int>(g);
    }
    const double ss = (dec.psi.col(j) - dec.psi.col(jp)).squaredNorm();
    est.variance = ss / denominator;
    est.se = std::sqrt(est.variance);
    est.ci_low = est.tau_hat - z * est.se;
    est.ci_high = est.tau_hat + z * est.se;
    est.method = VarianceMethod::sandwich;
    out.push_back(est);
  }
  return out;
}

std::vector<ContrastEstimate> bootstrap_pairwise(const ObservationalSample& sample,
                                                 const TiltScheme& scheme,
                                                 const BootstrapOptions& options) {
  require_outcome(sample, "bootstrap intervals");
  if (options.reps < 200)
    throw ValidationError("bootstrap needs at least 200 replicates, got " +
                          std::to_string(options.reps));
  const Eigen::Index n = sample.size();
  const int groups = sample.groups;
  const auto contrasts = pairwise_contrasts(groups);
  const std::size_t pairs = contrasts.size();

  // Point estimates from the full-sample design pipeline.
  const DesignPipelineResult base = run_design_pipeline(sample, scheme, options.fit);
  const auto base_means = weighted_group_means(base.analysis_sample, base.weights);

  std::vector<std::vector<double>> taus(pairs, std::vector<double>(options.reps));
  std::atomic<int> next{0};
  std::atomic<long> redraws{0};
  const long redraw_cap = 10L * options.reps;
  std::atomic<bool> cap_hit{false};
  std::vector<std::string> failures(options.reps);

  const auto worker = [&]() {
    for (;;) {
      const int rep = next.fetch_add(1);
      if (rep >= options.reps) return;
      RngStream stream(options.seed, {kBootstrapTag, static_cast<std::uint64_t>(rep)});
      try {
        std::vector<Eigen::Index> idx(n);
        for (;;) {
          Eigen::VectorXi counts = Eigen::VectorXi::Zero(groups);
          for (Eigen::Index i = 0; i < n; ++i) {
            idx[i] = static_cast<Eigen::Index>(stream.uniform_index(static_cast<std::uint64_t>(n)));
            counts[sample.treatment[idx[i]] - 1] += 1;
          }
          if ((counts.array() > 0).all()) break;
          if (redraws.fetch_add(1) + 1 > redraw_cap) {
            cap_hit.store(true);
            return;
          }
        }
        const ObservationalSample resample = sample.subset(idx);
        const DesignPipelineResult pl = run_design_pipeline(resample, scheme, options.fit);
        const auto means = weighted_group_means(pl.analysis_sample, pl.weights);
        for (std::size_t p = 0; p < pairs; ++p)
          taus[p][rep] = estimate_contrast(means, contrasts[p]).tau_hat;
      } catch (const std::exception& e) {
        failures[rep] = e.what();
      }
    }
  };

  const int workers = std::min(resolve_workers(options.workers), options.reps);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int t = 0; t < workers; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();

  if (cap_hit.load())
    throw NumericalError("bootstrap exceeded the redraw cap (" + std::to_string(redraw_cap) +
                         ") while avoiding empty groups");
  for (int rep = 0; rep < options.reps; ++rep)
    if (!failures[rep].empty())
      throw NumericalError("bootstrap replicate " + std::to_string(rep) +
                           " failed: " + failures[rep]);

  if (!options.replicate_csv_path.empty()) {
    std::ostringstream audit;
    audit << "replicate";
    for (const auto& c : contrasts) audit << "," << c.label;
    audit << "\n";
    for (int rep = 0; rep < options.reps; ++rep) {
      audit << rep;
      for (std::size_t p = 0; p < pairs; ++p) audit << "," << format_double(taus[p][rep]);
      audit << "\n";
    }
    write_text_file(options.replicate_csv_path, audit.str());
  }

  std::vector<ContrastEstimate> out;
  const double lo_p = (1.0 - options.level) / 2.0;
  for (std::size_t p = 0; p < pairs; ++p) {
    ContrastEstimate est = estimate_contrast(base_means, contrasts[p]);
    std::vector<double> sorted = taus[p];
    std::sort(sorted.begin(), sorted.end());
    est.ci_low = sorted_quantile(sorted, lo_p);
    est.ci_high = sorted_quantile(sorted, 1.0 - lo_p);
    double mean = 0.0;
    for (double v : sorted) mean += v;
    mean /= sorted.size();
    double ss = 0.0;
    for (double v : sorted) ss += (v - mean) * (v - mean);
    est.variance = sorted.size() > 1 ? ss / (sorted.size() - 1) : 0.0;
    est.se = std::sqrt(est.variance);
    est.method = VarianceMethod::bootstrap;
    out.push_back(est);
  }
  return out;
}

}  // namespace balancekit
