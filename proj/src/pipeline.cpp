#include "balancekit/pipeline.hpp"

#include <cmath>
#include <numeric>

namespace balancekit {

DesignPipelineResult run_design_pipeline(const ObservationalSample& sample,
                                         const TiltScheme& scheme, const FitOptions& options) {
  DesignPipelineResult out;
  out.model = fit_multinomial(sample, options);
  out.scores = predict_gps(out.model, sample.covariates);

  if (scheme.kind == TiltKind::trimming) {
    TrimResult trim;
    if (std::isnan(scheme.alpha)) {
      trim = optimal_alpha(out.scores);
    } else {
      trim.alpha = scheme.alpha;
      const Eigen::VectorXd s = out.scores.e.cwiseInverse().rowwise().sum();
      trim.kept_fraction =
          static_cast<double>((s.array() <= trim.alpha).count()) / static_cast<double>(s.size());
    }
    const Eigen::VectorXd s = out.scores.e.cwiseInverse().rowwise().sum();
    std::vector<Eigen::Index> kept;
    kept.reserve(sample.size());
    for (Eigen::Index i = 0; i < sample.size(); ++i)
      if (s[i] <= trim.alpha) kept.push_back(i);

    // Refit on the trimmed sample; estimation weights are plain inverse
    // probability weights there, with the trim treated as fixed.
    out.analysis_sample = sample.subset(kept);
    validate_sample(out.analysis_sample);
    out.model = fit_multinomial(out.analysis_sample, options);
    out.scores = predict_gps(out.model, out.analysis_sample.covariates);
    out.weights = compute_tilt(TiltScheme::ipw(), out.scores);
    out.kept_rows = std::move(kept);
    out.trim = trim;
    out.trimmed = true;
    return out;
  }

  out.analysis_sample = sample;
  out.weights = compute_tilt(scheme, out.scores, sample);
  out.kept_rows.resize(sample.size());
  std::iota(out.kept_rows.begin(), out.kept_rows.end(), 0);
  return out;
}

}  // namespace balancekit
