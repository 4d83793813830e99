#pragma once

#include "balancekit/gps.hpp"
#include "balancekit/tilt.hpp"
#include "balancekit/types.hpp"

#include <vector>

namespace balancekit {

// One authoritative design path: fit the GPS model, and for trimming schemes
// exclude units first and refit on the trimmed sample before weights are
// formed. Estimation weights for trimmed runs are plain inverse-probability
// weights on the refit scores, with the trim treated as fixed.
struct DesignPipelineResult {
  ObservationalSample analysis_sample;
  GpsModel model;
  PropensityMatrix scores;
  WeightSet weights;
  std::vector<Eigen::Index> kept_rows;  // indices into the input sample
  TrimResult trim;
  bool trimmed = false;
};

DesignPipelineResult run_design_pipeline(const ObservationalSample& sample,
                                         const TiltScheme& scheme,
                                         const FitOptions& options = {});

}  // namespace balancekit
