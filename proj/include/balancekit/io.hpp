#pragma once

#include "balancekit/diagnostics.hpp"
#include "balancekit/estimators.hpp"
#include "balancekit/simulate.hpp"
#include "balancekit/tilt.hpp"
#include "balancekit/types.hpp"

#include <string>
#include <vector>

namespace balancekit {

// Shortest decimal form that round-trips the exact double.
std::string format_double(double value);

void write_text_file(const std::string& path, const std::string& content);

// unit_id, group, h, w (own group), kept.
void write_weights_csv(const std::string& path, const ObservationalSample& sample,
                       const WeightSet& weights);
std::string weights_sidecar_json(const WeightSet& weights, const TrimResult* trim = nullptr);

// contrast, tau_hat, se, ci_low, ci_high, method, n_used per group.
void write_estimates_csv(const std::string& path, const std::vector<ContrastEstimate>& estimates,
                         const std::vector<GroupMeanEstimate>& means);
std::string estimates_json(const std::vector<ContrastEstimate>& estimates,
                           const std::vector<GroupMeanEstimate>& means,
                           const std::vector<std::string>& treatment_levels = {});

void write_scores_csv(const std::string& path, const ObservationalSample& sample,
                      const PropensityMatrix& scores);

void write_balance_csv(const std::string& path, const BalanceReport& report);
std::string balance_summary_json(const BalanceReport& report);
// Long-format rows (scheme, covariate, metric, value) for plot tooling.
void write_balance_long_csv(const std::string& path, const BalanceReport& report);

void write_ess_csv(const std::string& path, const EssReport& ess,
                   const std::vector<std::string>& group_labels);

// Metric x Method rows by contrast columns, simulation-table layout.
void write_mc_csv(const std::string& path, const McResult& result);

void write_ternary_csv(const std::string& path, const Eigen::MatrixXd& grid);

}  // namespace balancekit
