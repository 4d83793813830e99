#include "balancekit/io.hpp"

#include <json.hpp>

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace balancekit {

std::string format_double(double value) {
  char buffer[32];
  const auto result = std::to_chars(buffer, buffer + sizeof(buffer), value);
  return std::string(buffer, result.ptr);
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write file '" + path + "'");
  out << content;
}

namespace {

std::string fmt(double value) {
  if (std::isnan(value)) return "";
  return format_double(value);
}

std::string method_label(VarianceMethod method) {
  switch (method) {
    case VarianceMethod::sandwich:
      return "sandwich";
    case VarianceMethod::bootstrap:
      return "bootstrap";
    case VarianceMethod::none:
      return "none";
  }
  return "none";
}

}  // namespace

void write_weights_csv(const std::string& path, const ObservationalSample& sample,
                       const WeightSet& weights) {
  std::ostringstream out;
  out << "unit_id,group,h,w,kept\n";
  for (Eigen::Index i = 0; i < sample.size(); ++i) {
    const int j = sample.treatment[i];
    out << (i + 1) << "," << j << "," << format_double(weights.h[i]) << ","
        << format_double(weights.w(i, j - 1)) << "," << (weights.kept[i] ? 1 : 0) << "\n";
  }
  write_text_file(path, out.str());
}

std::string weights_sidecar_json(const WeightSet& weights, const TrimResult* trim) {
  nlohmann::json j;
  j["scheme"] = weights.scheme.name();
  if (weights.scheme.focal_group > 0) j["focal_group"] = weights.scheme.focal_group;
  if (!std::isnan(weights.scheme.alpha)) j["alpha"] = weights.scheme.alpha;
  j["kept"] = weights.kept_count();
  j["n"] = weights.size();
  j["h_sum"] = weights.h_sum();
  if (trim != nullptr) {
    j["trim_alpha"] = trim->alpha;
    j["trim_kept_fraction"] = trim->kept_fraction;
    j["trim_no_candidate"] = trim->no_candidate;
  }
  return j.dump(2);
}

void write_estimates_csv(const std::string& path, const std::vector<ContrastEstimate>& estimates,
                         const std::vector<GroupMeanEstimate>& means) {
  std::ostringstream out;
  out << "contrast,tau_hat,se,ci_low,ci_high,variance_method";
  for (const auto& m : means) out << ",n_used_" << m.group;
  out << "\n";
  for (const auto& est : estimates) {
    out << est.spec.label << "," << fmt(est.tau_hat) << "," << fmt(est.se) << ","
        << fmt(est.ci_low) << "," << fmt(est.ci_high) << "," << method_label(est.method);
    for (const auto& m : means) out << "," << m.n_used;
    out << "\n";
  }
  write_text_file(path, out.str());
}

std::string estimates_json(const std::vector<ContrastEstimate>& estimates,
                           const std::vector<GroupMeanEstimate>& means,
                           const std::vector<std::string>& treatment_levels) {
  nlohmann::json j;
  if (!treatment_levels.empty()) j["treatment_levels"] = treatment_levels;
  nlohmann::json groups = nlohmann::json::array();
  for (const auto& m : means) {
    nlohmann::json g;
    g["group"] = m.group;
    g["m_hat"] = m.m_hat;
    g["sum_weights"] = m.sum_weights;
    g["n_used"] = m.n_used;
    if (m.variance_unreliable) g["variance_unreliable"] = true;
    groups.push_back(g);
  }
  j["group_means"] = groups;
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& est : estimates) {
    nlohmann::json r;
    r["contrast"] = est.spec.label;
    r["tau_hat"] = est.tau_hat;
    if (!std::isnan(est.variance)) r["variance"] = est.variance;
    if (!std::isnan(est.se)) r["se"] = est.se;
    if (!std::isnan(est.ci_low)) {
      r["ci_low"] = est.ci_low;
      r["ci_high"] = est.ci_high;
    }
    r["variance_method"] = method_label(est.method);
    rows.push_back(r);
  }
  j["contrasts"] = rows;
  return j.dump(2);
}

void write_scores_csv(const std::string& path, const ObservationalSample& sample,
                      const PropensityMatrix& scores) {
  std::ostringstream out;
  out << "unit_id,group";
  for (int j = 1; j <= scores.groups(); ++j) out << ",e" << j;
  out << "\n";
  for (Eigen::Index i = 0; i < scores.size(); ++i) {
    out << (i + 1) << "," << sample.treatment[i];
    for (int j = 0; j < scores.groups(); ++j) out << "," << format_double(scores.e(i, j));
    out << "\n";
  }
  write_text_file(path, out.str());
}

void write_balance_csv(const std::string& path, const BalanceReport& report) {
  std::ostringstream out;
  out << "covariate";
  if (!report.covariates.empty()) {
    const auto& first = report.covariates.front();
    for (Eigen::Index j = 0; j < first.psd.size(); ++j) out << ",psd_" << (j + 1);
    out << ",max_psd";
    const auto pairs = pairwise_contrasts(static_cast<int>(first.psd.size()));
    for (const auto& pair : pairs) {
      std::string tag = pair.label;  // tau(j,k) -> j_k
      tag = tag.substr(4, tag.size() - 5);
      for (auto& c : tag)
        if (c == ',') c = '_';
      out << ",asd_" << tag;
    }
    out << ",max_asd,degenerate";
  }
  out << "\n";
  for (const auto& cov : report.covariates) {
    out << cov.name;
    for (Eigen::Index j = 0; j < cov.psd.size(); ++j) out << "," << format_double(cov.psd[j]);
    out << "," << format_double(cov.max_psd);
    for (Eigen::Index k = 0; k < cov.asd.size(); ++k) out << "," << format_double(cov.asd[k]);
    out << "," << format_double(cov.max_asd) << "," << (cov.degenerate ? 1 : 0) << "\n";
  }
  write_text_file(path, out.str());
}

std::string balance_summary_json(const BalanceReport& report) {
  nlohmann::json j;
  j["scheme"] = report.scheme;
  double worst_psd = 0.0, worst_asd = 0.0;
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& cov : report.covariates) {
    nlohmann::json r;
    r["covariate"] = cov.name;
    r["max_psd"] = cov.max_psd;
    r["max_asd"] = cov.max_asd;
    if (cov.degenerate) r["degenerate"] = true;
    rows.push_back(r);
    worst_psd = std::max(worst_psd, cov.max_psd);
    worst_asd = std::max(worst_asd, cov.max_asd);
  }
  j["covariates"] = rows;
  j["worst_max_psd"] = worst_psd;
  j["worst_max_asd"] = worst_asd;
  // Reporting annotation only; never an automated gate.
  j["adequate_balance_reference"] = 0.1;
  return j.dump(2);
}

void write_balance_long_csv(const std::string& path, const BalanceReport& report) {
  std::ostringstream out;
  out << "scheme,covariate,metric,value\n";
  for (const auto& cov : report.covariates) {
    out << report.scheme << "," << cov.name << ",max_psd," << format_double(cov.max_psd) << "\n";
    out << report.scheme << "," << cov.name << ",max_asd," << format_double(cov.max_asd) << "\n";
  }
  write_text_file(path, out.str());
}

void write_ess_csv(const std::string& path, const EssReport& ess,
                   const std::vector<std::string>& group_labels) {
  std::ostringstream out;
  out << "group,ess\n";
  for (Eigen::Index j = 0; j < ess.per_group.size(); ++j) {
    const std::string label = j < static_cast<Eigen::Index>(group_labels.size())
                                  ? group_labels[j]
                                  : std::to_string(j + 1);
    out << label << "," << format_double(ess.per_group[j]) << "\n";
  }
  out << "total," << format_double(ess.total) << "\n";
  write_text_file(path, out.str());
}

void write_mc_csv(const std::string& path, const McResult& result) {
  std::ostringstream out;
  out << "metric,method";
  for (const auto& c : result.contrasts) {
    std::string tag = c.label.substr(4, c.label.size() - 5);
    for (auto& ch : tag)
      if (ch == ',') ch = '_';
    out << ",tau_" << tag;
  }
  out << "\n";
  const char* metrics[3] = {"abs_bias", "rmse", "coverage"};
  for (int metric = 0; metric < 3; ++metric) {
    for (std::size_t m = 0; m < result.roster.size(); ++m) {
      out << metrics[metric] << "," << method_name(result.roster[m].method);
      for (std::size_t p = 0; p < result.contrasts.size(); ++p) {
        const McCell& cell = result.cells[m][p];
        const double v = metric == 0 ? cell.abs_bias : metric == 1 ? cell.rmse : cell.coverage;
        out << "," << fmt(v);
      }
      out << "\n";
    }
  }
  for (std::size_t m = 0; m < result.roster.size(); ++m) {
    out << "truth," << method_name(result.roster[m].method);
    for (std::size_t p = 0; p < result.contrasts.size(); ++p)
      out << "," << fmt(result.cells[m][p].truth);
    out << "\n";
  }
  write_text_file(path, out.str());
}

void write_ternary_csv(const std::string& path, const Eigen::MatrixXd& grid) {
  std::ostringstream out;
  out << "e1,e2,e3,h\n";
  for (Eigen::Index r = 0; r < grid.rows(); ++r) {
    out << format_double(grid(r, 0)) << "," << format_double(grid(r, 1)) << ","
        << format_double(grid(r, 2)) << "," << format_double(grid(r, 3)) << "\n";
  }
  write_text_file(path, out.str());
}

}  // namespace balancekit
