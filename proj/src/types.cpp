#include "balancekit/types.hpp"

#include <cmath>
#include <sstream>

namespace balancekit {

namespace {

std::string column_name(const ObservationalSample& sample, Eigen::Index j) {
  if (j < static_cast<Eigen::Index>(sample.covariate_names.size()))
    return sample.covariate_names[j];
  return "column " + std::to_string(j + 1);
}

std::string level_name(const ObservationalSample& sample, int group) {
  if (group >= 1 && group <= static_cast<int>(sample.treatment_levels.size()))
    return "'" + sample.treatment_levels[group - 1] + "'";
  return "group " + std::to_string(group);
}

}  // namespace

Eigen::VectorXi ObservationalSample::group_sizes() const {
  Eigen::VectorXi counts = Eigen::VectorXi::Zero(groups);
  for (Eigen::Index i = 0; i < treatment.size(); ++i) {
    const int z = treatment[i];
    if (z >= 1 && z <= groups) counts[z - 1] += 1;
  }
  return counts;
}

ObservationalSample ObservationalSample::subset(const std::vector<Eigen::Index>& rows) const {
  ObservationalSample out;
  out.groups = groups;
  out.covariate_names = covariate_names;
  out.treatment_levels = treatment_levels;
  const Eigen::Index m = static_cast<Eigen::Index>(rows.size());
  out.covariates.resize(m, covariates.cols());
  out.treatment.resize(m);
  const bool with_outcome = has_outcome();
  if (with_outcome) out.outcome.resize(m);
  for (Eigen::Index k = 0; k < m; ++k) {
    out.covariates.row(k) = covariates.row(rows[k]);
    out.treatment[k] = treatment[rows[k]];
    if (with_outcome) out.outcome[k] = outcome[rows[k]];
  }
  return out;
}

ObservationalSample make_sample(Eigen::MatrixXd covariates, Eigen::VectorXi treatment,
                                Eigen::VectorXd outcome,
                                std::vector<std::string> covariate_names,
                                std::vector<std::string> treatment_levels) {
  ObservationalSample sample;
  sample.covariates = std::move(covariates);
  sample.treatment = std::move(treatment);
  sample.outcome = std::move(outcome);
  sample.covariate_names = std::move(covariate_names);
  sample.treatment_levels = std::move(treatment_levels);
  if (!sample.treatment_levels.empty()) {
    sample.groups = static_cast<int>(sample.treatment_levels.size());
  } else {
    sample.groups = sample.treatment.size() > 0 ? sample.treatment.maxCoeff() : 0;
  }
  validate_sample(sample);
  return sample;
}

void validate_sample(const ObservationalSample& sample) {
  if (sample.size() == 0) throw ValidationError("sample is empty");
  if (sample.covariates.rows() != sample.treatment.size())
    throw ValidationError("covariate rows and treatment length differ");
  if (sample.outcome.size() != 0 && sample.outcome.size() != sample.treatment.size())
    throw ValidationError("outcome length does not match sample size");
  if (!sample.covariate_names.empty() &&
      static_cast<Eigen::Index>(sample.covariate_names.size()) != sample.covariate_count())
    throw ValidationError("covariate name count does not match covariate columns");
  if (sample.groups < 2) throw ValidationError("at least two treatment groups are required");

  for (Eigen::Index i = 0; i < sample.size(); ++i) {
    for (Eigen::Index j = 0; j < sample.covariate_count(); ++j) {
      if (!std::isfinite(sample.covariates(i, j))) {
        std::ostringstream msg;
        msg << "non-finite covariate at row " << (i + 1) << ", " << column_name(sample, j);
        throw ValidationError(msg.str());
      }
    }
    if (sample.outcome.size() != 0 && !std::isfinite(sample.outcome[i]))
      throw ValidationError("non-finite outcome at row " + std::to_string(i + 1));
    const int z = sample.treatment[i];
    if (z < 1 || z > sample.groups)
      throw ValidationError("unknown treatment label at row " + std::to_string(i + 1) +
                            " (encoded value " + std::to_string(z) + ")");
  }

  const Eigen::VectorXi sizes = sample.group_sizes();
  for (int j = 0; j < sample.groups; ++j) {
    if (sizes[j] == 0)
      throw ValidationError("empty treatment group " + level_name(sample, j + 1));
  }
}

void require_outcome(const ObservationalSample& sample, const std::string& context) {
  if (!sample.has_outcome())
    throw ValidationError("outcome required for " + context +
                          " but the sample has no outcome column");
}

void validate_propensities(const PropensityMatrix& scores) {
  const Eigen::MatrixXd& e = scores.e;
  if (e.rows() == 0 || e.cols() < 2)
    throw ValidationError("propensity matrix must be n x J with J >= 2");
  for (Eigen::Index i = 0; i < e.rows(); ++i) {
    double row_sum = 0.0;
    for (Eigen::Index j = 0; j < e.cols(); ++j) {
      const double v = e(i, j);
      if (!(v > 0.0) || v >= 1.0) {
        std::ostringstream msg;
        msg << "propensity " << v << " outside (0,1) at row " << (i + 1) << ", group " << (j + 1)
            << ": overlap assumption violated at this design point";
        throw ValidationError(msg.str());
      }
      row_sum += v;
    }
    if (std::abs(row_sum - 1.0) > kRowSumTolerance) {
      std::ostringstream msg;
      msg << "propensity row " << (i + 1) << " sums to " << row_sum << " (tolerance "
          << kRowSumTolerance << ")";
      throw ValidationError(msg.str());
    }
  }
}

ContrastSpec ContrastSpec::pairwise(int j, int j_prime, int groups) {
  if (j < 1 || j > groups || j_prime < 1 || j_prime > groups || j == j_prime)
    throw ValidationError("invalid pairwise contrast (" + std::to_string(j) + "," +
                          std::to_string(j_prime) + ") for J=" + std::to_string(groups));
  ContrastSpec spec;
  spec.a = Eigen::VectorXd::Zero(groups);
  spec.a[j - 1] = 1.0;
  spec.a[j_prime - 1] = -1.0;
  spec.label = "tau(" + std::to_string(j) + "," + std::to_string(j_prime) + ")";
  return spec;
}

std::vector<ContrastSpec> pairwise_contrasts(int groups) {
  std::vector<ContrastSpec> out;
  out.reserve(static_cast<std::size_t>(groups) * (groups - 1) / 2);
  for (int j = 1; j <= groups; ++j)
    for (int k = j + 1; k <= groups; ++k) out.push_back(ContrastSpec::pairwise(j, k, groups));
  return out;
}

}  // namespace balancekit
