#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <vector>

namespace balancekit {

// Contract violations in user-supplied inputs: files, shapes, labels.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Numerical and model failures: rank deficiency, singular information,
// zero weight mass.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Scheme/variance-method incompatibilities.
class MethodError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Simulation quality gates (replicate failure rate).
class SimulationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Multi-group observational data. Treatment labels are 1..J after encoding;
// the outcome may stay absent through the design stage (fit, balance) and is
// only required once estimation is requested.
struct ObservationalSample {
  Eigen::MatrixXd covariates;                 // n x p
  Eigen::VectorXi treatment;                  // n, labels in 1..J
  Eigen::VectorXd outcome;                    // n, or empty
  int groups = 0;                             // J
  std::vector<std::string> covariate_names;   // p entries, may be empty
  std::vector<std::string> treatment_levels;  // original label of group j at [j-1]

  Eigen::Index size() const { return covariates.rows(); }
  Eigen::Index covariate_count() const { return covariates.cols(); }
  bool has_outcome() const { return outcome.size() == size() && size() > 0; }
  Eigen::VectorXi group_sizes() const;
  ObservationalSample subset(const std::vector<Eigen::Index>& rows) const;
};

ObservationalSample make_sample(Eigen::MatrixXd covariates, Eigen::VectorXi treatment,
                                Eigen::VectorXd outcome = Eigen::VectorXd(),
                                std::vector<std::string> covariate_names = {},
                                std::vector<std::string> treatment_levels = {});

void validate_sample(const ObservationalSample& sample);

// Throws ValidationError("outcome required ...") when outcomes are absent.
void require_outcome(const ObservationalSample& sample, const std::string& context);

enum class ScoreSource { true_scores, fitted };

// n x J generalized propensity scores. Rows live on the probability simplex
// and every entry is strictly inside (0,1).
struct PropensityMatrix {
  Eigen::MatrixXd e;
  ScoreSource source = ScoreSource::fitted;

  Eigen::Index size() const { return e.rows(); }
  int groups() const { return static_cast<int>(e.cols()); }
};

inline constexpr double kRowSumTolerance = 1e-10;

void validate_propensities(const PropensityMatrix& scores);

// Linear contrast over group means: tau = sum_j a_j m_j.
struct ContrastSpec {
  Eigen::VectorXd a;
  std::string label;

  static ContrastSpec pairwise(int j, int j_prime, int groups);
};

// All J(J-1)/2 pairwise contrasts (j, j') with j < j', in lexicographic order.
std::vector<ContrastSpec> pairwise_contrasts(int groups);

}  // namespace balancekit
