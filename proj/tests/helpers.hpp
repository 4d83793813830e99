#pragma once

#include "balancekit/rng.hpp"
#include "balancekit/types.hpp"

#include <Eigen/Dense>

#include <filesystem>
#include <fstream>
#include <string>

namespace testutil {

using balancekit::RngStream;

// Random propensity rows via softmax of bounded logits.
inline Eigen::MatrixXd random_simplex_rows(RngStream& rng, Eigen::Index n, int groups,
                                           double logit_scale = 1.5) {
  Eigen::MatrixXd e(n, groups);
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::RowVectorXd eta(groups);
    for (int j = 0; j < groups; ++j) eta[j] = logit_scale * rng.normal();
    const double m = eta.maxCoeff();
    Eigen::RowVectorXd ex = (eta.array() - m).exp();
    e.row(i) = ex / ex.sum();
  }
  return e;
}

// Small synthetic sample with assignment following the given scores.
inline balancekit::ObservationalSample random_sample(RngStream& rng, Eigen::Index n, int groups,
                                                     Eigen::Index covariates,
                                                     const Eigen::MatrixXd* scores = nullptr,
                                                     bool with_outcome = true) {
  Eigen::MatrixXd x(n, covariates);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index c = 0; c < covariates; ++c) x(i, c) = rng.normal();
  Eigen::VectorXi z(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (scores != nullptr) {
      z[i] = rng.categorical(scores->row(i));
    } else {
      z[i] = 1 + static_cast<int>(rng.uniform_index(groups));
    }
  }
  // Guarantee every group appears.
  for (int j = 1; j <= groups; ++j) z[j - 1] = j;
  Eigen::VectorXd y;
  if (with_outcome) {
    y.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) y[i] = rng.normal() + 0.5 * z[i];
  }
  return balancekit::make_sample(std::move(x), std::move(z), std::move(y));
}

// Scratch directory unique per test run.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("balancekit_test_" + tag + "_" + std::to_string(::getpid()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  std::filesystem::path path() const { return path_; }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  out << content;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace testutil
