#include "balancekit/diagnostics.hpp"

#include "balancekit/estimators.hpp"
#include "balancekit/gps.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "helpers.hpp"

using namespace balancekit;
using testutil::RngStream;

TEST_CASE("balance metrics") {
  SUBCASE("identical covariate copies across groups balance exactly") {
    Eigen::MatrixXd x(9, 1);
    Eigen::VectorXi z(9);
    for (int g = 0; g < 3; ++g)
      for (int i = 0; i < 3; ++i) {
        x(3 * g + i, 0) = static_cast<double>(i);
        z[3 * g + i] = g + 1;
      }
    const ObservationalSample sample = make_sample(x, z);
    const BalanceReport report = balance_report(sample, unit_weights(9, 3));
    REQUIRE(report.covariates.size() == 1);
    CHECK(report.covariates[0].max_psd == 0.0);
    CHECK(report.covariates[0].max_asd == 0.0);
  }

  SUBCASE("three-group hand dataset matches spreadsheet values") {
    // Groups: g1 x=(1,2) w=(1,1); g2 x=(2,4) w=(1,3); g3 x=(0,2) w=(2,2).
    Eigen::MatrixXd x(6, 1);
    x << 1, 2, 2, 4, 0, 2;
    Eigen::VectorXi z(6);
    z << 1, 1, 2, 2, 3, 3;
    const ObservationalSample sample = make_sample(x, z);
    WeightSet w = unit_weights(6, 3);
    const double weights[6] = {1, 1, 1, 3, 2, 2};
    for (int i = 0; i < 6; ++i) {
      w.h[i] = weights[i];
      w.w.row(i).setConstant(weights[i]);
    }
    const BalanceReport report = balance_report(sample, w);
    const auto& bal = report.covariates[0];
    // Weighted means: 1.5, 3.5, 1; target mean 21/10; S_X = sqrt(1.5).
    const double sd = std::sqrt(1.5);
    CHECK(bal.psd[0] == doctest::Approx(0.6 / sd).epsilon(1e-12));
    CHECK(bal.psd[1] == doctest::Approx(1.4 / sd).epsilon(1e-12));
    CHECK(bal.psd[2] == doctest::Approx(1.1 / sd).epsilon(1e-12));
    CHECK(bal.max_psd == doctest::Approx(1.4 / sd).epsilon(1e-12));
    CHECK(bal.asd[0] == doctest::Approx(2.0 / sd).epsilon(1e-12));
    CHECK(bal.asd[1] == doctest::Approx(0.5 / sd).epsilon(1e-12));
    CHECK(bal.asd[2] == doctest::Approx(2.5 / sd).epsilon(1e-12));
    CHECK(bal.max_asd == doctest::Approx(2.5 / sd).epsilon(1e-12));
  }

  SUBCASE("degenerate covariate reports zero with a flag") {
    Eigen::MatrixXd x = Eigen::MatrixXd::Ones(8, 1);
    Eigen::VectorXi z(8);
    z << 1, 1, 1, 1, 2, 2, 2, 2;
    const BalanceReport report = balance_report(make_sample(x, z), unit_weights(8, 2));
    CHECK(report.covariates[0].degenerate);
    CHECK(report.covariates[0].max_psd == 0.0);
    CHECK(report.covariates[0].max_asd == 0.0);
  }

  SUBCASE("metrics are invariant to affine covariate transforms") {
    RngStream rng(301);
    const Eigen::MatrixXd e = testutil::random_simplex_rows(rng, 60, 3);
    ObservationalSample sample = testutil::random_sample(rng, 60, 3, 2, nullptr, false);
    const WeightSet w = compute_tilt(TiltScheme::overlap(), {e, ScoreSource::fitted});
    const BalanceReport base = balance_report(sample, w);
    sample.covariates.col(0) = 7.0 * sample.covariates.col(0).array() - 11.0;
    sample.covariates.col(1) = -0.25 * sample.covariates.col(1).array() + 2.0;
    const BalanceReport moved = balance_report(sample, w);
    for (std::size_t c = 0; c < base.covariates.size(); ++c) {
      CHECK(moved.covariates[c].max_psd ==
            doctest::Approx(base.covariates[c].max_psd).epsilon(1e-10));
      CHECK(moved.covariates[c].max_asd ==
            doctest::Approx(base.covariates[c].max_asd).epsilon(1e-10));
    }
  }

  SUBCASE("max fields equal the maxima of their vectors") {
    RngStream rng(303);
    const Eigen::MatrixXd e = testutil::random_simplex_rows(rng, 40, 3);
    const ObservationalSample sample = testutil::random_sample(rng, 40, 3, 3, nullptr, false);
    const BalanceReport report =
        balance_report(sample, compute_tilt(TiltScheme::matching(), {e, ScoreSource::fitted}));
    for (const auto& bal : report.covariates) {
      CHECK(bal.max_psd == bal.psd.maxCoeff());
      CHECK(bal.max_asd == bal.asd.maxCoeff());
      CHECK(bal.psd.minCoeff() >= 0.0);
      CHECK(bal.asd.minCoeff() >= 0.0);
    }
  }
}

TEST_CASE("binary overlap weights balance every model covariate exactly") {
  RngStream rng(307);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::Index n = 120 + static_cast<Eigen::Index>(rng.uniform_index(120));
    Eigen::MatrixXd x(n, 3);
    Eigen::VectorXi z(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (int c = 0; c < 3; ++c) x(i, c) = rng.normal();
      const double eta = 0.4 * x(i, 0) - 0.7 * x(i, 1) + 0.2 * x(i, 2) + 0.3;
      z[i] = rng.uniform01() < 1.0 / (1.0 + std::exp(-eta)) ? 2 : 1;
    }
    z[0] = 1;
    z[1] = 2;
    const ObservationalSample sample = make_sample(x, z);
    const GpsModel model = fit_multinomial(sample);
    if (!model.converged) continue;
    const WeightSet w = compute_tilt(TiltScheme::overlap(), predict_gps(model, x));
    const BalanceReport report = balance_report(sample, w);
    for (const auto& bal : report.covariates) CHECK(bal.max_asd <= 1e-6);
  }
}

TEST_CASE("effective sample size") {
  SUBCASE("uniform weights recover the group size") {
    Eigen::VectorXi z(7);
    z << 1, 1, 1, 1, 2, 2, 2;
    WeightSet w = unit_weights(7, 2);
    w.w *= 3.25;
    w.h *= 3.25;
    const EssReport ess = effective_sample_size(w, z);
    CHECK(ess.per_group[0] == doctest::Approx(4.0).epsilon(1e-12));
    CHECK(ess.per_group[1] == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(ess.total == doctest::Approx(7.0).epsilon(1e-12));
  }
  SUBCASE("degenerate mass gives ESS 1") {
    Eigen::VectorXi z(2);
    z << 1, 1;
    WeightSet w = unit_weights(2, 1);
    w.w(1, 0) = 0.0;
    const EssReport ess = effective_sample_size(w, z);
    CHECK(ess.per_group[0] == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("weights (1,1,2) give 16/6") {
    Eigen::VectorXi z(3);
    z << 1, 1, 1;
    WeightSet w = unit_weights(3, 1);
    w.w(2, 0) = 2.0;
    const EssReport ess = effective_sample_size(w, z);
    CHECK(ess.per_group[0] == doctest::Approx(16.0 / 6.0).epsilon(1e-12));
  }
  SUBCASE("empty kept group reports zero") {
    Eigen::VectorXi z(3);
    z << 1, 1, 2;
    WeightSet w = unit_weights(3, 2);
    w.kept[2] = false;
    const EssReport ess = effective_sample_size(w, z);
    CHECK(ess.per_group[1] == 0.0);
  }
  SUBCASE("pooled literal form equals the per-group form at constant weights") {
    Eigen::VectorXi z(6);
    z << 1, 1, 2, 2, 3, 3;
    const WeightSet w = unit_weights(6, 3);
    CHECK(effective_sample_size_pooled(w, z) == doctest::Approx(6.0).epsilon(1e-12));
  }
}

TEST_CASE("rank and replace") {
  SUBCASE("uniform weights leave values unchanged") {
    RngStream rng(311);
    Eigen::VectorXi z(12);
    for (int i = 0; i < 12; ++i) z[i] = 1 + i % 3;
    Eigen::VectorXd index(12);
    for (int i = 0; i < 12; ++i) index[i] = rng.normal();
    const Eigen::VectorXd adjusted = rank_and_replace(index, unit_weights(12, 3), z);
    for (int i = 0; i < 12; ++i) CHECK(adjusted[i] == index[i]);
  }

  SUBCASE("single-unit group keeps its value") {
    Eigen::VectorXi z(3);
    z << 1, 2, 2;
    Eigen::VectorXd index(3);
    index << 5.5, 1.0, 2.0;
    WeightSet w = unit_weights(3, 2);
    w.w(1, 1) = 9.0;
    const Eigen::VectorXd adjusted = rank_and_replace(index, w, z);
    CHECK(adjusted[0] == 5.5);
  }

  SUBCASE("adjusted values come from the group's original values") {
    RngStream rng(313);
    Eigen::VectorXi z(30);
    Eigen::VectorXd index(30);
    WeightSet w = unit_weights(30, 2);
    for (int i = 0; i < 30; ++i) {
      z[i] = 1 + i % 2;
      index[i] = rng.normal();
      const double weight = 0.25 + 4.0 * rng.uniform01();
      w.w.row(i).setConstant(weight);
      w.h[i] = weight;
    }
    const Eigen::VectorXd adjusted = rank_and_replace(index, w, z);
    for (int i = 0; i < 30; ++i) {
      bool found = false;
      for (int l = 0; l < 30; ++l)
        if (z[l] == z[i] && adjusted[i] == index[l]) found = true;
      CHECK(found);
    }
  }

  SUBCASE("weighted ranks map to matching unweighted quantile levels") {
    // For the type-1 rule, each unit's adjusted value sits at the unweighted
    // CDF level ceil(n r)/n, within 1/n of its weighted rank r.
    RngStream rng(317);
    for (int trial = 0; trial < 50; ++trial) {
      const Eigen::Index n = 10 + static_cast<Eigen::Index>(rng.uniform_index(60));
      Eigen::VectorXi z = Eigen::VectorXi::Ones(n);
      Eigen::VectorXd index(n);
      WeightSet w = unit_weights(n, 1);
      for (Eigen::Index i = 0; i < n; ++i) {
        index[i] = rng.normal();
        const double weight = 0.1 + 5.0 * rng.uniform01();
        w.w(i, 0) = weight;
        w.h[i] = weight;
      }
      const Eigen::VectorXd adjusted = rank_and_replace(index, w, z);

      std::vector<double> sorted(index.data(), index.data() + n);
      std::sort(sorted.begin(), sorted.end());
      std::vector<Eigen::Index> order(n);
      std::iota(order.begin(), order.end(), 0);
      std::sort(order.begin(), order.end(),
                [&](Eigen::Index a, Eigen::Index b) { return index[a] < index[b]; });
      const double total = w.h.sum();
      double cum = 0.0;
      for (Eigen::Index k = 0; k < n; ++k) {
        const Eigen::Index unit = order[k];
        cum += w.h[unit];
        const double rank = cum / total;
        const auto level =
            static_cast<double>(std::lower_bound(sorted.begin(), sorted.end(), adjusted[unit]) -
                                sorted.begin() + 1) /
            static_cast<double>(n);
        CHECK(std::abs(level - rank) <= 1.0 / static_cast<double>(n) + 1e-12);
      }
    }
  }

  SUBCASE("ties keep a stable order") {
    Eigen::VectorXi z = Eigen::VectorXi::Ones(4);
    Eigen::VectorXd index(4);
    index << 2.0, 2.0, 1.0, 3.0;
    const Eigen::VectorXd adjusted = rank_and_replace(index, unit_weights(4, 1), z);
    for (int i = 0; i < 4; ++i) CHECK(adjusted[i] == index[i]);
  }

  SUBCASE("non-finite index values are rejected") {
    Eigen::VectorXi z = Eigen::VectorXi::Ones(2);
    Eigen::VectorXd index(2);
    index << 1.0, std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(rank_and_replace(index, unit_weights(2, 1), z), ValidationError);
  }
}
