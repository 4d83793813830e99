// Acceptance suite: replicates the headline simulation-study behavior and
// the analytic guarantees at fixed tolerances, printing one pass/fail line
// per criterion. Exit status is the number of failed criteria.
//
// Flags: --reps N (default 1000), --seed S, --workers W, --q-draws N.

#include "balancekit/diagnostics.hpp"
#include "balancekit/estimators.hpp"
#include "balancekit/gps.hpp"
#include "balancekit/pipeline.hpp"
#include "balancekit/simulate.hpp"
#include "balancekit/tilt.hpp"
#include "balancekit/variance.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <string>
#include <vector>

#include "property_suites.hpp"

using namespace balancekit;

namespace {

struct Criterion {
  int id;
  bool passed;
  bool skipped = false;
  std::string detail;
};

std::vector<Criterion> g_results;

void report(int id, bool passed, const std::string& detail) {
  g_results.push_back({id, passed, false, detail});
  if (id > 0) {
    std::printf("[%s] criterion %d: %s\n", passed ? "PASS" : "FAIL", id, detail.c_str());
  } else {
    std::printf("[%s] invariant: %s\n", passed ? "PASS" : "FAIL", detail.c_str());
  }
  std::fflush(stdout);
}

void report_skip(int id, const std::string& detail) {
  g_results.push_back({id, true, true, detail});
  std::printf("[SKIP] criterion %d: %s\n", id, detail.c_str());
  std::fflush(stdout);
}

double total_mse(const McResult& result, std::size_t method_index) {
  double total = 0.0;
  for (std::size_t p = 0; p < result.contrasts.size(); ++p) {
    const double rmse = result.cells[method_index][p].rmse;
    total += rmse * rmse;
  }
  return total;
}

std::size_t roster_index(const McResult& result, Method method) {
  for (std::size_t m = 0; m < result.roster.size(); ++m)
    if (result.roster[m].method == method) return m;
  throw std::logic_error("method missing from roster");
}

std::string fmt3(double a, double b, double c) {
  char buffer[96];
  std::snprintf(buffer, sizeof(buffer), "(%.3f, %.3f, %.3f)", a, b, c);
  return buffer;
}

}  // namespace

int main(int argc, char** argv) {
  int reps = 1000;
  std::uint64_t seed = 20240801;
  int workers = 0;
  int q_draws = 1000000;
  for (int a = 1; a + 1 < argc; ++a) {
    if (std::strcmp(argv[a], "--reps") == 0) reps = std::atoi(argv[a + 1]);
    if (std::strcmp(argv[a], "--seed") == 0) seed = std::strtoull(argv[a + 1], nullptr, 10);
    if (std::strcmp(argv[a], "--workers") == 0) workers = std::atoi(argv[a + 1]);
    if (std::strcmp(argv[a], "--q-draws") == 0) q_draws = std::atoi(argv[a + 1]);
  }
  std::printf("acceptance: reps=%d seed=%llu\n", reps, static_cast<unsigned long long>(seed));

  const std::vector<EstimatorConfig> roster = {
      {Method::dif, VarianceMethod::sandwich, 0},
      {Method::ipw, VarianceMethod::sandwich, 0},
      {Method::tipw, VarianceMethod::sandwich, 0},
      {Method::gmw, VarianceMethod::none, 0},  // point estimates; MSE ordering only
      {Method::gow, VarianceMethod::sandwich, 0},
  };
  McOptions options;
  options.reps = reps;
  options.seed = seed;
  options.workers = workers;
  options.estimand_draws = q_draws;

  const DgpSpec adequate = calibrated_spec(DgpSpec::adequate_overlap());
  const DgpSpec lack = calibrated_spec(DgpSpec::lack_of_overlap());
  const bool clipped = resolve_covariance(adequate).clipped;

  std::printf("running adequate-overlap study (n=%d, %d reps)...\n", adequate.sample_size, reps);
  const McResult mc_adequate = run_monte_carlo(adequate, roster, options);
  std::printf("running lack-of-overlap study (n=%d, %d reps)...\n", lack.sample_size, reps);
  const McResult mc_lack = run_monte_carlo(lack, roster, options);

  const std::size_t gow = roster_index(mc_adequate, Method::gow);
  const std::size_t gmw = roster_index(mc_adequate, Method::gmw);
  const std::size_t tipw = roster_index(mc_adequate, Method::tipw);
  const std::size_t ipw = roster_index(mc_adequate, Method::ipw);

  // Criterion 1: adequate-overlap reproduction for GOW. The pairwise
  // covariance reading is projected (clipped), so the widened tolerances
  // apply: |bias| <= 0.03, RMSE within +-0.05 of (0.15, 0.15, 0.22),
  // coverage within +-0.05 of (0.94, 0.96, 0.95), plus the efficiency
  // ordering in place of exact table values.
  {
    const double rmse_ref[3] = {0.15, 0.15, 0.22};
    const double cover_ref[3] = {0.94, 0.96, 0.95};
    const double rmse_tol = clipped ? 0.05 : 0.03;
    const double cover_tol = clipped ? 0.05 : 0.02;
    bool ok = true;
    for (int p = 0; p < 3; ++p) {
      const McCell& cell = mc_adequate.cells[gow][p];
      if (cell.abs_bias > 0.03) ok = false;
      if (std::abs(cell.rmse - rmse_ref[p]) > rmse_tol) ok = false;
      if (std::abs(cell.coverage - cover_ref[p]) > cover_tol) ok = false;
    }
    if (clipped) {
      const double mse_gow = total_mse(mc_adequate, gow);
      if (mse_gow > 1.02 * total_mse(mc_adequate, tipw)) ok = false;
      if (mse_gow > 1.02 * total_mse(mc_adequate, gmw)) ok = false;
      if (mse_gow > 1.02 * total_mse(mc_adequate, ipw)) ok = false;
    }
    report(1, ok,
           "adequate overlap, GOW: bias " +
               fmt3(mc_adequate.cells[gow][0].abs_bias, mc_adequate.cells[gow][1].abs_bias,
                    mc_adequate.cells[gow][2].abs_bias) +
               " <= 0.03; rmse " +
               fmt3(mc_adequate.cells[gow][0].rmse, mc_adequate.cells[gow][1].rmse,
                    mc_adequate.cells[gow][2].rmse) +
               " in (0.15, 0.15, 0.22) +- " + (clipped ? std::string("0.05") : std::string("0.03")) +
               "; coverage " +
               fmt3(mc_adequate.cells[gow][0].coverage, mc_adequate.cells[gow][1].coverage,
                    mc_adequate.cells[gow][2].coverage) +
               " in (0.94, 0.96, 0.95) +- " + (clipped ? std::string("0.05") : std::string("0.02")) +
               (clipped ? "; covariance projected -> ordering asserted" : ""));
  }

  // Criterion 2: lack of overlap: IPW visibly biased on at least one
  // contrast, GOW unbiased on all, and the trimming rule excludes 19-30%.
  {
    double ipw_max_bias = 0.0, gow_max_bias = 0.0;
    for (int p = 0; p < 3; ++p) {
      ipw_max_bias = std::max(ipw_max_bias, mc_lack.cells[ipw][p].abs_bias);
      gow_max_bias = std::max(gow_max_bias, mc_lack.cells[gow][p].abs_bias);
    }
    const double exclusion = 1.0 - mc_lack.trim_kept_fraction_mean;
    const bool ok = ipw_max_bias >= 0.10 && gow_max_bias <= 0.03 && exclusion >= 0.19 &&
                    exclusion <= 0.30;
    char buffer[160];
    std::snprintf(buffer, sizeof(buffer),
                  "lack of overlap: max IPW bias %.3f >= 0.10; max GOW bias %.3f <= 0.03; "
                  "trim exclusion %.3f in [0.19, 0.30]",
                  ipw_max_bias, gow_max_bias, exclusion);
    report(2, ok, buffer);
  }

  // Criterion 3: total-MSE efficiency ordering under lack of overlap with
  // 2% Monte Carlo slack: GOW <= GMW and GOW <= TIPW <= IPW.
  {
    const double mse_gow = total_mse(mc_lack, gow);
    const double mse_gmw = total_mse(mc_lack, gmw);
    const double mse_tipw = total_mse(mc_lack, tipw);
    const double mse_ipw = total_mse(mc_lack, ipw);
    const bool ok = mse_gow <= 1.02 * mse_gmw && mse_gow <= 1.02 * mse_tipw &&
                    mse_tipw <= 1.02 * mse_ipw;
    char buffer[160];
    std::snprintf(buffer, sizeof(buffer),
                  "total MSE ordering: GOW %.4f <= GMW %.4f, GOW <= TIPW %.4f <= IPW %.4f "
                  "(2%% slack)",
                  mse_gow, mse_gmw, mse_tipw, mse_ipw);
    report(3, ok, buffer);
  }

  // Consistency invariant: every weighting estimator's replication mean sits
  // within 3 Monte Carlo standard errors of its own target estimand on the
  // adequate-overlap study (DIF is the deliberately confounded comparator
  // and is excluded).
  {
    bool ok = true;
    std::string detail = "consistency (3 MC SE):";
    for (const Method method : {Method::ipw, Method::tipw, Method::gmw, Method::gow}) {
      const std::size_t m = roster_index(mc_adequate, method);
      double worst = 0.0;
      for (std::size_t p = 0; p < mc_adequate.contrasts.size(); ++p) {
        const McCell& cell = mc_adequate.cells[m][p];
        const double se = cell.mc_sd / std::sqrt(static_cast<double>(mc_adequate.reps));
        worst = std::max(worst, cell.abs_bias / (3.0 * se));
      }
      char buffer[64];
      std::snprintf(buffer, sizeof(buffer), " %s %.2f", method_name(method).c_str(), worst);
      detail += buffer;
      if (worst > 1.0) ok = false;
    }
    report(0, ok, detail + " (each ratio must stay <= 1)");
  }

  // Criterion 4: the harmonic-mean tilt minimizes Q(1_J, h) strictly (1%
  // margin) against IPW, matching and each treated tilt, both scenarios.
  {
    bool ok = true;
    double worst_margin = 1e9;
    Eigen::VectorXd ones = Eigen::VectorXd::Ones(3);
    for (const DgpSpec& scenario : {adequate, lack}) {
      const double q_overlap =
          q_functional(scenario, TiltScheme::overlap(), ones, q_draws, 1.0, seed + 4);
      for (const TiltScheme& other :
           {TiltScheme::ipw(), TiltScheme::matching(), TiltScheme::treated(1),
            TiltScheme::treated(2), TiltScheme::treated(3)}) {
        const double q_other = q_functional(scenario, other, ones, q_draws, 1.0, seed + 4);
        worst_margin = std::min(worst_margin, q_other / q_overlap - 1.0);
        if (q_overlap > 0.99 * q_other) ok = false;
      }
    }
    char buffer[160];
    std::snprintf(buffer, sizeof(buffer),
                  "Q(1_J, overlap) below every alternative tilt on both scenarios "
                  "(smallest margin %.1f%%, required >= 1%%)",
                  100.0 * worst_margin);
    report(4, ok, buffer);
  }

  // Criterion 5: binary exact balance: overlap weights from converged
  // logistic fits balance every model covariate to ASD <= 1e-6.
  {
    RngStream rng(seed, {0xC5});
    int checked = 0;
    double worst = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
      const Eigen::Index n = 80 + static_cast<Eigen::Index>(rng.uniform_index(200));
      const Eigen::Index p = 1 + static_cast<Eigen::Index>(rng.uniform_index(4));
      Eigen::MatrixXd x(n, p);
      Eigen::VectorXi z(n);
      Eigen::VectorXd slope(p);
      for (Eigen::Index c = 0; c < p; ++c) slope[c] = 1.5 * (rng.uniform01() - 0.5);
      for (Eigen::Index i = 0; i < n; ++i) {
        double eta = 0.2;
        for (Eigen::Index c = 0; c < p; ++c) {
          x(i, c) = rng.normal();
          eta += slope[c] * x(i, c);
        }
        z[i] = rng.uniform01() < 1.0 / (1.0 + std::exp(-eta)) ? 2 : 1;
      }
      z[0] = 1;
      z[1] = 2;
      const ObservationalSample sample = make_sample(x, z);
      const GpsModel model = fit_multinomial(sample);
      if (!model.converged) continue;
      ++checked;
      const WeightSet w = compute_tilt(TiltScheme::overlap(), predict_gps(model, x));
      for (const auto& bal : balance_report(sample, w).covariates)
        worst = std::max(worst, bal.max_asd);
    }
    char buffer[160];
    std::snprintf(buffer, sizeof(buffer),
                  "binary exact balance: worst overlap ASD %.2e <= 1e-6 over %d converged fits",
                  worst, checked);
    report(5, checked >= 150 && worst <= 1e-6, buffer);
  }

  // Criterion 6: sandwich calibration (SE over Monte Carlo SD in [0.9, 1.1]
  // per contrast on adequate overlap) and finite-difference agreement of the
  // weight gradient at 50 random parameter points.
  {
    bool ok = true;
    double ratios[3];
    for (int p = 0; p < 3; ++p) {
      const McCell& cell = mc_adequate.cells[gow][p];
      ratios[p] = cell.mean_se / cell.mc_sd;
      if (!(ratios[p] >= 0.9 && ratios[p] <= 1.1)) ok = false;
    }

    RngStream rng(seed, {0xC6});
    double worst_fd = 0.0;
    const TiltScheme menu[4] = {TiltScheme::overlap(), TiltScheme::ipw(), TiltScheme::treated(2),
                                TiltScheme::variance_weighted(1)};
    for (int point = 0; point < 50; ++point) {
      const Eigen::Index n = 40;
      const int groups = 3;
      GpsModel model;
      model.groups = groups;
      model.covariates = 2;
      model.theta.resize(6);
      for (int k = 0; k < 6; ++k) model.theta[k] = 1.2 * (rng.uniform01() - 0.5);
      model.converged = true;
      Eigen::MatrixXd x(n, 2);
      for (Eigen::Index i = 0; i < n; ++i) {
        x(i, 0) = rng.normal();
        x(i, 1) = rng.normal();
      }
      const TiltScheme scheme = menu[point % 4];
      const auto grads = weight_gradient(scheme, model, x);
      const double step = 1e-6;
      for (int probe = 0; probe < 12; ++probe) {
        const Eigen::Index i = static_cast<Eigen::Index>(rng.uniform_index(n));
        const int g = static_cast<int>(rng.uniform_index(groups));
        const Eigen::Index k = static_cast<Eigen::Index>(rng.uniform_index(6));
        GpsModel up = model, down = model;
        up.theta[k] += step;
        down.theta[k] -= step;
        const double w_up = compute_tilt(scheme, predict_gps(up, x)).w(i, g);
        const double w_down = compute_tilt(scheme, predict_gps(down, x)).w(i, g);
        const double fd = (w_up - w_down) / (2.0 * step);
        const double analytic = grads[g](i, k);
        worst_fd =
            std::max(worst_fd, std::abs(fd - analytic) / std::max(1.0, std::abs(analytic)));
      }
    }
    if (worst_fd > 1e-5) ok = false;
    char buffer[200];
    std::snprintf(buffer, sizeof(buffer),
                  "sandwich SE/MC-SD %s in [0.9, 1.1]; weight-gradient FD error %.2e <= 1e-5 "
                  "over 50 parameter points",
                  fmt3(ratios[0], ratios[1], ratios[2]).c_str(), worst_fd);
    report(6, ok, buffer);
  }

  // Criterion 7: randomized invariant suites, >= 1000 cases each.
  {
    bool ok = true;
    std::string detail = "property suites:";
    for (const auto& suite : properties::run_all(1000, seed + 7)) {
      if (!suite.passed()) ok = false;
      detail += " [" + suite.name + ": " + std::to_string(suite.cases - suite.failures) + "/" +
                std::to_string(suite.cases) + "]";
    }
    report(7, ok, detail);
  }

  // Criterion 8: excluded by design; the survey-data application tables and
  // the six-group scenario need inputs that are not shipped.
  report_skip(8,
              "survey-data application tables and the J=6 scenario are not reproducible "
              "here (microdata/parameters unavailable); substituted by criteria 1-7");

  int failed = 0;
  for (const auto& result : g_results)
    if (!result.passed) ++failed;
  std::printf("acceptance summary: %d/%zu criteria passed%s\n",
              static_cast<int>(g_results.size()) - failed, g_results.size(),
              failed == 0 ? "" : " -- FAILURES PRESENT");
  return failed;
}
