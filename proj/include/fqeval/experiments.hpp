#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fqeval/bootstrap.hpp"
#include "fqeval/inference.hpp"
#include "fqeval/mdp.hpp"

// Monte-Carlo study harness: asymptotic normality, bootstrap CI coverage and
// the variance/Cramer-Rao match, all at desk scale against exact DP values.

namespace fqeval {

struct StudyConfig {
  TabularMdp mdp;
  Policy behavior;
  Policy target;
  std::string family = "tabular";
  int net_width = 8;
  std::vector<int> k_grid;
  int replications = 100;
  int bootstrap_reps = 200;
  WeightScheme scheme = WeightScheme::vanilla();
  double delta = 0.1;
  std::uint64_t seed = 1;
  NuMode::Kind nu_mode = NuMode::Kind::exact_mdp;
  int rollout_episodes = 10000;
  FqeConfig fqe;
  /// Episodes in the reference dataset behind the oracle sigma estimate.
  int sigma_ref_episodes = 20000;
};

struct StudyRow {
  int episodes = 0;
  double mean_error = 0.0;
  double mc_variance_scaled = 0.0;  // K * Var(v_hat - v)
  double sigma2_plugin = 0.0;
  double ks_statistic = 0.0;
  std::optional<double> coverage;
  double runtime_seconds = 0.0;
};

struct StudyResult {
  std::vector<StudyRow> rows;
  std::string provenance;
};

StudyResult study_normality(const StudyConfig& config);
StudyResult study_coverage(const StudyConfig& config);
StudyResult study_cramer_rao(const StudyConfig& config);

/// Kolmogorov-Smirnov sup distance between the empirical CDF of `samples`
/// and the standard normal CDF.
double ks_statistic(std::vector<double> samples);

double standard_normal_cdf(double x);

/// Exact Q tables written as one-hot parameters, one vector per stage.
std::vector<std::vector<double>> tabular_theta_star(const TabularMdp& mdp,
                                                    const Policy& policy);

/// Independent tabular variance route (marginal-importance-sampling form):
/// diagonal covariance from empirical cell counts, residuals from Q-table
/// lookups. Shares no code with the gradient-based plug-in path.
double tabular_mis_sigma2(const Dataset& data, const TabularMdp& mdp, const Policy& target,
                          const std::vector<std::vector<double>>& theta_tables,
                          const OccupancyMeasures& target_occupancy);

// Canonical instances, fixed so study numbers are reproducible. The same
// values ship as JSON under data/.
TabularMdp canonical_mdp_2s2a();
Policy canonical_behavior_2s2a();
Policy canonical_target_2s2a();
TabularMdp canonical_mdp_4s3a();
Policy canonical_behavior_4s3a();
Policy canonical_target_4s3a();

}  // namespace fqeval
