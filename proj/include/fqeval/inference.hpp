#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fqeval/approximators.hpp"
#include "fqeval/fqe.hpp"
#include "fqeval/linalg.hpp"
#include "fqeval/mdp.hpp"

// Plug-in asymptotic variance for sqrt(K)(v_hat - v), restricted chi-square
// divergences, empirical coverage constants and the leading-order
// finite-sample bound evaluators. Everything here replaces population
// expectations by dataset averages and the ground-truth parameters by the
// supplied fit (or by exact DP parameters in oracle studies).

namespace fqeval {

struct VarianceComponents {
  int horizon = 0;
  int dim = 0;
  std::vector<linalg::Matrix> sigma;       // H matrices d x d
  std::vector<std::vector<double>> nu;     // H vectors d
  std::vector<linalg::Matrix> omega;       // H*H matrices, omega[i*H + j]
  double sigma2 = 0.0;
  std::vector<std::vector<double>> theta_ref;
  /// Ridge jitter added to each sigma_h when its condition estimate exceeded
  /// 1e12 (0 when untouched).
  std::vector<double> jitter;

  const linalg::Matrix& omega_block(int i, int j) const { return omega[i * horizon + j]; }
};

struct NuMode {
  enum class Kind { exact_mdp, rollout };
  Kind kind = Kind::exact_mdp;
  int rollouts = 0;
  std::uint64_t seed = 0;

  static NuMode exact() { return {}; }
  static NuMode rollout(int episodes, std::uint64_t seed) {
    return {Kind::rollout, episodes, seed};
  }
};

/// Bellman-style residual of transition n against stage-j parameters:
/// f(theta_j, phi_n) - r_n - sum_a pi(a|s_{n+1}) f(theta_{j+1}, phi(s_{n+1},a)),
/// with theta_{H+1} = 0. Stage j and transition n are zero-based; transitions
/// flatten episode-major.
double residual_epsilon(const Dataset& data, const Approximator& approx,
                        const FeatureMap& fmap, const Policy& policy,
                        const std::vector<std::vector<double>>& thetas, int stage_j,
                        long transition_n);

VarianceComponents estimate_components(const Dataset& data, const Approximator& approx,
                                       const FeatureMap& fmap, const Policy& policy,
                                       const std::vector<std::vector<double>>& thetas,
                                       const TabularMdp& mdp, const NuMode& nu_mode);

/// sigma^2 = (1/H) sum_{h1,h2} nu_{h1}^T S_{h1}^{-1} Omega_{h1,h2} S_{h2}^{-1} nu_{h2},
/// clamped at zero when within -1e-10.
double plug_in_sigma2(const VarianceComponents& comps);

struct DivergenceReport {
  std::vector<double> quad;  // nu_h^T Sigma_h^{-1} nu_h per stage
  std::vector<double> chi2;  // quad - 1
  std::optional<double> tabular_chi2;
};

DivergenceReport restricted_chi2(const VarianceComponents& comps);

/// Standard chi-square divergence sum p^2/q - 1 between two categorical
/// distributions on the same support.
double chi2_divergence(std::span<const double> p, std::span<const double> q);

/// C2_hat = max over the observed (s,a) cells and stages of
/// grad f Sigma_h^{-1} grad f^T / d.
double empirical_c2(const Dataset& data, const VarianceComponents& comps,
                    const Approximator& approx, const FeatureMap& fmap,
                    const std::vector<std::vector<double>>& thetas);

struct PositivityReport {
  double min_value = 0.0;
  bool holds = false;
  long pairs_checked = 0;
  bool exhaustive = false;
};

/// Minimum of grad f(theta_h, phi(s,a)) Sigma_h^{-1} grad f(theta_h, phi(s',a'))^T
/// over sampled grid pairs and all stages; exhaustive when n_pairs covers the
/// grid squared.
PositivityReport check_positivity(const VarianceComponents& comps, const Approximator& approx,
                                  const FeatureMap& fmap,
                                  const std::vector<std::vector<double>>& thetas,
                                  long n_pairs, std::uint64_t seed);

/// max_h sqrt(nu_h^T Sigma_h^{-2} nu_h); diagnostic only, enters no bound.
double b0_diagnostic(const VarianceComponents& comps);

struct BoundReport {
  enum class Kind { variance_aware, reward_free, positivity };
  Kind kind = Kind::variance_aware;
  double leading_term = 0.0;
  double secondary_term = 0.0;
  std::string omitted_constant_note;
  long episodes = 0;
  int horizon = 0;
  int dim = 0;
  double delta = 0.0;
  double c2_hat = 0.0;
};

BoundReport bound_variance_aware(double sigma2, double c2, const VarianceComponents& comps,
                                 long episodes, double delta);

BoundReport bound_reward_free(const DivergenceReport& divergences, double c2, long episodes,
                              int horizon, int dim, double delta);

struct CrossCovariance {
  linalg::Matrix sigma_h1h2;
  double sigma_norm = 0.0;
};

/// Empirical (1/KH) sum grad f(theta_h1)^T grad f(theta_h2) and the spectral
/// norm of its whitened form.
CrossCovariance cross_covariance(const Dataset& data, const Approximator& approx,
                                 const FeatureMap& fmap,
                                 const std::vector<std::vector<double>>& thetas, int h1, int h2,
                                 const VarianceComponents& comps);

/// Sharper leading term available when the positivity condition holds.
BoundReport bound_positivity(const Dataset& data, const Approximator& approx,
                             const FeatureMap& fmap,
                             const std::vector<std::vector<double>>& thetas,
                             const VarianceComponents& comps, long episodes, double delta);

}  // namespace fqeval
