#pragma once

#include <cstdint>
#include <vector>

#include "fqeval/fqe.hpp"

// Episode-level bootstrap: weight schemes, weighted-FQE replicates and
// quantile confidence intervals with the k0 variance correction.

namespace fqeval {

struct WeightScheme {
  enum class Kind { vanilla, multiplier };
  enum class Dist { exponential, gamma, uniform };

  Kind kind = Kind::vanilla;
  Dist dist = Dist::exponential;
  double param_a = 1.0;  // rate | shape | lower endpoint
  double param_b = 1.0;  // unused | scale | upper endpoint

  /// Analytic mean m of the multiplier variable U.
  double mean() const;
  /// Analytic variance eta^2 of U.
  double variance() const;

  static WeightScheme vanilla() { return {}; }
  static WeightScheme multiplier_exponential(double rate);
  static WeightScheme multiplier_gamma(double shape, double scale);
  static WeightScheme multiplier_uniform(double lo, double hi);
};

/// Variance inflation of the bootstrap limit law: 1 for vanilla,
/// eta^2 / m^2 for multiplier schemes.
double k0(const WeightScheme& scheme);

/// Vanilla: multinomial(K; 1/K,...,1/K) counts. Multiplier: W_k = K u_k / sum u.
WeightVector sample_weights(const WeightScheme& scheme, int episodes, Rng& rng);

struct ConfidenceInterval {
  double lo = 0.0;
  double hi = 0.0;
  double delta = 0.0;
};

struct BootstrapResult {
  double base_value = 0.0;
  std::vector<double> replicate_values;  // converged replicates, by index
  std::vector<double> errors;            // replicate_values - base_value
  double k0 = 1.0;
  int requested = 0;
  int excluded = 0;
};

/// B weighted-FQE replicates; replicate b draws its weights from the derived
/// sub-stream (seed, b). Non-converged replicates are dropped and counted;
/// more than 10% exclusions aborts the run.
BootstrapResult bootstrap_distribution(const Dataset& data, const Policy& policy,
                                       std::span<const double> xi, const Approximator& approx,
                                       const FeatureMap& fmap, const FqeConfig& config,
                                       const WeightScheme& scheme, int replicates,
                                       std::uint64_t seed);

/// Lower empirical quantile q_d = inf{t : #(errors <= t)/B >= d}.
double empirical_quantile(const std::vector<double>& sorted_values, double delta);

/// CI(delta) = [v - q_{1-delta/2}/sqrt(k0), v - q_{delta/2}/sqrt(k0)].
ConfidenceInterval confidence_interval(const BootstrapResult& result, double delta, double k0);

}  // namespace fqeval
