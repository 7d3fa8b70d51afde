#include "fqeval/bootstrap.hpp"

#include <algorithm>
#include <cmath>

#include "fqeval/errors.hpp"
#include "fqeval/threads.hpp"

namespace fqeval {

WeightScheme WeightScheme::multiplier_exponential(double rate) {
  if (!(rate > 0.0)) throw ConfigError("exponential multiplier needs rate > 0");
  return {Kind::multiplier, Dist::exponential, rate, 0.0};
}

WeightScheme WeightScheme::multiplier_gamma(double shape, double scale) {
  if (!(shape > 0.0) || !(scale > 0.0))
    throw ConfigError("gamma multiplier needs shape > 0 and scale > 0");
  return {Kind::multiplier, Dist::gamma, shape, scale};
}

WeightScheme WeightScheme::multiplier_uniform(double lo, double hi) {
  if (!(lo > 0.0) || !(hi > lo))
    throw ConfigError("uniform multiplier needs 0 < lo < hi");
  return {Kind::multiplier, Dist::uniform, lo, hi};
}

double WeightScheme::mean() const {
  switch (dist) {
    case Dist::exponential:
      return 1.0 / param_a;
    case Dist::gamma:
      return param_a * param_b;
    case Dist::uniform:
      return 0.5 * (param_a + param_b);
  }
  return 0.0;
}

double WeightScheme::variance() const {
  switch (dist) {
    case Dist::exponential:
      return 1.0 / (param_a * param_a);
    case Dist::gamma:
      return param_a * param_b * param_b;
    case Dist::uniform: {
      const double w = param_b - param_a;
      return w * w / 12.0;
    }
  }
  return 0.0;
}

double k0(const WeightScheme& scheme) {
  if (scheme.kind == WeightScheme::Kind::vanilla) return 1.0;
  const double m = scheme.mean();
  return scheme.variance() / (m * m);
}

WeightVector sample_weights(const WeightScheme& scheme, int episodes, Rng& rng) {
  if (episodes < 1) throw ConfigError("sample_weights: need at least one episode");
  WeightVector weights;
  weights.w.assign(episodes, 0.0);
  if (scheme.kind == WeightScheme::Kind::vanilla) {
    for (int i = 0; i < episodes; ++i)
      weights.w[rng.uniform_below(static_cast<std::uint64_t>(episodes))] += 1.0;
    return weights;
  }
  for (int attempt = 0; attempt < 2; ++attempt) {
    double total = 0.0;
    for (auto& v : weights.w) {
      switch (scheme.dist) {
        case WeightScheme::Dist::exponential:
          v = rng.exponential(scheme.param_a);
          break;
        case WeightScheme::Dist::gamma:
          v = rng.gamma(scheme.param_a, scheme.param_b);
          break;
        case WeightScheme::Dist::uniform:
          v = scheme.param_a + (scheme.param_b - scheme.param_a) * rng.uniform();
          break;
      }
      total += v;
    }
    if (total > 0.0) {
      // Divide first: u/total is exactly 1 when K = 1.
      for (auto& v : weights.w) v = v / total * episodes;
      return weights;
    }
  }
  throw NumericError("sample_weights: multiplier draws summed to zero twice");
}

BootstrapResult bootstrap_distribution(const Dataset& data, const Policy& policy,
                                       std::span<const double> xi, const Approximator& approx,
                                       const FeatureMap& fmap, const FqeConfig& config,
                                       const WeightScheme& scheme, int replicates,
                                       std::uint64_t seed) {
  if (replicates < 1) throw ConfigError("bootstrap_distribution: need at least one replicate");
  const FqeEstimate base = run_fqe(data, policy, xi, approx, fmap, config);
  if (!base.all_converged())
    throw SolverError("bootstrap_distribution: base FQE fit did not converge");

  BootstrapResult result;
  result.base_value = base.value;
  result.k0 = k0(scheme);
  result.requested = replicates;

  const int episodes = data.n_episodes();
  const Rng base_rng(seed, 0xb007u);
  std::vector<double> values(replicates);
  std::vector<char> ok(replicates, 0);
  parallel_for(replicates, [&](int b) {
    Rng stream = base_rng.substream(static_cast<std::uint64_t>(b));
    const WeightVector weights = sample_weights(scheme, episodes, stream);
    try {
      const FqeEstimate rep = run_fqe(data, policy, xi, approx, fmap, config, &weights);
      values[b] = rep.value;
      ok[b] = rep.all_converged() ? 1 : 0;
    } catch (const SolverError&) {
      // A resample can lose every episode that covers some cell; that
      // replicate is flagged and dropped like any other failed fit.
      ok[b] = 0;
    } catch (const NumericError&) {
      ok[b] = 0;
    }
  });
  for (int b = 0; b < replicates; ++b) {
    if (!ok[b]) {
      ++result.excluded;
      continue;
    }
    result.replicate_values.push_back(values[b]);
    result.errors.push_back(values[b] - base.value);
  }
  if (result.excluded * 10 > replicates)
    throw StudyError("bootstrap_distribution: more than 10% of replicates failed to converge");
  return result;
}

double empirical_quantile(const std::vector<double>& sorted_values, double delta) {
  const std::size_t b = sorted_values.size();
  if (b == 0) throw ConfigError("empirical_quantile: no samples");
  // inf{t : F_hat(t) >= delta} is the ceil(delta*B)-th order statistic.
  std::size_t rank = static_cast<std::size_t>(std::ceil(delta * static_cast<double>(b)));
  rank = std::clamp<std::size_t>(rank, 1, b);
  return sorted_values[rank - 1];
}

ConfidenceInterval confidence_interval(const BootstrapResult& result, double delta, double k0) {
  if (!(delta > 0.0 && delta < 1.0))
    throw ConfigError("confidence_interval: need 0 < delta < 1");
  if (result.errors.size() < 2)
    throw ConfigError("confidence_interval: need at least two replicates");
  std::vector<double> sorted(result.errors);
  std::sort(sorted.begin(), sorted.end());
  const double q_hi = empirical_quantile(sorted, 1.0 - delta / 2.0);
  const double q_lo = empirical_quantile(sorted, delta / 2.0);
  const double root_k0 = std::sqrt(k0);
  ConfidenceInterval ci;
  ci.delta = delta;
  ci.lo = result.base_value - q_hi / root_k0;
  ci.hi = result.base_value - q_lo / root_k0;
  return ci;
}

}  // namespace fqeval
