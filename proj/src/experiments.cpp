#include "fqeval/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <memory>
#include <numbers>
#include <sstream>

#include "fqeval/errors.hpp"
#include "fqeval/threads.hpp"
#include "fqeval/version.hpp"

namespace fqeval {

double standard_normal_cdf(double x) {
  return 0.5 * std::erfc(-x / std::numbers::sqrt2);
}

double ks_statistic(std::vector<double> samples) {
  if (samples.size() < 2) throw ConfigError("ks_statistic: need at least two samples");
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  double d = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double cdf = standard_normal_cdf(samples[i]);
    d = std::max(d, std::max(cdf - static_cast<double>(i) / n,
                             static_cast<double>(i + 1) / n - cdf));
  }
  return d;
}

std::vector<std::vector<double>> tabular_theta_star(const TabularMdp& mdp,
                                                    const Policy& policy) {
  const auto q = exact_q_values(mdp, policy);
  const std::size_t sa = static_cast<std::size_t>(mdp.n_states) * mdp.n_actions;
  std::vector<std::vector<double>> thetas(mdp.horizon);
  for (int h = 0; h < mdp.horizon; ++h)
    thetas[h].assign(q.begin() + h * sa, q.begin() + (h + 1) * sa);
  return thetas;
}

double tabular_mis_sigma2(const Dataset& data, const TabularMdp& mdp, const Policy& target,
                          const std::vector<std::vector<double>>& theta_tables,
                          const OccupancyMeasures& target_occupancy) {
  const int S = mdp.n_states, A = mdp.n_actions, H = data.horizon;
  const int sa = S * A;
  if (static_cast<int>(theta_tables.size()) != H)
    throw ConfigError("tabular_mis_sigma2: expected one Q table per stage");
  const double n = static_cast<double>(data.n_transitions());

  // Empirical behavior cell frequencies (the diagonal covariance).
  std::vector<double> mu_bar(sa, 0.0);
  for (const auto& ep : data.episodes)
    for (int h = 0; h < H; ++h) mu_bar[ep.states[h] * A + ep.actions[h]] += 1.0 / n;

  // Policy-averaged next-stage values per state, V_{j+1}(s).
  std::vector<std::vector<double>> v_next(H, std::vector<double>(S, 0.0));
  for (int j = 0; j < H; ++j) {
    if (j + 1 >= H) continue;  // Q_{H+1} = 0
    for (int s = 0; s < S; ++s) {
      double acc = 0.0;
      for (int a = 0; a < A; ++a) acc += target.prob(s, a) * theta_tables[j + 1][s * A + a];
      v_next[j][s] = acc;
    }
  }

  // Per-cell residual cross moments omega[(j1,j2)][cell].
  std::vector<std::vector<double>> omega(static_cast<std::size_t>(H) * H,
                                         std::vector<double>(sa, 0.0));
  std::vector<double> eps(H);
  for (const auto& ep : data.episodes) {
    for (int h = 0; h < H; ++h) {
      const int cell = ep.states[h] * A + ep.actions[h];
      for (int j = 0; j < H; ++j)
        eps[j] = theta_tables[j][cell] - ep.rewards[h] - v_next[j][ep.states[h + 1]];
      for (int j1 = 0; j1 < H; ++j1)
        for (int j2 = 0; j2 < H; ++j2) omega[j1 * H + j2][cell] += eps[j1] * eps[j2] / n;
    }
  }

  double total = 0.0;
  for (int h1 = 0; h1 < H; ++h1) {
    const auto nu1 = target_occupancy.step(h1);
    for (int h2 = 0; h2 < H; ++h2) {
      const auto nu2 = target_occupancy.step(h2);
      const auto& om = omega[h1 * H + h2];
      for (int cell = 0; cell < sa; ++cell) {
        if (nu1[cell] == 0.0 || nu2[cell] == 0.0) continue;
        if (mu_bar[cell] == 0.0)
          throw InferenceError(
              "tabular_mis_sigma2: unobserved state-action with positive target occupancy");
        total += nu1[cell] * nu2[cell] / (mu_bar[cell] * mu_bar[cell]) * om[cell];
      }
    }
  }
  return total / H;
}

// ---- canonical instances ----------------------------------------------------

TabularMdp canonical_mdp_2s2a() {
  return TabularMdp(2, 2, 2,
                    {
                        0.7, 0.3,  // s0, a0
                        0.2, 0.8,  // s0, a1
                        0.6, 0.4,  // s1, a0
                        0.3, 0.7,  // s1, a1
                    },
                    {
                        0.9, 0.1,  // s0
                        0.2, 0.8,  // s1
                    },
                    {0.6, 0.4});
}

Policy canonical_behavior_2s2a() { return Policy(2, 2, {0.5, 0.5, 0.5, 0.5}); }

Policy canonical_target_2s2a() { return Policy(2, 2, {0.2, 0.8, 0.7, 0.3}); }

TabularMdp canonical_mdp_4s3a() {
  return TabularMdp(4, 3, 4,
                    {
                        0.10, 0.45, 0.35, 0.10,  // s0, a0
                        0.35, 0.10, 0.45, 0.10,  // s0, a1
                        0.10, 0.10, 0.35, 0.45,  // s0, a2
                        0.10, 0.10, 0.45, 0.35,  // s1, a0
                        0.10, 0.35, 0.10, 0.45,  // s1, a1
                        0.45, 0.10, 0.10, 0.35,  // s1, a2
                        0.35, 0.10, 0.10, 0.45,  // s2, a0
                        0.45, 0.10, 0.35, 0.10,  // s2, a1
                        0.35, 0.45, 0.10, 0.10,  // s2, a2
                        0.45, 0.35, 0.10, 0.10,  // s3, a0
                        0.10, 0.45, 0.10, 0.35,  // s3, a1
                        0.10, 0.35, 0.45, 0.10,  // s3, a2
                    },
                    {
                        0.1, 0.4, 0.7,  // s0
                        0.3, 0.6, 0.1,  // s1
                        0.5, 0.8, 0.3,  // s2
                        0.7, 0.2, 0.5,  // s3
                    },
                    {0.4, 0.3, 0.2, 0.1});
}

Policy canonical_behavior_4s3a() {
  return Policy(4, 3,
                {
                    0.4, 0.3, 0.3,  // s0
                    0.3, 0.4, 0.3,  // s1
                    0.4, 0.3, 0.3,  // s2
                    0.3, 0.4, 0.3,  // s3
                });
}

Policy canonical_target_4s3a() {
  return Policy(4, 3,
                {
                    0.6, 0.2, 0.2,  // s0
                    0.2, 0.6, 0.2,  // s1
                    0.2, 0.2, 0.6,  // s2
                    0.5, 0.3, 0.2,  // s3
                });
}

// ---- study engine -----------------------------------------------------------

namespace {

struct StudyContext {
  FeatureMap fmap;
  std::unique_ptr<Approximator> approx;
  double exact_value = 0.0;
  std::vector<std::vector<double>> theta_star;  // empty for smooth_net
  double sigma2_ref = std::numeric_limits<double>::quiet_NaN();
};

NuMode resolve_nu_mode(const StudyConfig& cfg) {
  if (cfg.nu_mode == NuMode::Kind::exact_mdp) return NuMode::exact();
  return NuMode::rollout(cfg.rollout_episodes, mix64(cfg.seed, 0x0a11u));
}

StudyContext make_context(const StudyConfig& cfg) {
  check_same_shape(cfg.mdp, cfg.behavior);
  check_same_shape(cfg.mdp, cfg.target);
  StudyContext ctx;
  ctx.fmap = FeatureMap::one_hot(cfg.mdp.n_states, cfg.mdp.n_actions);
  ctx.approx = make_approximator(cfg.family, ctx.fmap, cfg.net_width);
  ctx.exact_value = exact_policy_value(cfg.mdp, cfg.target);
  if (cfg.family == "tabular" || cfg.family == "linear") {
    ctx.theta_star = tabular_theta_star(cfg.mdp, cfg.target);
    const Dataset ref =
        generate_dataset(cfg.mdp, cfg.behavior, cfg.sigma_ref_episodes, mix64(cfg.seed, 0x5efu));
    const VarianceComponents comps = estimate_components(
        ref, *ctx.approx, ctx.fmap, cfg.target, ctx.theta_star, cfg.mdp, resolve_nu_mode(cfg));
    ctx.sigma2_ref = comps.sigma2;
  }
  return ctx;
}

std::string scheme_name(const WeightScheme& s) {
  if (s.kind == WeightScheme::Kind::vanilla) return "vanilla";
  switch (s.dist) {
    case WeightScheme::Dist::exponential:
      return "exponential(" + std::to_string(s.param_a) + ")";
    case WeightScheme::Dist::gamma:
      return "gamma(" + std::to_string(s.param_a) + "," + std::to_string(s.param_b) + ")";
    case WeightScheme::Dist::uniform:
      return "uniform(" + std::to_string(s.param_a) + "," + std::to_string(s.param_b) + ")";
  }
  return "?";
}

std::string make_provenance(const StudyConfig& cfg, const std::string& study,
                            const StudyContext& ctx, int excluded) {
  std::ostringstream os;
  os << "fqeval " << kVersion << " study=" << study << " family=" << cfg.family
     << " states=" << cfg.mdp.n_states << " actions=" << cfg.mdp.n_actions
     << " horizon=" << cfg.mdp.horizon << " replications=" << cfg.replications
     << " bootstrap_reps=" << cfg.bootstrap_reps << " delta=" << cfg.delta
     << " scheme=" << scheme_name(cfg.scheme) << " seed=" << cfg.seed
     << " nu_mode=" << (cfg.nu_mode == NuMode::Kind::exact_mdp ? "exact_mdp" : "rollout")
     << " sigma_ref_episodes=" << cfg.sigma_ref_episodes << " exact_value=" << ctx.exact_value
     << " sigma2_ref=" << ctx.sigma2_ref << " excluded=" << excluded << " k_grid=";
  for (std::size_t i = 0; i < cfg.k_grid.size(); ++i)
    os << (i ? "," : "") << cfg.k_grid[i];
  return os.str();
}

std::uint64_t replicate_seed(const StudyConfig& cfg, int k, int m) {
  return mix64(mix64(cfg.seed, static_cast<std::uint64_t>(k)), static_cast<std::uint64_t>(m));
}

double sample_variance(const std::vector<double>& v, double mean) {
  if (v.size() < 2) return 0.0;
  double acc = 0.0;
  for (double x : v) acc += (x - mean) * (x - mean);
  return acc / static_cast<double>(v.size() - 1);
}

void validate_grid(const StudyConfig& cfg) {
  if (cfg.k_grid.empty()) throw ConfigError("study: k_grid must be nonempty");
  for (std::size_t i = 1; i < cfg.k_grid.size(); ++i)
    if (cfg.k_grid[i] <= cfg.k_grid[i - 1])
      throw ConfigError("study: k_grid must be strictly increasing");
  if (cfg.replications < 100)
    throw ConfigError("study: statistical studies need at least 100 replications");
}

struct RepOutcome {
  double value = 0.0;
  double sigma2 = std::numeric_limits<double>::quiet_NaN();
  bool converged = false;
  bool covered = false;
};

// One row of a study: M replications at a fixed K. with_bootstrap toggles the
// per-replicate CI; with_sigma requests plug-in components at theta_hat (only
// needed when no DP oracle sigma exists).
StudyRow run_row(const StudyConfig& cfg, const StudyContext& ctx, int k, bool with_bootstrap,
                 bool with_sigma, int* excluded_out) {
  const auto t0 = std::chrono::steady_clock::now();
  const int m_reps = cfg.replications;
  std::vector<RepOutcome> out(m_reps);
  const std::vector<double>& xi = cfg.mdp.initial_dist;
  const NuMode nu = resolve_nu_mode(cfg);
  parallel_for(m_reps, [&](int m) {
    const std::uint64_t ds_seed = replicate_seed(cfg, k, m);
    const Dataset data = generate_dataset(cfg.mdp, cfg.behavior, k, ds_seed);
    try {
      const FqeEstimate est =
          run_fqe(data, cfg.target, xi, *ctx.approx, ctx.fmap, cfg.fqe);
      out[m].value = est.value;
      out[m].converged = est.all_converged();
      if (!out[m].converged) return;
      if (with_sigma) {
        const VarianceComponents comps = estimate_components(
            data, *ctx.approx, ctx.fmap, cfg.target, est.thetas, cfg.mdp, nu);
        out[m].sigma2 = comps.sigma2;
      }
      if (with_bootstrap) {
        const BootstrapResult boot =
            bootstrap_distribution(data, cfg.target, xi, *ctx.approx, ctx.fmap, cfg.fqe,
                                   cfg.scheme, cfg.bootstrap_reps, mix64(ds_seed, 0xc1u));
        const ConfidenceInterval ci = confidence_interval(boot, cfg.delta, boot.k0);
        out[m].covered = (ctx.exact_value >= ci.lo && ctx.exact_value <= ci.hi);
      }
    } catch (const SolverError&) {
      out[m].converged = false;  // excluded and counted below
    } catch (const NumericError&) {
      out[m].converged = false;
    } catch (const StudyError&) {
      out[m].converged = false;  // replicate's own bootstrap lost too many fits
    }
  });

  std::vector<double> errors;
  errors.reserve(m_reps);
  int excluded = 0;
  long covered = 0;
  double sigma_acc = 0.0;
  int sigma_n = 0;
  for (const auto& o : out) {
    if (!o.converged) {
      ++excluded;
      continue;
    }
    errors.push_back(o.value - ctx.exact_value);
    if (o.covered) ++covered;
    if (with_sigma && std::isfinite(o.sigma2)) {
      sigma_acc += o.sigma2;
      ++sigma_n;
    }
  }
  if (excluded * 10 > m_reps)
    throw StudyError("study: more than 10% of replications failed to converge");
  *excluded_out += excluded;

  StudyRow row;
  row.episodes = k;
  const double count = static_cast<double>(errors.size());
  double mean = 0.0;
  for (double e : errors) mean += e;
  mean /= count;
  row.mean_error = mean;
  row.mc_variance_scaled = k * sample_variance(errors, mean);
  row.sigma2_plugin = std::isfinite(ctx.sigma2_ref)
                          ? ctx.sigma2_ref
                          : (sigma_n > 0 ? sigma_acc / sigma_n
                                         : std::numeric_limits<double>::quiet_NaN());
  const double sigma_std = std::sqrt(row.sigma2_plugin);
  std::vector<double> standardized(errors);
  if (sigma_std > 0.0)
    for (auto& e : standardized) e *= std::sqrt(static_cast<double>(k)) / sigma_std;
  row.ks_statistic = ks_statistic(std::move(standardized));
  if (with_bootstrap) row.coverage = static_cast<double>(covered) / count;
  row.runtime_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return row;
}

StudyResult run_study(const StudyConfig& cfg, const std::string& name, bool with_bootstrap,
                      bool with_sigma) {
  validate_grid(cfg);
  const StudyContext ctx = make_context(cfg);
  const bool need_rep_sigma = with_sigma && !std::isfinite(ctx.sigma2_ref);
  StudyResult result;
  int excluded = 0;
  for (int k : cfg.k_grid)
    result.rows.push_back(run_row(cfg, ctx, k, with_bootstrap, need_rep_sigma, &excluded));
  result.provenance = make_provenance(cfg, name, ctx, excluded);
  return result;
}

}  // namespace

StudyResult study_normality(const StudyConfig& cfg) {
  return run_study(cfg, "normality", false, true);
}

StudyResult study_coverage(const StudyConfig& cfg) {
  return run_study(cfg, "coverage", true, true);
}

StudyResult study_cramer_rao(const StudyConfig& cfg) {
  return run_study(cfg, "cramer_rao", false, true);
}

}  // namespace fqeval
