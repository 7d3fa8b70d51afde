#include "fqeval/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "fqeval/errors.hpp"
#include "fqeval/kernels.hpp"
#include "fqeval/rng.hpp"

namespace fqeval {

namespace {

using linalg::Llt;
using linalg::Matrix;

constexpr double kCondLimit = 1e12;
constexpr double kJitterScale = 1e-8;

struct FlatData {
  long n = 0;
  std::vector<int> pair_idx;
  std::vector<int> next_state;
  std::vector<double> rewards;
};

FlatData flatten(const Dataset& data, const FeatureMap& fmap) {
  FlatData fd;
  fd.n = data.n_transitions();
  fd.pair_idx.reserve(fd.n);
  fd.next_state.reserve(fd.n);
  fd.rewards.reserve(fd.n);
  for (const auto& ep : data.episodes) {
    for (int h = 0; h < data.horizon; ++h) {
      fd.pair_idx.push_back(ep.states[h] * fmap.n_actions + ep.actions[h]);
      fd.next_state.push_back(ep.states[h + 1]);
      fd.rewards.push_back(ep.rewards[h]);
    }
  }
  return fd;
}

// Gradients of every stage parameter at every grid cell, [h][pair][d].
std::vector<std::vector<double>> grid_gradients(const Approximator& approx,
                                                const FeatureMap& fmap,
                                                const std::vector<std::vector<double>>& thetas) {
  const int d = approx.dim();
  const int pairs = fmap.n_pairs();
  std::vector<std::vector<double>> g(thetas.size());
  for (std::size_t h = 0; h < thetas.size(); ++h) {
    g[h].resize(static_cast<std::size_t>(pairs) * d);
    for (int p = 0; p < pairs; ++p)
      approx.grad(thetas[h], fmap.row(p / fmap.n_actions, p % fmap.n_actions),
                  std::span<double>(g[h].data() + static_cast<std::size_t>(p) * d, d));
  }
  return g;
}

// Policy-averaged model values per state for each stage's *next* parameters.
std::vector<std::vector<double>> next_values_per_stage(
    const Approximator& approx, const FeatureMap& fmap, const Policy& policy,
    const std::vector<std::vector<double>>& thetas) {
  const int h_max = static_cast<int>(thetas.size());
  std::vector<std::vector<double>> nv(h_max);
  const std::vector<double> zero(approx.dim(), 0.0);
  for (int j = 0; j < h_max; ++j) {
    std::span<const double> theta_next =
        (j + 1 < h_max) ? std::span<const double>(thetas[j + 1]) : std::span<const double>(zero);
    nv[j].resize(fmap.n_states);
    for (int s = 0; s < fmap.n_states; ++s)
      nv[j][s] = expected_next_value(approx, theta_next, s, policy, fmap);
  }
  return nv;
}

// Model values f(theta_j, phi(cell)) per stage and grid cell.
std::vector<std::vector<double>> cell_values_per_stage(
    const Approximator& approx, const FeatureMap& fmap,
    const std::vector<std::vector<double>>& thetas) {
  const int pairs = fmap.n_pairs();
  std::vector<std::vector<double>> cv(thetas.size());
  for (std::size_t j = 0; j < thetas.size(); ++j) {
    cv[j].resize(pairs);
    for (int p = 0; p < pairs; ++p)
      cv[j][p] = approx.eval(thetas[j], fmap.row(p / fmap.n_actions, p % fmap.n_actions));
  }
  return cv;
}

Llt factor_with_jitter(Matrix sigma, double* jitter_out) {
  *jitter_out = 0.0;
  const double cond = linalg::sym_cond_estimate(sigma);
  if (cond > kCondLimit) {
    const double jitter = kJitterScale * sigma.trace() / static_cast<double>(sigma.rows());
    for (std::size_t i = 0; i < sigma.rows(); ++i) sigma(i, i) += jitter;
    *jitter_out = jitter;
  }
  Llt f = linalg::llt(sigma);
  if (!f.ok)
    throw InferenceError(
        "plug-in covariance Sigma_h is singular even after ridge jitter; "
        "collect more data or add regularization (lambda > 0)");
  return f;
}

std::vector<Llt> factor_all(const VarianceComponents& comps) {
  std::vector<Llt> f;
  f.reserve(comps.sigma.size());
  for (const auto& s : comps.sigma) {
    double unused = 0.0;
    Matrix sj = s;
    // Components already carry any jitter applied at estimation time.
    Llt fj = linalg::llt(sj);
    if (!fj.ok) {
      fj = factor_with_jitter(std::move(sj), &unused);
    }
    f.push_back(std::move(fj));
  }
  return f;
}

}  // namespace

double residual_epsilon(const Dataset& data, const Approximator& approx,
                        const FeatureMap& fmap, const Policy& policy,
                        const std::vector<std::vector<double>>& thetas, int stage_j,
                        long transition_n) {
  const int h_max = data.horizon;
  if (stage_j < 0 || stage_j >= h_max) throw ConfigError("residual_epsilon: stage out of range");
  if (transition_n < 0 || transition_n >= data.n_transitions())
    throw ConfigError("residual_epsilon: transition index out of range");
  const Trajectory& ep = data.episodes[transition_n / h_max];
  const int h = static_cast<int>(transition_n % h_max);
  const int s = ep.states[h], a = ep.actions[h];
  const double f_val = approx.eval(thetas[stage_j], fmap.row(s, a));
  double next = 0.0;
  if (stage_j + 1 < h_max)
    next = expected_next_value(approx, thetas[stage_j + 1], ep.states[h + 1], policy, fmap);
  return f_val - ep.rewards[h] - next;
}

VarianceComponents estimate_components(const Dataset& data, const Approximator& approx,
                                       const FeatureMap& fmap, const Policy& policy,
                                       const std::vector<std::vector<double>>& thetas,
                                       const TabularMdp& mdp, const NuMode& nu_mode) {
  const int h_max = data.horizon;
  if (static_cast<int>(thetas.size()) != h_max)
    throw ConfigError("estimate_components: expected one parameter vector per stage");
  const int d = approx.dim();
  const long n = data.n_transitions();
  const int k_eps = data.n_episodes();

  VarianceComponents comps;
  comps.horizon = h_max;
  comps.dim = d;
  comps.theta_ref = thetas;
  comps.jitter.assign(h_max, 0.0);

  const auto grads = grid_gradients(approx, fmap, thetas);
  const auto next_vals = next_values_per_stage(approx, fmap, policy, thetas);
  const auto cell_vals = cell_values_per_stage(approx, fmap, thetas);
  const FlatData fd = flatten(data, fmap);

  // Sigma_h = (1/KH) sum_n grad_h(n)^T grad_h(n); gradients repeat per cell.
  std::vector<double> cell_count(fmap.n_pairs(), 0.0);
  for (long i = 0; i < n; ++i) cell_count[fd.pair_idx[i]] += 1.0;
  comps.sigma.assign(h_max, Matrix(d, d));
  const double inv_n = 1.0 / static_cast<double>(n);
  for (int h = 0; h < h_max; ++h) {
    for (int p = 0; p < fmap.n_pairs(); ++p) {
      if (cell_count[p] == 0.0) continue;
      kernels::sym_rank1_upper(comps.sigma[h].data(),
                               grads[h].data() + static_cast<std::size_t>(p) * d,
                               cell_count[p] * inv_n, d);
    }
    comps.sigma[h].mirror_upper();
  }

  // nu_h: exact target occupancy expectation, or fresh target-policy rollouts.
  comps.nu.assign(h_max, std::vector<double>(d, 0.0));
  if (nu_mode.kind == NuMode::Kind::exact_mdp) {
    const OccupancyMeasures occ = occupancy_measures(mdp, policy);
    for (int h = 0; h < h_max; ++h) {
      const auto step = occ.step(h);
      for (int p = 0; p < fmap.n_pairs(); ++p)
        if (step[p] != 0.0)
          kernels::axpy(step[p], grads[h].data() + static_cast<std::size_t>(p) * d,
                        comps.nu[h].data(), d);
    }
  } else {
    if (nu_mode.rollouts < 1)
      throw ConfigError("estimate_components: rollout mode needs at least one episode");
    const Rng base(nu_mode.seed, 0x0717u);
    for (int m = 0; m < nu_mode.rollouts; ++m) {
      Rng stream = base.substream(static_cast<std::uint64_t>(m));
      const Trajectory tr = sample_trajectory(mdp, policy, stream);
      for (int h = 0; h < h_max; ++h) {
        const int p = tr.states[h] * fmap.n_actions + tr.actions[h];
        kernels::axpy(1.0 / nu_mode.rollouts,
                      grads[h].data() + static_cast<std::size_t>(p) * d, comps.nu[h].data(), d);
      }
    }
  }

  // Omega_{i,j} = (1/KH) sum over transitions of grad_i^T grad_j eps_i eps_j.
  // Episodes contribute independently; accumulation order is fixed.
  comps.omega.assign(static_cast<std::size_t>(h_max) * h_max, Matrix(d, d));
  std::vector<double> eps(h_max);
  for (int k = 0; k < k_eps; ++k) {
    for (int h = 0; h < h_max; ++h) {
      const long idx = static_cast<long>(k) * h_max + h;
      const int p = fd.pair_idx[idx];
      for (int j = 0; j < h_max; ++j)
        eps[j] = cell_vals[j][p] - fd.rewards[idx] - next_vals[j][fd.next_state[idx]];
      for (int i = 0; i < h_max; ++i) {
        const double* gi = grads[i].data() + static_cast<std::size_t>(p) * d;
        for (int j = i; j < h_max; ++j) {
          const double* gj = grads[j].data() + static_cast<std::size_t>(p) * d;
          kernels::outer_acc(comps.omega[i * h_max + j].data(), gi, gj,
                             eps[i] * eps[j] * inv_n, d, d);
        }
      }
    }
  }
  // Lower blocks by symmetry Omega_{j,i} = Omega_{i,j}^T.
  for (int i = 0; i < h_max; ++i)
    for (int j = 0; j < i; ++j)
      comps.omega[i * h_max + j] = comps.omega[j * h_max + i].transposed();

  // Jitter borderline Sigma_h before anything downstream inverts them.
  for (int h = 0; h < h_max; ++h) {
    const double cond = linalg::sym_cond_estimate(comps.sigma[h]);
    if (cond > kCondLimit) {
      const double jitter = kJitterScale * comps.sigma[h].trace() / d;
      for (int i = 0; i < d; ++i) comps.sigma[h](i, i) += jitter;
      comps.jitter[h] = jitter;
    }
  }

  comps.sigma2 = plug_in_sigma2(comps);
  return comps;
}

double plug_in_sigma2(const VarianceComponents& comps) {
  const int h_max = comps.horizon;
  std::vector<std::vector<double>> whitened(h_max);
  const auto factors = factor_all(comps);
  for (int h = 0; h < h_max; ++h) whitened[h] = llt_solve(factors[h], comps.nu[h]);
  double total = 0.0;
  for (int h1 = 0; h1 < h_max; ++h1) {
    for (int h2 = 0; h2 < h_max; ++h2) {
      const auto tmp = comps.omega_block(h1, h2).matvec(whitened[h2]);
      total += kernels::dot(whitened[h1].data(), tmp.data(), tmp.size());
    }
  }
  double sigma2 = total / h_max;
  if (sigma2 < 0.0) {
    if (sigma2 < -1e-10)
      throw NumericError("plug-in sigma^2 is negative beyond tolerance: " +
                         std::to_string(sigma2));
    sigma2 = 0.0;
  }
  return sigma2;
}

DivergenceReport restricted_chi2(const VarianceComponents& comps) {
  DivergenceReport rep;
  const auto factors = factor_all(comps);
  rep.quad.resize(comps.horizon);
  rep.chi2.resize(comps.horizon);
  for (int h = 0; h < comps.horizon; ++h) {
    rep.quad[h] = linalg::quad_inv(factors[h], comps.nu[h]);
    rep.chi2[h] = rep.quad[h] - 1.0;
  }
  return rep;
}

double chi2_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw ConfigError("chi2_divergence: size mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;
    if (q[i] <= 0.0)
      throw ConfigError("chi2_divergence: reference distribution has a zero where p > 0");
    acc += p[i] * p[i] / q[i];
  }
  return acc - 1.0;
}

double empirical_c2(const Dataset& data, const VarianceComponents& comps,
                    const Approximator& approx, const FeatureMap& fmap,
                    const std::vector<std::vector<double>>& thetas) {
  const auto factors = factor_all(comps);
  const auto grads = grid_gradients(approx, fmap, thetas);
  const int d = comps.dim;
  std::vector<char> observed(fmap.n_pairs(), 0);
  for (const auto& ep : data.episodes)
    for (int h = 0; h < data.horizon; ++h)
      observed[ep.states[h] * fmap.n_actions + ep.actions[h]] = 1;
  double worst = 0.0;
  for (int h = 0; h < comps.horizon; ++h)
    for (int p = 0; p < fmap.n_pairs(); ++p) {
      if (!observed[p]) continue;
      const std::span<const double> g(grads[h].data() + static_cast<std::size_t>(p) * d, d);
      worst = std::max(worst, linalg::quad_inv(factors[h], g));
    }
  return worst / d;
}

PositivityReport check_positivity(const VarianceComponents& comps, const Approximator& approx,
                                  const FeatureMap& fmap,
                                  const std::vector<std::vector<double>>& thetas,
                                  long n_pairs, std::uint64_t seed) {
  if (n_pairs < 1) throw ConfigError("check_positivity: n_pairs must be positive");
  const auto factors = factor_all(comps);
  const auto grads = grid_gradients(approx, fmap, thetas);
  const int d = comps.dim;
  const long grid = fmap.n_pairs();
  const long all_pairs = grid * grid;

  PositivityReport rep;
  rep.exhaustive = (n_pairs >= all_pairs);
  rep.min_value = std::numeric_limits<double>::infinity();

  // Whitened gradients: w = L^{-1} g; the quadratic form is then w1 . w2.
  std::vector<std::vector<double>> white(comps.horizon);
  for (int h = 0; h < comps.horizon; ++h) {
    white[h].resize(static_cast<std::size_t>(grid) * d);
    for (long p = 0; p < grid; ++p) {
      double* w = white[h].data() + static_cast<std::size_t>(p) * d;
      std::copy(grads[h].begin() + p * d, grads[h].begin() + (p + 1) * d, w);
      linalg::forward_solve(factors[h].l, w);
    }
  }

  auto visit = [&](long p1, long p2) {
    for (int h = 0; h < comps.horizon; ++h) {
      const double v = kernels::dot(white[h].data() + static_cast<std::size_t>(p1) * d,
                                    white[h].data() + static_cast<std::size_t>(p2) * d, d);
      rep.min_value = std::min(rep.min_value, v);
    }
    ++rep.pairs_checked;
  };

  if (rep.exhaustive) {
    for (long p1 = 0; p1 < grid; ++p1)
      for (long p2 = p1; p2 < grid; ++p2) visit(p1, p2);
  } else {
    Rng rng(seed, 0x9051u);
    for (long i = 0; i < n_pairs; ++i)
      visit(static_cast<long>(rng.uniform_below(grid)),
            static_cast<long>(rng.uniform_below(grid)));
  }
  rep.holds = (rep.min_value >= -1e-10);
  return rep;
}

double b0_diagnostic(const VarianceComponents& comps) {
  const auto factors = factor_all(comps);
  double worst = 0.0;
  for (int h = 0; h < comps.horizon; ++h) {
    const auto x = llt_solve(factors[h], comps.nu[h]);  // Sigma^{-1} nu
    worst = std::max(worst, kernels::dot(x.data(), x.data(), x.size()));
  }
  return std::sqrt(worst);
}

namespace {

const char* kOmittedNote =
    "higher-order constant C (involving B(delta), D and the derivative "
    "sup-norms kappa_l) is not computable from data and is excluded";

}  // namespace

BoundReport bound_variance_aware(double sigma2, double c2, const VarianceComponents& comps,
                                 long episodes, double delta) {
  if (episodes < 1 || !(delta > 0.0 && delta < 1.0))
    throw ConfigError("bound_variance_aware: need K >= 1 and 0 < delta < 1");
  BoundReport rep;
  rep.kind = BoundReport::Kind::variance_aware;
  rep.episodes = episodes;
  rep.horizon = comps.horizon;
  rep.dim = comps.dim;
  rep.delta = delta;
  rep.c2_hat = c2;
  const double log6 = std::log(6.0 / delta);
  rep.leading_term = std::sqrt(2.0 * log6 * sigma2 / static_cast<double>(episodes));
  const auto div = restricted_chi2(comps);
  double weighted = 0.0;
  for (int h = 0; h < comps.horizon; ++h)
    weighted += (comps.horizon - h) * std::sqrt(std::max(0.0, div.quad[h]));
  rep.secondary_term = (2.0 / 3.0) * log6 * std::sqrt(c2 * comps.dim) * weighted /
                       static_cast<double>(episodes);
  rep.omitted_constant_note = kOmittedNote;
  return rep;
}

BoundReport bound_reward_free(const DivergenceReport& divergences, double c2, long episodes,
                              int horizon, int dim, double delta) {
  if (episodes < 1 || !(delta > 0.0 && delta < 1.0))
    throw ConfigError("bound_reward_free: need K >= 1 and 0 < delta < 1");
  if (static_cast<int>(divergences.quad.size()) != horizon)
    throw ConfigError("bound_reward_free: divergence report has wrong horizon");
  BoundReport rep;
  rep.kind = BoundReport::Kind::reward_free;
  rep.episodes = episodes;
  rep.horizon = horizon;
  rep.dim = dim;
  rep.delta = delta;
  rep.c2_hat = c2;
  double bracket = 0.0;
  for (int h = 0; h < horizon; ++h)
    bracket += (horizon - h) * std::sqrt(std::max(0.0, divergences.quad[h]));
  rep.leading_term =
      bracket * std::sqrt(std::log(12.0 / delta) / (2.0 * episodes * horizon));
  rep.secondary_term = bracket * (4.0 * std::log(12.0 * dim * horizon / delta)) /
                       (3.0 * episodes) * std::sqrt(c2 * dim * horizon);
  rep.omitted_constant_note = kOmittedNote;
  return rep;
}

CrossCovariance cross_covariance(const Dataset& data, const Approximator& approx,
                                 const FeatureMap& fmap,
                                 const std::vector<std::vector<double>>& thetas, int h1, int h2,
                                 const VarianceComponents& comps) {
  const int d = approx.dim();
  if (h1 < 0 || h1 >= comps.horizon || h2 < 0 || h2 >= comps.horizon)
    throw ConfigError("cross_covariance: stage out of range");
  const auto grads = grid_gradients(approx, fmap, thetas);
  const FlatData fd = flatten(data, fmap);
  std::vector<double> cell_count(fmap.n_pairs(), 0.0);
  for (long i = 0; i < fd.n; ++i) cell_count[fd.pair_idx[i]] += 1.0;

  CrossCovariance cc;
  cc.sigma_h1h2 = Matrix(d, d);
  const double inv_n = 1.0 / static_cast<double>(fd.n);
  for (int p = 0; p < fmap.n_pairs(); ++p) {
    if (cell_count[p] == 0.0) continue;
    kernels::outer_acc(cc.sigma_h1h2.data(),
                       grads[h1].data() + static_cast<std::size_t>(p) * d,
                       grads[h2].data() + static_cast<std::size_t>(p) * d,
                       cell_count[p] * inv_n, d, d);
  }
  const auto factors = factor_all(comps);
  const Matrix whitened = linalg::whiten(factors[h1].l, cc.sigma_h1h2, factors[h2].l);
  cc.sigma_norm = linalg::spectral_norm(whitened);
  return cc;
}

BoundReport bound_positivity(const Dataset& data, const Approximator& approx,
                             const FeatureMap& fmap,
                             const std::vector<std::vector<double>>& thetas,
                             const VarianceComponents& comps, long episodes, double delta) {
  if (episodes < 1 || !(delta > 0.0 && delta < 1.0))
    throw ConfigError("bound_positivity: need K >= 1 and 0 < delta < 1");
  BoundReport rep;
  rep.kind = BoundReport::Kind::positivity;
  rep.episodes = episodes;
  rep.horizon = comps.horizon;
  rep.dim = comps.dim;
  rep.delta = delta;
  const auto div = restricted_chi2(comps);
  double bracket = 0.0;
  for (int h1 = 0; h1 < comps.horizon; ++h1) {
    for (int h2 = h1; h2 < comps.horizon; ++h2) {
      const double sn = cross_covariance(data, approx, fmap, thetas, h1, h2, comps).sigma_norm;
      const double term = (comps.horizon - h1) * (comps.horizon - h2) *
                          std::sqrt(std::max(0.0, div.quad[h1])) *
                          std::sqrt(std::max(0.0, div.quad[h2])) * sn;
      bracket += (h1 == h2) ? term : 2.0 * term;
    }
  }
  rep.leading_term = std::sqrt(std::max(0.0, bracket)) *
                     std::sqrt(std::log(12.0 / delta) / (2.0 * comps.horizon * episodes));
  rep.secondary_term = 0.0;
  rep.omitted_constant_note =
      std::string(kOmittedNote) + "; the O(1/K) term of the positivity bound is likewise omitted";
  return rep;
}

}  // namespace fqeval
