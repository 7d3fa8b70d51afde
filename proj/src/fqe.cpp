#include "fqeval/fqe.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>

#include "fqeval/errors.hpp"
#include "fqeval/kernels.hpp"
#include "fqeval/linalg.hpp"
#include "fqeval/rng.hpp"

namespace fqeval {

namespace {

using linalg::Llt;
using linalg::Matrix;

// Transitions flattened episode-major, grouped by state-action cell. The
// feature row of transition n is fmap.row of pair_idx[n]; grouping turns the
// O(N d^2) Gram assembly into one O(N) counting pass plus one rank-1 update
// per observed cell.
struct RegressionData {
  long n = 0;
  int n_pairs = 0;
  int n_states = 0;
  std::vector<int> pair_idx;     // n
  std::vector<int> next_state;   // n
  std::vector<double> rewards;   // n
  std::vector<double> weights;   // n, expanded episode weights
  std::vector<double> pair_wsum; // n_pairs, sum of weights per cell
};

RegressionData prepare(const Dataset& data, const FeatureMap& fmap,
                       const WeightVector* weights) {
  if (data.episodes.empty()) throw ConfigError("fqe: dataset is empty");
  if (weights != nullptr) validate_weights(*weights, data.n_episodes());
  RegressionData rd;
  rd.n = data.n_transitions();
  rd.n_pairs = fmap.n_pairs();
  rd.n_states = fmap.n_states;
  rd.pair_idx.reserve(rd.n);
  rd.next_state.reserve(rd.n);
  rd.rewards.reserve(rd.n);
  rd.weights.reserve(rd.n);
  rd.pair_wsum.assign(rd.n_pairs, 0.0);
  const int h_max = data.horizon;
  for (int k = 0; k < data.n_episodes(); ++k) {
    const Trajectory& ep = data.episodes[k];
    if (static_cast<int>(ep.actions.size()) != h_max)
      throw ConfigError("fqe: episode horizon mismatch");
    const double wk = (weights != nullptr) ? weights->w[k] : 1.0;
    for (int h = 0; h < h_max; ++h) {
      const int s = ep.states[h];
      const int a = ep.actions[h];
      if (s < 0 || s >= fmap.n_states || a < 0 || a >= fmap.n_actions)
        throw ConfigError("fqe: transition indexes outside the feature map");
      const int p = s * fmap.n_actions + a;
      rd.pair_idx.push_back(p);
      rd.next_state.push_back(ep.states[h + 1]);
      rd.rewards.push_back(ep.rewards[h]);
      rd.weights.push_back(wk);
      rd.pair_wsum[p] += wk;
    }
  }
  return rd;
}

// f(theta, phi(s', a)) averaged over a ~ pi(.|s'), cached per state.
std::vector<double> next_state_values(const Approximator& approx,
                                      std::span<const double> theta, const Policy& policy,
                                      const FeatureMap& fmap) {
  std::vector<double> vals(fmap.n_states, 0.0);
  for (int s = 0; s < fmap.n_states; ++s)
    vals[s] = expected_next_value(approx, theta, s, policy, fmap);
  return vals;
}

std::vector<double> targets_from(const RegressionData& rd, std::span<const double> next_vals) {
  std::vector<double> y(rd.n);
  for (long n = 0; n < rd.n; ++n) y[n] = rd.rewards[n] + next_vals[rd.next_state[n]];
  return y;
}

double effective_lambda(const FqeConfig& config) {
  return config.regularizer == Regularizer::half_squared_norm ? config.lambda : 0.0;
}

// ---- linear / tabular path -------------------------------------------------

struct LinearSolver {
  Llt factor;
  long n = 0;
  double lambda = 0.0;
  const FeatureMap* fmap = nullptr;
  const RegressionData* rd = nullptr;

  // (sum_n w_n phi_n phi_n^T + N*lambda*I) theta = sum_n w_n y_n phi_n
  LinearSolver(const RegressionData& data, const FeatureMap& features, double lam)
      : n(data.n), lambda(lam), fmap(&features), rd(&data) {
    const int d = features.dim;
    Matrix gram(d, d);
    for (int p = 0; p < data.n_pairs; ++p) {
      if (data.pair_wsum[p] == 0.0) continue;
      const int s = p / features.n_actions;
      const int a = p % features.n_actions;
      kernels::sym_rank1_upper(gram.data(), features.row(s, a).data(), data.pair_wsum[p], d);
    }
    gram.mirror_upper();
    if (lambda > 0.0)
      for (int i = 0; i < d; ++i) gram(i, i) += static_cast<double>(n) * lambda;
    factor = linalg::llt(gram);
    if (!factor.ok)
      throw SolverError("normal equations are singular without regularization: rank " +
                            std::to_string(factor.pivot) + " < " + std::to_string(d),
                        static_cast<long>(factor.pivot));
  }

  std::vector<double> solve(std::span<const double> targets) const {
    const int d = fmap->dim;
    std::vector<double> wy(rd->n_pairs, 0.0);
    for (long n_i = 0; n_i < rd->n; ++n_i)
      wy[rd->pair_idx[n_i]] += rd->weights[n_i] * targets[n_i];
    std::vector<double> rhs(d, 0.0);
    for (int p = 0; p < rd->n_pairs; ++p) {
      if (wy[p] == 0.0) continue;
      const int s = p / fmap->n_actions;
      const int a = p % fmap->n_actions;
      kernels::axpy(wy[p], fmap->row(s, a).data(), rhs.data(), d);
    }
    llt_solve(factor, rhs.data());
    return rhs;
  }
};

// ---- nonlinear path ---------------------------------------------------------

struct StageObjective {
  const RegressionData* rd;
  const Approximator* approx;
  const FeatureMap* fmap;
  std::span<const double> targets;
  double lambda;

  int d() const { return approx->dim(); }

  // Residuals enter only through per-cell aggregates: the model value and
  // gradient are constant across transitions sharing a state-action cell.
  double loss(std::span<const double> theta) const {
    std::vector<double> fv = cell_values(theta);
    double acc = 0.0;
    for (long n = 0; n < rd->n; ++n) {
      const double rho = fv[rd->pair_idx[n]] - targets[n];
      acc += rd->weights[n] * rho * rho;
    }
    double out = acc / (2.0 * static_cast<double>(rd->n));
    if (lambda > 0.0) {
      const double sq = kernels::dot(theta.data(), theta.data(), theta.size());
      out += 0.5 * lambda * sq;
    }
    return out;
  }

  // g = (1/N) sum_n w_n rho_n grad f_n + lambda theta
  void gradient(std::span<const double> theta, std::span<double> g) const {
    std::vector<double> fv = cell_values(theta);
    std::vector<double> coef(rd->n_pairs, 0.0);
    for (long n = 0; n < rd->n; ++n)
      coef[rd->pair_idx[n]] += rd->weights[n] * (fv[rd->pair_idx[n]] - targets[n]);
    std::fill(g.begin(), g.end(), 0.0);
    std::vector<double> grad_buf(d());
    const double inv_n = 1.0 / static_cast<double>(rd->n);
    for (int p = 0; p < rd->n_pairs; ++p) {
      if (coef[p] == 0.0) continue;
      cell_grad(theta, p, grad_buf);
      kernels::axpy(coef[p] * inv_n, grad_buf.data(), g.data(), g.size());
    }
    if (lambda > 0.0) kernels::axpy(lambda, theta.data(), g.data(), g.size());
  }

  // H_gn = (1/N) sum_n w_n grad f_n grad f_n^T + lambda I
  Matrix gauss_newton_matrix(std::span<const double> theta) const {
    const int dd = d();
    Matrix h(dd, dd);
    std::vector<double> grad_buf(dd);
    const double inv_n = 1.0 / static_cast<double>(rd->n);
    for (int p = 0; p < rd->n_pairs; ++p) {
      if (rd->pair_wsum[p] == 0.0) continue;
      cell_grad(theta, p, grad_buf);
      kernels::sym_rank1_upper(h.data(), grad_buf.data(), rd->pair_wsum[p] * inv_n, dd);
    }
    h.mirror_upper();
    if (lambda > 0.0)
      for (int i = 0; i < dd; ++i) h(i, i) += lambda;
    return h;
  }

  std::vector<double> cell_values(std::span<const double> theta) const {
    std::vector<double> fv(rd->n_pairs, 0.0);
    for (int p = 0; p < rd->n_pairs; ++p) {
      if (rd->pair_wsum[p] == 0.0) continue;
      const int s = p / fmap->n_actions;
      const int a = p % fmap->n_actions;
      fv[p] = approx->eval(theta, fmap->row(s, a));
    }
    return fv;
  }

  void cell_grad(std::span<const double> theta, int p, std::span<double> out) const {
    const int s = p / fmap->n_actions;
    const int a = p % fmap->n_actions;
    approx->grad(theta, fmap->row(s, a), out);
  }
};

bool project_box(std::span<double> theta, double theta_max) {
  bool touched = false;
  for (auto& v : theta) {
    if (v > theta_max) {
      v = theta_max;
      touched = true;
    } else if (v < -theta_max) {
      v = -theta_max;
      touched = true;
    }
  }
  return touched;
}

double norm2(std::span<const double> v) {
  return std::sqrt(kernels::dot(v.data(), v.data(), v.size()));
}

std::pair<std::vector<double>, SolverReport> solve_nonlinear(
    const StageObjective& obj, std::vector<double> theta, const FqeConfig& config) {
  SolverReport report;
  report.method_used = SolverMethod::gauss_newton;
  const int d = obj.d();
  report.touched_box = project_box(theta, config.theta_max);

  std::vector<double> g(d);
  double loss = obj.loss(theta);
  obj.gradient(theta, g);
  double gnorm = norm2(g);

  double damping = config.solver.init_damping;
  bool use_gd = (config.solver.method == SolverMethod::gradient_descent);
  if (use_gd) report.method_used = SolverMethod::gradient_descent;

  int iter = 0;
  while (gnorm > config.solver.grad_tol && iter < config.solver.max_iters) {
    ++iter;
    bool accepted = false;
    if (!use_gd) {
      Matrix h = obj.gauss_newton_matrix(theta);
      while (!accepted && damping <= config.solver.damping_cap) {
        Matrix damped = h;
        for (int i = 0; i < d; ++i) damped(i, i) += damping;
        const Llt f = linalg::llt(damped);
        if (f.ok) {
          std::vector<double> step(g.begin(), g.end());
          llt_solve(f, step.data());
          std::vector<double> trial(theta);
          kernels::axpy(-1.0, step.data(), trial.data(), d);
          const bool clamped = project_box(trial, config.theta_max);
          const double trial_loss = obj.loss(trial);
          if (trial_loss < loss) {
            theta.swap(trial);
            loss = trial_loss;
            report.touched_box |= clamped;
            damping = std::max(damping * 0.33, 1e-12);
            accepted = true;
            break;
          }
        }
        damping *= 4.0;
      }
      if (!accepted) {
        // Damping blew past the cap; fall back to plain descent.
        use_gd = true;
        report.method_used = SolverMethod::gradient_descent;
      }
    }
    if (use_gd && !accepted) {
      double step = 1.0;
      const double slope = gnorm * gnorm;
      while (step > 1e-18) {
        std::vector<double> trial(theta);
        kernels::axpy(-step, g.data(), trial.data(), d);
        const bool clamped = project_box(trial, config.theta_max);
        const double trial_loss = obj.loss(trial);
        if (trial_loss <= loss - 1e-4 * step * slope) {
          theta.swap(trial);
          loss = trial_loss;
          report.touched_box |= clamped;
          accepted = true;
          break;
        }
        step *= 0.5;
      }
      if (!accepted) break;  // no descent possible at double precision
    }
    obj.gradient(theta, g);
    gnorm = norm2(g);
  }

  report.iters = iter;
  report.loss = loss;
  report.final_grad_norm = gnorm;
  report.converged = (gnorm <= config.solver.grad_tol);
  return {std::move(theta), report};
}

SolverMethod resolve_method(const FqeConfig& config, const Approximator& approx) {
  SolverMethod m = config.solver.method;
  if (m == SolverMethod::auto_select)
    m = approx.linear_in_theta() ? SolverMethod::normal_equations
                                 : SolverMethod::gauss_newton;
  if (m == SolverMethod::normal_equations && !approx.linear_in_theta())
    throw ConfigError("normal_equations solver requires a linear-in-theta family");
  return m;
}

std::vector<double> initial_point(const FqeConfig& config, int d,
                                  std::span<const double> warm_start, bool nonlinear) {
  std::vector<double> theta(d, 0.0);
  if (config.init == InitMode::warm_start && !warm_start.empty()) {
    if (warm_start.size() != static_cast<std::size_t>(d))
      throw ConfigError("fqe: warm start has wrong dimension");
    std::copy(warm_start.begin(), warm_start.end(), theta.begin());
  }
  if (nonlinear && config.init_jitter > 0.0) {
    Rng rng(config.init_seed, 0x17b1u);
    for (auto& v : theta) v += config.init_jitter * (2.0 * rng.uniform() - 1.0);
  }
  return theta;
}

std::pair<std::vector<double>, SolverReport> fit_stage_impl(
    const RegressionData& rd, std::span<const double> targets, const Approximator& approx,
    const FeatureMap& fmap, const FqeConfig& config, std::span<const double> warm_start,
    const LinearSolver* shared_linear) {
  if (targets.size() != static_cast<std::size_t>(rd.n))
    throw ConfigError("fit_stage: targets length does not match the dataset");
  const double lambda = effective_lambda(config);
  const SolverMethod method = resolve_method(config, approx);

  if (method == SolverMethod::normal_equations) {
    std::vector<double> theta;
    if (shared_linear != nullptr) {
      theta = shared_linear->solve(targets);
    } else {
      LinearSolver solver(rd, fmap, lambda);
      theta = solver.solve(targets);
    }
    SolverReport report;
    report.method_used = SolverMethod::normal_equations;
    report.iters = 1;
    StageObjective obj{&rd, &approx, &fmap, targets, lambda};
    std::vector<double> g(approx.dim());
    obj.gradient(theta, g);
    report.final_grad_norm = norm2(g);
    report.loss = obj.loss(theta);
    report.converged = true;  // exact minimizer
    for (double v : theta)
      if (std::abs(v) >= config.theta_max) report.touched_box = true;
    return {std::move(theta), report};
  }

  StageObjective obj{&rd, &approx, &fmap, targets, lambda};
  FqeConfig cfg = config;
  cfg.solver.method = method;
  std::vector<double> theta0 = initial_point(config, approx.dim(), warm_start, true);
  return solve_nonlinear(obj, std::move(theta0), cfg);
}

}  // namespace

bool FqeEstimate::all_converged() const {
  for (const auto& r : per_stage)
    if (!r.converged) return false;
  return true;
}

void validate_weights(const WeightVector& weights, int episodes) {
  if (static_cast<int>(weights.w.size()) != episodes)
    throw ConfigError("weights: expected one weight per episode");
  double total = 0.0;
  for (double v : weights.w) {
    if (!(v >= 0.0) || !std::isfinite(v))
      throw ConfigError("weights: entries must be finite and nonnegative");
    total += v;
  }
  if (std::abs(total - episodes) > 1e-9 * std::max(1.0, static_cast<double>(episodes)))
    throw ConfigError("weights: sum must equal the number of episodes");
}

std::vector<double> build_targets(const Dataset& data, const Approximator& approx,
                                  const FeatureMap& fmap, std::span<const double> theta_next,
                                  const Policy& policy) {
  RegressionData rd = prepare(data, fmap, nullptr);
  const auto next_vals = next_state_values(approx, theta_next, policy, fmap);
  return targets_from(rd, next_vals);
}

std::pair<std::vector<double>, SolverReport> fit_stage(
    const Dataset& data, std::span<const double> targets, const Approximator& approx,
    const FeatureMap& fmap, const FqeConfig& config, const WeightVector* weights,
    std::span<const double> warm_start) {
  RegressionData rd = prepare(data, fmap, weights);
  return fit_stage_impl(rd, targets, approx, fmap, config, warm_start, nullptr);
}

double estimate_value(const Approximator& approx, std::span<const double> theta1,
                      const FeatureMap& fmap, const Policy& policy,
                      std::span<const double> xi) {
  if (xi.size() != static_cast<std::size_t>(fmap.n_states))
    throw ConfigError("estimate_value: initial distribution has wrong length");
  double v = 0.0;
  for (int s = 0; s < fmap.n_states; ++s) {
    if (xi[s] == 0.0) continue;
    double per_state = 0.0;
    for (int a = 0; a < fmap.n_actions; ++a) {
      const double pa = policy.prob(s, a);
      if (pa == 0.0) continue;
      per_state += pa * approx.eval(theta1, fmap.row(s, a));
    }
    v += xi[s] * per_state;
  }
  return v;
}

FqeEstimate run_fqe(const Dataset& data, const Policy& policy, std::span<const double> xi,
                    const Approximator& approx, const FeatureMap& fmap,
                    const FqeConfig& config, const WeightVector* weights) {
  RegressionData rd = prepare(data, fmap, weights);
  const int h_max = data.horizon;
  const int d = approx.dim();
  const SolverMethod method = resolve_method(config, approx);

  // The Gram matrix is stage-independent, so the linear path factors once.
  std::unique_ptr<LinearSolver> shared;
  if (method == SolverMethod::normal_equations)
    shared = std::make_unique<LinearSolver>(rd, fmap, effective_lambda(config));

  FqeEstimate est;
  est.family = std::string(approx.family());
  est.lambda = config.lambda;
  est.thetas.assign(h_max, std::vector<double>(d, 0.0));
  est.per_stage.resize(h_max);

  std::vector<double> theta_next(d, 0.0);  // theta_{H+1} = 0
  for (int h = h_max - 1; h >= 0; --h) {
    const auto next_vals = next_state_values(approx, theta_next, policy, fmap);
    const auto targets = targets_from(rd, next_vals);
    auto [theta, report] =
        fit_stage_impl(rd, targets, approx, fmap, config, theta_next, shared.get());
    est.thetas[h] = theta;
    est.per_stage[h] = report;
    theta_next = std::move(theta);
  }
  est.value = estimate_value(approx, est.thetas[0], fmap, policy, xi);
  return est;
}

ZResidual z_residual(const Dataset& data, const Approximator& approx, const FeatureMap& fmap,
                     const Policy& policy, const std::vector<std::vector<double>>& thetas,
                     double lambda, Regularizer regularizer) {
  RegressionData rd = prepare(data, fmap, nullptr);
  const int h_max = data.horizon;
  if (static_cast<int>(thetas.size()) != h_max)
    throw ConfigError("z_residual: expected one parameter vector per stage");
  const double lam = (regularizer == Regularizer::half_squared_norm) ? lambda : 0.0;
  const int d = approx.dim();

  ZResidual zr;
  zr.per_stage_norms.resize(h_max);
  double total_sq = 0.0;
  std::vector<double> g(d);
  const std::vector<double> zero(d, 0.0);
  for (int h = 0; h < h_max; ++h) {
    std::span<const double> theta_next = (h + 1 < h_max) ? std::span<const double>(thetas[h + 1])
                                                         : std::span<const double>(zero);
    const auto next_vals = next_state_values(approx, theta_next, policy, fmap);
    const auto targets = targets_from(rd, next_vals);
    StageObjective obj{&rd, &approx, &fmap, targets, lam};
    obj.gradient(thetas[h], g);
    // (1/K) sum_k z_(h) equals H times the per-stage objective gradient.
    kernels::scale(static_cast<double>(h_max), g.data(), d);
    const double norm = norm2(g);
    zr.per_stage_norms[h] = norm;
    total_sq += norm * norm;
  }
  zr.total_norm = std::sqrt(total_sq);
  return zr;
}

FqeEstimate closed_form_linear_fqe(const Dataset& data, const Policy& policy,
                                   const FeatureMap& fmap, double lambda,
                                   std::span<const double> xi) {
  RegressionData rd = prepare(data, fmap, nullptr);
  const int d = fmap.dim;
  const int h_max = data.horizon;
  const int S = fmap.n_states;
  const int A = fmap.n_actions;

  // Policy-averaged next features psi(s) = sum_a pi(a|s) phi(s,a).
  Matrix psi(S, d);
  for (int s = 0; s < S; ++s)
    for (int a = 0; a < A; ++a)
      kernels::axpy(policy.prob(s, a), fmap.row(s, a).data(), psi.row(s), d);

  Matrix gram(d, d);
  for (int p = 0; p < rd.n_pairs; ++p) {
    if (rd.pair_wsum[p] == 0.0) continue;
    kernels::sym_rank1_upper(gram.data(), fmap.row(p / A, p % A).data(), rd.pair_wsum[p], d);
  }
  gram.mirror_upper();
  if (lambda > 0.0)
    for (int i = 0; i < d; ++i) gram(i, i) += static_cast<double>(rd.n) * lambda;
  const Llt f = linalg::llt(gram);
  if (!f.ok)
    throw SolverError("closed-form FQE: feature Gram matrix is singular: rank " +
                          std::to_string(f.pivot) + " < " + std::to_string(d),
                      static_cast<long>(f.pivot));

  // B = sum_n phi_n psi(s_{n+1})^T, c = sum_n r_n phi_n; grouped by
  // (cell, next state) counts.
  Matrix b(d, d);
  std::vector<double> pair_next_count(static_cast<std::size_t>(rd.n_pairs) * S, 0.0);
  std::vector<double> pair_reward_sum(rd.n_pairs, 0.0);
  for (long n = 0; n < rd.n; ++n) {
    pair_next_count[static_cast<std::size_t>(rd.pair_idx[n]) * S + rd.next_state[n]] += 1.0;
    pair_reward_sum[rd.pair_idx[n]] += rd.rewards[n];
  }
  std::vector<double> c(d, 0.0);
  for (int p = 0; p < rd.n_pairs; ++p) {
    const auto phi = fmap.row(p / A, p % A);
    if (pair_reward_sum[p] != 0.0)
      kernels::axpy(pair_reward_sum[p], phi.data(), c.data(), d);
    for (int s = 0; s < S; ++s) {
      const double count = pair_next_count[static_cast<std::size_t>(p) * S + s];
      if (count == 0.0) continue;
      kernels::outer_acc(b.data(), phi.data(), psi.row(s), count, d, d);
    }
  }

  // M = gram^{-1} B (column-wise solves), R = gram^{-1} c.
  Matrix m(d, d);
  std::vector<double> col(d);
  for (int j = 0; j < d; ++j) {
    for (int i = 0; i < d; ++i) col[i] = b(i, j);
    llt_solve(f, col.data());
    for (int i = 0; i < d; ++i) m(i, j) = col[i];
  }
  std::vector<double> r_vec(c);
  llt_solve(f, r_vec.data());

  FqeEstimate est;
  est.family = "linear";
  est.lambda = lambda;
  est.thetas.assign(h_max, std::vector<double>(d, 0.0));
  est.per_stage.assign(h_max, SolverReport{.iters = 1, .converged = true,
                                           .method_used = SolverMethod::normal_equations});
  std::vector<double> theta_next(d, 0.0);
  for (int h = h_max - 1; h >= 0; --h) {
    std::vector<double> theta = m.matvec(theta_next);
    for (int i = 0; i < d; ++i) theta[i] += r_vec[i];
    est.thetas[h] = theta;
    theta_next = std::move(theta);
  }

  LinearApprox lin(d);
  est.value = estimate_value(lin, est.thetas[0], fmap, policy, xi);
  return est;
}

}  // namespace fqeval
