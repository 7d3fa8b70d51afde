#include <doctest.h>

#include <cmath>

#include "fqeval/errors.hpp"
#include "fqeval/experiments.hpp"
#include "fqeval/fqe.hpp"
#include "oracles.hpp"

using namespace fqeval;

namespace {

struct Setup {
  TabularMdp mdp;
  Policy behavior;
  Policy target;
  FeatureMap fmap;
  Dataset data;
};

Setup canonical_setup(int episodes, std::uint64_t seed) {
  TabularMdp mdp = canonical_mdp_2s2a();
  Policy behavior = canonical_behavior_2s2a();
  Policy target = canonical_target_2s2a();
  Dataset data = generate_dataset(mdp, behavior, episodes, seed);
  return {std::move(mdp), std::move(behavior), std::move(target), FeatureMap::one_hot(2, 2),
          std::move(data)};
}

}  // namespace

TEST_CASE("build_targets: terminal stage, table lookup, independent recomputation") {
  Setup s = canonical_setup(50, 2);
  TabularApprox tab(2, 2);

  const std::vector<double> zero(4, 0.0);
  const auto y_terminal = build_targets(s.data, tab, s.fmap, zero, s.target);
  long n = 0;
  for (const auto& ep : s.data.episodes)
    for (int h = 0; h < 2; ++h) CHECK(y_terminal[n++] == ep.rewards[h]);

  // Deterministic policy + exact Q table: y = r + Q_{h+1}(s', pi(s')).
  const Policy det(2, 2, {1.0, 0.0, 0.0, 1.0});
  const auto q = exact_q_values(s.mdp, det);
  const std::vector<double> theta_next(q.begin() + 4, q.begin() + 8);  // Q_2
  const auto y = build_targets(s.data, tab, s.fmap, theta_next, det);
  n = 0;
  for (const auto& ep : s.data.episodes)
    for (int h = 0; h < 2; ++h) {
      const int s_next = ep.states[h + 1];
      const int a_det = (s_next == 0) ? 0 : 1;
      CHECK(y[n++] == doctest::Approx(ep.rewards[h] + theta_next[s_next * 2 + a_det]));
    }

  // Random theta against a direct per-transition recomputation.
  Rng rng(6);
  std::vector<double> theta(4);
  for (auto& v : theta) v = rng.uniform();
  const auto y2 = build_targets(s.data, tab, s.fmap, theta, s.target);
  n = 0;
  for (const auto& ep : s.data.episodes)
    for (int h = 0; h < 2; ++h) {
      double next = 0.0;
      for (int a = 0; a < 2; ++a)
        next += s.target.prob(ep.states[h + 1], a) * theta[ep.states[h + 1] * 2 + a];
      CHECK(y2[n++] == doctest::Approx(ep.rewards[h] + next).epsilon(1e-14));
    }
}

TEST_CASE("fit_stage: zero targets give the zero parameter") {
  Setup s = canonical_setup(40, 3);
  const std::vector<double> zeros(s.data.n_transitions(), 0.0);
  FqeConfig cfg;
  TabularApprox tab(2, 2);
  const auto [theta, report] = fit_stage(s.data, zeros, tab, s.fmap, cfg);
  for (double v : theta) CHECK(v == 0.0);
  CHECK(report.converged);

  // smooth_net with the literal zero init stays at zero too.
  FqeConfig ncfg;
  ncfg.init = InitMode::zeros;
  ncfg.init_jitter = 0.0;
  SmoothNetApprox net(4, 3);
  const auto [ntheta, nreport] = fit_stage(s.data, zeros, net, s.fmap, ncfg);
  for (double v : ntheta) CHECK(v == 0.0);
  CHECK(nreport.converged);
  CHECK(nreport.iters == 0);
}

TEST_CASE("fit_stage tabular solution is the per-cell mean of targets") {
  Setup s = canonical_setup(120, 4);
  TabularApprox tab(2, 2);
  Rng rng(77);
  std::vector<double> y(s.data.n_transitions());
  for (auto& v : y) v = rng.uniform() * 3.0;
  FqeConfig cfg;
  const auto [theta, report] = fit_stage(s.data, y, tab, s.fmap, cfg);

  std::vector<double> sums(4, 0.0), counts(4, 0.0);
  long n = 0;
  for (const auto& ep : s.data.episodes)
    for (int h = 0; h < 2; ++h) {
      const int cell = ep.states[h] * 2 + ep.actions[h];
      sums[cell] += y[n++];
      counts[cell] += 1.0;
    }
  for (int cell = 0; cell < 4; ++cell) {
    REQUIRE(counts[cell] > 0);
    CHECK(theta[cell] == doctest::Approx(sums[cell] / counts[cell]).epsilon(1e-12));
  }
}

TEST_CASE("fit_stage linear ridge matches the direct normal-equations oracle") {
  const auto inst = oracles::random_instance(99, 3, 2, 2);
  const Dataset data = generate_dataset(inst.mdp, inst.behavior, 150, 8);
  const FeatureMap fmap = FeatureMap::random_linear(3, 2, 4, 21);
  LinearApprox lin(4);
  Rng rng(5);
  std::vector<double> y(data.n_transitions());
  for (auto& v : y) v = 2.0 * rng.uniform() - 0.5;

  FqeConfig cfg;
  cfg.lambda = 0.05;
  const auto [theta, report] = fit_stage(data, y, lin, fmap, cfg);

  std::vector<std::vector<double>> rows;
  for (const auto& ep : data.episodes)
    for (int h = 0; h < 2; ++h) {
      const auto phi = fmap.row(ep.states[h], ep.actions[h]);
      rows.emplace_back(phi.begin(), phi.end());
    }
  const auto ref =
      oracles::ridge_direct(rows, y, cfg.lambda * static_cast<double>(data.n_transitions()));
  for (int i = 0; i < 4; ++i) CHECK(theta[i] == doctest::Approx(ref[i]).epsilon(1e-8));
}

TEST_CASE("rank-deficient unregularized fit fails loudly naming the rank") {
  // Behavior never takes action 1 in state 0, so that cell is never covered.
  const TabularMdp mdp = canonical_mdp_2s2a();
  const Policy skewed(2, 2, {1.0, 0.0, 0.5, 0.5});
  const Dataset data = generate_dataset(mdp, skewed, 60, 10);
  TabularApprox tab(2, 2);
  const FeatureMap fmap = FeatureMap::one_hot(2, 2);
  std::vector<double> y(data.n_transitions(), 1.0);
  FqeConfig cfg;
  CHECK_THROWS_AS((void)fit_stage(data, y, tab, fmap, cfg), SolverError);
  try {
    (void)fit_stage(data, y, tab, fmap, cfg);
  } catch (const SolverError& e) {
    CHECK(e.deficient_rank >= 0);
    CHECK(std::string(e.what()).find("rank") != std::string::npos);
  }
  // Ridge restores solvability.
  cfg.lambda = 1e-6;
  CHECK_NOTHROW((void)fit_stage(data, y, tab, fmap, cfg));
}

TEST_CASE("non-convergence is reported, not thrown") {
  Setup s = canonical_setup(30, 12);
  SmoothNetApprox net(4, 3);
  FqeConfig cfg;
  cfg.solver.max_iters = 1;
  cfg.solver.grad_tol = 1e-14;
  std::vector<double> y(s.data.n_transitions(), 0.75);
  const auto [theta, report] = fit_stage(s.data, y, net, s.fmap, cfg);
  CHECK_FALSE(report.converged);
  CHECK(theta.size() == static_cast<std::size_t>(net.dim()));
}

TEST_CASE("run_fqe with zero rewards returns exactly zero") {
  const TabularMdp mdp(2, 2, 3,
                       {0.5, 0.5, 0.2, 0.8, 0.7, 0.3, 0.4, 0.6},
                       {0.0, 0.0, 0.0, 0.0}, {0.5, 0.5});
  const Policy pol(2, 2, {0.5, 0.5, 0.5, 0.5});
  const Dataset data = generate_dataset(mdp, pol, 50, 3);
  const FeatureMap fmap = FeatureMap::one_hot(2, 2);
  TabularApprox tab(2, 2);
  const FqeEstimate est = run_fqe(data, pol, mdp.initial_dist, tab, fmap, FqeConfig{});
  CHECK(est.value == 0.0);
}

TEST_CASE("tabular FQE equals the independently coded empirical-model DP") {
  for (int which = 0; which < 2; ++which) {
    const TabularMdp mdp = which ? canonical_mdp_4s3a() : canonical_mdp_2s2a();
    const Policy behavior = which ? canonical_behavior_4s3a() : canonical_behavior_2s2a();
    const Policy target = which ? canonical_target_4s3a() : canonical_target_2s2a();
    const Dataset data = generate_dataset(mdp, behavior, 400, 19 + which);
    const FeatureMap fmap = FeatureMap::one_hot(mdp.n_states, mdp.n_actions);
    TabularApprox tab(mdp.n_states, mdp.n_actions);
    const FqeEstimate est = run_fqe(data, target, mdp.initial_dist, tab, fmap, FqeConfig{});
    const auto dp = oracles::empirical_model_dp(data, target, mdp.initial_dist, mdp.n_states,
                                                mdp.n_actions);
    REQUIRE(dp.full_coverage);
    CHECK(est.value == doctest::Approx(dp.value).epsilon(1e-10));
    const int sa = mdp.n_states * mdp.n_actions;
    for (int h = 0; h < mdp.horizon; ++h)
      for (int cell = 0; cell < sa; ++cell)
        CHECK(est.thetas[h][cell] == doctest::Approx(dp.q[h * sa + cell]).epsilon(1e-8));
  }
}

TEST_CASE("tabular FQE converges to the exact Q tables and value as K grows") {
  Setup s = canonical_setup(20000, 777);
  TabularApprox tab(2, 2);
  const FqeEstimate est = run_fqe(s.data, s.target, s.mdp.initial_dist, tab, s.fmap, FqeConfig{});
  const double v = exact_policy_value(s.mdp, s.target);
  CHECK(std::fabs(est.value - v) <= 0.01);
  const auto q = exact_q_values(s.mdp, s.target);
  for (int h = 0; h < 2; ++h)
    for (int cell = 0; cell < 4; ++cell)
      CHECK(est.thetas[h][cell] == doctest::Approx(q[h * 4 + cell]).scale(1.0).epsilon(0.01));
}

TEST_CASE("weight vector of ones reproduces the unweighted fit bit-for-bit") {
  Setup s = canonical_setup(90, 44);
  TabularApprox tab(2, 2);
  WeightVector ones;
  ones.w.assign(90, 1.0);
  const FqeEstimate a = run_fqe(s.data, s.target, s.mdp.initial_dist, tab, s.fmap, FqeConfig{});
  const FqeEstimate b =
      run_fqe(s.data, s.target, s.mdp.initial_dist, tab, s.fmap, FqeConfig{}, &ones);
  CHECK(a.value == b.value);
  for (int h = 0; h < 2; ++h)
    for (int i = 0; i < 4; ++i) CHECK(a.thetas[h][i] == b.thetas[h][i]);
}

TEST_CASE("weights must be nonnegative and sum to K") {
  Setup s = canonical_setup(10, 45);
  TabularApprox tab(2, 2);
  WeightVector bad;
  bad.w.assign(10, 0.9);
  CHECK_THROWS_AS(
      (void)run_fqe(s.data, s.target, s.mdp.initial_dist, tab, s.fmap, FqeConfig{}, &bad),
      ConfigError);
  bad.w.assign(9, 1.0);
  CHECK_THROWS_AS(
      (void)run_fqe(s.data, s.target, s.mdp.initial_dist, tab, s.fmap, FqeConfig{}, &bad),
      ConfigError);
}

TEST_CASE("scaling rewards by two scales the estimate by exactly two") {
  Setup s = canonical_setup(70, 46);
  TabularApprox tab(2, 2);
  const FqeEstimate base =
      run_fqe(s.data, s.target, s.mdp.initial_dist, tab, s.fmap, FqeConfig{});
  Dataset scaled = s.data;
  for (auto& ep : scaled.episodes)
    for (auto& r : ep.rewards) r *= 0.5;  // stay inside [0,1]; exact in binary
  const FqeEstimate half =
      run_fqe(scaled, s.target, s.mdp.initial_dist, tab, s.fmap, FqeConfig{});
  CHECK(2.0 * half.value == base.value);
}

TEST_CASE("z_residual: optimality certificate, local growth, gradient oracle") {
  Setup s = canonical_setup(200, 47);
  TabularApprox tab(2, 2);
  FqeConfig cfg;
  const FqeEstimate est = run_fqe(s.data, s.target, s.mdp.initial_dist, tab, s.fmap, cfg);
  const ZResidual at_fit = z_residual(s.data, tab, s.fmap, s.target, est.thetas, 0.0,
                                      Regularizer::half_squared_norm);
  CHECK(at_fit.total_norm <= 1e-8);

  auto perturbed = est.thetas;
  perturbed[0][2] += 0.1;
  const ZResidual off = z_residual(s.data, tab, s.fmap, s.target, perturbed, 0.0,
                                   Regularizer::half_squared_norm);
  CHECK(off.total_norm > at_fit.total_norm);

  // Random theta: per-stage norm equals H * || KKT gradient || recomputed
  // directly from the definition.
  Rng rng(311);
  std::vector<std::vector<double>> thetas(2, std::vector<double>(4));
  for (auto& th : thetas)
    for (auto& v : th) v = 2.0 * rng.uniform() - 1.0;
  const double lambda = 0.03;
  const ZResidual zr =
      z_residual(s.data, tab, s.fmap, s.target, thetas, lambda, Regularizer::half_squared_norm);
  const double n = static_cast<double>(s.data.n_transitions());
  for (int h = 0; h < 2; ++h) {
    std::vector<double> grad(4, 0.0);
    for (const auto& ep : s.data.episodes) {
      for (int t = 0; t < 2; ++t) {
        const int cell = ep.states[t] * 2 + ep.actions[t];
        double next = 0.0;
        if (h + 1 < 2)
          for (int a = 0; a < 2; ++a)
            next += s.target.prob(ep.states[t + 1], a) * thetas[h + 1][ep.states[t + 1] * 2 + a];
        const double resid = thetas[h][cell] - ep.rewards[t] - next;
        grad[cell] += resid / n;
      }
    }
    for (int i = 0; i < 4; ++i) grad[i] += lambda * thetas[h][i];
    double norm = 0.0;
    for (double g : grad) norm += g * g;
    norm = 2.0 * std::sqrt(norm);  // H = 2
    CHECK(zr.per_stage_norms[h] == doctest::Approx(norm).epsilon(1e-10));
  }
}

TEST_CASE("argmin certificate holds for every converged stage") {
  Setup s = canonical_setup(150, 48);
  for (const char* family : {"tabular", "smooth_net"}) {
    const auto approx = make_approximator(family, s.fmap, 6);
    FqeConfig cfg;
    const FqeEstimate est =
        run_fqe(s.data, s.target, s.mdp.initial_dist, *approx, s.fmap, cfg);
    REQUIRE(est.all_converged());
    for (const auto& rep : est.per_stage) {
      if (rep.method_used != SolverMethod::normal_equations)
        CHECK(rep.final_grad_norm <= cfg.solver.grad_tol);
      CHECK_FALSE(rep.touched_box);
    }
    const ZResidual zr = z_residual(s.data, *approx, s.fmap, s.target, est.thetas, 0.0,
                                    Regularizer::half_squared_norm);
    const double budget =
        2.0 * static_cast<double>(s.data.n_transitions()) * cfg.solver.grad_tol;
    CHECK(zr.total_norm <= budget);
  }
}

TEST_CASE("closed-form linear recursion: zero rewards, H=1 ridge, solver equivalence") {
  const TabularMdp zero_r(2, 2, 2, {0.5, 0.5, 0.3, 0.7, 0.6, 0.4, 0.2, 0.8},
                          {0.0, 0.0, 0.0, 0.0}, {1.0, 0.0});
  const Policy pol(2, 2, {0.5, 0.5, 0.5, 0.5});
  const Dataset dz = generate_dataset(zero_r, pol, 40, 9);
  const FeatureMap f4 = FeatureMap::one_hot(2, 2);
  const FqeEstimate cz = closed_form_linear_fqe(dz, pol, f4, 0.0, zero_r.initial_dist);
  CHECK(cz.value == 0.0);
  for (const auto& th : cz.thetas)
    for (double v : th) CHECK(v == 0.0);

  // H=1: theta_1 is exactly the ridge regression of rewards on features.
  const auto inst = oracles::random_instance(61, 3, 2, 1);
  const Dataset d1 = generate_dataset(inst.mdp, inst.behavior, 80, 10);
  const FeatureMap fr = FeatureMap::random_linear(3, 2, 3, 33);
  const double lambda = 0.01;
  const FqeEstimate c1 = closed_form_linear_fqe(d1, inst.target, fr, lambda, inst.mdp.initial_dist);
  std::vector<std::vector<double>> rows;
  std::vector<double> y;
  for (const auto& ep : d1.episodes) {
    const auto phi = fr.row(ep.states[0], ep.actions[0]);
    rows.emplace_back(phi.begin(), phi.end());
    y.push_back(ep.rewards[0]);
  }
  const auto ref = oracles::ridge_direct(rows, y, lambda * static_cast<double>(y.size()));
  for (int i = 0; i < 3; ++i) CHECK(c1.thetas[0][i] == doctest::Approx(ref[i]).epsilon(1e-9));

  // Equivalence with the iterative solver on a random instance.
  const auto inst2 = oracles::random_instance(62, 3, 2, 4);
  const Dataset d2 = generate_dataset(inst2.mdp, inst2.behavior, 150, 11);
  const FeatureMap fr2 = FeatureMap::random_linear(3, 2, 5, 34);
  LinearApprox lin(5);
  FqeConfig cfg;
  cfg.lambda = 1e-8;
  const FqeEstimate it = run_fqe(d2, inst2.target, inst2.mdp.initial_dist, lin, fr2, cfg);
  const FqeEstimate cf = closed_form_linear_fqe(d2, inst2.target, fr2, 1e-8, inst2.mdp.initial_dist);
  CHECK(it.value == doctest::Approx(cf.value).epsilon(1e-8));
  for (int h = 0; h < 4; ++h)
    for (int i = 0; i < 5; ++i)
      CHECK(it.thetas[h][i] == doctest::Approx(cf.thetas[h][i]).epsilon(1e-7));
}

TEST_CASE("smooth_net FQE tracks the tabular fit on well-covered data") {
  Setup s = canonical_setup(200, 50);
  TabularApprox tab(2, 2);
  const auto net = make_approximator("smooth_net", s.fmap, 8);
  const FqeEstimate t = run_fqe(s.data, s.target, s.mdp.initial_dist, tab, s.fmap, FqeConfig{});
  const FqeEstimate n = run_fqe(s.data, s.target, s.mdp.initial_dist, *net, s.fmap, FqeConfig{});
  REQUIRE(n.all_converged());
  // The net can interpolate the four cell means, so the fits coincide.
  CHECK(n.value == doctest::Approx(t.value).epsilon(1e-6));
}
