// Acceptance suite. Each check prints one PASS/FAIL line with the measured
// quantity and its pinned tolerance; the process exits nonzero if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "fqeval/bootstrap.hpp"
#include "fqeval/experiments.hpp"
#include "fqeval/inference.hpp"
#include "oracles.hpp"

using namespace fqeval;

namespace {

int g_failures = 0;

class Timer {
 public:
  Timer() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

void report(int index, const std::string& name, bool pass, const std::string& detail,
            double seconds) {
  std::printf("[%2d] %-34s %s  (%s, %.1f s)\n", index, name.c_str(),
              pass ? "PASS" : "FAIL", detail.c_str(), seconds);
  if (!pass) ++g_failures;
}

struct Canonical {
  TabularMdp mdp;
  Policy behavior;
  Policy target;
  FeatureMap fmap;
  double exact_value;
};

Canonical canonical(int which) {
  TabularMdp mdp = which == 0 ? canonical_mdp_2s2a() : canonical_mdp_4s3a();
  Policy behavior = which == 0 ? canonical_behavior_2s2a() : canonical_behavior_4s3a();
  Policy target = which == 0 ? canonical_target_2s2a() : canonical_target_4s3a();
  FeatureMap fmap = FeatureMap::one_hot(mdp.n_states, mdp.n_actions);
  const double v = exact_policy_value(mdp, target);
  return {std::move(mdp), std::move(behavior), std::move(target), std::move(fmap), v};
}

// 1. Linear oracle equivalence on 20 random instances.
void criterion_linear_equivalence() {
  Timer timer;
  double worst = 0.0;
  Rng picker(20240601);
  for (int trial = 0; trial < 20; ++trial) {
    const int n_states = 2 + static_cast<int>(picker.uniform_below(3));
    const int n_actions = 2 + static_cast<int>(picker.uniform_below(2));
    const int horizon = 1 + static_cast<int>(picker.uniform_below(5));
    int dim = 2 + static_cast<int>(picker.uniform_below(11));
    dim = std::min(dim, n_states * n_actions);
    const auto inst = oracles::random_instance(9000 + trial, n_states, n_actions, horizon);
    const FeatureMap fmap =
        FeatureMap::random_linear(n_states, n_actions, dim, 7000 + trial);
    const Dataset data = generate_dataset(inst.mdp, inst.behavior, 200, 5000 + trial);
    LinearApprox lin(dim);
    FqeConfig cfg;
    cfg.solver.method = SolverMethod::normal_equations;
    const FqeEstimate iterative =
        run_fqe(data, inst.target, inst.mdp.initial_dist, lin, fmap, cfg);
    const FqeEstimate closed =
        closed_form_linear_fqe(data, inst.target, fmap, 0.0, inst.mdp.initial_dist);
    worst = std::max(worst, std::fabs(iterative.value - closed.value));
  }
  const double secs = timer.seconds();
  char detail[128];
  std::snprintf(detail, sizeof(detail), "max |dv| = %.2e <= 1e-8 over 20 instances", worst);
  report(1, "linear oracle equivalence", worst <= 1e-8 && secs < 10.0, detail, secs);
}

// 2. Tabular exactness against the empirical-model DP and the exact value.
void criterion_tabular_exactness() {
  Timer timer;
  bool pass = true;
  double worst_dp = 0.0, worst_v = 0.0;
  for (int which = 0; which < 2; ++which) {
    const Canonical c = canonical(which);
    TabularApprox tab(c.mdp.n_states, c.mdp.n_actions);
    {
      const Dataset data = generate_dataset(c.mdp, c.behavior, 500, 42 + which);
      const FqeEstimate est =
          run_fqe(data, c.target, c.mdp.initial_dist, tab, c.fmap, FqeConfig{});
      const auto dp = oracles::empirical_model_dp(data, c.target, c.mdp.initial_dist,
                                                  c.mdp.n_states, c.mdp.n_actions);
      pass = pass && dp.full_coverage;
      const int sa = c.mdp.n_states * c.mdp.n_actions;
      double diff = std::fabs(est.value - dp.value);
      for (int h = 0; h < c.mdp.horizon; ++h)
        for (int cell = 0; cell < sa; ++cell)
          diff = std::max(diff, std::fabs(est.thetas[h][cell] - dp.q[h * sa + cell]));
      worst_dp = std::max(worst_dp, diff);
    }
    {
      const Dataset big = generate_dataset(c.mdp, c.behavior, 20000, 71 + which);
      const FqeEstimate est =
          run_fqe(big, c.target, c.mdp.initial_dist, tab, c.fmap, FqeConfig{});
      worst_v = std::max(worst_v, std::fabs(est.value - c.exact_value));
    }
  }
  const double secs = timer.seconds();
  pass = pass && worst_dp <= 1e-8 && worst_v <= 0.01 && secs < 30.0;
  char detail[160];
  std::snprintf(detail, sizeof(detail),
                "max |FQE - empirical DP| = %.2e <= 1e-8; |v_hat - v| = %.4f <= 0.01 at K=20000",
                worst_dp, worst_v);
  report(2, "tabular exactness", pass, detail, secs);
}

// 3. Analytic gradients of the smooth net.
void criterion_gradients() {
  Timer timer;
  const auto rep = grad_check(SmoothNetApprox(4, 8), 100, 20240602);
  const double secs = timer.seconds();
  char detail[96];
  std::snprintf(detail, sizeof(detail), "max rel err = %.2e <= 1e-5 over %d probes",
                rep.max_rel_error, rep.trials);
  report(3, "gradient correctness", rep.max_rel_error <= 1e-5 && secs < 1.0, detail, secs);
}

// 4. First-order certificate at every converged solution, all families.
void criterion_kkt() {
  Timer timer;
  bool pass = true;
  double worst = 0.0;
  for (int which = 0; which < 2; ++which) {
    const Canonical c = canonical(which);
    const Dataset data = generate_dataset(c.mdp, c.behavior, 200, 314 + which);
    for (const char* family : {"tabular", "linear", "smooth_net"}) {
      const auto approx = make_approximator(family, c.fmap, 8);
      const FqeEstimate est =
          run_fqe(data, c.target, c.mdp.initial_dist, *approx, c.fmap, FqeConfig{});
      pass = pass && est.all_converged();
      const ZResidual zr = z_residual(data, *approx, c.fmap, c.target, est.thetas, 0.0,
                                      Regularizer::half_squared_norm);
      worst = std::max(worst, zr.total_norm);
    }
  }
  const double secs = timer.seconds();
  char detail[96];
  std::snprintf(detail, sizeof(detail), "max z-residual = %.2e <= 1e-6, all families", worst);
  report(4, "KKT certificate", pass && worst <= 1e-6, detail, secs);
}

// 5. Asymptotic normality at desk scale.
void criterion_normality() {
  Timer timer;
  StudyConfig cfg{canonical_mdp_2s2a(), canonical_behavior_2s2a(), canonical_target_2s2a()};
  cfg.k_grid = {800};
  cfg.replications = 2000;
  cfg.seed = 1001;
  const StudyResult result = study_normality(cfg);
  const double ks = result.rows[0].ks_statistic;
  const double secs = timer.seconds();
  char detail[96];
  std::snprintf(detail, sizeof(detail), "KS = %.4f <= 0.05 (M=2000, K=800)", ks);
  report(5, "normality (KS)", ks <= 0.05, detail, secs);
}

// 6. Variance match and the independent tabular route.
void criterion_variance_match() {
  Timer timer;
  const Canonical c = canonical(0);
  TabularApprox tab(2, 2);
  const auto theta_star = tabular_theta_star(c.mdp, c.target);

  const Dataset ref = generate_dataset(c.mdp, c.behavior, 20000, 2024);
  const auto comps =
      estimate_components(ref, tab, c.fmap, c.target, theta_star, c.mdp, NuMode::exact());
  const double mis =
      tabular_mis_sigma2(ref, c.mdp, c.target, theta_star, occupancy_measures(c.mdp, c.target));
  const double mis_gap = std::fabs(mis - comps.sigma2);

  StudyConfig cfg{canonical_mdp_2s2a(), canonical_behavior_2s2a(), canonical_target_2s2a()};
  cfg.k_grid = {800};
  cfg.replications = 20000;
  cfg.seed = 1002;
  const StudyResult result = study_cramer_rao(cfg);
  const double ratio = result.rows[0].mc_variance_scaled / result.rows[0].sigma2_plugin;

  const double secs = timer.seconds();
  const bool pass = ratio >= 0.9 && ratio <= 1.1 && mis_gap <= 1e-8;
  char detail[128];
  std::snprintf(detail, sizeof(detail),
                "K*Var_MC / sigma2 = %.3f in [0.9,1.1]; |plug-in - MIS| = %.1e <= 1e-8", ratio,
                mis_gap);
  report(6, "variance match / Cramer-Rao", pass, detail, secs);
}

// 7. Bootstrap variance consistency for both schemes.
void criterion_bootstrap_variance() {
  Timer timer;
  const Canonical c = canonical(0);
  TabularApprox tab(2, 2);
  const int episodes = 500;
  const Dataset data = generate_dataset(c.mdp, c.behavior, episodes, 3001);
  const FqeEstimate est =
      run_fqe(data, c.target, c.mdp.initial_dist, tab, c.fmap, FqeConfig{});
  const auto comps =
      estimate_components(data, tab, c.fmap, c.target, est.thetas, c.mdp, NuMode::exact());

  auto scaled_var = [&](const WeightScheme& scheme, std::uint64_t seed) {
    const auto boot = bootstrap_distribution(data, c.target, c.mdp.initial_dist, tab, c.fmap,
                                             FqeConfig{}, scheme, 2000, seed);
    return episodes * oracles::variance_of(boot.errors);
  };
  const double vanilla_ratio = scaled_var(WeightScheme::vanilla(), 3002) / comps.sigma2;
  const double gamma_ratio =
      scaled_var(WeightScheme::multiplier_gamma(0.5, 2.0), 3003) / (2.0 * comps.sigma2);

  const double secs = timer.seconds();
  const bool pass = vanilla_ratio >= 0.8 && vanilla_ratio <= 1.2 && gamma_ratio >= 0.8 &&
                    gamma_ratio <= 1.2;
  char detail[128];
  std::snprintf(detail, sizeof(detail),
                "K*Var/k0*sigma2: vanilla %.3f, gamma(0.5,2) %.3f, both in [0.8,1.2]",
                vanilla_ratio, gamma_ratio);
  report(7, "bootstrap consistency", pass, detail, secs);
}

// 8. CI coverage at delta = 0.1.
void criterion_coverage() {
  Timer timer;
  StudyConfig cfg{canonical_mdp_2s2a(), canonical_behavior_2s2a(), canonical_target_2s2a()};
  cfg.k_grid = {500};
  cfg.replications = 1000;
  cfg.bootstrap_reps = 200;
  cfg.delta = 0.1;
  cfg.seed = 1003;
  const StudyResult result = study_coverage(cfg);
  const double coverage = *result.rows[0].coverage;
  const double secs = timer.seconds();
  char detail[96];
  std::snprintf(detail, sizeof(detail), "coverage = %.3f in [0.87, 0.93] (M=1000, B=200)",
                coverage);
  report(8, "CI coverage", coverage >= 0.87 && coverage <= 0.93, detail, secs);
}

// 9. Restricted chi-square identities.
void criterion_divergence() {
  Timer timer;
  bool pass = true;

  // Closed form dominates random Rayleigh quotients and is attained.
  const auto inst = oracles::random_instance(880, 3, 2, 2);
  const FeatureMap fmap = FeatureMap::random_linear(3, 2, 4, 881);
  const Dataset data = generate_dataset(inst.mdp, inst.behavior, 300, 882);
  LinearApprox lin(4);
  const FqeEstimate est =
      run_fqe(data, inst.target, inst.mdp.initial_dist, lin, fmap, FqeConfig{});
  const auto comps = estimate_components(data, lin, fmap, inst.target, est.thetas, inst.mdp,
                                         NuMode::exact());
  const auto div = restricted_chi2(comps);
  Rng rng(883);
  double attained_gap = 0.0;
  for (int h = 0; h < comps.horizon; ++h) {
    for (int t = 0; t < 10000; ++t) {
      std::vector<double> dir(4);
      for (auto& v : dir) v = rng.normal();
      double num = 0.0, den = 0.0;
      for (int i = 0; i < 4; ++i) {
        num += dir[i] * comps.nu[h][i];
        for (int j = 0; j < 4; ++j) den += dir[i] * comps.sigma[h](i, j) * dir[j];
      }
      if (num * num / den > div.quad[h] * (1.0 + 1e-9)) pass = false;
    }
    std::vector<double> sig_flat(comps.sigma[h].data(), comps.sigma[h].data() + 16);
    const auto opt = oracles::gauss_solve(sig_flat, comps.nu[h]);
    double num = 0.0, den = 0.0;
    for (int i = 0; i < 4; ++i) {
      num += opt[i] * comps.nu[h][i];
      for (int j = 0; j < 4; ++j) den += opt[i] * comps.sigma[h](i, j) * opt[j];
    }
    attained_gap = std::max(attained_gap, std::fabs(num * num / den - div.quad[h]));
  }
  pass = pass && attained_gap <= 1e-6;

  // Hand-computable tabular case: mu = (1,0), mu_bar = (0.5, 0.5).
  const TabularMdp m1(1, 2, 1, {1.0, 1.0}, {0.3, 0.7}, {1.0});
  const Policy point(1, 2, {1.0, 0.0});
  Dataset hand;
  hand.horizon = 1;
  hand.episodes = {Trajectory{{0, 0}, {0}, {0.3}}, Trajectory{{0, 0}, {1}, {0.7}}};
  TabularApprox tab(1, 2);
  const FeatureMap oh = FeatureMap::one_hot(1, 2);
  const auto comps1 = estimate_components(hand, tab, oh, point, tabular_theta_star(m1, point),
                                          m1, NuMode::exact());
  const auto div1 = restricted_chi2(comps1);
  const double hand_gap = std::fabs(div1.chi2[0] - 1.0);
  pass = pass && hand_gap <= 1e-12;

  const double secs = timer.seconds();
  char detail[128];
  std::snprintf(detail, sizeof(detail),
                "sup attained to %.1e <= 1e-6 over 1e4 directions; tabular chi2 err %.1e",
                attained_gap, hand_gap);
  report(9, "divergence identity", pass, detail, secs);
}

// 10. Leading bound terms dominate realized errors.
void criterion_bound_sanity() {
  Timer timer;
  bool pass = true;
  double worst_rate_va = 1.0, worst_rate_rf = 1.0;
  const int replications = 1000;
  const int episodes = 500;
  const double delta = 0.1;
  for (int which = 0; which < 2; ++which) {
    const Canonical c = canonical(which);
    TabularApprox tab(c.mdp.n_states, c.mdp.n_actions);
    int dom_va = 0, dom_rf = 0;
    for (int m = 0; m < replications; ++m) {
      const Dataset data =
          generate_dataset(c.mdp, c.behavior, episodes, mix64(mix64(4000 + which, episodes), m));
      const FqeEstimate est =
          run_fqe(data, c.target, c.mdp.initial_dist, tab, c.fmap, FqeConfig{});
      const auto comps =
          estimate_components(data, tab, c.fmap, c.target, est.thetas, c.mdp, NuMode::exact());
      const double c2 = empirical_c2(data, comps, tab, c.fmap, est.thetas);
      const auto div = restricted_chi2(comps);
      const auto va = bound_variance_aware(comps.sigma2, c2, comps, episodes, delta);
      const auto rf = bound_reward_free(div, c2, episodes, c.mdp.horizon, c.fmap.dim, delta);
      const double err = std::fabs(est.value - c.exact_value);
      if (va.leading_term >= err) ++dom_va;
      if (rf.leading_term >= err) ++dom_rf;
    }
    worst_rate_va = std::min(worst_rate_va, dom_va / static_cast<double>(replications));
    worst_rate_rf = std::min(worst_rate_rf, dom_rf / static_cast<double>(replications));
  }
  pass = worst_rate_va >= 0.95 && worst_rate_rf >= 0.95;
  const double secs = timer.seconds();
  char detail[128];
  std::snprintf(detail, sizeof(detail),
                "domination rates >= 0.95: variance-aware %.3f, reward-free %.3f (both instances)",
                worst_rate_va, worst_rate_rf);
  report(10, "bound sanity", pass, detail, secs);
}

}  // namespace

int main() {
  std::printf("fqeval acceptance suite\n");
  criterion_linear_equivalence();
  criterion_tabular_exactness();
  criterion_gradients();
  criterion_kkt();
  criterion_normality();
  criterion_variance_match();
  criterion_bootstrap_variance();
  criterion_coverage();
  criterion_divergence();
  criterion_bound_sanity();
  if (g_failures == 0) {
    std::printf("all acceptance criteria passed\n");
    return 0;
  }
  std::printf("%d acceptance criteria FAILED\n", g_failures);
  return 1;
}
