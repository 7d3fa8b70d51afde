#include "fqeval/cli.hpp"

#include <cmath>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fqeval/bootstrap.hpp"
#include "fqeval/errors.hpp"
#include "fqeval/experiments.hpp"
#include "fqeval/inference.hpp"
#include "fqeval/io.hpp"
#include "fqeval/version.hpp"

namespace fqeval::cli {

namespace {

struct EstimatorArgs {
  std::string mdp_path;
  std::string policy_path;
  std::string dataset_path;
  std::string features_path;
  std::string family = "tabular";
  int net_width = 8;
  double lambda = 0.0;
  std::string solver = "auto";
};

void add_estimator_options(CLI::App* cmd, EstimatorArgs& args) {
  cmd->add_option("--mdp", args.mdp_path, "MDP file (JSON)")->required();
  cmd->add_option("--policy", args.policy_path, "target policy file (JSON)")->required();
  cmd->add_option("--dataset", args.dataset_path, "dataset file (CSV)")->required();
  cmd->add_option("--family", args.family, "approximator family: tabular|linear|smooth_net");
  cmd->add_option("--features", args.features_path,
                  "feature map file (JSON); defaults to one-hot");
  cmd->add_option("--net-width", args.net_width, "hidden width for smooth_net");
  cmd->add_option("--lambda", args.lambda, "ridge regularization weight");
  cmd->add_option("--solver", args.solver, "auto|normal_equations|gauss_newton|gradient_descent");
}

struct EstimatorSetup {
  TabularMdp mdp;
  Policy policy;
  Dataset dataset;
  FeatureMap fmap;
  std::unique_ptr<Approximator> approx;
  FqeConfig config;
};

EstimatorSetup load_estimator(const EstimatorArgs& args) {
  EstimatorSetup s{io::read_mdp(args.mdp_path), io::read_policy(args.policy_path),
                   io::read_dataset(args.dataset_path), FeatureMap{}, nullptr, FqeConfig{}};
  if (args.features_path.empty())
    s.fmap = FeatureMap::one_hot(s.mdp.n_states, s.mdp.n_actions);
  else
    s.fmap = io::read_features(args.features_path);
  s.approx = make_approximator(args.family, s.fmap, args.net_width);
  s.config.lambda = args.lambda;
  if (args.solver == "auto")
    s.config.solver.method = SolverMethod::auto_select;
  else if (args.solver == "normal_equations")
    s.config.solver.method = SolverMethod::normal_equations;
  else if (args.solver == "gauss_newton")
    s.config.solver.method = SolverMethod::gauss_newton;
  else if (args.solver == "gradient_descent")
    s.config.solver.method = SolverMethod::gradient_descent;
  else
    throw ConfigError("unknown solver: " + args.solver);
  return s;
}

WeightScheme parse_scheme(const std::string& name, double a, double b) {
  if (name == "vanilla") return WeightScheme::vanilla();
  if (name == "exponential") return WeightScheme::multiplier_exponential(a);
  if (name == "gamma") return WeightScheme::multiplier_gamma(a, b);
  if (name == "uniform") return WeightScheme::multiplier_uniform(a, b);
  throw ConfigError("unknown scheme: " + name + " (vanilla|exponential|gamma|uniform)");
}

std::string join_args(int argc, const char* const* argv) {
  std::ostringstream os;
  for (int i = 0; i < argc; ++i) os << (i ? " " : "") << argv[i];
  return os.str();
}

std::string provenance_line(const std::string& args_echo) {
  return "fqeval " + std::string(kVersion) + " | " + args_echo;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write file: " + path);
  return out;
}

void write_study_csv(const StudyResult& result, const std::string& path,
                     const std::string& provenance) {
  auto out = open_out(path);
  out << "# " << provenance << "\n";
  out << "K,mean_error,mc_variance_scaled,sigma2_plugin,ks_statistic,coverage,runtime_seconds\n";
  for (const auto& row : result.rows) {
    out << row.episodes << ',' << io::format_double(row.mean_error) << ','
        << io::format_double(row.mc_variance_scaled) << ','
        << io::format_double(row.sigma2_plugin) << ','
        << io::format_double(row.ks_statistic) << ',';
    if (row.coverage) out << io::format_double(*row.coverage);
    out << ',' << io::format_double(row.runtime_seconds) << "\n";
  }
  auto sidecar = open_out(path + ".provenance.txt");
  sidecar << result.provenance << "\n" << provenance << "\n";
}

int cmd_gen_data(const std::string& mdp_path, const std::string& policy_path, int episodes,
                 std::uint64_t seed, const std::string& out_path,
                 const std::string& args_echo) {
  const TabularMdp mdp = io::read_mdp(mdp_path);
  const Policy behavior = io::read_policy(policy_path);
  const Dataset data = generate_dataset(mdp, behavior, episodes, seed);
  io::write_dataset(data, out_path, provenance_line(args_echo));
  std::cout << "wrote " << data.n_transitions() << " transitions (K=" << episodes
            << ", H=" << mdp.horizon << ") to " << out_path << "\n";
  return 0;
}

int cmd_fqe(const EstimatorArgs& args, const std::string& out_path,
            const std::string& args_echo) {
  EstimatorSetup s = load_estimator(args);
  const FqeEstimate est =
      run_fqe(s.dataset, s.policy, s.mdp.initial_dist, *s.approx, s.fmap, s.config);
  const ZResidual zr = z_residual(s.dataset, *s.approx, s.fmap, s.policy, est.thetas,
                                  s.config.lambda, s.config.regularizer);
  if (!out_path.empty()) io::write_estimate(est, out_path, provenance_line(args_echo));
  std::cout << "v_hat=" << io::format_double(est.value)
            << " z_residual=" << io::format_double(zr.total_norm)
            << " converged=" << (est.all_converged() ? "yes" : "no") << "\n";
  return 0;
}

struct VarianceArgs {
  EstimatorArgs est;
  std::string nu_mode = "exact";
  int rollouts = 10000;
  std::uint64_t seed = 0;
  bool seed_set = false;
};

struct VarianceOutputs {
  EstimatorSetup setup;
  FqeEstimate est;
  VarianceComponents comps;
  DivergenceReport div;
  double c2 = 0.0;
};

VarianceOutputs compute_variance(const VarianceArgs& args) {
  VarianceOutputs v{load_estimator(args.est), {}, {}, {}, 0.0};
  v.est = run_fqe(v.setup.dataset, v.setup.policy, v.setup.mdp.initial_dist, *v.setup.approx,
                  v.setup.fmap, v.setup.config);
  NuMode nu = NuMode::exact();
  if (args.nu_mode == "rollout") {
    if (!args.seed_set)
      throw ConfigError("--seed is required with --nu-mode rollout");
    nu = NuMode::rollout(args.rollouts, args.seed);
  } else if (args.nu_mode != "exact") {
    throw ConfigError("unknown nu mode: " + args.nu_mode + " (exact|rollout)");
  }
  v.comps = estimate_components(v.setup.dataset, *v.setup.approx, v.setup.fmap, v.setup.policy,
                                v.est.thetas, v.setup.mdp, nu);
  v.div = restricted_chi2(v.comps);
  if (v.setup.approx->family() == "tabular") {
    const OccupancyMeasures target_occ = occupancy_measures(v.setup.mdp, v.setup.policy);
    std::vector<double> mu_bar_hat(v.setup.fmap.n_pairs(), 0.0);
    const double n = static_cast<double>(v.setup.dataset.n_transitions());
    for (const auto& ep : v.setup.dataset.episodes)
      for (int h = 0; h < v.setup.dataset.horizon; ++h)
        mu_bar_hat[ep.states[h] * v.setup.mdp.n_actions + ep.actions[h]] += 1.0 / n;
    v.div.tabular_chi2 = chi2_divergence(target_occ.weighted_tilde, mu_bar_hat);
  }
  v.c2 = empirical_c2(v.setup.dataset, v.comps, *v.setup.approx, v.setup.fmap, v.est.thetas);
  return v;
}

int cmd_variance(const VarianceArgs& args, const std::string& out_path,
                 const std::string& args_echo) {
  VarianceOutputs v = compute_variance(args);
  const int h_max = v.comps.horizon;
  double jitter_max = 0.0;
  for (double j : v.comps.jitter) jitter_max = std::max(jitter_max, j);

  auto out = open_out(out_path);
  out << "# " << provenance_line(args_echo) << "\n";
  out << "# quad_h = nu_h' Sigma_h^{-1} nu_h; chi2_h = quad_h - 1; tabular_chi2 uses the\n";
  out << "# exact horizon-weighted target occupancy against empirical cell frequencies\n";
  out << "sigma2,c2_hat,b0,jitter_max,tabular_chi2";
  for (int h = 1; h <= h_max; ++h) out << ",quad_" << h;
  for (int h = 1; h <= h_max; ++h) out << ",chi2_" << h;
  out << "\n";
  out << io::format_double(v.comps.sigma2) << ',' << io::format_double(v.c2) << ','
      << io::format_double(b0_diagnostic(v.comps)) << ',' << io::format_double(jitter_max)
      << ',';
  if (v.div.tabular_chi2) out << io::format_double(*v.div.tabular_chi2);
  for (int h = 0; h < h_max; ++h) out << ',' << io::format_double(v.div.quad[h]);
  for (int h = 0; h < h_max; ++h) out << ',' << io::format_double(v.div.chi2[h]);
  out << "\n";
  std::cout << "sigma2=" << io::format_double(v.comps.sigma2)
            << " c2_hat=" << io::format_double(v.c2) << " -> " << out_path << "\n";
  return 0;
}

int cmd_bounds(const VarianceArgs& args, double delta, const std::string& out_path,
               const std::string& args_echo) {
  VarianceOutputs v = compute_variance(args);
  const long episodes = v.setup.dataset.n_episodes();
  const BoundReport va =
      bound_variance_aware(v.comps.sigma2, v.c2, v.comps, episodes, delta);
  const BoundReport rf = bound_reward_free(v.div, v.c2, episodes, v.comps.horizon,
                                           v.comps.dim, delta);
  const BoundReport pos = bound_positivity(v.setup.dataset, *v.setup.approx, v.setup.fmap,
                                           v.est.thetas, v.comps, episodes, delta);
  const PositivityReport pr =
      check_positivity(v.comps, *v.setup.approx, v.setup.fmap, v.est.thetas,
                       static_cast<long>(v.setup.fmap.n_pairs()) * v.setup.fmap.n_pairs(), 0);

  auto out = open_out(out_path);
  out << "# " << provenance_line(args_echo) << "\n";
  out << "kind,leading_term,secondary_term,K,H,d,delta,c2_hat,positivity_min,positivity_holds,note\n";
  auto emit = [&](const BoundReport& r, const char* kind) {
    out << kind << ',' << io::format_double(r.leading_term) << ','
        << io::format_double(r.secondary_term) << ',' << r.episodes << ',' << r.horizon << ','
        << r.dim << ',' << io::format_double(r.delta) << ',' << io::format_double(v.c2) << ','
        << io::format_double(pr.min_value) << ',' << (pr.holds ? 1 : 0) << ",\""
        << r.omitted_constant_note << "\"\n";
  };
  emit(va, "variance_aware");
  emit(rf, "reward_free");
  emit(pos, "positivity");
  std::cout << "variance_aware=" << io::format_double(va.leading_term)
            << " reward_free=" << io::format_double(rf.leading_term)
            << " positivity=" << io::format_double(pos.leading_term) << " -> " << out_path
            << "\n";
  return 0;
}

int cmd_bootstrap_ci(const EstimatorArgs& args, int reps, double delta,
                     const std::string& scheme_name, double scheme_a, double scheme_b,
                     std::uint64_t seed, const std::string& errors_out,
                     const std::string& args_echo) {
  EstimatorSetup s = load_estimator(args);
  const WeightScheme scheme = parse_scheme(scheme_name, scheme_a, scheme_b);
  const BootstrapResult result =
      bootstrap_distribution(s.dataset, s.policy, s.mdp.initial_dist, *s.approx, s.fmap,
                             s.config, scheme, reps, seed);
  const ConfidenceInterval ci = confidence_interval(result, delta, result.k0);
  std::cout << "v_hat=" << io::format_double(result.base_value)
            << " k0=" << io::format_double(result.k0) << " ci_lo=" << io::format_double(ci.lo)
            << " ci_hi=" << io::format_double(ci.hi) << " delta=" << io::format_double(delta)
            << " replicates=" << result.replicate_values.size()
            << " excluded=" << result.excluded << "\n";
  if (!errors_out.empty()) {
    auto out = open_out(errors_out);
    out << "# " << provenance_line(args_echo) << "\n";
    for (double e : result.errors) out << io::format_double(e) << "\n";
  }
  return 0;
}

struct StudyArgs {
  std::string mdp_path, behavior_path, target_path;
  std::string family = "tabular";
  int net_width = 8;
  std::string k_grid = "200,800";
  int replications = 200;
  int bootstrap_reps = 200;
  double delta = 0.1;
  std::string scheme = "vanilla";
  double scheme_a = 1.0, scheme_b = 1.0;
  std::uint64_t seed = 0;
  std::string nu_mode = "exact";
  int rollouts = 10000;
  int sigma_ref = 20000;
  double lambda = 0.0;
  std::string out_path;
};

void add_study_options(CLI::App* cmd, StudyArgs& args) {
  cmd->add_option("--mdp", args.mdp_path, "MDP file")->required();
  cmd->add_option("--behavior", args.behavior_path, "behavior policy file")->required();
  cmd->add_option("--target", args.target_path, "target policy file")->required();
  cmd->add_option("--family", args.family, "approximator family");
  cmd->add_option("--net-width", args.net_width, "hidden width for smooth_net");
  cmd->add_option("--k-grid", args.k_grid, "comma-separated episode counts");
  cmd->add_option("--replications", args.replications, "Monte-Carlo replications per K");
  cmd->add_option("--bootstrap-reps", args.bootstrap_reps, "bootstrap replicates (coverage)");
  cmd->add_option("--delta", args.delta, "CI level");
  cmd->add_option("--scheme", args.scheme, "vanilla|exponential|gamma|uniform");
  cmd->add_option("--scheme-a", args.scheme_a, "rate | shape | lower endpoint");
  cmd->add_option("--scheme-b", args.scheme_b, "scale | upper endpoint");
  cmd->add_option("--seed", args.seed, "master seed")->required();
  cmd->add_option("--nu-mode", args.nu_mode, "exact|rollout");
  cmd->add_option("--rollouts", args.rollouts, "rollout episodes for nu estimation");
  cmd->add_option("--sigma-ref", args.sigma_ref, "episodes in the oracle-sigma reference set");
  cmd->add_option("--lambda", args.lambda, "ridge regularization weight");
  cmd->add_option("--out", args.out_path, "results CSV path")->required();
}

StudyConfig build_study_config(const StudyArgs& args) {
  StudyConfig cfg{io::read_mdp(args.mdp_path), io::read_policy(args.behavior_path),
                  io::read_policy(args.target_path)};
  cfg.family = args.family;
  cfg.net_width = args.net_width;
  std::stringstream ks(args.k_grid);
  std::string tok;
  while (std::getline(ks, tok, ',')) {
    try {
      cfg.k_grid.push_back(std::stoi(tok));
    } catch (const std::exception&) {
      throw ConfigError("bad --k-grid entry: " + tok);
    }
  }
  cfg.replications = args.replications;
  cfg.bootstrap_reps = args.bootstrap_reps;
  cfg.scheme = parse_scheme(args.scheme, args.scheme_a, args.scheme_b);
  cfg.delta = args.delta;
  cfg.seed = args.seed;
  cfg.nu_mode = (args.nu_mode == "rollout") ? NuMode::Kind::rollout : NuMode::Kind::exact_mdp;
  cfg.rollout_episodes = args.rollouts;
  cfg.sigma_ref_episodes = args.sigma_ref;
  cfg.fqe.lambda = args.lambda;
  return cfg;
}

}  // namespace

int run(int argc, const char* const* argv) {
  const std::string args_echo = join_args(argc, argv);
  CLI::App app{"fqeval: fitted Q-evaluation with bootstrap and plug-in inference"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion));

  // gen-data
  std::string gd_mdp, gd_policy, gd_out;
  int gd_episodes = 0;
  std::uint64_t gd_seed = 0;
  auto* gen = app.add_subcommand("gen-data", "sample a behavior-policy dataset");
  gen->add_option("--mdp", gd_mdp)->required();
  gen->add_option("--policy", gd_policy, "behavior policy file")->required();
  gen->add_option("--episodes", gd_episodes)->required();
  gen->add_option("--seed", gd_seed)->required();
  gen->add_option("--out", gd_out)->required();

  // fqe
  EstimatorArgs fqe_args;
  std::string fqe_out;
  auto* fqe_cmd = app.add_subcommand("fqe", "fit the FQE estimator");
  add_estimator_options(fqe_cmd, fqe_args);
  fqe_cmd->add_option("--out", fqe_out, "estimate record path (JSON)");

  // variance
  VarianceArgs var_args;
  std::string var_out;
  auto* var_cmd = app.add_subcommand("variance", "plug-in variance and divergences");
  add_estimator_options(var_cmd, var_args.est);
  var_cmd->add_option("--nu-mode", var_args.nu_mode, "exact|rollout");
  var_cmd->add_option("--rollouts", var_args.rollouts);
  auto* var_seed = var_cmd->add_option("--seed", var_args.seed);
  var_cmd->add_option("--out", var_out)->required();

  // bounds
  VarianceArgs bounds_args;
  std::string bounds_out;
  double bounds_delta = 0.1;
  auto* bounds_cmd = app.add_subcommand("bounds", "leading-order error bound evaluators");
  add_estimator_options(bounds_cmd, bounds_args.est);
  bounds_cmd->add_option("--nu-mode", bounds_args.nu_mode, "exact|rollout");
  bounds_cmd->add_option("--rollouts", bounds_args.rollouts);
  auto* bounds_seed = bounds_cmd->add_option("--seed", bounds_args.seed);
  bounds_cmd->add_option("--delta", bounds_delta);
  bounds_cmd->add_option("--out", bounds_out)->required();

  // bootstrap-ci
  EstimatorArgs bci_args;
  int bci_reps = 200;
  double bci_delta = 0.1;
  std::string bci_scheme = "vanilla", bci_errors_out;
  double bci_a = 1.0, bci_b = 1.0;
  std::uint64_t bci_seed = 0;
  auto* bci_cmd = app.add_subcommand("bootstrap-ci", "bootstrap confidence interval");
  add_estimator_options(bci_cmd, bci_args);
  bci_cmd->add_option("--bootstrap-reps", bci_reps);
  bci_cmd->add_option("--delta", bci_delta);
  bci_cmd->add_option("--scheme", bci_scheme);
  bci_cmd->add_option("--scheme-a", bci_a);
  bci_cmd->add_option("--scheme-b", bci_b);
  bci_cmd->add_option("--seed", bci_seed)->required();
  bci_cmd->add_option("--errors-out", bci_errors_out, "replicate errors, one per line");

  // studies
  StudyArgs sn_args, sc_args, cr_args;
  auto* sn_cmd = app.add_subcommand("study-normality", "asymptotic normality study");
  add_study_options(sn_cmd, sn_args);
  auto* sc_cmd = app.add_subcommand("study-coverage", "bootstrap CI coverage study");
  add_study_options(sc_cmd, sc_args);
  auto* cr_cmd = app.add_subcommand("study-cr", "variance / Cramer-Rao match study");
  add_study_options(cr_cmd, cr_args);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (gen->parsed())
      return cmd_gen_data(gd_mdp, gd_policy, gd_episodes, gd_seed, gd_out, args_echo);
    if (fqe_cmd->parsed()) return cmd_fqe(fqe_args, fqe_out, args_echo);
    if (var_cmd->parsed()) {
      var_args.seed_set = var_seed->count() > 0;
      return cmd_variance(var_args, var_out, args_echo);
    }
    if (bounds_cmd->parsed()) {
      bounds_args.seed_set = bounds_seed->count() > 0;
      return cmd_bounds(bounds_args, bounds_delta, bounds_out, args_echo);
    }
    if (bci_cmd->parsed())
      return cmd_bootstrap_ci(bci_args, bci_reps, bci_delta, bci_scheme, bci_a, bci_b,
                              bci_seed, bci_errors_out, args_echo);
    auto run_study_cmd = [&](const StudyArgs& sargs,
                             StudyResult (*study)(const StudyConfig&)) {
      const StudyConfig cfg = build_study_config(sargs);
      const StudyResult result = study(cfg);
      write_study_csv(result, sargs.out_path, provenance_line(args_echo));
      std::cout << "wrote " << result.rows.size() << " rows to " << sargs.out_path << "\n";
      return 0;
    };
    if (sn_cmd->parsed()) return run_study_cmd(sn_args, &study_normality);
    if (sc_cmd->parsed()) return run_study_cmd(sc_args, &study_coverage);
    if (cr_cmd->parsed()) return run_study_cmd(cr_args, &study_cramer_rao);
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const SolverError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const InferenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 5;
  } catch (const StudyError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 5;
  }
  return 1;
}

}  // namespace fqeval::cli
