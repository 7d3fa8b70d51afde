#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fqeval/approximators.hpp"
#include "fqeval/mdp.hpp"

// The FQE estimator: per-stage least-squares fits over all K*H transitions,
// optional per-episode weights (the bootstrap hook), stacked first-order
// residual diagnostics and the linear closed-form recursion.

namespace fqeval {

enum class SolverMethod { auto_select, normal_equations, gauss_newton, gradient_descent };
enum class InitMode { zeros, warm_start };
enum class Regularizer { none, half_squared_norm };

struct SolverOptions {
  SolverMethod method = SolverMethod::auto_select;
  int max_iters = 5000;
  double grad_tol = 1e-9;
  double init_damping = 1e-3;
  double damping_cap = 1e8;
};

struct FqeConfig {
  double lambda = 0.0;
  Regularizer regularizer = Regularizer::half_squared_norm;
  SolverOptions solver;
  InitMode init = InitMode::warm_start;
  /// Parameter box [-theta_max, theta_max]^d, enforced by projection. The
  /// default is wide enough that it should never bind; touching it is
  /// reported per stage.
  double theta_max = 1e6;
  /// Scale of the seeded perturbation added to nonlinear-family inits. The
  /// exact-zero init is a stationary point of the smooth_net stage loss, so
  /// a small kick is needed; set to 0 to reproduce the literal init modes.
  double init_jitter = 0.05;
  std::uint64_t init_seed = 20240915;
};

struct SolverReport {
  int iters = 0;
  double final_grad_norm = 0.0;
  double loss = 0.0;
  bool converged = true;
  bool touched_box = false;
  SolverMethod method_used = SolverMethod::normal_equations;
};

struct FqeEstimate {
  std::vector<std::vector<double>> thetas;  // [h][d], h = 0..H-1
  double value = 0.0;
  std::vector<SolverReport> per_stage;
  std::string family;
  double lambda = 0.0;

  bool all_converged() const;
};

/// Episode weights W_1..W_K; the unit vector reproduces the unweighted fit
/// bit-for-bit. Sum must equal K within 1e-9.
struct WeightVector {
  std::vector<double> w;
};

void validate_weights(const WeightVector& weights, int episodes);

/// Regression targets y_n = r_n + sum_a pi(a|s_{n+1}) f(theta_next, phi(s_{n+1},a))
/// for all N = K*H transitions in episode-major, stage-minor order. Pass the
/// zero vector as theta_next for the terminal stage.
std::vector<double> build_targets(const Dataset& data, const Approximator& approx,
                                  const FeatureMap& fmap, std::span<const double> theta_next,
                                  const Policy& policy);

/// Minimizes (1/2N) sum_n w(n) (f(theta, phi_n) - y_n)^2 + lambda * rho(theta).
/// Episode weight W_k multiplies every transition of episode k.
std::pair<std::vector<double>, SolverReport> fit_stage(
    const Dataset& data, std::span<const double> targets, const Approximator& approx,
    const FeatureMap& fmap, const FqeConfig& config,
    const WeightVector* weights = nullptr,
    std::span<const double> warm_start = {});

/// Backward recursion h = H..1 with Q_{H+1} = 0; returns the fitted stage
/// parameters and v_hat = sum_s xi(s) sum_a pi(a|s) f(theta_1, phi(s,a)).
FqeEstimate run_fqe(const Dataset& data, const Policy& policy, std::span<const double> xi,
                    const Approximator& approx, const FeatureMap& fmap,
                    const FqeConfig& config, const WeightVector* weights = nullptr);

double estimate_value(const Approximator& approx, std::span<const double> theta1,
                      const FeatureMap& fmap, const Policy& policy,
                      std::span<const double> xi);

struct ZResidual {
  std::vector<double> per_stage_norms;
  double total_norm = 0.0;
};

/// Stacked first-order (KKT) residual of the fitted system at `thetas`:
/// per stage, (1/K) sum_k z_(h)(theta, tau_k) plus the regularizer term,
/// scaled so the residual vanishes at the stage minimizers for every lambda.
ZResidual z_residual(const Dataset& data, const Approximator& approx, const FeatureMap& fmap,
                     const Policy& policy, const std::vector<std::vector<double>>& thetas,
                     double lambda, Regularizer regularizer);

/// Linear-family oracle: theta_h = M theta_{h+1} + R with
/// M = S^{-1} sum_n phi_n psi_n^T,  R = S^{-1} sum_n r_n phi_n,
/// S = sum_n phi_n phi_n^T + N*lambda*I, psi_n the policy-averaged next
/// feature. Shares the lambda convention of fit_stage.
FqeEstimate closed_form_linear_fqe(const Dataset& data, const Policy& policy,
                                   const FeatureMap& fmap, double lambda,
                                   std::span<const double> xi);

}  // namespace fqeval
