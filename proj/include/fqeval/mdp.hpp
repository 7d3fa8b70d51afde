#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fqeval/rng.hpp"

// Finite episodic MDPs, stochastic policies, trajectory simulation and the
// exact dynamic-programming oracles used to validate every estimator.

namespace fqeval {

inline constexpr double kProbRowTol = 1e-12;

/// Finite-state, finite-action, finite-horizon MDP with a time-homogeneous
/// transition tensor, deterministic rewards in [0,1] and initial law xi.
/// All probability rows are validated at construction; nothing is silently
/// renormalized.
struct TabularMdp {
  int n_states = 0;
  int n_actions = 0;
  int horizon = 0;
  std::vector<double> transition;    // [s][a][s'] row-major
  std::vector<double> reward;        // [s][a]
  std::vector<double> initial_dist;  // [s]

  TabularMdp(int n_states, int n_actions, int horizon,
             std::vector<double> transition, std::vector<double> reward,
             std::vector<double> initial_dist);

  double p(int s, int a, int s2) const {
    return transition[(static_cast<std::size_t>(s) * n_actions + a) * n_states + s2];
  }
  double r(int s, int a) const {
    return reward[static_cast<std::size_t>(s) * n_actions + a];
  }
  std::span<const double> transition_row(int s, int a) const {
    return {transition.data() + (static_cast<std::size_t>(s) * n_actions + a) * n_states,
            static_cast<std::size_t>(n_states)};
  }
};

/// Row-stochastic state-to-action probabilities.
struct Policy {
  int n_states = 0;
  int n_actions = 0;
  std::vector<double> probs;  // [s][a]

  Policy(int n_states, int n_actions, std::vector<double> probs);

  double prob(int s, int a) const {
    return probs[static_cast<std::size_t>(s) * n_actions + a];
  }
  std::span<const double> row(int s) const {
    return {probs.data() + static_cast<std::size_t>(s) * n_actions,
            static_cast<std::size_t>(n_actions)};
  }
};

struct Trajectory {
  std::vector<int> states;      // H+1
  std::vector<int> actions;     // H
  std::vector<double> rewards;  // H
};

/// K i.i.d. behavior-policy episodes. Transitions flatten in episode-major,
/// stage-minor order: n = k*H + h with h in [0, H).
struct Dataset {
  std::vector<Trajectory> episodes;
  int horizon = 0;
  std::uint64_t seed = 0;

  int n_episodes() const { return static_cast<int>(episodes.size()); }
  long n_transitions() const { return static_cast<long>(episodes.size()) * horizon; }
};

Trajectory sample_trajectory(const TabularMdp& mdp, const Policy& policy, Rng& rng);

/// Deterministic in (mdp, policy, K, seed); episode k draws from the derived
/// sub-stream (seed, k).
Dataset generate_dataset(const TabularMdp& mdp, const Policy& policy, int episodes,
                         std::uint64_t seed);

/// Backward recursion Q_H = r, Q_h = r + P V_{h+1}. Layout [h][s][a],
/// h = 0..H-1.
std::vector<double> exact_q_values(const TabularMdp& mdp, const Policy& policy);

/// v_pi = sum_s xi(s) sum_a pi(a|s) Q_1(s,a).
double exact_policy_value(const TabularMdp& mdp, const Policy& policy);

struct OccupancyMeasures {
  int horizon = 0;
  int n_states = 0;
  int n_actions = 0;
  std::vector<double> per_step;        // [h][s][a], law of (s_h, a_h)
  std::vector<double> averaged;        // [s][a], mean over h
  std::vector<double> weighted_tilde;  // [s][a], weights (H-h+1) normalized

  std::span<const double> step(int h) const {
    const std::size_t sa = static_cast<std::size_t>(n_states) * n_actions;
    return {per_step.data() + h * sa, sa};
  }
};

OccupancyMeasures occupancy_measures(const TabularMdp& mdp, const Policy& policy);

void check_same_shape(const TabularMdp& mdp, const Policy& policy);

}  // namespace fqeval
