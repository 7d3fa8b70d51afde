#include "fqeval/mdp.hpp"

#include <cmath>
#include <string>

#include "fqeval/errors.hpp"
#include "fqeval/kernels.hpp"

namespace fqeval {

namespace {

void check_prob_row(std::span<const double> row, const std::string& what) {
  double total = 0.0;
  for (double v : row) {
    if (!(v >= 0.0) || !std::isfinite(v))
      throw ConfigError(what + ": negative or non-finite probability");
    total += v;
  }
  if (std::abs(total - 1.0) > kProbRowTol)
    throw ConfigError(what + ": probabilities sum to " + std::to_string(total) +
                      ", expected 1 within 1e-12");
}

}  // namespace

TabularMdp::TabularMdp(int n_states_in, int n_actions_in, int horizon_in,
                       std::vector<double> transition_in, std::vector<double> reward_in,
                       std::vector<double> initial_dist_in)
    : n_states(n_states_in),
      n_actions(n_actions_in),
      horizon(horizon_in),
      transition(std::move(transition_in)),
      reward(std::move(reward_in)),
      initial_dist(std::move(initial_dist_in)) {
  if (n_states < 1 || n_actions < 1 || horizon < 1)
    throw ConfigError("TabularMdp: n_states, n_actions and horizon must be positive");
  const std::size_t sa = static_cast<std::size_t>(n_states) * n_actions;
  if (transition.size() != sa * n_states)
    throw ConfigError("TabularMdp: transition tensor has wrong size");
  if (reward.size() != sa) throw ConfigError("TabularMdp: reward table has wrong size");
  if (initial_dist.size() != static_cast<std::size_t>(n_states))
    throw ConfigError("TabularMdp: initial distribution has wrong size");
  for (int s = 0; s < n_states; ++s)
    for (int a = 0; a < n_actions; ++a)
      check_prob_row(transition_row(s, a), "transition[" + std::to_string(s) + "," +
                                               std::to_string(a) + "]");
  check_prob_row(initial_dist, "initial_dist");
  for (std::size_t i = 0; i < reward.size(); ++i)
    if (!(reward[i] >= 0.0 && reward[i] <= 1.0))
      throw ConfigError("TabularMdp: rewards must lie in [0,1]");
}

Policy::Policy(int n_states_in, int n_actions_in, std::vector<double> probs_in)
    : n_states(n_states_in), n_actions(n_actions_in), probs(std::move(probs_in)) {
  if (n_states < 1 || n_actions < 1)
    throw ConfigError("Policy: n_states and n_actions must be positive");
  if (probs.size() != static_cast<std::size_t>(n_states) * n_actions)
    throw ConfigError("Policy: probability table has wrong size");
  for (int s = 0; s < n_states; ++s)
    check_prob_row(row(s), "policy[" + std::to_string(s) + "]");
}

void check_same_shape(const TabularMdp& mdp, const Policy& policy) {
  if (mdp.n_states != policy.n_states || mdp.n_actions != policy.n_actions)
    throw ConfigError("MDP and policy dimensions disagree");
}

Trajectory sample_trajectory(const TabularMdp& mdp, const Policy& policy, Rng& rng) {
  check_same_shape(mdp, policy);
  Trajectory t;
  const int h_max = mdp.horizon;
  t.states.reserve(h_max + 1);
  t.actions.reserve(h_max);
  t.rewards.reserve(h_max);
  int s = rng.categorical(mdp.initial_dist);
  t.states.push_back(s);
  for (int h = 0; h < h_max; ++h) {
    const int a = rng.categorical(policy.row(s));
    t.actions.push_back(a);
    t.rewards.push_back(mdp.r(s, a));
    s = rng.categorical(mdp.transition_row(s, a));
    t.states.push_back(s);
  }
  return t;
}

Dataset generate_dataset(const TabularMdp& mdp, const Policy& policy, int episodes,
                         std::uint64_t seed) {
  if (episodes < 1) throw ConfigError("generate_dataset: need at least one episode");
  check_same_shape(mdp, policy);
  Dataset data;
  data.horizon = mdp.horizon;
  data.seed = seed;
  data.episodes.reserve(episodes);
  const Rng base(seed);
  for (int k = 0; k < episodes; ++k) {
    Rng stream = base.substream(static_cast<std::uint64_t>(k));
    data.episodes.push_back(sample_trajectory(mdp, policy, stream));
  }
  return data;
}

std::vector<double> exact_q_values(const TabularMdp& mdp, const Policy& policy) {
  check_same_shape(mdp, policy);
  const int S = mdp.n_states, A = mdp.n_actions, H = mdp.horizon;
  const std::size_t sa = static_cast<std::size_t>(S) * A;
  std::vector<double> q(static_cast<std::size_t>(H) * sa, 0.0);
  std::vector<double> v_next(S, 0.0);  // V_{h+1}
  for (int h = H - 1; h >= 0; --h) {
    double* qh = q.data() + static_cast<std::size_t>(h) * sa;
    for (int s = 0; s < S; ++s) {
      for (int a = 0; a < A; ++a) {
        const auto row = mdp.transition_row(s, a);
        qh[s * A + a] = mdp.r(s, a) + kernels::dot(row.data(), v_next.data(), S);
      }
    }
    for (int s = 0; s < S; ++s)
      v_next[s] = kernels::dot(policy.row(s).data(), qh + static_cast<std::size_t>(s) * A, A);
  }
  return q;
}

double exact_policy_value(const TabularMdp& mdp, const Policy& policy) {
  const auto q = exact_q_values(mdp, policy);
  const int S = mdp.n_states, A = mdp.n_actions;
  double v = 0.0;
  for (int s = 0; s < S; ++s) {
    const double row = kernels::dot(policy.row(s).data(), q.data() + static_cast<std::size_t>(s) * A, A);
    v += mdp.initial_dist[s] * row;
  }
  return v;
}

OccupancyMeasures occupancy_measures(const TabularMdp& mdp, const Policy& policy) {
  check_same_shape(mdp, policy);
  const int S = mdp.n_states, A = mdp.n_actions, H = mdp.horizon;
  const std::size_t sa = static_cast<std::size_t>(S) * A;
  OccupancyMeasures occ;
  occ.horizon = H;
  occ.n_states = S;
  occ.n_actions = A;
  occ.per_step.assign(static_cast<std::size_t>(H) * sa, 0.0);
  occ.averaged.assign(sa, 0.0);
  occ.weighted_tilde.assign(sa, 0.0);

  std::vector<double> state_law = mdp.initial_dist;
  std::vector<double> next_law(S, 0.0);
  const double tilde_norm = 2.0 / (static_cast<double>(H) * (H + 1));
  for (int h = 0; h < H; ++h) {
    double* step = occ.per_step.data() + static_cast<std::size_t>(h) * sa;
    for (int s = 0; s < S; ++s)
      for (int a = 0; a < A; ++a) step[s * A + a] = state_law[s] * policy.prob(s, a);
    kernels::axpy(1.0 / H, step, occ.averaged.data(), sa);
    kernels::axpy(tilde_norm * (H - h), step, occ.weighted_tilde.data(), sa);
    std::fill(next_law.begin(), next_law.end(), 0.0);
    for (int s = 0; s < S; ++s)
      for (int a = 0; a < A; ++a)
        kernels::axpy(step[s * A + a], mdp.transition_row(s, a).data(), next_law.data(), S);
    state_law.swap(next_law);
  }
  return occ;
}

}  // namespace fqeval
