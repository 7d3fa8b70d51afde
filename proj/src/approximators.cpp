#include "fqeval/approximators.hpp"

#include <algorithm>
#include <cmath>

#include "fqeval/errors.hpp"
#include "fqeval/kernels.hpp"
#include "fqeval/rng.hpp"

namespace fqeval {

FeatureMap FeatureMap::one_hot(int n_states, int n_actions) {
  if (n_states < 1 || n_actions < 1)
    throw ConfigError("FeatureMap: dimensions must be positive");
  FeatureMap f;
  f.kind = Kind::one_hot;
  f.n_states = n_states;
  f.n_actions = n_actions;
  f.dim = n_states * n_actions;
  f.table.assign(static_cast<std::size_t>(f.dim) * f.dim, 0.0);
  for (int i = 0; i < f.dim; ++i) f.table[static_cast<std::size_t>(i) * f.dim + i] = 1.0;
  return f;
}

FeatureMap FeatureMap::random_linear(int n_states, int n_actions, int dim,
                                     std::uint64_t seed) {
  if (n_states < 1 || n_actions < 1 || dim < 1)
    throw ConfigError("FeatureMap: dimensions must be positive");
  FeatureMap f;
  f.kind = Kind::random_linear;
  f.n_states = n_states;
  f.n_actions = n_actions;
  f.dim = dim;
  Rng rng(seed, 0xfea7u);
  f.table.resize(static_cast<std::size_t>(n_states) * n_actions * dim);
  for (auto& v : f.table) v = 2.0 * rng.uniform() - 1.0;
  return f;
}

FeatureMap FeatureMap::custom(int n_states, int n_actions, int dim,
                              std::vector<double> table) {
  if (table.size() != static_cast<std::size_t>(n_states) * n_actions * dim)
    throw ConfigError("FeatureMap: table size does not match dimensions");
  for (double v : table)
    if (!std::isfinite(v)) throw ConfigError("FeatureMap: non-finite feature entry");
  FeatureMap f;
  f.kind = Kind::custom_table;
  f.n_states = n_states;
  f.n_actions = n_actions;
  f.dim = dim;
  f.table = std::move(table);
  return f;
}

namespace {

void check_dims(std::size_t theta, std::size_t phi, int d, int m) {
  if (theta != static_cast<std::size_t>(d))
    throw ConfigError("approximator: parameter vector has wrong length");
  if (phi != static_cast<std::size_t>(m))
    throw ConfigError("approximator: feature vector has wrong length");
}

}  // namespace

double LinearApprox::eval(std::span<const double> theta, std::span<const double> phi) const {
  check_dims(theta.size(), phi.size(), dim(), feature_dim());
  return kernels::dot(theta.data(), phi.data(), theta.size());
}

void LinearApprox::grad(std::span<const double> theta, std::span<const double> phi,
                        std::span<double> out) const {
  check_dims(theta.size(), phi.size(), dim(), feature_dim());
  std::copy(phi.begin(), phi.end(), out.begin());
}

SmoothNetApprox::SmoothNetApprox(int feature_dim, int width) : m_(feature_dim), width_(width) {
  if (feature_dim < 1 || width < 1)
    throw ConfigError("SmoothNetApprox: feature_dim and width must be positive");
}

double SmoothNetApprox::eval(std::span<const double> theta, std::span<const double> phi) const {
  check_dims(theta.size(), phi.size(), dim(), m_);
  const double* w1 = theta.data();
  const double* b1 = w1 + static_cast<std::size_t>(width_) * m_;
  const double* w2 = b1 + width_;
  const double b2 = w2[width_];
  double out = b2;
  for (int i = 0; i < width_; ++i) {
    const double z = kernels::dot(w1 + static_cast<std::size_t>(i) * m_, phi.data(), m_) + b1[i];
    out += w2[i] * std::tanh(z);
  }
  if (!std::isfinite(out)) throw NumericError("smooth_net eval produced a non-finite value");
  return out;
}

void SmoothNetApprox::grad(std::span<const double> theta, std::span<const double> phi,
                           std::span<double> out) const {
  check_dims(theta.size(), phi.size(), dim(), m_);
  const double* w1 = theta.data();
  const double* b1 = w1 + static_cast<std::size_t>(width_) * m_;
  const double* w2 = b1 + width_;
  double* g_w1 = out.data();
  double* g_b1 = g_w1 + static_cast<std::size_t>(width_) * m_;
  double* g_w2 = g_b1 + width_;
  for (int i = 0; i < width_; ++i) {
    const double z = kernels::dot(w1 + static_cast<std::size_t>(i) * m_, phi.data(), m_) + b1[i];
    const double t = std::tanh(z);
    const double dsig = w2[i] * (1.0 - t * t);
    double* row = g_w1 + static_cast<std::size_t>(i) * m_;
    for (int j = 0; j < m_; ++j) row[j] = dsig * phi[j];
    g_b1[i] = dsig;
    g_w2[i] = t;
  }
  g_w2[width_] = 1.0;  // d/db2
}

std::unique_ptr<Approximator> make_approximator(std::string_view family,
                                                const FeatureMap& fmap, int net_width) {
  if (family == "linear") return std::make_unique<LinearApprox>(fmap.dim);
  if (family == "tabular") {
    if (fmap.kind != FeatureMap::Kind::one_hot)
      throw ConfigError("tabular family requires one-hot features");
    return std::make_unique<TabularApprox>(fmap.n_states, fmap.n_actions);
  }
  if (family == "smooth_net") return std::make_unique<SmoothNetApprox>(fmap.dim, net_width);
  throw ConfigError("unknown approximator family: " + std::string(family));
}

double expected_next_value(const Approximator& approx, std::span<const double> theta,
                           int s_next, const Policy& policy, const FeatureMap& fmap) {
  if (s_next < 0 || s_next >= fmap.n_states)
    throw ConfigError("expected_next_value: state index out of range");
  double acc = 0.0;
  for (int a = 0; a < fmap.n_actions; ++a) {
    const double pa = policy.prob(s_next, a);
    if (pa == 0.0) continue;
    acc += pa * approx.eval(theta, fmap.row(s_next, a));
  }
  return acc;
}

GradCheckReport grad_check(const Approximator& approx, int n_trials, std::uint64_t seed) {
  if (n_trials < 1) throw ConfigError("grad_check: n_trials must be positive");
  const int d = approx.dim();
  const int m = approx.feature_dim();
  Rng rng(seed, 0x6e4dcu);
  std::vector<double> theta(d), phi(m), analytic(d);
  const double step = 1e-5;
  GradCheckReport report;
  report.trials = n_trials;
  for (int trial = 0; trial < n_trials; ++trial) {
    for (auto& v : theta) v = 2.0 * rng.uniform() - 1.0;
    for (auto& v : phi) v = 2.0 * rng.uniform() - 1.0;
    approx.grad(theta, phi, analytic);
    for (int i = 0; i < d; ++i) {
      const double saved = theta[i];
      theta[i] = saved + step;
      const double fp = approx.eval(theta, phi);
      theta[i] = saved - step;
      const double fm = approx.eval(theta, phi);
      theta[i] = saved;
      const double fd = (fp - fm) / (2.0 * step);
      const double denom = std::max(std::abs(analytic[i]), std::abs(fd));
      double err;
      if (denom < 1e-8) {
        err = std::abs(analytic[i] - fd);  // absolute near zero
      } else {
        err = std::abs(analytic[i] - fd) / denom;
      }
      report.max_rel_error = std::max(report.max_rel_error, err);
    }
  }
  return report;
}

}  // namespace fqeval
