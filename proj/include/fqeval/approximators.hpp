#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fqeval/mdp.hpp"

// Differentiable parametric families f(theta, phi(s,a)) with analytic
// gradients. All families obey f(0, phi) = 0.

namespace fqeval {

struct FeatureMap {
  enum class Kind { one_hot, custom_table, random_linear };

  Kind kind = Kind::one_hot;
  int n_states = 0;
  int n_actions = 0;
  int dim = 0;
  std::vector<double> table;  // [(s*A + a)][dim] row-major

  std::span<const double> row(int s, int a) const {
    return {table.data() + (static_cast<std::size_t>(s) * n_actions + a) * dim,
            static_cast<std::size_t>(dim)};
  }
  int n_pairs() const { return n_states * n_actions; }

  static FeatureMap one_hot(int n_states, int n_actions);
  /// Entries i.i.d. uniform in [-1, 1], seeded.
  static FeatureMap random_linear(int n_states, int n_actions, int dim, std::uint64_t seed);
  static FeatureMap custom(int n_states, int n_actions, int dim, std::vector<double> table);
};

class Approximator {
 public:
  virtual ~Approximator() = default;

  virtual double eval(std::span<const double> theta, std::span<const double> phi) const = 0;
  virtual void grad(std::span<const double> theta, std::span<const double> phi,
                    std::span<double> out) const = 0;
  virtual int dim() const = 0;
  virtual int feature_dim() const = 0;
  virtual std::string_view family() const = 0;
  /// True when eval(theta, phi) = theta . g(phi); enables the closed-form
  /// least-squares solvers.
  virtual bool linear_in_theta() const { return false; }
};

/// f(theta, phi) = theta . phi, d = m.
class LinearApprox : public Approximator {
 public:
  explicit LinearApprox(int feature_dim) : m_(feature_dim) {}
  double eval(std::span<const double> theta, std::span<const double> phi) const override;
  void grad(std::span<const double> theta, std::span<const double> phi,
            std::span<double> out) const override;
  int dim() const override { return m_; }
  int feature_dim() const override { return m_; }
  std::string_view family() const override { return "linear"; }
  bool linear_in_theta() const override { return true; }

 private:
  int m_;
};

/// Linear over one-hot features; theta indexes (s,a) cells directly.
class TabularApprox : public LinearApprox {
 public:
  TabularApprox(int n_states, int n_actions)
      : LinearApprox(n_states * n_actions) {}
  std::string_view family() const override { return "tabular"; }
};

/// Single hidden layer, tanh activation:
///   f = w2 . tanh(W1 phi + b1) + b2.
/// Parameter layout (fixed, serialized as-is): W1 row-major (width x m),
/// then b1 (width), then w2 (width), then b2 (scalar);
/// d = width*m + 2*width + 1.
class SmoothNetApprox : public Approximator {
 public:
  SmoothNetApprox(int feature_dim, int width);
  double eval(std::span<const double> theta, std::span<const double> phi) const override;
  void grad(std::span<const double> theta, std::span<const double> phi,
            std::span<double> out) const override;
  int dim() const override { return width_ * m_ + 2 * width_ + 1; }
  int feature_dim() const override { return m_; }
  std::string_view family() const override { return "smooth_net"; }
  int width() const { return width_; }

 private:
  int m_;
  int width_;
};

std::unique_ptr<Approximator> make_approximator(std::string_view family,
                                                const FeatureMap& fmap, int net_width = 8);

/// sum_a pi(a | s_next) f(theta, phi(s_next, a)) as an exact finite sum.
double expected_next_value(const Approximator& approx, std::span<const double> theta,
                           int s_next, const Policy& policy, const FeatureMap& fmap);

struct GradCheckReport {
  double max_rel_error = 0.0;
  int trials = 0;
};

/// Central-difference check of the analytic gradient at random (theta, phi).
GradCheckReport grad_check(const Approximator& approx, int n_trials, std::uint64_t seed);

}  // namespace fqeval
