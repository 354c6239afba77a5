#pragma once

#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "spatsurv/common.hpp"

namespace spatsurv {

struct LogDensityTarget {
  std::size_t dimension = 0;
  std::function<double(const Eigen::VectorXd&)> value;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> gradient;
};

struct HmcSettings {
  double step_size = 0.1;
  int n_leapfrog = 25;
  /// Diagonal mass; empty means identity.
  Eigen::VectorXd mass;
  double adapt_target = 0.8;
};

/// Energy errors above this count as divergent transitions.
inline constexpr double kDivergenceThreshold = 1e3;

struct HmcResult {
  Eigen::VectorXd state;
  bool accepted = false;
  bool divergent = false;
  double energy_error = 0.0;  // H(proposal) - H(start)
  double accept_prob = 0.0;
};

/// Runs `n_steps` leapfrog steps in place. A negative step size integrates backwards.
/// Returns false if the gradient became non-finite.
bool leapfrog(const LogDensityTarget& target, Eigen::VectorXd& position, Eigen::VectorXd& momentum, double step_size,
              int n_steps, const Eigen::VectorXd& inv_mass);

HmcResult hmc_step(const LogDensityTarget& target, const Eigen::VectorXd& state, const HmcSettings& settings, Rng& rng);

/// Dual averaging of log step size toward a target acceptance rate. Centered on the
/// initial step size, so an acceptance stream exactly at target leaves it unchanged.
class StepSizeAdapter {
 public:
  StepSizeAdapter(double initial_step, double target, double gamma = 0.05, double t0 = 10.0, double kappa = 0.75);

  /// Feeds one acceptance probability; returns the step size for the next transition.
  double update(double accept_prob);
  double current() const;
  /// Averaged iterate, used once adaptation stops.
  double final_step() const;

 private:
  double mu_;
  double target_;
  double gamma_;
  double t0_;
  double kappa_;
  double h_bar_ = 0.0;
  double log_step_;
  double log_step_bar_;
  long t_ = 0;
};

/// Replays a history of acceptance probabilities through the adapter started at
/// settings.step_size; returns the averaged step size.
double adapt_step_size(std::span<const double> accept_history, const HmcSettings& settings);

enum class TruncationSide { kPositive, kNegative };

/// Normal(mean, 1) restricted to (0, inf) or (-inf, 0).
double sample_truncated_normal(double mean, TruncationSide side, Rng& rng);

struct GradientAudit {
  double max_rel_error = 0.0;
  bool passed = false;
};

/// Compares the analytic gradient with a five-point central difference. The error at
/// each point is ||fd - g||_inf / max(1, ||g||_inf).
GradientAudit audit_gradient(const LogDensityTarget& target, std::span<const Eigen::VectorXd> points, double h = 1e-4,
                             double tolerance = 1e-6);

}  // namespace spatsurv
