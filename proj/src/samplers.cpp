#include "spatsurv/samplers.hpp"

#include <algorithm>
#include <cmath>

namespace spatsurv {

bool leapfrog(const LogDensityTarget& target, Eigen::VectorXd& position, Eigen::VectorXd& momentum, double step_size,
              int n_steps, const Eigen::VectorXd& inv_mass) {
  Eigen::VectorXd grad = target.gradient(position);
  if (!grad.allFinite()) return false;
  for (int s = 0; s < n_steps; ++s) {
    momentum += 0.5 * step_size * grad;
    position += step_size * inv_mass.cwiseProduct(momentum);
    grad = target.gradient(position);
    if (!grad.allFinite()) return false;
    momentum += 0.5 * step_size * grad;
  }
  return true;
}

HmcResult hmc_step(const LogDensityTarget& target, const Eigen::VectorXd& state, const HmcSettings& settings, Rng& rng) {
  const auto dim = state.size();
  const Eigen::VectorXd mass = settings.mass.size() == dim ? settings.mass : Eigen::VectorXd::Ones(dim);
  const Eigen::VectorXd inv_mass = mass.cwiseInverse();

  std::normal_distribution<double> norm(0.0, 1.0);
  Eigen::VectorXd momentum(dim);
  for (Eigen::Index i = 0; i < dim; ++i) momentum[i] = norm(rng) * std::sqrt(mass[i]);

  HmcResult result;
  result.state = state;
  const double h0 = -target.value(state) + 0.5 * momentum.dot(inv_mass.cwiseProduct(momentum));

  Eigen::VectorXd q = state;
  Eigen::VectorXd p = momentum;
  const bool ok = leapfrog(target, q, p, settings.step_size, settings.n_leapfrog, inv_mass);
  const double h1 = ok ? -target.value(q) + 0.5 * p.dot(inv_mass.cwiseProduct(p)) : INFINITY;
  result.energy_error = h1 - h0;
  if (!std::isfinite(result.energy_error) || result.energy_error > kDivergenceThreshold) {
    result.divergent = true;
    result.accept_prob = 0.0;
    return result;
  }
  result.accept_prob = std::min(1.0, std::exp(-result.energy_error));
  if (std::uniform_real_distribution<double>(0.0, 1.0)(rng) < result.accept_prob) {
    result.state = std::move(q);
    result.accepted = true;
  }
  return result;
}

StepSizeAdapter::StepSizeAdapter(double initial_step, double target, double gamma, double t0, double kappa)
    : mu_(std::log(initial_step)),
      target_(target),
      gamma_(gamma),
      t0_(t0),
      kappa_(kappa),
      log_step_(std::log(initial_step)),
      log_step_bar_(std::log(initial_step)) {}

double StepSizeAdapter::update(double accept_prob) {
  ++t_;
  const double t = static_cast<double>(t_);
  const double eta = 1.0 / (t + t0_);
  h_bar_ = (1.0 - eta) * h_bar_ + eta * (target_ - accept_prob);
  log_step_ = mu_ - std::sqrt(t) / gamma_ * h_bar_;
  const double w = std::pow(t, -kappa_);
  log_step_bar_ = w * log_step_ + (1.0 - w) * log_step_bar_;
  return current();
}

double StepSizeAdapter::current() const { return std::exp(log_step_); }
double StepSizeAdapter::final_step() const { return std::exp(log_step_bar_); }

double adapt_step_size(std::span<const double> accept_history, const HmcSettings& settings) {
  StepSizeAdapter adapter(settings.step_size, settings.adapt_target);
  for (double a : accept_history) adapter.update(a);
  return adapter.final_step();
}

namespace {

// Standard normal restricted to (lower, inf).
double lower_truncated_standard(double lower, Rng& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  if (lower <= 0.25) {
    std::normal_distribution<double> norm(0.0, 1.0);
    while (true) {
      const double z = norm(rng);
      if (z > lower) return z;
    }
  }
  // exponential proposal with the optimal rate for this bound
  const double rate = 0.5 * (lower + std::sqrt(lower * lower + 4.0));
  std::exponential_distribution<double> expo(rate);
  while (true) {
    const double z = lower + expo(rng);
    const double d = z - rate;
    if (unif(rng) <= std::exp(-0.5 * d * d)) return z;
  }
}

}  // namespace

double sample_truncated_normal(double mean, TruncationSide side, Rng& rng) {
  if (side == TruncationSide::kPositive) return mean + lower_truncated_standard(-mean, rng);
  return -(-mean + lower_truncated_standard(mean, rng));
}

GradientAudit audit_gradient(const LogDensityTarget& target, std::span<const Eigen::VectorXd> points, double h,
                             double tolerance) {
  GradientAudit audit;
  for (const auto& x : points) {
    const Eigen::VectorXd g = target.gradient(x);
    Eigen::VectorXd fd(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      auto at = [&](double offset) {
        Eigen::VectorXd y = x;
        y[i] += offset;
        return target.value(y);
      };
      fd[i] = (-at(2 * h) + 8 * at(h) - 8 * at(-h) + at(-2 * h)) / (12 * h);
    }
    const double err = (fd - g).cwiseAbs().maxCoeff() / std::max(1.0, g.cwiseAbs().maxCoeff());
    audit.max_rel_error = std::max(audit.max_rel_error, err);
  }
  audit.passed = audit.max_rel_error < tolerance;
  return audit;
}

}  // namespace spatsurv
