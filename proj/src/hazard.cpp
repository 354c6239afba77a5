#include "spatsurv/hazard.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace spatsurv {

void make_point(double scaled_time, double m_value, std::span<const double> x, std::span<double> out) {
  out[kTimeFeature] = scaled_time;
  out[kClusterFeature] = m_value;
  std::copy(x.begin(), x.end(), out.begin() + kFirstCovariateFeature);
}

std::vector<double> make_point(double scaled_time, double m_value, std::span<const double> x) {
  std::vector<double> out(ensemble_dimension(x.size()));
  make_point(scaled_time, m_value, x, out);
  return out;
}

double ProbitSurface::b(double t, double m_value, std::span<const double> x) const {
  double buf[32];
  std::vector<double> heap;
  const std::size_t d = ensemble_dimension(x.size());
  std::span<double> point(buf, d);
  if (d > 32) {
    heap.resize(d);
    point = heap;
  }
  make_point(t / time_scale, m_value, x, point);
  return forest.evaluate(point);
}

double hazard_at(double t, std::span<const double> x, const HazardParams& params, const ProbitSurface& surface) {
  return params.lambda0 * params.frailty * normal_cdf(std::clamp(surface.b(t, params.m_value, x), -kProbitClamp, kProbitClamp));
}

double integrated_probit(double t0, double t1, std::span<const double> x, double m_value, const ProbitSurface& surface,
                         std::size_t grid_size) {
  if (grid_size < 2) throw std::invalid_argument("grid_size must be at least 2");
  if (t1 <= t0) return 0.0;
  const double h = (t1 - t0) / static_cast<double>(grid_size - 1);
  double total = 0.0;
  double prev = normal_cdf(surface.b(t0, m_value, x));
  for (std::size_t k = 1; k < grid_size; ++k) {
    const double t = (k + 1 == grid_size) ? t1 : t0 + h * static_cast<double>(k);
    const double cur = normal_cdf(surface.b(t, m_value, x));
    total += 0.5 * h * (prev + cur);
    prev = cur;
  }
  return total;
}

double cumulative_hazard(double t, std::span<const double> x, const HazardParams& params, const ProbitSurface& surface,
                         std::size_t grid_size) {
  if (t < 0) throw std::invalid_argument("cumulative_hazard needs t >= 0");
  return params.lambda0 * params.frailty * integrated_probit(0.0, t, x, params.m_value, surface, grid_size);
}

double survival_function(double t, std::span<const double> x, const HazardParams& params, const ProbitSurface& surface,
                         std::size_t grid_size) {
  return std::exp(-cumulative_hazard(t, x, params, surface, grid_size));
}

std::vector<double> integrated_probit_curve(std::span<const double> t_grid, std::span<const double> x, double m_value,
                                            const ProbitSurface& surface, std::size_t substeps) {
  substeps = std::max<std::size_t>(substeps, 1);
  // Trees that never split on time contribute a constant along the curve; evaluate them once.
  std::vector<double> point = make_point(0.0, m_value, x);
  double offset = 0.0;
  std::vector<const SoftTree*> timed;
  for (const auto& tree : surface.forest.trees) {
    const bool uses_time = std::any_of(tree.nodes().begin(), tree.nodes().end(), [](const SoftTree::Node& n) {
      return !n.is_leaf() && n.rule.feature == kTimeFeature;
    });
    if (uses_time) {
      timed.push_back(&tree);
    } else {
      offset += tree.evaluate(point);
    }
  }
  const auto phi_at = [&](double t) {
    point[kTimeFeature] = t / surface.time_scale;
    double b = offset;
    for (const SoftTree* tree : timed) b += tree->evaluate(point);
    return normal_cdf(b);
  };

  std::vector<double> out(t_grid.size());
  double acc = 0.0;
  double prev_t = 0.0;
  double prev_v = phi_at(0.0);
  for (std::size_t g = 0; g < t_grid.size(); ++g) {
    const double t = t_grid[g];
    if (t < prev_t) throw std::invalid_argument("time grid must be increasing and nonnegative");
    if (t > prev_t) {
      const double h = (t - prev_t) / static_cast<double>(substeps);
      for (std::size_t s = 1; s <= substeps; ++s) {
        const double ts = (s == substeps) ? t : prev_t + h * static_cast<double>(s);
        const double v = phi_at(ts);
        acc += 0.5 * h * (prev_v + v);
        prev_v = v;
      }
      prev_t = t;
    }
    out[g] = acc;
  }
  return out;
}

void RejectedPoints::clear() {
  times_.clear();
  offsets_.assign(1, 0);
}

void RejectedPoints::append(std::span<const double> times) {
  times_.insert(times_.end(), times.begin(), times.end());
  offsets_.push_back(times_.size());
}

std::vector<double> augment_rejected_points(const SurvivalRecord& record, const HazardParams& params,
                                            const ProbitSurface& surface, Rng& rng, std::vector<double>* b_values) {
  const double mean = params.lambda0 * record.time * params.frailty;
  const auto q = std::poisson_distribution<long>(mean)(rng);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<double> candidates(static_cast<std::size_t>(q));
  for (auto& c : candidates) c = record.time * unif(rng);
  std::sort(candidates.begin(), candidates.end());
  std::vector<double> kept;
  if (b_values) b_values->clear();
  for (double g : candidates) {
    const double u = unif(rng);
    if (g <= 0.0) continue;
    const double b = surface.b(g, params.m_value, record.covariates);
    if (u <= 1.0 - normal_cdf(b)) {
      kept.push_back(g);
      if (b_values) b_values->push_back(b);
    }
  }
  return kept;
}

double complete_loglik_subject(const SurvivalRecord& record, std::span<const double> rejected,
                               const HazardParams& params, const ProbitSurface& surface) {
  const double log_rate = std::log(params.lambda0 * params.frailty);
  double ll = -params.lambda0 * params.frailty * record.time;
  if (record.event == 1) ll += log_rate + log_normal_cdf(surface.b(record.time, params.m_value, record.covariates));
  for (double g : rejected) ll += log_rate + log_normal_ccdf(surface.b(g, params.m_value, record.covariates));
  return ll;
}

double sample_event_time_thinning(std::span<const double> x, const HazardParams& params, const ProbitSurface& surface,
                                  Rng& rng, double horizon) {
  const double rate = params.lambda0 * params.frailty;
  std::exponential_distribution<double> gap(rate);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  double t = 0.0;
  while (true) {
    t += gap(rng);
    if (t >= horizon) return INFINITY;
    if (unif(rng) <= normal_cdf(surface.b(t, params.m_value, x))) return t;
  }
}

}  // namespace spatsurv
