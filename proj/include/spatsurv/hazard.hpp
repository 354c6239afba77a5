#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "spatsurv/common.hpp"
#include "spatsurv/data.hpp"
#include "spatsurv/forest.hpp"

namespace spatsurv {

/// Layout of the ensemble input: scaled time, cluster covariate M, then the subject covariates.
inline constexpr std::size_t kTimeFeature = 0;
inline constexpr std::size_t kClusterFeature = 1;
inline constexpr std::size_t kFirstCovariateFeature = 2;

inline std::size_t ensemble_dimension(std::size_t n_covariates) { return n_covariates + kFirstCovariateFeature; }

void make_point(double scaled_time, double m_value, std::span<const double> x, std::span<double> out);
std::vector<double> make_point(double scaled_time, double m_value, std::span<const double> x);

struct HazardParams {
  double lambda0 = 1.0;
  double frailty = 1.0;  // W = exp(R)
  double m_value = 0.5;
};

/// Forest plus the time scaling that maps years onto the ensemble's time coordinate.
struct ProbitSurface {
  const Forest& forest;
  double time_scale = 1.0;

  double b(double t, double m_value, std::span<const double> x) const;
};

inline constexpr std::size_t kDefaultHazardGrid = 150;

/// lambda0 W Phi(b(t, M, x)).
double hazard_at(double t, std::span<const double> x, const HazardParams& params, const ProbitSurface& surface);

/// Trapezoidal integral of Phi(b(s, M, x)) over [t0, t1] on `grid_size` points.
double integrated_probit(double t0, double t1, std::span<const double> x, double m_value, const ProbitSurface& surface,
                         std::size_t grid_size = kDefaultHazardGrid);
double cumulative_hazard(double t, std::span<const double> x, const HazardParams& params, const ProbitSurface& surface,
                         std::size_t grid_size = kDefaultHazardGrid);
double survival_function(double t, std::span<const double> x, const HazardParams& params, const ProbitSurface& surface,
                         std::size_t grid_size = kDefaultHazardGrid);

/// Cumulative integral of Phi(b) at every point of an increasing grid starting at or
/// after 0; each interval is split into `substeps` trapezoids and [0, grid[0]] into
/// max(substeps, 1) trapezoids.
std::vector<double> integrated_probit_curve(std::span<const double> t_grid, std::span<const double> x, double m_value,
                                            const ProbitSurface& surface, std::size_t substeps = 1);

/// Per-subject sorted latent rejected times stored in one arena.
class RejectedPoints {
 public:
  void clear();
  void append(std::span<const double> times);
  std::size_t n_subjects() const { return offsets_.size() - 1; }
  std::size_t total() const { return times_.size(); }
  std::span<const double> subject(std::size_t j) const {
    return {times_.data() + offsets_[j], offsets_[j + 1] - offsets_[j]};
  }
  std::size_t count(std::size_t j) const { return offsets_[j + 1] - offsets_[j]; }

 private:
  std::vector<double> times_;
  std::vector<std::size_t> offsets_{0};
};

/// Thinning draw of the rejected points of one subject: q ~ Poisson(lambda0 W y),
/// candidates uniform on (0, y), each kept with probability 1 - Phi(b). Kept times are
/// sorted and their ensemble values returned alongside when `b_values` is non-null.
std::vector<double> augment_rejected_points(const SurvivalRecord& record, const HazardParams& params,
                                            const ProbitSurface& surface, Rng& rng,
                                            std::vector<double>* b_values = nullptr);

/// log of the complete-data likelihood contribution of one subject.
double complete_loglik_subject(const SurvivalRecord& record, std::span<const double> rejected,
                               const HazardParams& params, const ProbitSurface& surface);

/// First accepted point of a rate-lambda0 W Poisson process thinned with probability
/// Phi(b); returns +inf if no point is accepted before `horizon`.
double sample_event_time_thinning(std::span<const double> x, const HazardParams& params, const ProbitSurface& surface,
                                  Rng& rng, double horizon = INFINITY);

}  // namespace spatsurv
