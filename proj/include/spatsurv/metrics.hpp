#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "spatsurv/data.hpp"
#include "spatsurv/forest.hpp"
#include "spatsurv/pipeline.hpp"

namespace spatsurv {

struct EvaluationGrid {
  std::vector<std::vector<double>> x_points;  // raw covariate vectors
  std::vector<double> t;                       // increasing, starts at 0, ends at t_max
  double t_max = 10.0;
  std::size_t n_replications = 20;
};

/// side x side cell midpoints on (0,1)^2 and `n_t` equally spaced times on [0, t_max].
EvaluationGrid default_evaluation_grid(std::size_t side = 11, std::size_t n_t = 150, double t_max = 10.0);

/// Survival values indexed by (replication, cluster, x point, t point).
class CurveSet {
 public:
  CurveSet() = default;
  CurveSet(std::size_t n_reps, std::size_t n_clusters, std::size_t n_x, std::size_t n_t)
      : n_reps_(n_reps), n_clusters_(n_clusters), n_x_(n_x), n_t_(n_t), values_(n_reps * n_clusters * n_x * n_t, 0.0) {}

  double& at(std::size_t r, std::size_t c, std::size_t x, std::size_t t) { return values_[index(r, c, x, t)]; }
  double at(std::size_t r, std::size_t c, std::size_t x, std::size_t t) const { return values_[index(r, c, x, t)]; }
  std::span<double> curve(std::size_t r, std::size_t c, std::size_t x) { return {&values_[index(r, c, x, 0)], n_t_}; }
  std::span<const double> curve(std::size_t r, std::size_t c, std::size_t x) const {
    return {&values_[index(r, c, x, 0)], n_t_};
  }

  std::size_t n_reps() const { return n_reps_; }
  std::size_t n_clusters() const { return n_clusters_; }
  std::size_t n_x() const { return n_x_; }
  std::size_t n_t() const { return n_t_; }

 private:
  std::size_t index(std::size_t r, std::size_t c, std::size_t x, std::size_t t) const {
    return ((r * n_clusters_ + c) * n_x_ + x) * n_t_ + t;
  }
  std::size_t n_reps_ = 0, n_clusters_ = 0, n_x_ = 0, n_t_ = 0;
  std::vector<double> values_;
};

/// Mean over replications, clusters and x points of (1/t_max) * trapezoid integral of
/// (S - S_hat)^2 over the t grid. Throws DataError when the two sets disagree in shape.
double amse(const CurveSet& truth, const CurveSet& fitted, std::span<const double> t_grid, double t_max);

/// Pointwise mean over replications; the result has a single replication.
CurveSet aes_curves(const CurveSet& fits);

/// Tidy rows: replication, cluster_id, x_index, x1.., t, estimate[, truth].
void write_curves_csv(const std::string& path, const EvaluationGrid& grid, const CurveSet& fitted,
                      const CurveSet* truth = nullptr);

/// Integrated absolute deviation (trapezoid) between two curves on a grid.
double integrated_abs_deviation(std::span<const double> a, std::span<const double> b, std::span<const double> t);

struct VariableImportance {
  std::vector<double> scores;  // one per ensemble feature
  std::size_t draws_used = 0;
  std::size_t splitless_draws = 0;
  bool all_splitless = false;
};

/// Split-count share per feature for each draw, averaged over draws with at least one split.
VariableImportance variable_importance(std::span<const Forest> forests, std::size_t n_features);

/// Per-feature branch counts of one forest.
std::vector<std::size_t> split_counts(const Forest& forest, std::size_t n_features);

struct LysQuery {
  std::vector<double> x;       // scaled
  std::vector<double> x_star;  // scaled
  std::size_t cluster = 0;
  double horizon = 5.0;
  std::optional<double> m_star;  // intervened cluster covariate; the draw's own M otherwise
  double level = 0.95;
  std::size_t grid_intervals = 400;  // even; Simpson's rule
  std::size_t max_draws = 0;
};

struct LysResult {
  double estimate = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  std::vector<double> per_draw;
};

LysResult lys(const WeightedPosterior& posterior, const LysQuery& query);

struct ResidualRow {
  std::size_t cluster = 0;
  double time = 0.0;
  int event = 0;
  double cox_snell = 0.0;
  double deviance = 0.0;
};

struct NelsonAalenPoint {
  double residual = 0.0;
  double cumulative_hazard = 0.0;
};

struct ResidualReport {
  std::vector<ResidualRow> rows;
  std::vector<NelsonAalenPoint> nelson_aalen;
};

struct ResidualOptions {
  std::size_t max_draws = 100;
  std::size_t grid_points = 64;  // trapezoid points on [0, y] per subject
};

/// Cumulative hazard at each observed time using posterior-mean lambda0 and W and the
/// draw-averaged probit term, then deviance residuals and the Nelson-Aalen estimate of r.
ResidualReport cox_snell_residuals(const WeightedPosterior& posterior, std::span<const SurvivalRecord> records,
                                   const ResidualOptions& options = {});

/// sign(m) sqrt(-2 [m + delta log(delta - m)]) with m = delta - r; r is clamped to 1e-300 when delta = 1.
double deviance_residual(double r, int event);

std::vector<NelsonAalenPoint> nelson_aalen(std::span<const double> r, std::span<const int> event);

}  // namespace spatsurv
