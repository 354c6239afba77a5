#include "spatsurv/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "spatsurv/posterior_io.hpp"

namespace spatsurv {

EvaluationGrid default_evaluation_grid(std::size_t side, std::size_t n_t, double t_max) {
  EvaluationGrid g;
  for (std::size_t a = 0; a < side; ++a) {
    for (std::size_t b = 0; b < side; ++b) {
      g.x_points.push_back({(a + 0.5) / static_cast<double>(side), (b + 0.5) / static_cast<double>(side)});
    }
  }
  for (std::size_t k = 0; k < n_t; ++k) g.t.push_back(t_max * static_cast<double>(k) / static_cast<double>(n_t - 1));
  g.t_max = t_max;
  return g;
}

double amse(const CurveSet& truth, const CurveSet& fitted, std::span<const double> t_grid, double t_max) {
  if (truth.n_reps() != fitted.n_reps() || truth.n_clusters() != fitted.n_clusters() || truth.n_x() != fitted.n_x() ||
      truth.n_t() != fitted.n_t()) {
    throw DataError("fitted curves do not cover every replication, cluster and grid point");
  }
  if (t_grid.size() != truth.n_t() || t_grid.size() < 2) throw DataError("time grid does not match the curves");
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t r = 0; r < truth.n_reps(); ++r) {
    for (std::size_t c = 0; c < truth.n_clusters(); ++c) {
      for (std::size_t x = 0; x < truth.n_x(); ++x) {
        const auto s = truth.curve(r, c, x);
        const auto f = fitted.curve(r, c, x);
        double integral = 0.0;
        for (std::size_t k = 1; k < t_grid.size(); ++k) {
          const double e0 = s[k - 1] - f[k - 1], e1 = s[k] - f[k];
          integral += 0.5 * (t_grid[k] - t_grid[k - 1]) * (e0 * e0 + e1 * e1);
        }
        total += integral / t_max;
        ++count;
      }
    }
  }
  return total / static_cast<double>(count);
}

CurveSet aes_curves(const CurveSet& fits) {
  CurveSet out(1, fits.n_clusters(), fits.n_x(), fits.n_t());
  for (std::size_t c = 0; c < fits.n_clusters(); ++c) {
    for (std::size_t x = 0; x < fits.n_x(); ++x) {
      for (std::size_t t = 0; t < fits.n_t(); ++t) {
        double sum = 0.0;
        for (std::size_t r = 0; r < fits.n_reps(); ++r) sum += fits.at(r, c, x, t);
        out.at(0, c, x, t) = sum / static_cast<double>(fits.n_reps());
      }
    }
  }
  return out;
}

void write_curves_csv(const std::string& path, const EvaluationGrid& grid, const CurveSet& fitted, const CurveSet* truth) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << "replication,cluster_id,x_index";
  const std::size_t dx = grid.x_points.empty() ? 0 : grid.x_points.front().size();
  for (std::size_t k = 0; k < dx; ++k) out << ",x" << k + 1;
  out << ",t,estimate" << (truth ? ",truth" : "") << '\n';
  for (std::size_t r = 0; r < fitted.n_reps(); ++r) {
    for (std::size_t c = 0; c < fitted.n_clusters(); ++c) {
      for (std::size_t x = 0; x < fitted.n_x(); ++x) {
        for (std::size_t t = 0; t < fitted.n_t(); ++t) {
          out << r + 1 << ',' << c + 1 << ',' << x + 1;
          for (double v : grid.x_points[x]) out << ',' << format_double(v);
          out << ',' << format_double(grid.t[t]) << ',' << format_double(fitted.at(r, c, x, t));
          if (truth) out << ',' << format_double(truth->at(std::min(r, truth->n_reps() - 1), c, x, t));
          out << '\n';
        }
      }
    }
  }
}

double integrated_abs_deviation(std::span<const double> a, std::span<const double> b, std::span<const double> t) {
  double total = 0.0;
  for (std::size_t k = 1; k < t.size(); ++k) {
    total += 0.5 * (t[k] - t[k - 1]) * (std::abs(a[k - 1] - b[k - 1]) + std::abs(a[k] - b[k]));
  }
  return total;
}

std::vector<std::size_t> split_counts(const Forest& forest, std::size_t n_features) {
  std::vector<std::size_t> counts(n_features, 0);
  for (const auto& tree : forest.trees) {
    for (auto b : tree.branch_nodes()) {
      const auto f = tree.nodes()[b].rule.feature;
      if (f < n_features) ++counts[f];
    }
  }
  return counts;
}

VariableImportance variable_importance(std::span<const Forest> forests, std::size_t n_features) {
  VariableImportance vi;
  vi.scores.assign(n_features, 0.0);
  for (const auto& forest : forests) {
    const auto counts = split_counts(forest, n_features);
    const std::size_t total = std::accumulate(counts.begin(), counts.end(), std::size_t{0});
    if (total == 0) {
      ++vi.splitless_draws;
      continue;
    }
    ++vi.draws_used;
    for (std::size_t f = 0; f < n_features; ++f) vi.scores[f] += static_cast<double>(counts[f]) / static_cast<double>(total);
  }
  if (vi.draws_used == 0) {
    vi.all_splitless = true;
    return vi;
  }
  for (auto& s : vi.scores) s /= static_cast<double>(vi.draws_used);
  return vi;
}

LysResult lys(const WeightedPosterior& posterior, const LysQuery& query) {
  if (query.cluster >= posterior.n_clusters()) throw DataError("unknown cluster " + std::to_string(query.cluster + 1));
  if (!(query.horizon > 0)) throw DataError("LYS horizon must be positive");
  if (query.x.size() != query.x_star.size()) throw DataError("x and x_star differ in length");
  const std::size_t n_int = std::max<std::size_t>(2, query.grid_intervals + query.grid_intervals % 2);
  std::vector<double> t(n_int + 1);
  for (std::size_t k = 0; k <= n_int; ++k) t[k] = query.horizon * static_cast<double>(k) / static_cast<double>(n_int);
  const double h = query.horizon / static_cast<double>(n_int);

  const auto idx = select_draws(posterior.size(), query.max_draws);
  LysResult out;
  std::vector<double> w;
  for (auto s : idx) {
    const auto& d = posterior.draws[s];
    const auto base = draw_survival_curve(d, posterior.time_scale, query.x, query.cluster, t, 1);
    const auto star = draw_survival_curve(d, posterior.time_scale, query.x_star, query.cluster, t, 1, query.m_star);
    double integral = 0.0;
    for (std::size_t k = 0; k <= n_int; ++k) {
      const double coef = (k == 0 || k == n_int) ? 1.0 : (k % 2 ? 4.0 : 2.0);
      integral += coef * (star[k] - base[k]);
    }
    out.per_draw.push_back(integral * h / 3.0);
    w.push_back(posterior.weights[s]);
  }
  const double wsum = std::accumulate(w.begin(), w.end(), 0.0);
  for (std::size_t k = 0; k < w.size(); ++k) out.estimate += w[k] / wsum * out.per_draw[k];
  out.lower = weighted_quantile(out.per_draw, w, 0.5 * (1.0 - query.level));
  out.upper = weighted_quantile(out.per_draw, w, 0.5 * (1.0 + query.level));
  return out;
}

double deviance_residual(double r, int event) {
  const double delta = event ? 1.0 : 0.0;
  if (event) r = std::max(r, 1e-300);
  const double m = delta - r;
  // delta - m is r itself; using r avoids log(0) from cancellation when r is tiny
  const double inner = -2.0 * (m + (event ? std::log(r) : 0.0));
  const double mag = std::sqrt(std::max(inner, 0.0));
  return m > 0 ? mag : (m < 0 ? -mag : 0.0);
}

std::vector<NelsonAalenPoint> nelson_aalen(std::span<const double> r, std::span<const int> event) {
  std::vector<std::size_t> order(r.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return r[a] < r[b]; });
  std::vector<NelsonAalenPoint> out;
  double cum = 0.0;
  std::size_t k = 0;
  const std::size_t n = order.size();
  while (k < n) {
    // group ties so the risk set counts every subject with r >= the current value
    std::size_t end = k;
    int deaths = 0;
    while (end < n && r[order[end]] == r[order[k]]) deaths += event[order[end++]];
    if (deaths > 0) {
      cum += static_cast<double>(deaths) / static_cast<double>(n - k);
      out.push_back({r[order[k]], cum});
    }
    k = end;
  }
  return out;
}

ResidualReport cox_snell_residuals(const WeightedPosterior& posterior, std::span<const SurvivalRecord> records,
                                   const ResidualOptions& options) {
  const auto idx = select_draws(posterior.size(), options.max_draws);
  std::vector<double> w;
  for (auto s : idx) w.push_back(posterior.weights[s]);
  const double wsum = std::accumulate(w.begin(), w.end(), 0.0);
  for (auto& v : w) v /= wsum;

  double lambda_bar = 0.0;
  Eigen::VectorXd w_bar = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(posterior.n_clusters()));
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const auto& d = posterior.draws[idx[k]];
    lambda_bar += w[k] * d.lambda0;
    w_bar += w[k] * d.log_frailty.array().exp().matrix();
  }

  ResidualReport rep;
  const std::size_t g = std::max<std::size_t>(options.grid_points, 2);
  std::vector<double> r_values;
  std::vector<int> events;
  for (const auto& rec : records) {
    if (rec.cluster >= posterior.n_clusters()) throw DataError("record cluster outside the posterior");
    // Trapezoid over [0, y] of the draw-averaged Phi(b).
    double integral = 0.0, prev = 0.0;
    for (std::size_t q = 0; q < g; ++q) {
      const double t = rec.time * static_cast<double>(q) / static_cast<double>(g - 1);
      double phi = 0.0;
      for (std::size_t k = 0; k < idx.size(); ++k) {
        const auto& d = posterior.draws[idx[k]];
        const ProbitSurface surface{d.forest, posterior.time_scale};
        phi += w[k] * normal_cdf(std::clamp(surface.b(t, d.m[static_cast<Eigen::Index>(rec.cluster)], rec.covariates),
                                            -kProbitClamp, kProbitClamp));
      }
      if (q > 0) integral += 0.5 * (rec.time / static_cast<double>(g - 1)) * (prev + phi);
      prev = phi;
    }
    ResidualRow row;
    row.cluster = rec.cluster;
    row.time = rec.time;
    row.event = rec.event;
    row.cox_snell = lambda_bar * w_bar[static_cast<Eigen::Index>(rec.cluster)] * integral;
    row.deviance = deviance_residual(row.cox_snell, rec.event);
    r_values.push_back(row.cox_snell);
    events.push_back(rec.event);
    rep.rows.push_back(row);
  }
  rep.nelson_aalen = nelson_aalen(r_values, events);
  return rep;
}

}  // namespace spatsurv
