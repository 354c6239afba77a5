#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "spatsurv/data.hpp"

namespace spatsurv {

enum class Scenario { kA, kB, kC };

Scenario parse_scenario(const std::string& name);  // throws DataError
std::string scenario_name(Scenario s);

/// Ten-node county-style graph shipped with the library (also data/western10_adjacency.csv).
AdjacencyGraph western10_graph();
const std::vector<std::string>& western10_names();

struct ScenarioSpec {
  Scenario scenario = Scenario::kA;
  std::size_t cluster_size = 200;
  double sigma0 = 1.0, sigma1 = 1.0;  // standard deviations
  double rho0 = 0.5, rho1 = 0.5;
  AdjacencyGraph graph = western10_graph();
  std::vector<int> survey_n0;  // empty means 100 per cluster
  std::uint64_t seed = 1;
  /// Administrative censoring time; off by default.
  std::optional<double> censor_time;
  /// When set, these cluster effects are used instead of CAR draws (log W and logit M).
  std::optional<Eigen::VectorXd> fixed_log_frailty;
  std::optional<Eigen::VectorXd> fixed_logit_m;

  std::size_t n_clusters() const { return graph.n_nodes(); }
};

struct SimulatedSubject {
  std::size_t cluster = 0;  // zero-based
  double x1 = 0.0, x2 = 0.0;
  double time = 0.0;
  int event = 1;
};

struct SimulationTruth {
  Scenario scenario = Scenario::kA;
  Eigen::VectorXd w;  // frailty per cluster
  Eigen::VectorXd m;  // cluster covariate per cluster
  std::vector<SimulatedSubject> subjects;
};

struct Simulation {
  SimulationTruth truth;
  SurveyCounts survey;
};

Simulation gen_scenario(const ScenarioSpec& spec);

double cumulative_hazard(Scenario s, double t, double x1, double m, double w);
double invert_cumulative_hazard(Scenario s, double u, double x1, double m, double w);
double true_survival(Scenario s, double t, double x1, double m, double w);

/// Survival records with x1, x2 scaled the same way load_survival would scale them.
SurvivalData to_survival_data(const SimulationTruth& truth, std::size_t n_clusters);

/// cluster_id,time,event,x1,x2
void write_simulated_survival(const std::string& path, const SimulationTruth& truth);
/// truth_clusters.csv (cluster_id, W, M) and truth_subjects.csv (subject, cluster_id, x1, x2, time, event).
void write_truth(const std::string& dir, const SimulationTruth& truth);

}  // namespace spatsurv
