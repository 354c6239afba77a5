#include "spatsurv/simulate.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "spatsurv/common.hpp"
#include "spatsurv/posterior_io.hpp"
#include "spatsurv/spatial.hpp"

namespace spatsurv {

Scenario parse_scenario(const std::string& name) {
  if (name == "A" || name == "a") return Scenario::kA;
  if (name == "B" || name == "b") return Scenario::kB;
  if (name == "C" || name == "c") return Scenario::kC;
  throw DataError("unknown scenario '" + name + "' (expected A, B or C)");
}

std::string scenario_name(Scenario s) {
  switch (s) {
    case Scenario::kA: return "A";
    case Scenario::kB: return "B";
    case Scenario::kC: return "C";
  }
  return "?";
}

const std::vector<std::string>& western10_names() {
  static const std::vector<std::string> names{"Escambia", "Santa Rosa", "Okaloosa", "Walton",  "Holmes",
                                              "Washington", "Bay",      "Jackson",  "Calhoun", "Gulf"};
  return names;
}

AdjacencyGraph western10_graph() {
  static const std::vector<std::pair<std::size_t, std::size_t>> one_based{
      {1, 2}, {2, 3}, {3, 4}, {4, 5}, {4, 6}, {4, 7}, {5, 6}, {5, 8},
      {6, 7}, {6, 8}, {6, 9}, {7, 9}, {7, 10}, {8, 9}, {9, 10}};
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  for (auto [i, j] : one_based) edges.emplace_back(i - 1, j - 1);
  return AdjacencyGraph::from_edges(10, edges);
}

namespace {

// Scenario B uses x1 W in the exponent and c alone as the prefactor; A and C use x1 and W c.
struct HazardShape {
  double slope;
  double scale;
};

HazardShape shape(Scenario s, double x1, double m, double w) {
  const double c = std::exp(0.25 * x1 * x1 + 0.5 * m);
  if (s == Scenario::kB) return {x1 * w, c};
  return {x1, w * c};
}

}  // namespace

double cumulative_hazard(Scenario s, double t, double x1, double m, double w) {
  const auto h = shape(s, x1, m, w);
  if (h.slope < 1e-8) return h.scale * t;
  return h.scale * std::expm1(h.slope * t) / h.slope;
}

double invert_cumulative_hazard(Scenario s, double u, double x1, double m, double w) {
  const double e = -std::log(u);
  const auto h = shape(s, x1, m, w);
  if (h.slope < 1e-8) return e / h.scale;
  return std::log1p(e * h.slope / h.scale) / h.slope;
}

double true_survival(Scenario s, double t, double x1, double m, double w) {
  return std::exp(-cumulative_hazard(s, t, x1, m, w));
}

Simulation gen_scenario(const ScenarioSpec& spec) {
  const std::size_t n = spec.n_clusters();
  if (spec.cluster_size == 0) throw DataError("cluster size must be positive");
  const CarStructure structure(spec.graph);
  const RhoBounds bounds = rho_bounds(structure);
  if (!bounds.contains(spec.rho0) || !bounds.contains(spec.rho1)) throw DataError("rho outside the graph's CAR bounds");
  if (!spec.survey_n0.empty() && spec.survey_n0.size() != n) throw DataError("survey_n0 length differs from cluster count");

  Rng rng(spec.seed);
  Simulation sim;
  auto& truth = sim.truth;
  truth.scenario = spec.scenario;
  const Eigen::VectorXd r = spec.fixed_log_frailty ? *spec.fixed_log_frailty
                                                   : sample_car({spec.sigma1 * spec.sigma1, spec.rho1}, structure, rng);
  const Eigen::VectorXd theta =
      spec.fixed_logit_m ? *spec.fixed_logit_m : sample_car({spec.sigma0 * spec.sigma0, spec.rho0}, structure, rng);
  if (r.size() != static_cast<Eigen::Index>(n) || theta.size() != static_cast<Eigen::Index>(n)) {
    throw DataError("fixed cluster effects differ in length from the graph");
  }
  truth.w = r.array().exp();
  if (spec.scenario == Scenario::kC) {
    truth.m = truth.w.array() / (1.0 + truth.w.array());
  } else {
    truth.m = theta.unaryExpr([](double v) { return expit(v); });
  }

  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto c = static_cast<Eigen::Index>(i);
    for (std::size_t j = 0; j < spec.cluster_size; ++j) {
      SimulatedSubject s;
      s.cluster = i;
      s.x1 = unif(rng);
      s.x2 = unif(rng);
      double u = unif(rng);
      while (u <= 0.0) u = unif(rng);
      s.time = invert_cumulative_hazard(spec.scenario, u, s.x1, truth.m[c], truth.w[c]);
      if (spec.censor_time && s.time > *spec.censor_time) {
        s.time = *spec.censor_time;
        s.event = 0;
      }
      truth.subjects.push_back(s);
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    const int n0 = spec.survey_n0.empty() ? 100 : spec.survey_n0[i];
    sim.survey.n0.push_back(n0);
    sim.survey.m0.push_back(std::binomial_distribution<int>(n0, truth.m[static_cast<Eigen::Index>(i)])(rng));
  }
  return sim;
}

SurvivalData to_survival_data(const SimulationTruth& truth, std::size_t n_clusters) {
  std::vector<std::vector<std::string>> raw;
  std::vector<double> times;
  for (const auto& s : truth.subjects) {
    raw.push_back({format_double(s.x1), format_double(s.x2)});
    times.push_back(s.time);
  }
  SurvivalData data;
  data.n_clusters = n_clusters;
  data.scaler = fit_scaler({"x1", "x2"}, raw, times, SurvivalSchema{});
  for (std::size_t k = 0; k < truth.subjects.size(); ++k) {
    const auto& s = truth.subjects[k];
    data.records.push_back({s.cluster, s.time, s.event, data.scaler.encode(raw[k])});
  }
  return data;
}

void write_simulated_survival(const std::string& path, const SimulationTruth& truth) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << "cluster_id,time,event,x1,x2\n";
  for (const auto& s : truth.subjects) {
    out << s.cluster + 1 << ',' << format_double(s.time) << ',' << s.event << ',' << format_double(s.x1) << ','
        << format_double(s.x2) << '\n';
  }
}

void write_truth(const std::string& dir, const SimulationTruth& truth) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::ofstream clusters(fs::path(dir) / "truth_clusters.csv");
  std::ofstream subjects(fs::path(dir) / "truth_subjects.csv");
  if (!clusters || !subjects) throw DataError("cannot write truth files in " + dir);
  clusters << "cluster_id,W,M,scenario\n";
  for (Eigen::Index i = 0; i < truth.w.size(); ++i) {
    clusters << i + 1 << ',' << format_double(truth.w[i]) << ',' << format_double(truth.m[i]) << ','
             << scenario_name(truth.scenario) << '\n';
  }
  subjects << "subject,cluster_id,x1,x2,time,event\n";
  for (std::size_t k = 0; k < truth.subjects.size(); ++k) {
    const auto& s = truth.subjects[k];
    subjects << k + 1 << ',' << s.cluster + 1 << ',' << format_double(s.x1) << ',' << format_double(s.x2) << ','
             << format_double(s.time) << ',' << s.event << '\n';
  }
}

}  // namespace spatsurv
