// Acceptance suite: one PASS/FAIL line per criterion, tolerances pinned below.
// Exit status is nonzero if any criterion fails.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <sstream>

#include <CLI11.hpp>
#include <boost/math/distributions/gamma.hpp>
#include <boost/math/distributions/inverse_gamma.hpp>

#include "spatsurv/metrics.hpp"
#include "spatsurv/pipeline.hpp"
#include "spatsurv/posterior_io.hpp"
#include "spatsurv/simulate.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using namespace spatsurv;

namespace {

// ---------------------------------------------------------------------------
// Tolerances

constexpr double kThinningKs = 0.02;
constexpr double kCarRelTol = 1e-10;
constexpr double kBoundsTol = 1e-10;
constexpr double kConjugacyKs = 0.01;
constexpr double kGradientTol = 1e-6;
constexpr double kStep1Tol = 0.01;
constexpr double kLeafSumTol = 1e-12;
constexpr double kHardSplitTol = 1e-12;
constexpr double kMarginalTol = 1e-8;
constexpr double kWeightTol = 1e-12;
constexpr double kScenarioAmseMax = 0.35;
constexpr int kProbesRequired = 3;
constexpr double kGewekeSe = 3.0;

struct Protocol {
  std::size_t replications = 5;
  std::size_t burn_in = 500;
  std::size_t draws = 1000;
  std::size_t curve_draws = 100;  // evenly spaced subset used to evaluate the 121 x 150 grid
  std::size_t cluster_size = 200;
  std::size_t geweke_cycles = 20000;
};

int failures = 0;

void report(const std::string& name, bool pass, const std::string& detail) {
  std::cout << (pass ? "PASS " : "FAIL ") << name << ": " << detail << std::endl;
  failures += !pass;
}

std::string fmt(const char* pattern, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, pattern, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<CarStructure> small_graphs() {
  std::vector<CarStructure> g;
  g.emplace_back(AdjacencyGraph::from_edges(2, {{0, 1}}));
  g.emplace_back(AdjacencyGraph::from_edges(3, {{0, 1}, {1, 2}}));
  g.emplace_back(AdjacencyGraph::from_edges(3, {{0, 1}, {1, 2}, {0, 2}}));
  g.emplace_back(AdjacencyGraph::from_edges(4, {{0, 1}, {1, 2}, {2, 3}, {3, 0}}));
  g.emplace_back(AdjacencyGraph::from_edges(4, {{0, 1}, {0, 2}, {0, 3}}));
  g.emplace_back(AdjacencyGraph::from_edges(5, {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {1, 3}, {0, 4}}));
  g.emplace_back(AdjacencyGraph::from_edges(5, {{0, 1}, {0, 2}, {0, 3}, {0, 4}, {1, 2}, {3, 4}}));
  return g;
}

// ---------------------------------------------------------------------------
// Property criteria

void thinning() {
  const auto t0 = std::chrono::steady_clock::now();
  const Forest f(1, 0.0);
  const ProbitSurface s{f, 1.0};
  const std::vector<double> x;
  Rng rng(101);
  std::vector<double> times;
  for (int k = 0; k < 100000; ++k) times.push_back(sample_event_time_thinning(x, {1.0, 1.0, 0.5}, s, rng));
  const double d = testutil::ks_distance(times, [](double t) { return 1.0 - std::exp(-0.5 * t); });
  const double secs = seconds_since(t0);
  report("thinning", d < kThinningKs && secs < 60.0, fmt("KS %.4f (< %.2f), %.1f s", d, kThinningKs, secs));
}

void car_exactness() {
  double worst_density = 0.0, worst_bound = 0.0;
  Rng rng(102);
  std::normal_distribution<double> z(0.0, 1.2);
  std::uniform_real_distribution<double> u(0.01, 0.99);
  for (const auto& s : small_graphs()) {
    const Eigen::MatrixXd d = s.graph().degrees().asDiagonal();
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> ges(s.graph().adjacency(), d);
    const auto b = rho_bounds(s);
    worst_bound = std::max({worst_bound, std::abs(b.lower - 1.0 / ges.eigenvalues().minCoeff()),
                            std::abs(b.upper - 1.0 / ges.eigenvalues().maxCoeff())});
    for (int k = 0; k < 100; ++k) {
      Eigen::VectorXd r(static_cast<Eigen::Index>(s.size()));
      for (auto& v : r) v = z(rng);
      const double rho = b.lower + u(rng) * b.width();
      const double sigma2 = 0.1 + 3 * u(rng);
      const Eigen::MatrixXd q = s.precision(rho) / sigma2;
      Eigen::LLT<Eigen::MatrixXd> llt(q);
      const Eigen::MatrixXd l = llt.matrixL();
      const double dense = -0.5 * static_cast<double>(r.size()) * std::log(2 * std::numbers::pi) +
                           l.diagonal().array().log().sum() - 0.5 * r.dot(q * r);
      worst_density = std::max(worst_density, std::abs(car_log_density(r, {sigma2, rho}, s) - dense) / std::abs(dense));
    }
  }
  report("car_exactness", worst_density < kCarRelTol && worst_bound < kBoundsTol,
         fmt("max rel density error %.2e, max bound error %.2e", worst_density, worst_bound));
}

void conjugacy() {
  std::vector<SurvivalRecord> recs;
  for (int k = 0; k < 10; ++k) recs.push_back({static_cast<std::size_t>(k % 2), 0.5, 1, {0.5}});
  const CarStructure st(AdjacencyGraph::from_edges(2, {{0, 1}}));
  Step2Sampler sampler(recs, Eigen::Vector2d(0.5, 0.5), st, ModelPriors{}, Step2Settings{}, 1.0);
  std::vector<double> lambdas;
  for (int k = 0; k < 100000; ++k) {
    sampler.update_lambda0();
    lambdas.push_back(sampler.state().lambda0);
  }
  const boost::math::gamma_distribution<double> g(10.01, 1.0 / 5.01);
  const double d_lambda = testutil::ks_distance(lambdas, [&](double x) { return boost::math::cdf(g, x); });

  const Eigen::Vector3d r(0.4, -1.0, 0.7);
  const CarStructure path(AdjacencyGraph::from_edges(3, {{0, 1}, {1, 2}}));
  const double q = path.quadratic_form(r, 0.3);
  Rng rng(103);
  std::vector<double> s2;
  for (int k = 0; k < 100000; ++k) s2.push_back(gibbs_sigma2(r, path, 0.3, {2.0, 1.5}, rng));
  const boost::math::inverse_gamma_distribution<double> ig(2.0 + 1.5, 1.5 + 0.5 * q);
  const double d_sigma = testutil::ks_distance(s2, [&](double x) { return boost::math::cdf(ig, x); });
  report("conjugacy", d_lambda < kConjugacyKs && d_sigma < kConjugacyKs,
         fmt("lambda0 KS %.4f, sigma2 KS %.4f (< %.2f)", d_lambda, d_sigma, kConjugacyKs));
}

void gradient_audits() {
  Rng rng(104);
  std::normal_distribution<double> z(0.0, 1.0);
  const CarStructure st(western10_graph());
  std::vector<Eigen::VectorXd> pts;
  for (int k = 0; k < 20; ++k) {
    Eigen::VectorXd p(10);
    for (auto& v : p) v = z(rng);
    pts.push_back(p);
  }
  Eigen::VectorXd counts(10), exposure(10);
  for (Eigen::Index i = 0; i < 10; ++i) {
    counts[i] = 5.0 + 3.0 * static_cast<double>(i);
    exposure[i] = 10.0 + static_cast<double>(i);
  }
  const auto frailty = audit_gradient(make_frailty_target(counts, exposure, 0.8, {0.7, 0.5}, st), pts, 1e-4, kGradientTol);
  SurveyCounts survey;
  for (int i = 0; i < 10; ++i) {
    survey.n0.push_back(20 + 10 * i);
    survey.m0.push_back(3 + 4 * i);
  }
  const auto smu = audit_gradient(make_smu_target(survey, st, {1.2, -0.6}), pts, 1e-4, kGradientTol);
  report("gradient_audits", frailty.passed && smu.passed,
         fmt("frailty max rel %.2e, step-1 max rel %.2e (< %.0e)", frailty.max_rel_error, smu.max_rel_error, kGradientTol));
}

double softplus_ref(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

void step1_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  const SurveyCounts s{{50, 40}, {30, 10}};
  // theta on a 200 x 200 logit grid; sigma2 integrated analytically against IG(1, 1); rho on 40 midpoints
  const int n_theta = 200, n_rho = 40;
  const double lo = -5.0, hi = 4.0, h = (hi - lo) / (n_theta - 1);
  std::vector<double> lp, m1, m2;
  for (int r = 0; r < n_rho; ++r) {
    const double rho = -1.0 + (r + 0.5) * 2.0 / n_rho;
    for (int i = 0; i < n_theta; ++i) {
      for (int j = 0; j < n_theta; ++j) {
        const double a = lo + h * i, b = lo + h * j;
        double v = 30 * -softplus_ref(-a) + 20 * -softplus_ref(a) + 10 * -softplus_ref(-b) + 30 * -softplus_ref(b);
        v += 0.5 * std::log(1 - rho * rho) - 2.0 * std::log(1.0 + 0.5 * (a * a + b * b - 2 * rho * a * b));
        lp.push_back(v);
        m1.push_back(1 / (1 + std::exp(-a)));
        m2.push_back(1 / (1 + std::exp(-b)));
      }
    }
  }
  const double mx = *std::max_element(lp.begin(), lp.end());
  double zsum = 0, e1 = 0, e2 = 0;
  for (std::size_t k = 0; k < lp.size(); ++k) {
    const double w = std::exp(lp[k] - mx);
    zsum += w;
    e1 += w * m1[k];
    e2 += w * m2[k];
  }
  e1 /= zsum;
  e2 /= zsum;
  Step1Settings st;
  st.seed = 105;
  const auto post = step1_impute(s, CarStructure(AdjacencyGraph::from_edges(2, {{0, 1}})), st);
  const double err = std::max(std::abs(post.m_hat[0] - e1), std::abs(post.m_hat[1] - e2));
  const double secs = seconds_since(t0);
  report("step1_oracle", err < kStep1Tol && secs < 120.0,
         fmt("M-hat (%.4f, %.4f) vs grid (%.4f, %.4f), max error %.4f (< %.2f), %.1f s", post.m_hat[0], post.m_hat[1], e1, e2,
             err, kStep1Tol, secs));
}

void forest_algebra() {
  Rng rng(106);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ForestPrior prior;
  prior.depth_power = 0.5;
  prior.max_depth = 5;
  double worst_sum = 0.0;
  for (int k = 0; k < 10000; ++k) {
    const auto tree = sample_prior_tree(prior, 4, rng);
    const std::vector<double> x{u(rng), u(rng), u(rng), u(rng)};
    const auto w = tree.leaf_weights(x);
    worst_sum = std::max(worst_sum, std::abs(std::accumulate(w.begin(), w.end(), 0.0) - 1.0));
  }

  // hard limit: bandwidth 1e-8, inputs at least 1e-3 from every cutpoint
  double worst_hard = 0.0;
  for (int k = 0; k < 1000; ++k) {
    SoftTree t(0.0);
    t.grow(0, {0, 0.2 + 0.6 * u(rng), 1e-8});
    t.grow(t.leaf_nodes()[1], {1, 0.2 + 0.6 * u(rng), 1e-8});
    std::vector<double> x{u(rng), u(rng)};
    const auto& n = t.nodes();
    const auto& r0 = n[0].rule;
    const auto& r1 = n[static_cast<std::size_t>(n[0].right)].rule;
    if (std::abs(x[0] - r0.cutpoint) < 1e-3 || std::abs(x[1] - r1.cutpoint) < 1e-3) continue;
    const auto w = t.leaf_weights(x);
    std::vector<double> hard(3, 0.0);
    if (x[0] <= r0.cutpoint) {
      hard[0] = 1.0;
    } else {
      hard[x[1] <= r1.cutpoint ? 1 : 2] = 1.0;
    }
    for (std::size_t j = 0; j < 3; ++j) worst_hard = std::max(worst_hard, std::abs(w[j] - hard[j]));
  }

  double worst_marginal = 0.0;
  for (int k = 0; k < 200; ++k) {
    const auto tree = sample_prior_tree(prior, 3, rng);
    const Eigen::Index n = 12;
    PointMatrix pts(n, 3);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < 3; ++j) pts(i, j) = u(rng);
    Eigen::VectorXd r(n);
    for (auto& v : r) v = 2.0 * u(rng) - 1.0;
    const double s = 0.2 + u(rng);
    const auto lw = leaf_weight_matrix(tree, pts);
    const Eigen::MatrixXd phi = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        lw.data(), n, static_cast<Eigen::Index>(tree.n_leaves()));
    const Eigen::MatrixXd cov = s * s * phi * phi.transpose() + Eigen::MatrixXd::Identity(n, n);
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    const Eigen::MatrixXd l = llt.matrixL();
    const double dense = -0.5 * (static_cast<double>(n) * std::log(2 * std::numbers::pi) +
                                 2.0 * l.diagonal().array().log().sum() + r.dot(llt.solve(r)));
    const double fast = tree_marginal_loglik(tree, std::span<const double>(r.data(), static_cast<std::size_t>(n)), pts, s);
    worst_marginal = std::max(worst_marginal, std::abs(fast - dense));
  }
  report("forest_algebra", worst_sum < kLeafSumTol && worst_hard < kHardSplitTol && worst_marginal < kMarginalTol,
         fmt("leaf sum %.1e, hard split %.1e, marginal %.1e", worst_sum, worst_hard, worst_marginal));
}

void importance_identities() {
  ScenarioSpec spec;
  spec.graph = AdjacencyGraph::from_edges(2, {{0, 1}});
  spec.cluster_size = 20;
  const auto sim = gen_scenario(spec);
  const auto data = to_survival_data(sim.truth, 2);
  SoftTree split_m(0.0), split_t(0.0);
  split_m.grow(0, {kClusterFeature, 0.5, 0.1}, -0.4, 0.6);
  split_t.grow(0, {kTimeFeature, 0.3, 0.1}, 0.2, -0.3);
  Step2Result chain;
  chain.time_scale = data.scaler.time_scale();
  SmuPosterior smu;
  smu.m_hat = Eigen::Vector2d(0.35, 0.65);
  Rng rng(107);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const std::size_t s_count = 40;
  for (std::size_t k = 0; k < s_count; ++k) {
    ChainState st;
    st.forest.trees = {split_m, split_t};
    st.lambda0 = 1.0;
    st.log_frailty = Eigen::Vector2d::Zero();
    for (std::size_t j = 0; j < data.records.size(); ++j) {
      const double y = data.records[j].time;
      st.rejected.append(std::vector<double>{0.3 * y, 0.6 * y});
    }
    chain.samples.push_back(st);
    smu.samples.push_back({smu.m_hat, 1.0, 0.0});
  }
  const auto same = step3_weights(chain, smu, data);
  double dev_same = std::abs(same.ess - static_cast<double>(s_count));
  for (double w : same.weights) dev_same = std::max(dev_same, std::abs(w - 1.0 / static_cast<double>(s_count)));

  for (auto& st : chain.samples) st.forest.trees = {split_t};
  for (auto& smp : smu.samples) smp.m = Eigen::Vector2d(u(rng), u(rng));
  const auto nosplit = step3_weights(chain, smu, data);
  double dev_nosplit = 0.0;
  for (double w : nosplit.weights) dev_nosplit = std::max(dev_nosplit, std::abs(w - 1.0 / static_cast<double>(s_count)));
  report("importance_identities", dev_same < kWeightTol && dev_nosplit < kWeightTol,
         fmt("M = M-hat: ESS %.12g of %zu, max weight deviation %.1e; no M split: max deviation %.1e", same.ess, s_count,
             dev_same, dev_nosplit));
}

// ---------------------------------------------------------------------------
// Joint-distribution check: alternate simulating data from the model and one sweep of
// the Step-2 sampler. The parameter marginals must stay at their priors.

void geweke(const Protocol& p) {
  const auto t0 = std::chrono::steady_clock::now();
  const CarStructure st(AdjacencyGraph::from_edges(3, {{0, 1}, {1, 2}}));
  const auto bounds = rho_bounds(st);
  ModelPriors priors;
  priors.lambda_shape = 4.0;
  priors.lambda_rate = 4.0;
  priors.frailty_sigma2 = {3.0, 2.0};
  const double time_scale = 3.0, horizon = 5.0;
  const Eigen::Vector3d m_hat(0.3, 0.5, 0.7);

  Rng rng(108);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<SurvivalRecord> recs;
  for (int k = 0; k < 30; ++k) recs.push_back({static_cast<std::size_t>(k % 3), 1.0, 1, {u(rng)}});

  Step2Settings settings;
  settings.seed = 109;
  settings.hmc.n_leapfrog = 10;
  Step2Sampler sampler(recs, m_hat, st, priors, settings, time_scale);
  sampler.set_step_size(0.3);
  auto& state = sampler.state();
  state.forest = sample_prior_forest(priors.forest, ensemble_dimension(1), rng);
  state.lambda0 = std::gamma_distribution<double>(4.0, 0.25)(rng);
  state.eta1.sigma2 = 1.0 / std::gamma_distribution<double>(3.0, 0.5)(rng);
  state.eta1.rho = bounds.lower + u(rng) * bounds.width();
  state.log_frailty = sample_car(state.eta1, st, rng);

  std::vector<double> lam, lam2, sig, sig2, rho, rho2;
  for (std::size_t c = 0; c < p.geweke_cycles; ++c) {
    const ProbitSurface surface{state.forest, time_scale};
    for (auto& r : recs) {
      const auto ci = static_cast<Eigen::Index>(r.cluster);
      const double t = sample_event_time_thinning(r.covariates, {state.lambda0, std::exp(state.log_frailty[ci]), m_hat[ci]},
                                                  surface, rng, horizon);
      r.event = std::isfinite(t) ? 1 : 0;
      r.time = std::isfinite(t) ? t : horizon;
    }
    sampler.set_records(recs);
    sampler.iterate(false);
    lam.push_back(state.lambda0);
    lam2.push_back(state.lambda0 * state.lambda0);
    sig.push_back(state.eta1.sigma2);
    sig2.push_back(state.eta1.sigma2 * state.eta1.sigma2);
    rho.push_back(state.eta1.rho);
    rho2.push_back(state.eta1.rho * state.eta1.rho);
  }
  // prior moments: Gamma(4, 4): 1, 1.25; IG(3, 2): 1, 2; Uniform(lower, upper)
  const double rm = 0.5 * (bounds.lower + bounds.upper);
  const double rv = bounds.width() * bounds.width() / 12.0;
  struct Check {
    const char* name;
    const std::vector<double>* v;
    double target;
  };
  const Check checks[] = {{"E[lambda0]", &lam, 1.0}, {"E[sigma2]", &sig, 1.0}, {"E[rho]", &rho, rm},
                          {"E[lambda0^2]", &lam2, 1.25}, {"E[sigma2^2]", &sig2, 2.0}, {"E[rho^2]", &rho2, rv + rm * rm}};
  bool ok = true;
  std::ostringstream detail;
  for (const auto& ch : checks) {
    const double mean = testutil::mean(*ch.v), se = testutil::batch_means_se(*ch.v);
    const double z = (mean - ch.target) / se;
    ok = ok && std::abs(z) <= kGewekeSe;
    detail << ch.name << ' ' << fmt("%.4f", mean) << " vs " << fmt("%.4f", ch.target) << " (z " << fmt("%+.2f", z) << "); ";
  }
  detail << fmt("%zu cycles, %.0f s", p.geweke_cycles, seconds_since(t0));
  report("joint_distribution", ok, detail.str());
}

void prior_predictive() {
  const CarStructure st(western10_graph());
  PriorPredictiveSettings s;
  s.time_scale = 3.0;
  s.cluster = 4;
  std::vector<double> t;
  for (int k = 0; k < 150; ++k) t.push_back(4.5 * k / 149.0);
  const std::vector<double> x{0.3, 0.6};
  Rng rng(110);
  const auto pp = prior_predictive_check(s, st, x, t, 1000, rng);
  report("prior_predictive", pp.invalid_draws == 0 && pp.mean.front() == 1.0,
         fmt("%zu of 1000 draws invalid, mean S(0) = %.17g", pp.invalid_draws, pp.mean.front()));
}

// ---------------------------------------------------------------------------
// Scaled simulation study

struct ScenarioOutcome {
  double amse_model = 0.0;
  double amse_baseline = 0.0;
  int probes_closer = 0;
  std::vector<double> probe_model, probe_baseline;
  double seconds = 0.0;
  std::vector<double> ess;
};

const std::vector<std::array<double, 2>> kProbes{{0.2, 0.2}, {0.2, 0.8}, {0.8, 0.2}, {0.8, 0.8}};

std::vector<double> encode(const SurvivalData& data, double x1, double x2) {
  const std::vector<std::string> raw{format_double(x1), format_double(x2)};
  return data.scaler.encode(raw);
}

ScenarioOutcome run_scenario(Scenario sc, const Protocol& p, const fs::path& out, std::uint64_t base_seed) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::string name = scenario_name(sc);
  const auto graph = western10_graph();
  const CarStructure structure(graph);
  const std::size_t n_clusters = graph.n_nodes();

  // Cluster effects are drawn once and held fixed across replications, so the replication
  // average estimates E over data for a fixed truth.
  ScenarioSpec spec;
  spec.scenario = sc;
  spec.cluster_size = p.cluster_size;
  spec.seed = base_seed;
  const auto effects = gen_scenario(spec).truth;
  spec.fixed_log_frailty = effects.w.array().log().matrix();
  spec.fixed_logit_m = effects.m.unaryExpr([](double v) { return logit(v); });

  const auto grid = default_evaluation_grid();
  const std::size_t nx = grid.x_points.size(), nt = grid.t.size();
  CurveSet fitted(p.replications, n_clusters, nx, nt), truth(p.replications, n_clusters, nx, nt),
      baseline(p.replications, n_clusters, nx, nt);
  CurveSet probe_fit(p.replications, 1, kProbes.size(), nt), probe_base(p.replications, 1, kProbes.size(), nt);
  ScenarioOutcome res;

  for (std::size_t rep = 0; rep < p.replications; ++rep) {
    spec.seed = base_seed + 1 + rep;
    const auto sim = gen_scenario(spec);
    const auto data = to_survival_data(sim.truth, n_clusters);

    Step1Settings s1;
    s1.seed = spec.seed * 7 + 1;
    const auto smu = step1_impute(sim.survey, structure, s1);
    Step2Settings s2;
    s2.burn_in = p.burn_in;
    s2.n_samples = p.draws;
    s2.seed = spec.seed * 7 + 2;
    const auto chain = step2_run(data, smu.m_hat, structure, ModelPriors{}, s2);
    const auto post = step3_weights(chain, smu, data);
    res.ess.push_back(post.ess);

    double events = 0.0, exposure = 0.0;
    for (const auto& r : data.records) {
      events += r.event;
      exposure += r.time;
    }
    const double pooled_rate = events / exposure;

    PredictOptions po;
    po.max_draws = p.curve_draws;
    po.warn_on_extrapolation = false;
    for (std::size_t c = 0; c < n_clusters; ++c) {
      const auto ci = static_cast<Eigen::Index>(c);
      for (std::size_t xi = 0; xi < nx; ++xi) {
        const auto& xr = grid.x_points[xi];
        const auto curve = predict_survival(post, encode(data, xr[0], xr[1]), c, grid.t, po);
        for (std::size_t k = 0; k < nt; ++k) {
          fitted.at(rep, c, xi, k) = curve.estimate[k];
          truth.at(rep, c, xi, k) = true_survival(sc, grid.t[k], xr[0], sim.truth.m[ci], sim.truth.w[ci]);
          baseline.at(rep, c, xi, k) = std::exp(-pooled_rate * grid.t[k]);
        }
      }
    }
    for (std::size_t q = 0; q < kProbes.size(); ++q) {
      const auto curve = predict_survival(post, encode(data, kProbes[q][0], kProbes[q][1]), 0, grid.t, po);
      for (std::size_t k = 0; k < nt; ++k) {
        probe_fit.at(rep, 0, q, k) = curve.estimate[k];
        probe_base.at(rep, 0, q, k) = std::exp(-pooled_rate * grid.t[k]);
      }
    }
    if (rep == 0) {
      // artifacts for the report scripts: residuals and per-cluster LYS from the first replication
      const auto resid = cox_snell_residuals(post, data.records);
      std::ofstream rf(out / ("residuals_" + name + ".csv"));
      rf << "cluster_id,time,event,cox_snell,deviance\n";
      for (const auto& row : resid.rows) {
        rf << row.cluster + 1 << ',' << format_double(row.time) << ',' << row.event << ',' << format_double(row.cox_snell)
           << ',' << format_double(row.deviance) << '\n';
      }
      std::ofstream nf(out / ("nelson_aalen_" + name + ".csv"));
      nf << "residual,cumulative_hazard\n";
      for (const auto& pt : resid.nelson_aalen) nf << format_double(pt.residual) << ',' << format_double(pt.cumulative_hazard) << '\n';
      std::ofstream lf(out / ("lys_" + name + ".csv"));
      lf << "cluster_id,cluster_size,horizon,estimate,lower,upper\n";
      for (std::size_t c = 0; c < n_clusters; ++c) {
        LysQuery q;
        q.x = encode(data, 0.8, 0.5);
        q.x_star = encode(data, 0.2, 0.5);
        q.cluster = c;
        q.horizon = 1.0;
        q.max_draws = p.curve_draws;
        const auto l = lys(post, q);
        const auto size = std::count_if(data.records.begin(), data.records.end(), [&](const SurvivalRecord& r) { return r.cluster == c; });
        lf << c + 1 << ',' << size << ',' << format_double(q.horizon) << ',' << format_double(l.estimate) << ','
           << format_double(l.lower) << ',' << format_double(l.upper) << '\n';
      }
    }
    std::cout << "  scenario " << name << " replication " << rep + 1 << '/' << p.replications
              << fmt(": ESS %.1f of %zu, %.0f s elapsed", post.ess, post.size(), seconds_since(t0)) << std::endl;
  }

  res.amse_model = amse(truth, fitted, grid.t, grid.t_max);
  res.amse_baseline = amse(truth, baseline, grid.t, grid.t_max);

  const auto aes = aes_curves(fitted);
  const auto aes_base = aes_curves(baseline);
  CurveSet truth_one(1, n_clusters, nx, nt);
  for (std::size_t c = 0; c < n_clusters; ++c)
    for (std::size_t xi = 0; xi < nx; ++xi)
      for (std::size_t k = 0; k < nt; ++k) truth_one.at(0, c, xi, k) = truth.at(0, c, xi, k);
  write_curves_csv((out / ("aes_" + name + ".csv")).string(), grid, aes, &truth_one);
  write_curves_csv((out / ("aes_baseline_" + name + ".csv")).string(), grid, aes_base, &truth_one);

  const auto probe_aes = aes_curves(probe_fit), probe_aes_base = aes_curves(probe_base);
  EvaluationGrid probe_grid = grid;
  probe_grid.x_points.clear();
  for (const auto& pr : kProbes) probe_grid.x_points.push_back({pr[0], pr[1]});
  CurveSet probe_truth(1, 1, kProbes.size(), nt);
  std::ofstream pf(out / ("probes_" + name + ".csv"));
  pf << "probe,x1,x2,iad_model,iad_baseline\n";
  for (std::size_t q = 0; q < kProbes.size(); ++q) {
    for (std::size_t k = 0; k < nt; ++k) {
      probe_truth.at(0, 0, q, k) = true_survival(sc, grid.t[k], kProbes[q][0], effects.m[0], effects.w[0]);
    }
    const double dm = integrated_abs_deviation(probe_aes.curve(0, 0, q), probe_truth.curve(0, 0, q), grid.t);
    const double db = integrated_abs_deviation(probe_aes_base.curve(0, 0, q), probe_truth.curve(0, 0, q), grid.t);
    res.probe_model.push_back(dm);
    res.probe_baseline.push_back(db);
    res.probes_closer += dm < db;
    pf << q + 1 << ',' << kProbes[q][0] << ',' << kProbes[q][1] << ',' << format_double(dm) << ',' << format_double(db) << '\n';
  }
  write_curves_csv((out / ("aes_probes_" + name + ".csv")).string(), probe_grid, probe_aes, &probe_truth);
  res.seconds = seconds_since(t0);
  return res;
}

void scenario_study(const Protocol& p, const fs::path& out) {
  std::ofstream summary(out / "amse_summary.csv");
  summary << "scenario,amse_model,amse_baseline,probes_closer,mean_ess,seconds\n";
  const std::pair<Scenario, std::uint64_t> runs[] = {{Scenario::kA, 1000}, {Scenario::kB, 2000}, {Scenario::kC, 3000}};
  for (const auto& [sc, seed] : runs) {
    const auto r = run_scenario(sc, p, out, seed);
    const double mean_ess = testutil::mean(r.ess);
    summary << scenario_name(sc) << ',' << format_double(r.amse_model) << ',' << format_double(r.amse_baseline) << ','
            << r.probes_closer << ',' << format_double(mean_ess) << ',' << format_double(r.seconds) << '\n';
    summary.flush();
    if (sc == Scenario::kA) {
      const bool ok = r.amse_model <= kScenarioAmseMax && r.amse_model < r.amse_baseline && r.probes_closer >= kProbesRequired;
      std::ostringstream probes;
      for (std::size_t q = 0; q < r.probe_model.size(); ++q) probes << fmt(" %.3f/%.3f", r.probe_model[q], r.probe_baseline[q]);
      report("scenario_A", ok,
             fmt("AMSE %.4f (<= %.2f) vs baseline %.4f; probes closer %d of 4 (need %d), model/baseline IAD", r.amse_model,
                 kScenarioAmseMax, r.amse_baseline, r.probes_closer, kProbesRequired) +
                 probes.str() + fmt("; %zu reps x %zu+%zu iterations in %.0f s", p.replications, p.burn_in, p.draws, r.seconds));
    } else {
      report(std::string("scenario_") + scenario_name(sc), r.amse_model < r.amse_baseline,
             fmt("AMSE %.4f vs baseline %.4f; %.0f s", r.amse_model, r.amse_baseline, r.seconds));
    }
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::string out = "acceptance_out";
  std::vector<std::string> only;
  Protocol p;
  app.add_option("--out", out, "Directory for curve and summary CSVs");
  app.add_option("--only", only, "Run a subset of criteria by name");
  app.add_option("--replications", p.replications, "Replications per scenario");
  app.add_option("--burn-in", p.burn_in);
  app.add_option("--draws", p.draws);
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(out);

  const std::vector<std::pair<std::string, std::function<void()>>> criteria{
      {"thinning", thinning},
      {"car_exactness", car_exactness},
      {"conjugacy", conjugacy},
      {"gradient_audits", gradient_audits},
      {"step1_oracle", step1_oracle},
      {"forest_algebra", forest_algebra},
      {"importance_identities", importance_identities},
      {"prior_predictive", prior_predictive},
      {"joint_distribution", [&] { geweke(p); }},
      {"scenarios", [&] { scenario_study(p, out); }},
  };
  for (const auto& [name, fn] : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), name) == only.end()) continue;
    try {
      fn();
    } catch (const std::exception& e) {
      report(name, false, std::string("exception: ") + e.what());
    }
  }
  std::cout << (failures ? "acceptance: " + std::to_string(failures) + " criteria failed" : "acceptance: all criteria passed")
            << std::endl;
  return failures ? 1 : 0;
}
