#include "cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>

#include <nlohmann/json.hpp>

#include "spatsurv/common.hpp"
#include "spatsurv/data.hpp"
#include "spatsurv/metrics.hpp"
#include "spatsurv/pipeline.hpp"
#include "spatsurv/posterior_io.hpp"
#include "spatsurv/simulate.hpp"
#include "spatsurv/spatial.hpp"

namespace spatsurv::cli {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::uint64_t sub_seed(std::uint64_t master, const char* name) { return make_stream(master, name)(); }

struct McmcOptions {
  std::size_t burn_in = 2500;
  std::size_t samples = 5000;
  std::size_t thin = 1;
  double step = 0.05;
  int leapfrog = 25;
  double adapt_target = 0.8;
  bool adapt_mass = false;
  double max_divergence_rate = 0.01;
  double sigma_shape = 1.0;
  double sigma_scale = 1.0;

  void add(CLI::App* app) {
    app->add_option("--burn-in", burn_in, "Burn-in iterations")->capture_default_str();
    app->add_option("--samples", samples, "Kept draws")->capture_default_str();
    app->add_option("--thin", thin, "Thinning interval")->capture_default_str()->check(CLI::PositiveNumber);
    app->add_option("--step", step, "Initial HMC step size")->capture_default_str()->check(CLI::PositiveNumber);
    app->add_option("--leapfrog", leapfrog, "Leapfrog steps per HMC transition")->capture_default_str()->check(CLI::PositiveNumber);
    app->add_option("--adapt-target", adapt_target, "Target HMC acceptance")->capture_default_str()->check(CLI::Range(0.05, 0.99));
    app->add_flag("--adapt-mass", adapt_mass, "Adapt a diagonal mass matrix during burn-in");
    app->add_option("--max-divergence-rate", max_divergence_rate, "Fail above this post burn-in divergence rate")
        ->capture_default_str();
    app->add_option("--sigma-shape", sigma_shape, "Inverse-gamma shape for CAR variances")->capture_default_str();
    app->add_option("--sigma-scale", sigma_scale, "Inverse-gamma scale for CAR variances")->capture_default_str();
  }
  HmcTuning tuning() const { return {step, leapfrog, adapt_target, adapt_mass, max_divergence_rate}; }
  json to_json() const {
    return {{"burn_in", burn_in},         {"samples", samples},         {"thin", thin},
            {"step", step},               {"leapfrog", leapfrog},       {"adapt_target", adapt_target},
            {"adapt_mass", adapt_mass},   {"max_divergence_rate", max_divergence_rate},
            {"sigma_shape", sigma_shape}, {"sigma_scale", sigma_scale}};
  }
};

json hmc_json(const HmcDiagnostics& d) {
  return {{"transitions", d.transitions},
          {"accepted", d.accepted},
          {"divergences", d.divergences},
          {"burn_in_divergences", d.burn_in_divergences},
          {"divergence_rate", d.divergence_rate()},
          {"accept_rate", d.accept_rate()},
          {"step_size", d.step_size}};
}

json base_manifest(const std::string& command, std::uint64_t seed, const json& settings) {
  return {{"command", command},
          {"seed", seed},
          {"settings", settings},
          {"config_digest", hex_digest(fnv1a(settings.dump()))}};
}

// Covariate query: either name=value pairs or plain values in column order.
std::vector<double> encode_query(const CovariateScaler& scaler, const std::vector<std::string>& tokens) {
  const bool named = !tokens.empty() && std::all_of(tokens.begin(), tokens.end(), [](const std::string& t) {
    return t.find('=') != std::string::npos;
  });
  if (named) {
    std::map<std::string, std::string> m;
    for (const auto& t : tokens) m[t.substr(0, t.find('='))] = t.substr(t.find('=') + 1);
    return scaler.encode(m);
  }
  return scaler.encode(std::span<const std::string>(tokens));
}

AdjacencyGraph cycle_graph(std::size_t n) {
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  if (n == 2) edges.emplace_back(0, 1);
  for (std::size_t i = 0; n > 2 && i < n; ++i) edges.emplace_back(i, (i + 1) % n);
  return AdjacencyGraph::from_edges(n, edges);
}

// ---------------------------------------------------------------------------

struct SimulateCmd {
  std::string scenario;
  std::uint64_t seed = 1;
  std::size_t clusters = 10;
  std::size_t cluster_size = 200;
  std::string graph;
  int n0 = 100;
  double sigma0 = 1.0, sigma1 = 1.0, rho0 = 0.5, rho1 = 0.5;
  std::optional<double> censor_time;
  std::string out = "simulated";

  void add(CLI::App* app) {
    app->add_option("--scenario", scenario, "Scenario A, B or C")->required()->check(CLI::IsMember({"A", "B", "C"}));
    app->add_option("--seed", seed, "Master seed")->capture_default_str();
    app->add_option("--clusters", clusters, "Number of clusters")->capture_default_str()->check(CLI::PositiveNumber);
    app->add_option("--cluster-size", cluster_size, "Subjects per cluster")->capture_default_str()->check(CLI::PositiveNumber);
    app->add_option("--graph", graph, "Adjacency file (bundled 10-node graph if omitted)");
    app->add_option("--n0", n0, "Survey size per cluster")->capture_default_str()->check(CLI::NonNegativeNumber);
    app->add_option("--sigma0", sigma0)->capture_default_str();
    app->add_option("--sigma1", sigma1)->capture_default_str();
    app->add_option("--rho0", rho0)->capture_default_str();
    app->add_option("--rho1", rho1)->capture_default_str();
    app->add_option("--censor-time", censor_time, "Administrative censoring time (off by default)");
    app->add_option("--out", out, "Output directory")->capture_default_str();
  }

  void run() const {
    ScenarioSpec spec;
    spec.scenario = parse_scenario(scenario);
    if (!graph.empty()) {
      spec.graph = load_adjacency(graph);
      if (spec.graph.n_nodes() != clusters) throw DataError("--clusters does not match the graph size");
    } else if (clusters != 10) {
      spec.graph = cycle_graph(clusters);
    }
    spec.cluster_size = cluster_size;
    spec.sigma0 = sigma0;
    spec.sigma1 = sigma1;
    spec.rho0 = rho0;
    spec.rho1 = rho1;
    spec.survey_n0.assign(spec.n_clusters(), n0);
    spec.censor_time = censor_time;
    spec.seed = sub_seed(seed, "data");
    const Simulation sim = gen_scenario(spec);
    fs::create_directories(out);
    const fs::path dir(out);
    write_simulated_survival((dir / "survival.csv").string(), sim.truth);
    write_adjacency((dir / "adjacency.csv").string(), spec.graph);
    write_survey((dir / "survey.csv").string(), sim.survey);
    write_truth(out, sim.truth);
    json settings{{"scenario", scenario}, {"clusters", clusters}, {"cluster_size", cluster_size}, {"graph", graph},
                  {"n0", n0}, {"sigma0", sigma0}, {"sigma1", sigma1}, {"rho0", rho0}, {"rho1", rho1}};
    if (censor_time) settings["censor_time"] = *censor_time;
    json manifest = base_manifest("simulate", seed, settings);
    if (!graph.empty()) manifest["inputs"] = {{graph, file_digest(graph)}};
    write_manifest(out, manifest);
  }
};

struct ImputeCmd {
  std::string survey, adjacency, out = "smu";
  std::uint64_t seed = 1;
  McmcOptions mcmc;

  void add(CLI::App* app) {
    app->add_option("--survey", survey, "Survey counts CSV (cluster_id,n0,m0)")->required();
    app->add_option("--adjacency", adjacency, "Adjacency file")->required();
    app->add_option("--out", out, "Output directory")->capture_default_str();
    app->add_option("--seed", seed, "Master seed")->capture_default_str();
    mcmc.add(app);
  }

  void run() const {
    const AdjacencyGraph graph = load_adjacency(adjacency);
    const SurveyCounts counts = load_survey(survey, graph);
    const CarStructure structure(graph);
    Step1Settings s;
    s.burn_in = mcmc.burn_in;
    s.n_samples = mcmc.samples;
    s.thin = mcmc.thin;
    s.hmc = mcmc.tuning();
    s.sigma2_prior = {mcmc.sigma_shape, mcmc.sigma_scale};
    s.seed = sub_seed(seed, "step1");
    json manifest = base_manifest("impute", seed, mcmc.to_json());
    manifest["inputs"] = {{survey, file_digest(survey)}, {adjacency, file_digest(adjacency)}};
    try {
      const SmuPosterior smu = step1_impute(counts, structure, s);
      write_smu(out, smu);
      manifest["status"] = "ok";
      manifest["hmc"] = hmc_json(smu.hmc);
      manifest["rho_accept_rate"] = smu.rho_accept_rate;
      write_manifest(out, manifest);
    } catch (const DivergenceError& e) {
      manifest["status"] = "failed";
      manifest["error"] = e.what();
      manifest["hmc"] = hmc_json(e.diagnostics);
      write_manifest(out, manifest);
      throw;
    }
  }
};

struct FitCmd {
  std::string data, adjacency, m_hat, smu, out = "posterior";
  std::vector<std::string> categorical;
  std::uint64_t seed = 1;
  McmcOptions mcmc;
  std::size_t trees = 50;
  double gamma = 0.95, depth_power = 2.0, bandwidth_rate = 10.0;
  double lambda_shape = 0.01, lambda_rate = 0.01;
  std::string lambda_update = "gibbs";
  std::size_t threads = 1;

  void add(CLI::App* app) {
    app->add_option("--data", data, "Survival CSV (cluster_id,time,event,covariates...)")->required();
    app->add_option("--adjacency", adjacency, "Adjacency file")->required();
    app->add_option("--m-hat", m_hat, "CSV of cluster_id,m_hat (Step 3 skipped)");
    app->add_option("--smu", smu, "Directory written by impute (enables importance reweighting)");
    app->add_option("--categorical", categorical, "Categorical covariate columns")->delimiter(',');
    app->add_option("--out", out, "Output directory")->capture_default_str();
    app->add_option("--seed", seed, "Master seed")->capture_default_str();
    mcmc.add(app);
    app->add_option("--trees", trees, "Ensemble size")->capture_default_str()->check(CLI::PositiveNumber);
    app->add_option("--gamma", gamma, "Tree prior base")->capture_default_str()->check(CLI::Range(0.0, 1.0));
    app->add_option("--depth-power", depth_power, "Tree prior depth power")->capture_default_str();
    app->add_option("--bandwidth-rate", bandwidth_rate, "Exponential rate of the bandwidth prior")->capture_default_str();
    app->add_option("--lambda-shape", lambda_shape)->capture_default_str()->check(CLI::PositiveNumber);
    app->add_option("--lambda-rate", lambda_rate)->capture_default_str()->check(CLI::PositiveNumber);
    app->add_option("--lambda-update", lambda_update)->capture_default_str()->check(CLI::IsMember({"gibbs", "metropolis"}));
    app->add_option("--threads", threads, "Worker threads for augmentation")->capture_default_str()->check(CLI::PositiveNumber);
    app->get_option("--m-hat")->excludes(app->get_option("--smu"));
  }

  json settings_json() const {
    json j = mcmc.to_json();
    j.update({{"trees", trees}, {"gamma", gamma}, {"depth_power", depth_power}, {"bandwidth_rate", bandwidth_rate},
              {"lambda_shape", lambda_shape}, {"lambda_rate", lambda_rate}, {"lambda_update", lambda_update},
              {"categorical", categorical}, {"threads", threads}});
    return j;
  }

  void run() const {
    if (m_hat.empty() && smu.empty()) throw DataError("fit needs --m-hat or --smu");
    const AdjacencyGraph graph = load_adjacency(adjacency);
    const CarStructure structure(graph);
    const SurvivalData dataset = load_survival(data, SurvivalSchema{categorical}, graph.n_nodes());
    SmuPosterior smu_post;
    if (!smu.empty()) {
      smu_post = read_smu(smu);
    } else {
      const CsvTable t = read_csv(m_hat);
      smu_post.m_hat.resize(static_cast<Eigen::Index>(t.rows.size()));
      for (std::size_t i = 0; i < t.rows.size(); ++i) smu_post.m_hat[static_cast<Eigen::Index>(i)] = parse_double(t.rows[i][1], i, "m_hat");
    }
    if (smu_post.m_hat.size() != static_cast<Eigen::Index>(graph.n_nodes())) throw DataError("M-hat length differs from the graph");
    for (Eigen::Index i = 0; i < smu_post.m_hat.size(); ++i) {
      if (!(smu_post.m_hat[i] > 0 && smu_post.m_hat[i] < 1)) throw DataError("M-hat values must lie in (0, 1)");
    }

    ModelPriors priors;
    priors.lambda_shape = lambda_shape;
    priors.lambda_rate = lambda_rate;
    priors.frailty_sigma2 = {mcmc.sigma_shape, mcmc.sigma_scale};
    priors.forest.n_trees = trees;
    priors.forest.gamma = gamma;
    priors.forest.depth_power = depth_power;
    priors.forest.bandwidth_rate = bandwidth_rate;
    Step2Settings s;
    s.burn_in = mcmc.burn_in;
    s.n_samples = mcmc.samples;
    s.thin = mcmc.thin;
    s.hmc = mcmc.tuning();
    s.lambda_update = lambda_update == "gibbs" ? Lambda0Update::kGibbs : Lambda0Update::kMetropolis;
    s.seed = sub_seed(seed, "step2");
    s.threads = threads;

    json manifest = base_manifest("fit", seed, settings_json());
    manifest["inputs"] = {{data, file_digest(data)}, {adjacency, file_digest(adjacency)}};
    const std::string m_source = smu.empty() ? m_hat : (fs::path(smu) / "m_hat.csv").string();
    manifest["inputs"][m_source] = file_digest(m_source);
    manifest["scaler"] = scaler_to_json(dataset.scaler);
    manifest["time_scale"] = dataset.scaler.time_scale();
    manifest["m_hat"] = std::vector<double>(smu_post.m_hat.data(), smu_post.m_hat.data() + smu_post.m_hat.size());
    manifest["covariates"] = dataset.covariate_names();
    Step2Result chain;
    try {
      chain = step2_run(dataset, smu_post.m_hat, structure, priors, s);
    } catch (const DivergenceError& e) {
      manifest["status"] = "failed";
      manifest["error"] = e.what();
      manifest["hmc"] = hmc_json(e.diagnostics);
      write_manifest(out, manifest);
      throw;
    }
    const bool reweight = !smu_post.samples.empty();
    const WeightedPosterior post = reweight ? step3_weights(chain, smu_post, dataset) : plug_in_posterior(chain, smu_post.m_hat);
    write_posterior(out, post);
    const auto& d = chain.diagnostics;
    manifest["status"] = "ok";
    manifest["step3"] = reweight;
    manifest["n_draws"] = post.size();
    manifest["ess"] = post.ess;
    manifest["degenerate_weights"] = post.degenerate;
    manifest["hmc"] = hmc_json(d.hmc);
    manifest["rho_accept_rate"] = d.rho_accept_rate;
    manifest["lambda_accept_rate"] = d.lambda_accept_rate;
    manifest["mean_rejected_points"] = d.mean_rejected_points;
    manifest["backfit"] = {{"grow", {d.backfit.proposed[0], d.backfit.accepted[0]}},
                           {"prune", {d.backfit.proposed[1], d.backfit.accepted[1]}},
                           {"change", {d.backfit.proposed[2], d.backfit.accepted[2]}},
                           {"bandwidth", {d.backfit.bandwidth_proposed, d.backfit.bandwidth_accepted}}};
    write_manifest(out, manifest);
  }
};

struct PosteriorQuery {
  std::string posterior;
  std::size_t cluster = 1;
  std::vector<std::string> x;
  std::size_t max_draws = 0;
  double level = 0.95;
  std::string out;

  void add(CLI::App* app, bool needs_cluster) {
    app->add_option("--posterior", posterior, "Directory written by fit")->required();
    if (needs_cluster) {
      app->add_option("--cluster", cluster, "Cluster id (1-based)")->required()->check(CLI::PositiveNumber);
      app->add_option("--x", x, "Covariates as name=value pairs or values in column order")->required()->delimiter(',');
      app->add_option("--level", level, "Credible level")->capture_default_str()->check(CLI::Range(0.0, 1.0));
      app->add_option("--max-draws", max_draws, "Use an evenly spaced subset of draws (0 = all)")->capture_default_str();
    }
    app->add_option("--out", out, "Output CSV (stdout if omitted)");
  }

  std::unique_ptr<std::ostream> open() const {
    if (out.empty()) return std::make_unique<std::ostream>(std::cout.rdbuf());
    auto f = std::make_unique<std::ofstream>(out);
    if (!*f) throw DataError("cannot write " + out);
    return f;
  }
};

struct PredictCmd {
  PosteriorQuery q;
  std::optional<double> t_max;
  std::size_t grid = 100;

  void add(CLI::App* app) {
    q.add(app, true);
    app->add_option("--t-max", t_max, "Horizon (largest observed time by default)");
    app->add_option("--grid", grid, "Number of time points")->capture_default_str()->check(CLI::Range(2, 100000));
  }

  void run() const {
    const auto loaded = read_posterior(q.posterior);
    const auto x = encode_query(loaded.scaler, q.x);
    const double horizon = t_max.value_or(loaded.posterior.time_scale / (1.0 + kTimeMargin));
    if (!(horizon > 0)) throw DataError("--t-max must be positive");
    std::vector<double> t(grid);
    for (std::size_t k = 0; k < grid; ++k) t[k] = horizon * static_cast<double>(k) / static_cast<double>(grid - 1);
    PredictOptions opt;
    opt.level = q.level;
    opt.max_draws = q.max_draws;
    const auto curve = predict_survival(loaded.posterior, x, q.cluster - 1, t, opt);
    auto out = q.open();
    *out << "t,estimate,lower,upper\n";
    for (std::size_t k = 0; k < t.size(); ++k) {
      *out << format_double(curve.t[k]) << ',' << format_double(curve.estimate[k]) << ','
           << format_double(curve.lower[k]) << ',' << format_double(curve.upper[k]) << '\n';
    }
  }
};

std::vector<std::string> feature_names(const LoadedPosterior& loaded) {
  std::vector<std::string> names{"time", "M"};
  for (const auto& c : loaded.scaler.columns()) names.push_back(c.name);
  return names;
}

struct ImportanceCmd {
  PosteriorQuery q;
  std::string per_draw;

  void add(CLI::App* app) {
    q.add(app, false);
    app->add_option("--per-draw", per_draw, "Also write per-draw shares to this CSV");
  }

  void run() const {
    const auto loaded = read_posterior(q.posterior);
    const auto names = feature_names(loaded);
    std::vector<Forest> forests;
    for (const auto& d : loaded.posterior.draws) forests.push_back(d.forest);
    const auto vi = variable_importance(forests, names.size());
    if (vi.all_splitless) std::cerr << "warning: no draw contains a split; importance is all zero\n";
    auto out = q.open();
    *out << "feature,score,draws_used,splitless_draws\n";
    for (std::size_t f = 0; f < names.size(); ++f) {
      *out << names[f] << ',' << format_double(vi.scores[f]) << ',' << vi.draws_used << ',' << vi.splitless_draws << '\n';
    }
    if (!per_draw.empty()) {
      std::ofstream pd(per_draw);
      if (!pd) throw DataError("cannot write " + per_draw);
      pd << "draw,feature,share\n";
      for (std::size_t s = 0; s < forests.size(); ++s) {
        const auto counts = split_counts(forests[s], names.size());
        const double total = static_cast<double>(std::accumulate(counts.begin(), counts.end(), std::size_t{0}));
        if (total == 0) continue;
        for (std::size_t f = 0; f < names.size(); ++f) {
          pd << s << ',' << names[f] << ',' << format_double(static_cast<double>(counts[f]) / total) << '\n';
        }
      }
    }
  }
};

struct LysCmd {
  PosteriorQuery q;
  std::vector<std::string> x_star;
  double a = 5.0;
  std::optional<double> m_star;

  void add(CLI::App* app) {
    q.add(app, true);
    app->add_option("--x-star", x_star, "Intervened covariates")->required()->delimiter(',');
    app->add_option("--a", a, "Horizon")->required()->check(CLI::PositiveNumber);
    app->add_option("--m-star", m_star, "Intervened cluster covariate M")->check(CLI::Range(0.0, 1.0));
  }

  void run() const {
    const auto loaded = read_posterior(q.posterior);
    LysQuery query;
    query.x = encode_query(loaded.scaler, q.x);
    query.x_star = encode_query(loaded.scaler, x_star);
    query.cluster = q.cluster - 1;
    query.horizon = a;
    query.m_star = m_star;
    query.level = q.level;
    query.max_draws = q.max_draws;
    const auto res = lys(loaded.posterior, query);
    auto out = q.open();
    *out << "cluster_id,horizon,estimate,lower,upper,interval\n";
    *out << q.cluster << ',' << format_double(a) << ',' << format_double(res.estimate) << ','
         << format_double(res.lower) << ',' << format_double(res.upper) << ",weighted central quantile\n";
  }
};

struct ResidualsCmd {
  std::string posterior, data, out = "residuals";
  std::vector<std::string> categorical;
  std::size_t max_draws = 100;

  void add(CLI::App* app) {
    app->add_option("--posterior", posterior, "Directory written by fit")->required();
    app->add_option("--data", data, "Survival CSV used for the fit")->required();
    app->add_option("--categorical", categorical, "Categorical covariate columns")->delimiter(',');
    app->add_option("--max-draws", max_draws)->capture_default_str();
    app->add_option("--out", out, "Output directory")->capture_default_str();
  }

  void run() const {
    const auto loaded = read_posterior(posterior);
    const SurvivalData dataset = load_survival(data, SurvivalSchema{categorical}, loaded.posterior.n_clusters(), &loaded.scaler);
    ResidualOptions opt;
    opt.max_draws = max_draws;
    const auto rep = cox_snell_residuals(loaded.posterior, dataset.records, opt);
    fs::create_directories(out);
    std::ofstream r(fs::path(out) / "residuals.csv");
    std::ofstream na(fs::path(out) / "nelson_aalen.csv");
    if (!r || !na) throw DataError("cannot write residual files in " + out);
    r << "cluster_id,time,event,cox_snell,deviance\n";
    for (const auto& row : rep.rows) {
      r << row.cluster + 1 << ',' << format_double(row.time) << ',' << row.event << ',' << format_double(row.cox_snell)
        << ',' << format_double(row.deviance) << '\n';
    }
    na << "residual,cumulative_hazard\n";
    for (const auto& p : rep.nelson_aalen) na << format_double(p.residual) << ',' << format_double(p.cumulative_hazard) << '\n';
  }
};

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"Spatial soft-BART survival model"};
  app.set_config("--config", "", "TOML configuration file; command-line values take precedence");
  app.require_subcommand(1);

  SimulateCmd simulate;
  ImputeCmd impute;
  FitCmd fit;
  PredictCmd predict;
  ImportanceCmd importance;
  LysCmd lys_cmd;
  ResidualsCmd residuals;
  auto* sim_app = app.add_subcommand("simulate", "Generate a synthetic scenario dataset");
  auto* imp_app = app.add_subcommand("impute", "Sample the cluster covariate from survey counts");
  auto* fit_app = app.add_subcommand("fit", "Fit the survival model and write a posterior directory");
  auto* pred_app = app.add_subcommand("predict", "Posterior survival curve for one covariate profile");
  auto* imp2_app = app.add_subcommand("importance", "Split-count variable importance");
  auto* lys_app = app.add_subcommand("lys", "Expected life-years saved under a covariate change");
  auto* res_app = app.add_subcommand("residuals", "Cox-Snell and deviance residuals");
  simulate.add(sim_app);
  impute.add(imp_app);
  fit.add(fit_app);
  predict.add(pred_app);
  importance.add(imp2_app);
  lys_cmd.add(lys_app);
  residuals.add(res_app);
  for (auto* sub : app.get_subcommands({})) sub->configurable();

  std::vector<std::string> rev(args.rbegin(), args.rend() - 1);
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*sim_app) simulate.run();
    if (*imp_app) impute.run();
    if (*fit_app) fit.run();
    if (*pred_app) predict.run();
    if (*imp2_app) importance.run();
    if (*lys_app) lys_cmd.run();
    if (*res_app) residuals.run();
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitOk;
}

}  // namespace spatsurv::cli
