#include "spatsurv/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <thread>

namespace spatsurv {
namespace {

double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

bool metropolis_accept(double log_ratio, Rng& rng) {
  if (std::isnan(log_ratio)) return false;
  if (log_ratio >= 0.0) return true;
  return std::log(std::uniform_real_distribution<double>(0.0, 1.0)(rng)) < log_ratio;
}

Eigen::VectorXd inverse_variance(const std::vector<Eigen::VectorXd>& history) {
  const auto dim = history.front().size();
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(dim);
  for (const auto& h : history) mean += h;
  mean /= static_cast<double>(history.size());
  Eigen::VectorXd var = Eigen::VectorXd::Zero(dim);
  for (const auto& h : history) var += (h - mean).cwiseAbs2();
  var /= static_cast<double>(std::max<std::size_t>(history.size() - 1, 1));
  return var.cwiseMax(1e-6).cwiseInverse();
}

}  // namespace

// ---------------------------------------------------------------------------
// Step 1

LogDensityTarget make_smu_target(const SurveyCounts& survey, const CarStructure& structure, const CarParams& eta0) {
  const auto n = static_cast<Eigen::Index>(survey.size());
  Eigen::VectorXd successes(n), trials(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    successes[i] = survey.m0[static_cast<std::size_t>(i)];
    trials[i] = survey.n0[static_cast<std::size_t>(i)];
  }
  LogDensityTarget target;
  target.dimension = static_cast<std::size_t>(n);
  target.value = [successes, trials, &structure, eta0](const Eigen::VectorXd& theta) {
    double ll = 0.0;
    for (Eigen::Index i = 0; i < theta.size(); ++i) {
      // m log M + (n - m) log(1 - M) with M = expit(theta)
      ll -= successes[i] * softplus(-theta[i]) + (trials[i] - successes[i]) * softplus(theta[i]);
    }
    return ll + car_log_density(theta, eta0, structure);
  };
  target.gradient = [successes, trials, &structure, eta0](const Eigen::VectorXd& theta) {
    Eigen::VectorXd g(theta.size());
    for (Eigen::Index i = 0; i < theta.size(); ++i) g[i] = successes[i] - trials[i] * expit(theta[i]);
    return Eigen::VectorXd(g + car_grad(theta, eta0, structure));
  };
  return target;
}

SmuPosterior step1_impute(const SurveyCounts& survey, const CarStructure& structure, const Step1Settings& settings) {
  const auto n = static_cast<Eigen::Index>(structure.size());
  if (static_cast<Eigen::Index>(survey.size()) != n) throw DataError("survey is not aligned with the graph");
  Rng rng(settings.seed);

  Eigen::VectorXd theta(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    theta[i] = logit((survey.m0[k] + 0.5) / (survey.n0[k] + 1.0));
  }
  CarParams eta{1.0, 0.0};
  Eigen::VectorXd binomial_info(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    const double p = (survey.m0[k] + 0.5) / (survey.n0[k] + 1.0);
    binomial_info[i] = survey.n0[k] * p * (1.0 - p);
  }
  bool mass_fixed = false;
  HmcSettings hmc;
  hmc.step_size = settings.hmc.initial_step;
  hmc.n_leapfrog = settings.hmc.n_leapfrog;
  hmc.adapt_target = settings.hmc.adapt_target;
  StepSizeAdapter adapter(hmc.step_size, hmc.adapt_target);
  std::vector<Eigen::VectorXd> history;

  SmuPosterior out;
  out.m_hat = Eigen::VectorXd::Zero(n);
  std::size_t rho_accepts = 0;
  const std::size_t total = settings.burn_in + settings.n_samples * settings.thin;
  for (std::size_t it = 0; it < total; ++it) {
    const bool burning = it < settings.burn_in;
    const auto target = make_smu_target(survey, structure, eta);
    // Diagonal curvature of the conditional target, refreshed with sigma2 so a small
    // variance does not make a fixed step unstable. Depends only on eta, never on theta.
    if (!mass_fixed) hmc.mass = (structure.graph().degrees() / eta.sigma2 + binomial_info).eval();
    const HmcResult res = hmc_step(target, theta, hmc, rng);
    theta = res.state;
    if (burning) {
      if (res.divergent) ++out.hmc.burn_in_divergences;
      hmc.step_size = adapter.update(res.accept_prob);
      if (settings.hmc.adapt_mass && it < settings.burn_in / 2) history.push_back(theta);
      if (settings.hmc.adapt_mass && it + 1 == settings.burn_in / 2 && history.size() > 10) {
        hmc.mass = inverse_variance(history);
        mass_fixed = true;
        adapter = StepSizeAdapter(hmc.step_size, hmc.adapt_target);
      }
      if (it + 1 == settings.burn_in) hmc.step_size = adapter.final_step();
    } else {
      ++out.hmc.transitions;
      if (res.accepted) ++out.hmc.accepted;
      if (res.divergent) ++out.hmc.divergences;
    }
    eta.sigma2 = gibbs_sigma2(theta, structure, eta.rho, settings.sigma2_prior, rng);
    const RhoStep rs = update_rho(theta, structure, eta.sigma2, eta.rho, rng, settings.rho_step_fraction);
    eta.rho = rs.rho;
    if (!burning) {
      rho_accepts += rs.accepted;
      if ((it - settings.burn_in) % settings.thin == 0) {
        SmuSample s;
        s.m = theta.unaryExpr([](double v) { return expit(v); });
        s.sigma2 = eta.sigma2;
        s.rho = eta.rho;
        out.m_hat += s.m;
        out.samples.push_back(std::move(s));
      }
    }
  }
  if (settings.burn_in == 0) hmc.step_size = adapter.final_step();
  out.hmc.step_size = hmc.step_size;
  if (!out.samples.empty()) out.m_hat /= static_cast<double>(out.samples.size());
  if (out.hmc.transitions) {
    out.rho_accept_rate = static_cast<double>(rho_accepts) / static_cast<double>(out.hmc.transitions);
  }
  if (out.hmc.divergence_rate() > settings.hmc.max_divergence_rate) {
    throw DivergenceError("step 1: divergence rate " + std::to_string(out.hmc.divergence_rate()) + " exceeds limit",
                          out.hmc);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Step 2

LogDensityTarget make_frailty_target(Eigen::VectorXd event_counts, Eigen::VectorXd exposure, double lambda0,
                                     const CarParams& eta1, const CarStructure& structure) {
  LogDensityTarget target;
  target.dimension = static_cast<std::size_t>(event_counts.size());
  target.value = [=, &structure](const Eigen::VectorXd& r) {
    const double lik = event_counts.dot(r) - lambda0 * exposure.dot(r.array().exp().matrix());
    return lik + car_log_density(r, eta1, structure);
  };
  target.gradient = [=, &structure](const Eigen::VectorXd& r) {
    Eigen::VectorXd g = event_counts - lambda0 * exposure.cwiseProduct(r.array().exp().matrix());
    return Eigen::VectorXd(g + car_grad(r, eta1, structure));
  };
  return target;
}

Step2Sampler::Step2Sampler(std::vector<SurvivalRecord> records, Eigen::VectorXd m_hat, const CarStructure& structure,
                           ModelPriors priors, Step2Settings settings, double time_scale)
    : records_(std::move(records)),
      m_hat_(std::move(m_hat)),
      structure_(structure),
      priors_(std::move(priors)),
      settings_(std::move(settings)),
      time_scale_(time_scale),
      rng_(make_stream(settings_.seed, "step2-main")),
      step_size_(settings_.hmc.initial_step),
      adapter_(settings_.hmc.initial_step, settings_.hmc.adapt_target) {
  if (records_.empty()) throw DataError("no survival records");
  if (m_hat_.size() != static_cast<Eigen::Index>(structure_.size())) throw DataError("M-hat is not aligned with the graph");
  dim_ = ensemble_dimension(records_.front().covariates.size());
  for (const auto& r : records_) {
    if (r.cluster >= structure_.size()) throw DataError("record cluster outside the graph");
    if (ensemble_dimension(r.covariates.size()) != dim_) throw DataError("covariate length differs across records");
  }
  state_.forest = Forest(priors_.forest.n_trees, 0.0);
  double events = 0.0, exposure = 0.0;
  for (const auto& r : records_) {
    events += r.event;
    exposure += r.time;
  }
  state_.lambda0 = events > 0 ? 2.0 * events / exposure : 1.0 / exposure * static_cast<double>(records_.size());
  state_.log_frailty = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(structure_.size()));
  state_.eta1 = CarParams{1.0, 0.0};
}

void Step2Sampler::set_records(std::vector<SurvivalRecord> records) {
  for (const auto& r : records) {
    if (r.cluster >= structure_.size()) throw DataError("record cluster outside the graph");
  }
  records_ = std::move(records);
  state_.rejected.clear();
  state_.latent_z.clear();
}

void Step2Sampler::augment() {
  const std::size_t n = records_.size();
  std::vector<std::vector<double>> kept(n), kept_b(n);
  std::vector<double> event_b(n, 0.0);
  const ProbitSurface surface{state_.forest, time_scale_};
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t j = begin; j < end; ++j) {
      const auto& rec = records_[j];
      Rng local = make_stream(settings_.seed, iteration_, j);
      const HazardParams params{state_.lambda0, std::exp(state_.log_frailty[static_cast<Eigen::Index>(rec.cluster)]),
                                m_hat_[static_cast<Eigen::Index>(rec.cluster)]};
      kept[j] = augment_rejected_points(rec, params, surface, local, &kept_b[j]);
      if (rec.event) event_b[j] = surface.b(rec.time, params.m_value, rec.covariates);
    }
  };
  const std::size_t threads = std::clamp<std::size_t>(settings_.threads, 1, std::max<std::size_t>(n, 1));
  if (threads == 1) {
    work(0, n);
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (n + threads - 1) / threads;
    for (std::size_t t = 0; t < threads; ++t) {
      const std::size_t b = t * chunk, e = std::min(n, b + chunk);
      if (b < e) pool.emplace_back(work, b, e);
    }
    for (auto& th : pool) th.join();
  }

  state_.rejected.clear();
  for (const auto& k : kept) state_.rejected.append(k);
  fit_.clear();
  for (std::size_t j = 0; j < n; ++j) {
    if (records_[j].event) fit_.push_back(event_b[j]);
  }
  for (const auto& kb : kept_b) fit_.insert(fit_.end(), kb.begin(), kb.end());
  rebuild_points();
}

void Step2Sampler::rebuild_points() {
  const std::size_t n_events = static_cast<std::size_t>(
      std::count_if(records_.begin(), records_.end(), [](const SurvivalRecord& r) { return r.event == 1; }));
  points_.resize(static_cast<Eigen::Index>(n_events + state_.rejected.total()), static_cast<Eigen::Index>(dim_));
  Eigen::Index row = 0;
  auto put = [&](double t, const SurvivalRecord& rec) {
    make_point(t / time_scale_, m_hat_[static_cast<Eigen::Index>(rec.cluster)], rec.covariates,
               std::span<double>(points_.data() + row * points_.cols(), dim_));
    ++row;
  };
  for (const auto& rec : records_) {
    if (rec.event) put(rec.time, rec);
  }
  for (std::size_t j = 0; j < records_.size(); ++j) {
    for (double g : state_.rejected.subject(j)) put(g, records_[j]);
  }
}

void Step2Sampler::draw_latents() {
  const auto n_rows = static_cast<std::size_t>(points_.rows());
  const std::size_t n_events = n_rows - state_.rejected.total();
  state_.latent_z.resize(n_rows);
  for (std::size_t i = 0; i < n_rows; ++i) {
    state_.latent_z[i] = sample_truncated_normal(
        fit_[i], i < n_events ? TruncationSide::kPositive : TruncationSide::kNegative, rng_);
  }
}

void Step2Sampler::update_forest() {
  backfit_sweep(state_.forest, state_.latent_z, points_, priors_.forest, rng_, fit_, &diag_.backfit);
}

Eigen::VectorXd Step2Sampler::cluster_event_counts() const {
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(structure_.size()));
  for (std::size_t j = 0; j < records_.size(); ++j) {
    const auto c = static_cast<Eigen::Index>(records_[j].cluster);
    counts[c] += records_[j].event + (j < state_.rejected.n_subjects() ? static_cast<double>(state_.rejected.count(j)) : 0.0);
  }
  return counts;
}

Eigen::VectorXd Step2Sampler::cluster_exposure() const {
  Eigen::VectorXd exposure = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(structure_.size()));
  for (const auto& r : records_) exposure[static_cast<Eigen::Index>(r.cluster)] += r.time;
  return exposure;
}

void Step2Sampler::update_lambda0() {
  const Eigen::VectorXd counts = cluster_event_counts();
  const Eigen::VectorXd exposure = cluster_exposure();
  const double shape = priors_.lambda_shape + counts.sum();
  const double rate = priors_.lambda_rate + exposure.dot(state_.log_frailty.array().exp().matrix());
  if (settings_.lambda_update == Lambda0Update::kGibbs) {
    state_.lambda0 = std::gamma_distribution<double>(shape, 1.0 / rate)(rng_);
    return;
  }
  // random walk on log lambda0 against the same Gamma conditional
  const double cur = std::log(state_.lambda0);
  const double prop = cur + settings_.lambda_mh_step * std::normal_distribution<double>(0.0, 1.0)(rng_);
  const double log_ratio = shape * (prop - cur) - rate * (std::exp(prop) - std::exp(cur));
  ++lambda_proposals_;
  if (metropolis_accept(log_ratio, rng_)) {
    state_.lambda0 = std::exp(prop);
    ++lambda_accepts_;
  }
  diag_.lambda_accept_rate = static_cast<double>(lambda_accepts_) / static_cast<double>(lambda_proposals_);
}

void Step2Sampler::update_frailty(bool adapting) {
  const Eigen::VectorXd counts = cluster_event_counts();
  const auto target = make_frailty_target(counts, cluster_exposure(), state_.lambda0, state_.eta1, structure_);
  HmcSettings hmc;
  hmc.step_size = step_size_;
  hmc.n_leapfrog = settings_.hmc.n_leapfrog;
  // Without an adapted mass, precondition by the conditional curvature near the mode:
  // d_i / sigma2 from the CAR term plus the augmented count. Neither depends on R.
  hmc.mass = mass_.size() ? mass_ : (structure_.graph().degrees() / state_.eta1.sigma2 + counts).eval();
  const HmcResult res = hmc_step(target, state_.log_frailty, hmc, rng_);
  state_.log_frailty = res.state;
  if (adapting) {
    if (res.divergent) ++diag_.hmc.burn_in_divergences;
    step_size_ = adapter_.update(res.accept_prob);
  } else {
    ++diag_.hmc.transitions;
    diag_.hmc.accepted += res.accepted;
    diag_.hmc.divergences += res.divergent;
  }
  diag_.hmc.step_size = step_size_;
}

void Step2Sampler::update_eta() {
  state_.eta1.sigma2 = gibbs_sigma2(state_.log_frailty, structure_, state_.eta1.rho, priors_.frailty_sigma2, rng_);
  const RhoStep rs =
      update_rho(state_.log_frailty, structure_, state_.eta1.sigma2, state_.eta1.rho, rng_, settings_.rho_step_fraction);
  state_.eta1.rho = rs.rho;
  ++rho_proposals_;
  rho_accepts_ += rs.accepted;
  diag_.rho_accept_rate = static_cast<double>(rho_accepts_) / static_cast<double>(rho_proposals_);
}

void Step2Sampler::finish_adaptation() {
  step_size_ = adapter_.final_step();
  diag_.hmc.step_size = step_size_;
}

void Step2Sampler::restart_adaptation() { adapter_ = StepSizeAdapter(step_size_, settings_.hmc.adapt_target); }

void Step2Sampler::iterate(bool adapting) {
  augment();
  draw_latents();
  update_forest();
  update_lambda0();
  update_frailty(adapting);
  update_eta();
  const std::size_t it = iteration_++;
  ++diag_.iterations;
  diag_.mean_rejected_points +=
      (static_cast<double>(state_.rejected.total()) - diag_.mean_rejected_points) / static_cast<double>(diag_.iterations);
  const bool finite = std::isfinite(state_.lambda0) && state_.lambda0 > 0 && state_.log_frailty.allFinite() &&
                      std::all_of(fit_.begin(), fit_.end(), [](double v) { return std::isfinite(v); });
  if (!finite) throw NumericalError("step 2: non-finite likelihood state at iteration " + std::to_string(it));
}

Step2Result step2_run(const SurvivalData& data, const Eigen::VectorXd& m_hat, const CarStructure& structure,
                      const ModelPriors& priors, const Step2Settings& settings) {
  Step2Result out;
  out.time_scale = settings.time_scale.value_or(data.scaler.time_scale());
  Step2Sampler sampler(data.records, m_hat, structure, priors, settings, out.time_scale);
  std::vector<Eigen::VectorXd> history;
  for (std::size_t it = 0; it < settings.burn_in; ++it) {
    sampler.iterate(true);
    if (settings.hmc.adapt_mass && it < settings.burn_in / 2) history.push_back(sampler.state().log_frailty);
    if (settings.hmc.adapt_mass && it + 1 == settings.burn_in / 2 && history.size() > 10) {
      sampler.set_mass(inverse_variance(history));
      sampler.restart_adaptation();
    }
  }
  sampler.finish_adaptation();
  const std::size_t total = settings.n_samples * settings.thin;
  for (std::size_t k = 0; k < total; ++k) {
    sampler.iterate(false);
    if (k % settings.thin == 0) {
      out.samples.push_back(sampler.state());
      if (!settings.keep_latents) {
        out.samples.back().latent_z.clear();
        out.samples.back().latent_z.shrink_to_fit();
      }
    }
  }
  out.diagnostics = sampler.diagnostics();
  if (out.diagnostics.hmc.divergence_rate() > settings.hmc.max_divergence_rate) {
    throw DivergenceError("step 2: frailty divergence rate " + std::to_string(out.diagnostics.hmc.divergence_rate()) +
                              " exceeds limit",
                          out.diagnostics.hmc);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Step 3

double step3_log_weight(const ChainState& state, const Eigen::VectorXd& m, const Eigen::VectorXd& m_hat,
                        std::span<const SurvivalRecord> records, double time_scale) {
  const ProbitSurface surface{state.forest, time_scale};
  double lw = 0.0;
  for (std::size_t j = 0; j < records.size(); ++j) {
    const auto& rec = records[j];
    const auto c = static_cast<Eigen::Index>(rec.cluster);
    if (m[c] == m_hat[c]) continue;
    if (rec.event) {
      lw += log_normal_cdf(surface.b(rec.time, m[c], rec.covariates)) -
            log_normal_cdf(surface.b(rec.time, m_hat[c], rec.covariates));
    }
    if (j >= state.rejected.n_subjects()) continue;
    for (double g : state.rejected.subject(j)) {
      lw += log_normal_ccdf(surface.b(g, m[c], rec.covariates)) - log_normal_ccdf(surface.b(g, m_hat[c], rec.covariates));
    }
  }
  return lw;
}

std::vector<std::size_t> select_draws(std::size_t n, std::size_t max_draws) {
  std::vector<std::size_t> idx;
  if (max_draws == 0 || max_draws >= n) {
    idx.resize(n);
    std::iota(idx.begin(), idx.end(), 0);
    return idx;
  }
  for (std::size_t k = 0; k < max_draws; ++k) idx.push_back(k * n / max_draws);
  return idx;
}

void normalize_weights(WeightedPosterior& posterior) {
  const auto& lw = posterior.log_weights;
  if (lw.empty()) return;
  const double mx = *std::max_element(lw.begin(), lw.end());
  std::vector<double> u(lw.size());
  double sum = 0.0, sum_sq = 0.0;
  for (std::size_t s = 0; s < lw.size(); ++s) {
    u[s] = std::exp(lw[s] - mx);
    sum += u[s];
    sum_sq += u[s] * u[s];
  }
  posterior.weights.resize(lw.size());
  for (std::size_t s = 0; s < lw.size(); ++s) posterior.weights[s] = u[s] / sum;
  posterior.ess = sum * sum / sum_sq;
  posterior.degenerate = posterior.ess < kDegenerateEssFraction * static_cast<double>(lw.size());
}

namespace {
PosteriorDraw to_draw(const ChainState& s, Eigen::VectorXd m) {
  return PosteriorDraw{s.forest, s.lambda0, s.log_frailty, s.eta1, std::move(m)};
}
}  // namespace

WeightedPosterior step3_weights(const Step2Result& chain, const SmuPosterior& smu, const SurvivalData& data) {
  const std::size_t s_count = std::min(chain.samples.size(), smu.samples.size());
  if (s_count == 0) throw DataError("step 3 needs nonempty step 1 and step 2 samples");
  const auto chain_idx = select_draws(chain.samples.size(), s_count);
  const auto smu_idx = select_draws(smu.samples.size(), s_count);
  WeightedPosterior post;
  post.time_scale = chain.time_scale;
  post.m_hat = smu.m_hat;
  for (std::size_t k = 0; k < s_count; ++k) {
    const auto& state = chain.samples[chain_idx[k]];
    const auto& m = smu.samples[smu_idx[k]].m;
    post.log_weights.push_back(step3_log_weight(state, m, smu.m_hat, data.records, chain.time_scale));
    post.draws.push_back(to_draw(state, m));
  }
  normalize_weights(post);
  if (post.degenerate) {
    std::cerr << "warning: degenerate importance weights (ESS " << post.ess << " of " << s_count << ")\n";
  }
  return post;
}

WeightedPosterior plug_in_posterior(const Step2Result& chain, const Eigen::VectorXd& m_hat) {
  WeightedPosterior post;
  post.time_scale = chain.time_scale;
  post.m_hat = m_hat;
  for (const auto& s : chain.samples) {
    post.draws.push_back(to_draw(s, m_hat));
    post.log_weights.push_back(0.0);
  }
  normalize_weights(post);
  return post;
}

// ---------------------------------------------------------------------------
// Prediction

double weighted_quantile(std::span<const double> values, std::span<const double> weights, double q) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  double total = 0.0;
  for (double w : weights) total += w;
  double cum = 0.0;
  for (auto i : order) {
    cum += weights[i] / total;
    if (cum >= q - 1e-12) return values[i];
  }
  return values[order.back()];
}

std::vector<double> draw_survival_curve(const PosteriorDraw& draw, double time_scale, std::span<const double> x,
                                        std::size_t cluster, std::span<const double> t_grid, std::size_t substeps,
                                        std::optional<double> m_override) {
  const ProbitSurface surface{draw.forest, time_scale};
  const double m = m_override.value_or(draw.m[static_cast<Eigen::Index>(cluster)]);
  auto integral = integrated_probit_curve(t_grid, x, m, surface, substeps);
  const double rate = draw.lambda0 * std::exp(draw.log_frailty[static_cast<Eigen::Index>(cluster)]);
  for (auto& v : integral) v = std::exp(-rate * v);
  return integral;
}

SurvivalCurve predict_survival(const WeightedPosterior& posterior, std::span<const double> x, std::size_t cluster,
                               std::span<const double> t_grid, const PredictOptions& options) {
  if (cluster >= posterior.n_clusters()) throw DataError("unknown cluster " + std::to_string(cluster + 1));
  if (posterior.draws.empty()) throw DataError("posterior has no draws");
  for (std::size_t g = 0; g < t_grid.size(); ++g) {
    if (t_grid[g] < 0 || (g > 0 && t_grid[g] <= t_grid[g - 1])) throw DataError("time grid must be increasing from 0");
  }
  if (options.warn_on_extrapolation && !t_grid.empty() &&
      t_grid.back() > options.extrapolation_cap * posterior.time_scale) {
    std::cerr << "warning: prediction horizon " << t_grid.back() << " exceeds the supported range "
              << options.extrapolation_cap * posterior.time_scale
              << "; the ensemble is flat beyond the data and the curve is an extrapolation\n";
  }
  const std::size_t intervals = std::max<std::size_t>(t_grid.size(), 1);
  const std::size_t substeps = std::max<std::size_t>(1, (options.min_grid_points + intervals - 1) / intervals);
  const auto idx = select_draws(posterior.size(), options.max_draws);
  std::vector<double> w;
  for (auto s : idx) w.push_back(posterior.weights[s]);
  const double wsum = std::accumulate(w.begin(), w.end(), 0.0);
  for (auto& v : w) v /= wsum;

  std::vector<std::vector<double>> curves;
  for (auto s : idx) curves.push_back(draw_survival_curve(posterior.draws[s], posterior.time_scale, x, cluster, t_grid, substeps));

  SurvivalCurve out;
  out.t.assign(t_grid.begin(), t_grid.end());
  const double lo_q = 0.5 * (1.0 - options.level), hi_q = 0.5 * (1.0 + options.level);
  std::vector<double> col(idx.size());
  for (std::size_t g = 0; g < t_grid.size(); ++g) {
    double mean = 0.0;
    for (std::size_t k = 0; k < idx.size(); ++k) {
      col[k] = curves[k][g];
      mean += w[k] * col[k];
    }
    // weights sum to one only up to rounding; keep the mean inside the draws' range
    const auto [lo, hi] = std::minmax_element(col.begin(), col.end());
    out.estimate.push_back(std::clamp(mean, *lo, *hi));
    out.lower.push_back(weighted_quantile(col, w, lo_q));
    out.upper.push_back(weighted_quantile(col, w, hi_q));
  }
  return out;
}

PriorPredictive prior_predictive_check(const PriorPredictiveSettings& settings, const CarStructure& structure,
                                       std::span<const double> x, std::span<const double> t_grid, std::size_t n_draws,
                                       Rng& rng) {
  PriorPredictive out;
  out.t.assign(t_grid.begin(), t_grid.end());
  out.mean.assign(t_grid.size(), 0.0);
  const std::size_t dim = ensemble_dimension(x.size());
  const RhoBounds bounds = rho_bounds(structure);
  const auto& pr = settings.priors;
  for (std::size_t s = 0; s < n_draws; ++s) {
    const Forest forest = sample_prior_forest(pr.forest, dim, rng);
    const double lambda0 = settings.fixed_lambda0 ? *settings.fixed_lambda0
                                                  : std::gamma_distribution<double>(pr.lambda_shape, 1.0 / pr.lambda_rate)(rng);
    double frailty = 1.0;
    if (settings.fixed_frailty) {
      frailty = *settings.fixed_frailty;
    } else {
      CarParams eta;
      eta.sigma2 = 1.0 / std::gamma_distribution<double>(pr.frailty_sigma2.shape, 1.0 / pr.frailty_sigma2.scale)(rng);
      eta.rho = std::uniform_real_distribution<double>(bounds.lower, bounds.upper)(rng);
      const Eigen::VectorXd r = sample_car(eta, structure, rng);
      frailty = std::exp(r[static_cast<Eigen::Index>(settings.cluster)]);
    }
    const ProbitSurface surface{forest, settings.time_scale};
    const auto integral = integrated_probit_curve(t_grid, x, settings.m_value, surface, 1);
    bool valid = true;
    double prev = 1.0;
    for (std::size_t g = 0; g < t_grid.size(); ++g) {
      const double sv = std::exp(-lambda0 * frailty * integral[g]);
      if (t_grid[g] == 0.0 && sv != 1.0) valid = false;
      if (sv > prev) valid = false;
      prev = sv;
      out.mean[g] += (sv - out.mean[g]) / static_cast<double>(s + 1);
    }
    out.invalid_draws += !valid;
  }
  return out;
}

}  // namespace spatsurv
