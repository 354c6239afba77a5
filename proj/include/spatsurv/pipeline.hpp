#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "spatsurv/common.hpp"
#include "spatsurv/data.hpp"
#include "spatsurv/forest.hpp"
#include "spatsurv/hazard.hpp"
#include "spatsurv/samplers.hpp"
#include "spatsurv/spatial.hpp"

namespace spatsurv {

struct HmcTuning {
  double initial_step = 0.05;
  int n_leapfrog = 25;
  double adapt_target = 0.8;
  /// Sets the diagonal mass from sample variances of the first half of burn-in.
  bool adapt_mass = false;
  /// Posterior-draw divergence rate above which a run fails.
  double max_divergence_rate = 0.01;
};

struct HmcDiagnostics {
  std::size_t transitions = 0;  // post burn-in
  std::size_t accepted = 0;
  std::size_t divergences = 0;  // post burn-in
  std::size_t burn_in_divergences = 0;
  double step_size = 0.0;
  double divergence_rate() const {
    return transitions ? static_cast<double>(divergences) / static_cast<double>(transitions) : 0.0;
  }
  double accept_rate() const {
    return transitions ? static_cast<double>(accepted) / static_cast<double>(transitions) : 0.0;
  }
};

/// Post burn-in divergence rate above HmcTuning::max_divergence_rate.
class DivergenceError : public NumericalError {
 public:
  DivergenceError(const std::string& what, HmcDiagnostics diag) : NumericalError(what), diagnostics(diag) {}
  HmcDiagnostics diagnostics;
};

// ---------------------------------------------------------------------------
// Step 1: cluster covariate from the auxiliary survey

struct Step1Settings {
  std::size_t burn_in = 2500;
  std::size_t n_samples = 5000;
  std::size_t thin = 1;
  HmcTuning hmc;
  InverseGammaPrior sigma2_prior;
  double rho_step_fraction = 0.1;
  std::uint64_t seed = 1;
};

struct SmuSample {
  Eigen::VectorXd m;  // in (0,1)^N
  double sigma2 = 1.0;
  double rho = 0.0;
};

struct SmuPosterior {
  std::vector<SmuSample> samples;
  Eigen::VectorXd m_hat;  // posterior mean of M (not of logit M)
  HmcDiagnostics hmc;
  double rho_accept_rate = 0.0;
};

/// Log target over theta = logit(M): binomial survey likelihood plus the CAR density.
LogDensityTarget make_smu_target(const SurveyCounts& survey, const CarStructure& structure, const CarParams& eta0);

SmuPosterior step1_impute(const SurveyCounts& survey, const CarStructure& structure, const Step1Settings& settings);

// ---------------------------------------------------------------------------
// Step 2: survival submodel given M-hat

struct ModelPriors {
  double lambda_shape = 0.01;
  double lambda_rate = 0.01;
  InverseGammaPrior frailty_sigma2;
  ForestPrior forest;
};

enum class Lambda0Update { kGibbs, kMetropolis };

struct Step2Settings {
  std::size_t burn_in = 2500;
  std::size_t n_samples = 5000;
  std::size_t thin = 1;
  HmcTuning hmc;
  Lambda0Update lambda_update = Lambda0Update::kGibbs;
  double lambda_mh_step = 0.05;  // log-scale random walk for the Metropolis variant
  double rho_step_fraction = 0.1;
  std::uint64_t seed = 1;
  std::size_t threads = 1;
  bool keep_latents = false;  // store probit latents in emitted samples
  /// Time coordinate scale; the data scaler's value is used when unset.
  std::optional<double> time_scale;
};

struct ChainState {
  Forest forest;
  double lambda0 = 1.0;
  Eigen::VectorXd log_frailty;
  CarParams eta1;
  RejectedPoints rejected;
  std::vector<double> latent_z;  // events first (record order), then rejected points (arena order)
};

struct Step2Diagnostics {
  HmcDiagnostics hmc;
  BackfitStats backfit;
  std::size_t iterations = 0;
  double mean_rejected_points = 0.0;
  double rho_accept_rate = 0.0;
  double lambda_accept_rate = 1.0;
};

struct Step2Result {
  std::vector<ChainState> samples;
  Step2Diagnostics diagnostics;
  double time_scale = 1.0;
};

/// Frailty block target over R = log W: sum_i [Delta_i R_i - lambda0 e^{R_i} T_i] + CAR.
LogDensityTarget make_frailty_target(Eigen::VectorXd event_counts, Eigen::VectorXd exposure, double lambda0,
                                     const CarParams& eta1, const CarStructure& structure);

/// Data-augmented Gibbs sampler for the survival submodel with M fixed at m_hat. The
/// update blocks are public so conditional-distribution tests can drive them one at a time.
class Step2Sampler {
 public:
  Step2Sampler(std::vector<SurvivalRecord> records, Eigen::VectorXd m_hat, const CarStructure& structure,
               ModelPriors priors, Step2Settings settings, double time_scale);

  void set_records(std::vector<SurvivalRecord> records);
  const std::vector<SurvivalRecord>& records() const { return records_; }

  ChainState& state() { return state_; }
  const ChainState& state() const { return state_; }

  /// Steps (a)-(f) in order; `adapting` enables step-size adaptation for the frailty HMC.
  void iterate(bool adapting);

  void augment();
  void draw_latents();
  void update_forest();
  void update_lambda0();
  void update_frailty(bool adapting);
  void update_eta();

  /// Per-cluster sum of events plus rejected points, and sum of observed times.
  Eigen::VectorXd cluster_event_counts() const;
  Eigen::VectorXd cluster_exposure() const;

  double step_size() const { return step_size_; }
  void set_step_size(double eps) { step_size_ = eps; }
  void finish_adaptation();
  void restart_adaptation();
  void set_mass(Eigen::VectorXd mass) { mass_ = std::move(mass); }

  Step2Diagnostics& diagnostics() { return diag_; }
  Rng& rng() { return rng_; }
  std::size_t iteration() const { return iteration_; }
  double time_scale() const { return time_scale_; }

 private:
  void rebuild_points();

  std::vector<SurvivalRecord> records_;
  Eigen::VectorXd m_hat_;
  const CarStructure& structure_;
  ModelPriors priors_;
  Step2Settings settings_;
  double time_scale_;
  std::size_t dim_;

  ChainState state_;
  PointMatrix points_;
  std::vector<double> fit_;  // ensemble value at each point, kept current
  Rng rng_;
  std::size_t iteration_ = 0;
  double step_size_;
  Eigen::VectorXd mass_;
  StepSizeAdapter adapter_;
  Step2Diagnostics diag_;
  std::size_t rho_proposals_ = 0, rho_accepts_ = 0, lambda_proposals_ = 0, lambda_accepts_ = 0;
};

/// Runs burn-in then emits every `thin`-th state. Throws NumericalError on a non-finite
/// likelihood or when the post burn-in divergence rate exceeds the configured limit.
Step2Result step2_run(const SurvivalData& data, const Eigen::VectorXd& m_hat, const CarStructure& structure,
                      const ModelPriors& priors, const Step2Settings& settings);

// ---------------------------------------------------------------------------
// Step 3 and posterior summaries

struct PosteriorDraw {
  Forest forest;
  double lambda0 = 1.0;
  Eigen::VectorXd log_frailty;
  CarParams eta1;
  Eigen::VectorXd m;  // cluster covariate used for prediction with this draw
};

struct WeightedPosterior {
  std::vector<PosteriorDraw> draws;
  std::vector<double> log_weights;
  std::vector<double> weights;  // normalized
  double ess = 0.0;
  bool degenerate = false;  // ESS below 5% of the draw count
  double time_scale = 1.0;
  Eigen::VectorXd m_hat;

  std::size_t size() const { return draws.size(); }
  std::size_t n_clusters() const { return static_cast<std::size_t>(m_hat.size()); }
};

inline constexpr double kDegenerateEssFraction = 0.05;

/// Importance log weight of one paired draw: complete-data likelihood ratio at M versus M-hat.
double step3_log_weight(const ChainState& state, const Eigen::VectorXd& m, const Eigen::VectorXd& m_hat,
                        std::span<const SurvivalRecord> records, double time_scale);

/// Pairs Step-2 states with Step-1 draws by index after thinning both to a common length.
WeightedPosterior step3_weights(const Step2Result& chain, const SmuPosterior& smu, const SurvivalData& data);

/// Equal weights with M fixed at m_hat (Step 3 skipped).
WeightedPosterior plug_in_posterior(const Step2Result& chain, const Eigen::VectorXd& m_hat);

/// Normalizes log weights with max subtraction and fills weights/ESS/degenerate.
void normalize_weights(WeightedPosterior& posterior);

struct SurvivalCurve {
  std::vector<double> t;
  std::vector<double> estimate;
  std::vector<double> lower;
  std::vector<double> upper;
};

struct PredictOptions {
  double level = 0.95;
  std::size_t max_draws = 0;  // 0 uses every draw; otherwise an evenly spaced subset
  std::size_t min_grid_points = kDefaultHazardGrid;
  /// Largest supported horizon in multiples of the data's time scale.
  double extrapolation_cap = 1.5 / (1.0 + kTimeMargin);
  bool warn_on_extrapolation = true;
};

/// Indices of an evenly spaced subset of at most `max_draws` draws (all if 0).
std::vector<std::size_t> select_draws(std::size_t n, std::size_t max_draws);

/// Per-draw survival curve S(t | x, M_i, W_i) on an increasing grid.
std::vector<double> draw_survival_curve(const PosteriorDraw& draw, double time_scale, std::span<const double> x,
                                        std::size_t cluster, std::span<const double> t_grid, std::size_t substeps,
                                        std::optional<double> m_override = std::nullopt);

SurvivalCurve predict_survival(const WeightedPosterior& posterior, std::span<const double> x, std::size_t cluster,
                               std::span<const double> t_grid, const PredictOptions& options = {});

struct PriorPredictiveSettings {
  ModelPriors priors;
  double time_scale = 1.0;
  double m_value = 0.5;
  std::size_t cluster = 0;
  std::optional<double> fixed_lambda0;
  std::optional<double> fixed_frailty;
};

struct PriorPredictive {
  std::vector<double> t;
  std::vector<double> mean;
  std::size_t invalid_draws = 0;  // draws with S(0) != 1 or an increase anywhere on the grid
};

PriorPredictive prior_predictive_check(const PriorPredictiveSettings& settings, const CarStructure& structure,
                                       std::span<const double> x, std::span<const double> t_grid, std::size_t n_draws,
                                       Rng& rng);

/// Weighted quantile of values under normalized weights (inverse of the weighted ECDF).
double weighted_quantile(std::span<const double> values, std::span<const double> weights, double q);

}  // namespace spatsurv
