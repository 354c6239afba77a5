#pragma once

#include <Eigen/Dense>

#include "spatsurv/common.hpp"
#include "spatsurv/data.hpp"

namespace spatsurv {

/// Proper CAR structure for a fixed graph. The generalized eigenvalues of
/// D^{-1/2} A D^{-1/2} are computed once and give log det(D - rho A) in O(N).
class CarStructure {
 public:
  explicit CarStructure(AdjacencyGraph graph);

  const AdjacencyGraph& graph() const { return graph_; }
  std::size_t size() const { return graph_.n_nodes(); }
  /// Ascending.
  const Eigen::VectorXd& eigenvalues() const { return eigenvalues_; }
  const Eigen::MatrixXd& eigenvectors() const { return eigenvectors_; }
  double log_det_degree() const { return log_det_degree_; }

  /// D - rho A.
  Eigen::MatrixXd precision(double rho) const;
  /// r^T (D - rho A) r.
  double quadratic_form(const Eigen::VectorXd& r, double rho) const;
  /// log det(D - rho A) = log det D + sum_i log(1 - rho lambda_i).
  double log_det_precision(double rho) const;

 private:
  AdjacencyGraph graph_;
  Eigen::VectorXd eigenvalues_;
  Eigen::MatrixXd eigenvectors_;
  Eigen::VectorXd inv_sqrt_degree_;
  double log_det_degree_ = 0.0;
};

struct RhoBounds {
  double lower = -1.0;
  double upper = 1.0;
  bool contains(double rho) const { return rho > lower && rho < upper; }
  double width() const { return upper - lower; }
};

struct CarParams {
  double sigma2 = 1.0;
  double rho = 0.0;
};

struct InverseGammaPrior {
  double shape = 1.0;
  double scale = 1.0;
};

/// Open interval (1/lambda_min, 1/lambda_max) on which D - rho A is positive definite.
RhoBounds rho_bounds(const CarStructure& structure);

double car_log_density(const Eigen::VectorXd& r, const CarParams& params, const CarStructure& structure);
/// -(D - rho A) r / sigma^2.
Eigen::VectorXd car_grad(const Eigen::VectorXd& r, const CarParams& params, const CarStructure& structure);
Eigen::VectorXd sample_car(const CarParams& params, const CarStructure& structure, Rng& rng);

/// Conjugate draw from InverseGamma(shape + N/2, scale + r^T (D - rho A) r / 2).
double gibbs_sigma2(const Eigen::VectorXd& r, const CarStructure& structure, double rho, const InverseGammaPrior& prior,
                    Rng& rng);

struct RhoStep {
  double rho = 0.0;
  bool accepted = false;
};

/// Random-walk Metropolis on rho under a uniform prior over rho_bounds; the proposal
/// standard deviation is `step_fraction` times the bound width.
RhoStep update_rho(const Eigen::VectorXd& r, const CarStructure& structure, double sigma2, double current_rho, Rng& rng,
                   double step_fraction = 0.1);

/// Unnormalized log conditional of rho given r and sigma^2 (uniform prior inside the bounds).
double rho_log_conditional(const Eigen::VectorXd& r, const CarStructure& structure, double sigma2, double rho);

}  // namespace spatsurv
