#include "spatsurv/spatial.hpp"

#include <cmath>
#include <numbers>

namespace spatsurv {

CarStructure::CarStructure(AdjacencyGraph graph) : graph_(std::move(graph)) {
  const Eigen::VectorXd& deg = graph_.degrees();
  inv_sqrt_degree_ = deg.array().rsqrt();
  log_det_degree_ = deg.array().log().sum();
  const Eigen::MatrixXd scaled = inv_sqrt_degree_.asDiagonal() * graph_.adjacency() * inv_sqrt_degree_.asDiagonal();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(scaled);
  if (solver.info() != Eigen::Success) throw NumericalError("eigendecomposition of the scaled adjacency failed");
  eigenvalues_ = solver.eigenvalues();
  eigenvectors_ = solver.eigenvectors();
}

Eigen::MatrixXd CarStructure::precision(double rho) const {
  Eigen::MatrixXd q = -rho * graph_.adjacency();
  q.diagonal() += graph_.degrees();
  return q;
}

double CarStructure::quadratic_form(const Eigen::VectorXd& r, double rho) const {
  const double diag = (graph_.degrees().array() * r.array().square()).sum();
  return diag - rho * r.dot(graph_.adjacency() * r);
}

double CarStructure::log_det_precision(double rho) const {
  return log_det_degree_ + (1.0 - rho * eigenvalues_.array()).log().sum();
}

RhoBounds rho_bounds(const CarStructure& structure) {
  const auto& ev = structure.eigenvalues();
  // the top eigenvalue of the normalized adjacency is exactly 1; pin it so rho = 1 is excluded
  return {1.0 / ev[0], 1.0};
}

double car_log_density(const Eigen::VectorXd& r, const CarParams& params, const CarStructure& structure) {
  if (!rho_bounds(structure).contains(params.rho)) throw std::domain_error("rho outside the CAR properness bounds");
  if (r.size() != static_cast<Eigen::Index>(structure.size())) throw std::invalid_argument("CAR vector length mismatch");
  const double n = static_cast<double>(r.size());
  return -0.5 * n * std::log(2.0 * std::numbers::pi * params.sigma2) + 0.5 * structure.log_det_precision(params.rho) -
         0.5 * structure.quadratic_form(r, params.rho) / params.sigma2;
}

Eigen::VectorXd car_grad(const Eigen::VectorXd& r, const CarParams& params, const CarStructure& structure) {
  if (!rho_bounds(structure).contains(params.rho)) throw std::domain_error("rho outside the CAR properness bounds");
  const auto& g = structure.graph();
  return -(g.degrees().cwiseProduct(r) - params.rho * (g.adjacency() * r)) / params.sigma2;
}

Eigen::VectorXd sample_car(const CarParams& params, const CarStructure& structure, Rng& rng) {
  const Eigen::VectorXd scale = 1.0 - params.rho * structure.eigenvalues().array();
  if ((scale.array() <= 0.0).any()) throw NumericalError("CAR precision is not positive definite at this rho");
  std::normal_distribution<double> norm(0.0, 1.0);
  Eigen::VectorXd xi(scale.size());
  for (Eigen::Index i = 0; i < xi.size(); ++i) xi[i] = norm(rng);
  const Eigen::VectorXd inv_sqrt_deg = structure.graph().degrees().array().rsqrt();
  // D^{-1/2} V diag(1 - rho lambda)^{-1/2} xi has covariance (D - rho A)^{-1}
  return std::sqrt(params.sigma2) *
         inv_sqrt_deg.cwiseProduct(structure.eigenvectors() * xi.cwiseQuotient(scale.cwiseSqrt()));
}

double gibbs_sigma2(const Eigen::VectorXd& r, const CarStructure& structure, double rho, const InverseGammaPrior& prior,
                    Rng& rng) {
  const double shape = prior.shape + 0.5 * static_cast<double>(r.size());
  const double rate = prior.scale + 0.5 * structure.quadratic_form(r, rho);
  return 1.0 / std::gamma_distribution<double>(shape, 1.0 / rate)(rng);
}

double rho_log_conditional(const Eigen::VectorXd& r, const CarStructure& structure, double sigma2, double rho) {
  if (!rho_bounds(structure).contains(rho)) return -INFINITY;
  return 0.5 * (1.0 - rho * structure.eigenvalues().array()).log().sum() +
         0.5 * rho * r.dot(structure.graph().adjacency() * r) / sigma2;
}

RhoStep update_rho(const Eigen::VectorXd& r, const CarStructure& structure, double sigma2, double current_rho, Rng& rng,
                   double step_fraction) {
  const RhoBounds bounds = rho_bounds(structure);
  const double proposal = current_rho + step_fraction * bounds.width() * std::normal_distribution<double>(0.0, 1.0)(rng);
  if (!bounds.contains(proposal)) return {current_rho, false};
  const double log_ratio = rho_log_conditional(r, structure, sigma2, proposal) -
                           rho_log_conditional(r, structure, sigma2, current_rho);
  if (log_ratio >= 0.0 || std::log(std::uniform_real_distribution<double>(0.0, 1.0)(rng)) < log_ratio) {
    return {proposal, true};
  }
  return {current_rho, false};
}

}  // namespace spatsurv
