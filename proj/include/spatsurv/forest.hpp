#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "spatsurv/common.hpp"

namespace spatsurv {

/// Rows are points in the ensemble's input space (scaled time, M, covariates).
using PointMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline std::span<const double> row_span(const PointMatrix& m, Eigen::Index i) {
  return {m.data() + i * m.cols(), static_cast<std::size_t>(m.cols())};
}

struct SplitRule {
  std::size_t feature = 0;
  double cutpoint = 0.5;
  double bandwidth = 0.1;
};

/// Logistic gate [1 + exp{-(x - c)/a}]^{-1}; the right child receives this share.
double soft_gate(double x, double cutpoint, double bandwidth);

/// A soft decision tree. Nodes are kept in preorder with the root at index 0, so
/// every parent precedes its children.
class SoftTree {
 public:
  struct Node {
    int left = -1;
    int right = -1;
    int depth = 0;
    SplitRule rule{};
    double value = 0.0;  // leaf prediction; unused on branches
    bool is_leaf() const { return left < 0; }
  };

  explicit SoftTree(double leaf_value = 0.0);
  /// Validates the topology (binary, reachable from node 0) and relays it out in preorder.
  static SoftTree from_nodes(std::vector<Node> nodes);

  const std::vector<Node>& nodes() const { return nodes_; }
  std::size_t n_leaves() const { return leaf_nodes_.size(); }
  std::size_t n_branches() const { return nodes_.size() - leaf_nodes_.size(); }
  /// Node indices of the leaves, in leaf order.
  const std::vector<std::size_t>& leaf_nodes() const { return leaf_nodes_; }
  std::vector<std::size_t> branch_nodes() const;
  /// Branches whose children are both leaves.
  std::vector<std::size_t> prunable_nodes() const;
  int depth() const;

  std::vector<double> leaf_values() const;
  void set_leaf_values(std::span<const double> values);

  /// Soft membership of x in each leaf; nonnegative and summing to one.
  void leaf_weights(std::span<const double> x, std::span<double> out) const;
  std::vector<double> leaf_weights(std::span<const double> x) const;
  double evaluate(std::span<const double> x) const;

  /// Turns a leaf into a branch with two fresh leaves.
  void grow(std::size_t leaf_node, const SplitRule& rule, double left_value = 0.0, double right_value = 0.0);
  /// Collapses a prunable branch into a leaf.
  void prune(std::size_t branch_node, double value = 0.0);
  void set_rule(std::size_t branch_node, const SplitRule& rule);

 private:
  void relayout();

  std::vector<Node> nodes_;
  std::vector<std::size_t> leaf_nodes_;
};

struct Forest {
  std::vector<SoftTree> trees;

  Forest() = default;
  Forest(std::size_t n_trees, double leaf_value = 0.0) : trees(n_trees, SoftTree(leaf_value)) {}
  std::size_t size() const { return trees.size(); }
  double evaluate(std::span<const double> x) const;
};

struct ForestPrior {
  std::size_t n_trees = 50;
  double gamma = 0.95;
  double depth_power = 2.0;
  double bandwidth_rate = 10.0;
  /// Leaf standard deviation; 3 / (2 sqrt(K)) unless overridden.
  std::optional<double> sigma_mu_override;
  /// Branching probability is forced to zero at this depth and below (no limit if unset).
  std::optional<int> max_depth;
  double bandwidth_step = 0.5;  // random-walk scale on log bandwidth

  double sigma_mu() const;
  /// gamma (1 + d)^(-depth_power).
  double branch_probability(int depth) const;
};

/// Log prior of topology, split rules and bandwidths (leaf values excluded).
double log_tree_prior(const SoftTree& tree, const ForestPrior& prior, std::size_t n_features);

/// Draws a tree from the branching-process prior, leaf values included.
SoftTree sample_prior_tree(const ForestPrior& prior, std::size_t n_features, Rng& rng);
Forest sample_prior_forest(const ForestPrior& prior, std::size_t n_features, Rng& rng);

enum class MoveKind { kGrow, kPrune, kChange };

double move_probability(const SoftTree& tree, MoveKind kind);
MoveKind choose_move(const SoftTree& tree, Rng& rng);

struct Proposal {
  SoftTree tree;
  /// log q(current | proposed) - log q(proposed | current), including move-choice
  /// probabilities and the densities of freshly drawn split parameters.
  double log_proposal_ratio = 0.0;
  bool valid = false;  // false when the move does not apply (prune/change on a stump-free tree)
};

Proposal propose_move(const SoftTree& tree, MoveKind kind, const ForestPrior& prior, std::size_t n_features, Rng& rng);

/// Gaussian sufficient statistics of a tree's leaf-weight design against targets r.
struct LeafStats {
  Eigen::MatrixXd gram;  // Phi^T Phi
  Eigen::VectorXd proj;  // Phi^T r
  double rss = 0.0;      // r^T r
  std::size_t n = 0;
};

/// Leaf-weight design matrix, n x J row-major.
std::vector<double> leaf_weight_matrix(const SoftTree& tree, const PointMatrix& points);
LeafStats leaf_stats(std::span<const double> weights, std::size_t n_leaves, std::span<const double> targets);

/// log N(r; 0, sigma_mu^2 Phi Phi^T + I) evaluated through the J x J form.
double marginal_loglik(const LeafStats& stats, double sigma_mu);
double tree_marginal_loglik(const SoftTree& tree, std::span<const double> targets, const PointMatrix& points,
                            double sigma_mu);

/// Conjugate draw mu ~ N(A^{-1} Phi^T r, A^{-1}), A = Phi^T Phi + I / sigma_mu^2.
std::vector<double> draw_leaf_values(const LeafStats& stats, double sigma_mu, Rng& rng);
std::vector<double> draw_leaf_values(const SoftTree& tree, std::span<const double> targets, const PointMatrix& points,
                                     double sigma_mu, Rng& rng);

struct BackfitStats {
  std::size_t proposed[3] = {0, 0, 0};  // indexed by MoveKind
  std::size_t accepted[3] = {0, 0, 0};
  std::size_t bandwidth_proposed = 0;
  std::size_t bandwidth_accepted = 0;
};

/// One Bayesian backfitting pass over all trees for latent z ~ N(b(x), 1).
/// `fit` holds b at every point on entry and is kept current on exit.
void backfit_sweep(Forest& forest, std::span<const double> latent, const PointMatrix& points, const ForestPrior& prior,
                   Rng& rng, std::span<double> fit, BackfitStats* stats = nullptr);
void backfit_sweep(Forest& forest, std::span<const double> latent, const PointMatrix& points, const ForestPrior& prior,
                   Rng& rng, BackfitStats* stats = nullptr);

std::vector<double> evaluate_points(const Forest& forest, const PointMatrix& points);

/// One self-describing JSON document per forest; doubles round-trip exactly.
std::string forest_to_json(const Forest& forest);
Forest forest_from_json(std::string_view text);

}  // namespace spatsurv
