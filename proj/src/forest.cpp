#include "spatsurv/forest.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace spatsurv {

double soft_gate(double x, double cutpoint, double bandwidth) {
  return 1.0 / (1.0 + std::exp(-(x - cutpoint) / bandwidth));
}

// ---------------------------------------------------------------------------
// SoftTree

SoftTree::SoftTree(double leaf_value) {
  Node root;
  root.value = leaf_value;
  nodes_.push_back(root);
  leaf_nodes_.push_back(0);
}

SoftTree SoftTree::from_nodes(std::vector<Node> nodes) {
  if (nodes.empty()) throw std::invalid_argument("tree needs at least one node");
  std::vector<int> seen(nodes.size(), 0);
  std::vector<int> stack{0};
  while (!stack.empty()) {
    const int i = stack.back();
    stack.pop_back();
    if (i < 0 || static_cast<std::size_t>(i) >= nodes.size()) throw std::invalid_argument("child index out of range");
    if (seen[static_cast<std::size_t>(i)]++) throw std::invalid_argument("node reachable twice");
    const Node& n = nodes[static_cast<std::size_t>(i)];
    if ((n.left < 0) != (n.right < 0)) throw std::invalid_argument("branch must have exactly two children");
    if (!n.is_leaf()) {
      if (!(n.rule.bandwidth > 0)) throw std::invalid_argument("bandwidth must be positive");
      stack.push_back(n.left);
      stack.push_back(n.right);
    }
  }
  SoftTree tree;
  tree.nodes_ = std::move(nodes);
  tree.relayout();
  return tree;
}

void SoftTree::relayout() {
  std::vector<Node> out;
  out.reserve(nodes_.size());
  leaf_nodes_.clear();
  // (old index, parent slot in `out`, is_right, depth)
  struct Frame {
    int old;
    int parent;
    bool right;
    int depth;
  };
  std::vector<Frame> stack{{0, -1, false, 0}};
  while (!stack.empty()) {
    const Frame f = stack.back();
    stack.pop_back();
    const int slot = static_cast<int>(out.size());
    Node n = nodes_[static_cast<std::size_t>(f.old)];
    n.depth = f.depth;
    const int old_left = n.left;
    const int old_right = n.right;
    out.push_back(n);
    if (f.parent >= 0) {
      auto& p = out[static_cast<std::size_t>(f.parent)];
      (f.right ? p.right : p.left) = slot;
    }
    if (old_left < 0) {
      leaf_nodes_.push_back(static_cast<std::size_t>(slot));
    } else {
      stack.push_back({old_right, slot, true, f.depth + 1});
      stack.push_back({old_left, slot, false, f.depth + 1});
    }
  }
  nodes_ = std::move(out);
}

std::vector<std::size_t> SoftTree::branch_nodes() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (!nodes_[i].is_leaf()) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> SoftTree::prunable_nodes() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const auto& n = nodes_[i];
    if (!n.is_leaf() && nodes_[static_cast<std::size_t>(n.left)].is_leaf() &&
        nodes_[static_cast<std::size_t>(n.right)].is_leaf()) {
      out.push_back(i);
    }
  }
  return out;
}

int SoftTree::depth() const {
  int d = 0;
  for (const auto& n : nodes_) d = std::max(d, n.depth);
  return d;
}

std::vector<double> SoftTree::leaf_values() const {
  std::vector<double> out;
  out.reserve(leaf_nodes_.size());
  for (auto i : leaf_nodes_) out.push_back(nodes_[i].value);
  return out;
}

void SoftTree::set_leaf_values(std::span<const double> values) {
  if (values.size() != leaf_nodes_.size()) throw std::invalid_argument("leaf value count mismatch");
  for (std::size_t l = 0; l < values.size(); ++l) nodes_[leaf_nodes_[l]].value = values[l];
}

void SoftTree::leaf_weights(std::span<const double> x, std::span<double> out) const {
  const std::size_t m = nodes_.size();
  double local[64];
  std::vector<double> heap;
  double* mass = local;
  if (m > 64) {
    heap.resize(m);
    mass = heap.data();
  }
  mass[0] = 1.0;
  std::size_t leaf = 0;
  for (std::size_t i = 0; i < m; ++i) {
    const Node& n = nodes_[i];
    if (n.is_leaf()) {
      out[leaf++] = mass[i];
    } else {
      const double g = soft_gate(x[n.rule.feature], n.rule.cutpoint, n.rule.bandwidth);
      mass[n.left] = mass[i] * (1.0 - g);
      mass[n.right] = mass[i] * g;
    }
  }
}

std::vector<double> SoftTree::leaf_weights(std::span<const double> x) const {
  std::vector<double> out(n_leaves());
  leaf_weights(x, out);
  return out;
}

double SoftTree::evaluate(std::span<const double> x) const {
  if (nodes_.size() == 1) return nodes_[0].value;
  const std::size_t m = nodes_.size();
  double local[64];
  std::vector<double> heap;
  double* mass = local;
  if (m > 64) {
    heap.resize(m);
    mass = heap.data();
  }
  mass[0] = 1.0;
  double total = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const Node& n = nodes_[i];
    if (n.is_leaf()) {
      total += mass[i] * n.value;
    } else {
      const double g = soft_gate(x[n.rule.feature], n.rule.cutpoint, n.rule.bandwidth);
      mass[n.left] = mass[i] * (1.0 - g);
      mass[n.right] = mass[i] * g;
    }
  }
  return total;
}

void SoftTree::grow(std::size_t leaf_node, const SplitRule& rule, double left_value, double right_value) {
  if (leaf_node >= nodes_.size() || !nodes_[leaf_node].is_leaf()) throw std::invalid_argument("grow needs a leaf");
  Node left;
  left.value = left_value;
  Node right;
  right.value = right_value;
  nodes_.push_back(left);
  nodes_.push_back(right);
  auto& n = nodes_[leaf_node];
  n.rule = rule;
  n.left = static_cast<int>(nodes_.size() - 2);
  n.right = static_cast<int>(nodes_.size() - 1);
  relayout();
}

void SoftTree::prune(std::size_t branch_node, double value) {
  if (branch_node >= nodes_.size() || nodes_[branch_node].is_leaf()) throw std::invalid_argument("prune needs a branch");
  auto& n = nodes_[branch_node];
  if (!nodes_[static_cast<std::size_t>(n.left)].is_leaf() || !nodes_[static_cast<std::size_t>(n.right)].is_leaf()) {
    throw std::invalid_argument("prune needs a branch with two leaf children");
  }
  n.left = -1;
  n.right = -1;
  n.value = value;
  relayout();  // orphaned children are dropped
}

void SoftTree::set_rule(std::size_t branch_node, const SplitRule& rule) {
  if (branch_node >= nodes_.size() || nodes_[branch_node].is_leaf()) throw std::invalid_argument("set_rule needs a branch");
  nodes_[branch_node].rule = rule;
}

double Forest::evaluate(std::span<const double> x) const {
  double total = 0.0;
  for (const auto& t : trees) total += t.evaluate(x);
  return total;
}

std::vector<double> evaluate_points(const Forest& forest, const PointMatrix& points) {
  std::vector<double> out(static_cast<std::size_t>(points.rows()));
  for (Eigen::Index i = 0; i < points.rows(); ++i) out[static_cast<std::size_t>(i)] = forest.evaluate(row_span(points, i));
  return out;
}

// ---------------------------------------------------------------------------
// Prior

double ForestPrior::sigma_mu() const {
  if (sigma_mu_override) return *sigma_mu_override;
  return 3.0 / (2.0 * std::sqrt(static_cast<double>(n_trees)));
}

double ForestPrior::branch_probability(int depth) const {
  if (max_depth && depth >= *max_depth) return 0.0;
  return gamma * std::pow(1.0 + depth, -depth_power);
}

namespace {

double log_split_density(const SplitRule& rule, const ForestPrior& prior, std::size_t n_features) {
  // uniform feature, uniform cutpoint on (0,1), exponential bandwidth
  return -std::log(static_cast<double>(n_features)) + std::log(prior.bandwidth_rate) -
         prior.bandwidth_rate * rule.bandwidth;
}

SplitRule draw_split(const ForestPrior& prior, std::size_t n_features, Rng& rng) {
  SplitRule rule;
  rule.feature = std::uniform_int_distribution<std::size_t>(0, n_features - 1)(rng);
  rule.cutpoint = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  rule.bandwidth = std::exponential_distribution<double>(prior.bandwidth_rate)(rng);
  return rule;
}

}  // namespace

double log_tree_prior(const SoftTree& tree, const ForestPrior& prior, std::size_t n_features) {
  double lp = 0.0;
  for (const auto& n : tree.nodes()) {
    const double pb = prior.branch_probability(n.depth);
    if (n.is_leaf()) {
      lp += std::log1p(-pb);
    } else {
      lp += std::log(pb) + log_split_density(n.rule, prior, n_features);
    }
  }
  return lp;
}

SoftTree sample_prior_tree(const ForestPrior& prior, std::size_t n_features, Rng& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> leaf(0.0, prior.sigma_mu());
  std::vector<SoftTree::Node> nodes(1);
  std::vector<std::size_t> frontier{0};
  while (!frontier.empty()) {
    const std::size_t i = frontier.back();
    frontier.pop_back();
    if (unif(rng) < prior.branch_probability(nodes[i].depth)) {
      SoftTree::Node child;
      child.depth = nodes[i].depth + 1;
      nodes[i].rule = draw_split(prior, n_features, rng);
      nodes[i].left = static_cast<int>(nodes.size());
      nodes.push_back(child);
      nodes[i].right = static_cast<int>(nodes.size());
      nodes.push_back(child);
      frontier.push_back(static_cast<std::size_t>(nodes[i].right));
      frontier.push_back(static_cast<std::size_t>(nodes[i].left));
    }
  }
  for (auto& n : nodes) {
    if (n.is_leaf()) n.value = leaf(rng);
  }
  return SoftTree::from_nodes(std::move(nodes));
}

Forest sample_prior_forest(const ForestPrior& prior, std::size_t n_features, Rng& rng) {
  Forest f;
  for (std::size_t k = 0; k < prior.n_trees; ++k) f.trees.push_back(sample_prior_tree(prior, n_features, rng));
  return f;
}

// ---------------------------------------------------------------------------
// Metropolis moves

double move_probability(const SoftTree& tree, MoveKind kind) {
  if (tree.n_branches() == 0) return kind == MoveKind::kGrow ? 1.0 : 0.0;
  switch (kind) {
    case MoveKind::kGrow:
      return 0.4;
    case MoveKind::kPrune:
      return 0.4;
    case MoveKind::kChange:
      return 0.2;
  }
  return 0.0;
}

MoveKind choose_move(const SoftTree& tree, Rng& rng) {
  if (tree.n_branches() == 0) return MoveKind::kGrow;
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  if (u < 0.4) return MoveKind::kGrow;
  if (u < 0.8) return MoveKind::kPrune;
  return MoveKind::kChange;
}

Proposal propose_move(const SoftTree& tree, MoveKind kind, const ForestPrior& prior, std::size_t n_features, Rng& rng) {
  Proposal p{tree, 0.0, false};
  switch (kind) {
    case MoveKind::kGrow: {
      const auto& leaves = tree.leaf_nodes();
      const auto pick = std::uniform_int_distribution<std::size_t>(0, leaves.size() - 1)(rng);
      const SplitRule rule = draw_split(prior, n_features, rng);
      p.tree.grow(leaves[pick], rule);
      const double forward = std::log(move_probability(tree, MoveKind::kGrow)) -
                             std::log(static_cast<double>(leaves.size())) +
                             log_split_density(rule, prior, n_features);
      const double reverse = std::log(move_probability(p.tree, MoveKind::kPrune)) -
                             std::log(static_cast<double>(p.tree.prunable_nodes().size()));
      p.log_proposal_ratio = reverse - forward;
      p.valid = true;
      break;
    }
    case MoveKind::kPrune: {
      const auto prunable = tree.prunable_nodes();
      if (prunable.empty()) return p;
      const auto pick = std::uniform_int_distribution<std::size_t>(0, prunable.size() - 1)(rng);
      const SplitRule removed = tree.nodes()[prunable[pick]].rule;
      p.tree.prune(prunable[pick]);
      const double forward =
          std::log(move_probability(tree, MoveKind::kPrune)) - std::log(static_cast<double>(prunable.size()));
      const double reverse = std::log(move_probability(p.tree, MoveKind::kGrow)) -
                             std::log(static_cast<double>(p.tree.n_leaves())) +
                             log_split_density(removed, prior, n_features);
      p.log_proposal_ratio = reverse - forward;
      p.valid = true;
      break;
    }
    case MoveKind::kChange: {
      const auto branches = tree.branch_nodes();
      if (branches.empty()) return p;
      const auto pick = std::uniform_int_distribution<std::size_t>(0, branches.size() - 1)(rng);
      SplitRule rule = tree.nodes()[branches[pick]].rule;
      const SplitRule fresh = draw_split(prior, n_features, rng);
      rule.feature = fresh.feature;
      rule.cutpoint = fresh.cutpoint;
      p.tree.set_rule(branches[pick], rule);
      p.log_proposal_ratio = 0.0;  // feature and cutpoint densities are uniform both ways
      p.valid = true;
      break;
    }
  }
  return p;
}

// ---------------------------------------------------------------------------
// Linear-Gaussian leaf algebra

std::vector<double> leaf_weight_matrix(const SoftTree& tree, const PointMatrix& points) {
  const std::size_t J = tree.n_leaves();
  const auto n = static_cast<std::size_t>(points.rows());
  std::vector<double> w(n * J);
  for (std::size_t i = 0; i < n; ++i) {
    tree.leaf_weights(row_span(points, static_cast<Eigen::Index>(i)), std::span<double>(w.data() + i * J, J));
  }
  return w;
}

LeafStats leaf_stats(std::span<const double> weights, std::size_t n_leaves, std::span<const double> targets) {
  const std::size_t J = n_leaves;
  const std::size_t n = targets.size();
  LeafStats s;
  s.n = n;
  s.gram = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(J), static_cast<Eigen::Index>(J));
  s.proj = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(J));
  double* g = s.gram.data();
  for (std::size_t i = 0; i < n; ++i) {
    const double* w = weights.data() + i * J;
    const double r = targets[i];
    s.rss += r * r;
    for (std::size_t a = 0; a < J; ++a) {
      s.proj[static_cast<Eigen::Index>(a)] += w[a] * r;
      for (std::size_t b = a; b < J; ++b) g[a * J + b] += w[a] * w[b];
    }
  }
  for (std::size_t a = 0; a < J; ++a) {
    for (std::size_t b = 0; b < a; ++b) g[a * J + b] = g[b * J + a];
  }
  return s;
}

double marginal_loglik(const LeafStats& stats, double sigma_mu) {
  const auto J = stats.gram.rows();
  const double s2 = sigma_mu * sigma_mu;
  Eigen::MatrixXd a = stats.gram;
  a.diagonal().array() += 1.0 / s2;
  Eigen::LLT<Eigen::MatrixXd> llt(a);
  if (llt.info() != Eigen::Success) throw NumericalError("leaf precision not positive definite");
  const Eigen::MatrixXd& l = llt.matrixLLT();
  double log_det_a = 0.0;
  for (Eigen::Index j = 0; j < J; ++j) log_det_a += 2.0 * std::log(l(j, j));
  const double log_det = static_cast<double>(J) * std::log(s2) + log_det_a;  // log det(I + s2 Phi^T Phi)
  const double quad = stats.rss - stats.proj.dot(llt.solve(stats.proj));
  return -0.5 * static_cast<double>(stats.n) * std::log(2.0 * std::numbers::pi) - 0.5 * log_det - 0.5 * quad;
}

namespace {
void require_finite(std::span<const double> v) {
  for (double x : v) {
    if (!std::isfinite(x)) throw NumericalError("non-finite backfitting target");
  }
}
}  // namespace

double tree_marginal_loglik(const SoftTree& tree, std::span<const double> targets, const PointMatrix& points,
                            double sigma_mu) {
  require_finite(targets);
  const auto w = leaf_weight_matrix(tree, points);
  return marginal_loglik(leaf_stats(w, tree.n_leaves(), targets), sigma_mu);
}

std::vector<double> draw_leaf_values(const LeafStats& stats, double sigma_mu, Rng& rng) {
  const auto J = stats.gram.rows();
  Eigen::MatrixXd a = stats.gram;
  a.diagonal().array() += 1.0 / (sigma_mu * sigma_mu);
  Eigen::LLT<Eigen::MatrixXd> llt(a);
  if (llt.info() != Eigen::Success) throw NumericalError("leaf precision not positive definite");
  std::normal_distribution<double> norm(0.0, 1.0);
  Eigen::VectorXd xi(J);
  for (Eigen::Index j = 0; j < J; ++j) xi[j] = norm(rng);
  const Eigen::VectorXd mu = llt.solve(stats.proj) + llt.matrixU().solve(xi);
  return {mu.data(), mu.data() + J};
}

std::vector<double> draw_leaf_values(const SoftTree& tree, std::span<const double> targets, const PointMatrix& points,
                                     double sigma_mu, Rng& rng) {
  require_finite(targets);
  const auto w = leaf_weight_matrix(tree, points);
  return draw_leaf_values(leaf_stats(w, tree.n_leaves(), targets), sigma_mu, rng);
}

// ---------------------------------------------------------------------------
// Backfitting

namespace {

void tree_fit(std::span<const double> weights, const std::vector<double>& mu, std::span<double> out) {
  const std::size_t J = mu.size();
  for (std::size_t i = 0; i < out.size(); ++i) {
    double s = 0.0;
    const double* w = weights.data() + i * J;
    for (std::size_t j = 0; j < J; ++j) s += w[j] * mu[j];
    out[i] = s;
  }
}

bool metropolis_accept(double log_ratio, Rng& rng) {
  if (std::isnan(log_ratio)) return false;
  if (log_ratio >= 0.0) return true;
  return std::log(std::uniform_real_distribution<double>(0.0, 1.0)(rng)) < log_ratio;
}

}  // namespace

void backfit_sweep(Forest& forest, std::span<const double> latent, const PointMatrix& points, const ForestPrior& prior,
                   Rng& rng, std::span<double> fit, BackfitStats* stats) {
  const auto n = static_cast<std::size_t>(points.rows());
  const auto d = static_cast<std::size_t>(points.cols());
  if (latent.size() != n || fit.size() != n) throw std::invalid_argument("backfit: size mismatch");
  require_finite(latent);
  const double sigma_mu = prior.sigma_mu();
  std::vector<double> resid(n), old_fit(n), new_fit(n);

  for (auto& tree : forest.trees) {
    auto weights = leaf_weight_matrix(tree, points);
    tree_fit(weights, tree.leaf_values(), old_fit);
    for (std::size_t i = 0; i < n; ++i) resid[i] = latent[i] - fit[i] + old_fit[i];

    LeafStats cur = leaf_stats(weights, tree.n_leaves(), resid);
    double cur_ll = marginal_loglik(cur, sigma_mu);
    double cur_lp = log_tree_prior(tree, prior, d);

    // topology
    const MoveKind kind = choose_move(tree, rng);
    Proposal prop = propose_move(tree, kind, prior, d, rng);
    if (stats) ++stats->proposed[static_cast<int>(kind)];
    if (prop.valid) {
      const double prop_lp = log_tree_prior(prop.tree, prior, d);
      if (std::isfinite(prop_lp)) {
        auto prop_w = leaf_weight_matrix(prop.tree, points);
        LeafStats prop_stats = leaf_stats(prop_w, prop.tree.n_leaves(), resid);
        const double prop_ll = marginal_loglik(prop_stats, sigma_mu);
        if (metropolis_accept(prop_ll - cur_ll + prop_lp - cur_lp + prop.log_proposal_ratio, rng)) {
          tree = std::move(prop.tree);
          weights = std::move(prop_w);
          cur = std::move(prop_stats);
          cur_ll = prop_ll;
          cur_lp = prop_lp;
          if (stats) ++stats->accepted[static_cast<int>(kind)];
        }
      }
    }

    // bandwidth of one branch, random walk on the log scale
    const auto branches = tree.branch_nodes();
    if (!branches.empty()) {
      const auto pick = branches[std::uniform_int_distribution<std::size_t>(0, branches.size() - 1)(rng)];
      SplitRule rule = tree.nodes()[pick].rule;
      const double old_bw = rule.bandwidth;
      rule.bandwidth = old_bw * std::exp(prior.bandwidth_step * std::normal_distribution<double>(0.0, 1.0)(rng));
      SoftTree cand = tree;
      cand.set_rule(pick, rule);
      auto cand_w = leaf_weight_matrix(cand, points);
      LeafStats cand_stats = leaf_stats(cand_w, cand.n_leaves(), resid);
      const double cand_ll = marginal_loglik(cand_stats, sigma_mu);
      const double log_ratio = cand_ll - cur_ll - prior.bandwidth_rate * (rule.bandwidth - old_bw) +
                               std::log(rule.bandwidth / old_bw);
      if (stats) ++stats->bandwidth_proposed;
      if (metropolis_accept(log_ratio, rng)) {
        tree = std::move(cand);
        weights = std::move(cand_w);
        cur = std::move(cand_stats);
        if (stats) ++stats->bandwidth_accepted;
      }
    }

    const auto mu = draw_leaf_values(cur, sigma_mu, rng);
    tree.set_leaf_values(mu);
    tree_fit(weights, mu, new_fit);
    for (std::size_t i = 0; i < n; ++i) fit[i] += new_fit[i] - old_fit[i];
  }
}

void backfit_sweep(Forest& forest, std::span<const double> latent, const PointMatrix& points, const ForestPrior& prior,
                   Rng& rng, BackfitStats* stats) {
  auto fit = evaluate_points(forest, points);
  backfit_sweep(forest, latent, points, prior, rng, fit, stats);
}

// ---------------------------------------------------------------------------
// Serialization

std::string forest_to_json(const Forest& forest) {
  nlohmann::json doc;
  doc["format"] = "spatsurv-forest";
  doc["version"] = 1;
  auto& trees = doc["trees"] = nlohmann::json::array();
  for (const auto& t : forest.trees) {
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto& n : t.nodes()) {
      if (n.is_leaf()) {
        nodes.push_back({{"value", n.value}});
      } else {
        nodes.push_back({{"left", n.left},
                         {"right", n.right},
                         {"feature", n.rule.feature},
                         {"cutpoint", n.rule.cutpoint},
                         {"bandwidth", n.rule.bandwidth}});
      }
    }
    trees.push_back({{"nodes", std::move(nodes)}});
  }
  return doc.dump();
}

Forest forest_from_json(std::string_view text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed forest document: ") + e.what());
  }
  if (doc.value("format", "") != "spatsurv-forest") throw DataError("not a spatsurv forest document");
  Forest forest;
  try {
    for (const auto& t : doc.at("trees")) {
      std::vector<SoftTree::Node> nodes;
      for (const auto& jn : t.at("nodes")) {
        SoftTree::Node n;
        if (jn.contains("left")) {
          n.left = jn.at("left").get<int>();
          n.right = jn.at("right").get<int>();
          n.rule.feature = jn.at("feature").get<std::size_t>();
          n.rule.cutpoint = jn.at("cutpoint").get<double>();
          n.rule.bandwidth = jn.at("bandwidth").get<double>();
        } else {
          n.value = jn.at("value").get<double>();
        }
        nodes.push_back(n);
      }
      forest.trees.push_back(SoftTree::from_nodes(std::move(nodes)));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed forest document: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string("invalid tree in forest document: ") + e.what());
  }
  return forest;
}

}  // namespace spatsurv
