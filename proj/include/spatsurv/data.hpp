#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "spatsurv/common.hpp"

namespace spatsurv {

/// Continuous covariates are mapped onto (kScaleEps, 1 - kScaleEps).
inline constexpr double kScaleEps = 1e-6;
/// The time axis is scaled by (1 + kTimeMargin) times the largest observed time.
inline constexpr double kTimeMargin = 0.05;

struct SurvivalRecord {
  std::size_t cluster = 0;  // zero-based graph node
  double time = 0.0;
  int event = 0;
  std::vector<double> covariates;  // scaled
};

enum class ColumnKind { kContinuous, kCategorical };

struct ColumnScale {
  std::string name;
  ColumnKind kind = ColumnKind::kContinuous;
  double min = 0.0;
  double max = 1.0;
  std::vector<std::string> levels;  // categorical only, in encoding order

  /// Min/max scaling with clamping for out-of-range inputs.
  double scale(double raw) const;
  double unscale(double scaled) const;
  /// Equally spaced level codes in [0, 1]; binary columns map to {0, 1}.
  double encode(const std::string& raw) const;
};

class CovariateScaler {
 public:
  CovariateScaler() = default;
  CovariateScaler(std::vector<ColumnScale> columns, double time_scale);

  const std::vector<ColumnScale>& columns() const { return columns_; }
  std::size_t size() const { return columns_.size(); }
  double time_scale() const { return time_scale_; }
  double scale_time(double t) const { return t / time_scale_; }

  /// Encodes one covariate row given as raw text fields, in column order.
  std::vector<double> encode(std::span<const std::string> raw) const;
  /// Encodes a row given as name=value pairs; every column must be present.
  std::vector<double> encode(const std::map<std::string, std::string>& named) const;

 private:
  std::vector<ColumnScale> columns_;
  double time_scale_ = 1.0;
};

struct SurvivalSchema {
  std::vector<std::string> categorical;  // every other covariate column is continuous
};

struct SurvivalData {
  std::vector<SurvivalRecord> records;
  CovariateScaler scaler;
  std::size_t n_clusters = 0;

  std::size_t n_covariates() const { return scaler.size(); }
  std::vector<std::string> covariate_names() const;
};

/// Fits a scaler from raw columns (rows x columns of text) and the observed times.
CovariateScaler fit_scaler(const std::vector<std::string>& names,
                           const std::vector<std::vector<std::string>>& raw_rows,
                           std::span<const double> times, const SurvivalSchema& schema);

/// Reads `cluster_id,time,event,<covariates...>`. Cluster ids are 1-based in the file
/// and must be <= n_clusters. If `scaler` is given it is applied instead of refitting.
SurvivalData load_survival(const std::string& path, const SurvivalSchema& schema, std::size_t n_clusters,
                           const CovariateScaler* scaler = nullptr);

class AdjacencyGraph {
 public:
  AdjacencyGraph() = default;
  /// Edges are 0-based, undirected. Self-loops and isolated nodes are rejected.
  static AdjacencyGraph from_edges(std::size_t n_nodes, const std::vector<std::pair<std::size_t, std::size_t>>& edges);
  /// Dense 0/1 matrix; must be symmetric with zero diagonal.
  static AdjacencyGraph from_dense(const Eigen::MatrixXd& a);

  std::size_t n_nodes() const { return static_cast<std::size_t>(adjacency_.rows()); }
  const Eigen::MatrixXd& adjacency() const { return adjacency_; }
  const Eigen::VectorXd& degrees() const { return degrees_; }
  const std::vector<std::size_t>& neighbors(std::size_t i) const { return neighbors_[i]; }
  std::vector<std::pair<std::size_t, std::size_t>> edges() const;

 private:
  explicit AdjacencyGraph(Eigen::MatrixXd a);

  Eigen::MatrixXd adjacency_;
  Eigen::VectorXd degrees_;
  std::vector<std::vector<std::size_t>> neighbors_;
};

/// Header `i,j` selects the 1-based edge-list form; any other header is a dense matrix.
AdjacencyGraph load_adjacency(const std::string& path);

struct SurveyCounts {
  std::vector<int> n0;
  std::vector<int> m0;
  std::size_t size() const { return n0.size(); }
};

/// Reads `cluster_id,n0,m0` with exactly one row per graph node.
SurveyCounts load_survey(const std::string& path, const AdjacencyGraph& graph);

void write_adjacency(const std::string& path, const AdjacencyGraph& graph);
void write_survey(const std::string& path, const SurveyCounts& survey);

/// Minimal comma-separated reader: header plus rows of trimmed fields.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::size_t column(const std::string& name) const;  // throws DataError if absent
};
CsvTable read_csv(const std::string& path);
double parse_double(const std::string& field, std::size_t row, const std::string& column);
long parse_int(const std::string& field, std::size_t row, const std::string& column);

}  // namespace spatsurv
