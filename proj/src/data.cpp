#include "spatsurv/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "spatsurv/common.hpp"

namespace spatsurv {
namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(trim(std::string_view(line).substr(start, comma == std::string::npos ? std::string::npos : comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

bool try_parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end;
}

}  // namespace

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  CsvTable table;
  std::string line;
  bool have_header = false;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    if (trim(line).empty()) continue;
    auto fields = split_fields(line);
    if (!have_header) {
      table.header = std::move(fields);
      have_header = true;
      continue;
    }
    if (fields.size() != table.header.size()) {
      throw DataError(path + ": malformed row " + std::to_string(table.rows.size() + 1) + " (expected " +
                      std::to_string(table.header.size()) + " fields, got " + std::to_string(fields.size()) + ")");
    }
    table.rows.push_back(std::move(fields));
  }
  if (!have_header) throw DataError(path + ": missing header row");
  return table;
}

std::size_t CsvTable::column(const std::string& name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw DataError("missing column '" + name + "'");
  return static_cast<std::size_t>(it - header.begin());
}

double parse_double(const std::string& field, std::size_t row, const std::string& column) {
  double v = 0;
  if (!try_parse_double(field, v) || !std::isfinite(v)) {
    throw DataError("malformed value '" + field + "' in column " + column + " at row " + std::to_string(row));
  }
  return v;
}

long parse_int(const std::string& field, std::size_t row, const std::string& column) {
  long v = 0;
  const char* end = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(field.data(), end, v);
  if (field.empty() || ec != std::errc() || ptr != end) {
    throw DataError("malformed integer '" + field + "' in column " + column + " at row " + std::to_string(row));
  }
  return v;
}

// ---------------------------------------------------------------------------
// Scaling

double ColumnScale::scale(double raw) const {
  const double u = (raw - min) / (max - min);
  return std::clamp(kScaleEps + (1.0 - 2.0 * kScaleEps) * u, kScaleEps, 1.0 - kScaleEps);
}

double ColumnScale::unscale(double scaled) const {
  return min + (scaled - kScaleEps) / (1.0 - 2.0 * kScaleEps) * (max - min);
}

double ColumnScale::encode(const std::string& raw) const {
  if (kind == ColumnKind::kContinuous) {
    double v = 0;
    if (!try_parse_double(raw, v)) throw DataError("non-numeric value '" + raw + "' for continuous covariate " + name);
    return scale(v);
  }
  const auto it = std::find(levels.begin(), levels.end(), raw);
  if (it == levels.end()) throw DataError("unknown level '" + raw + "' for categorical covariate " + name);
  if (levels.size() == 1) return 0.0;
  return static_cast<double>(it - levels.begin()) / static_cast<double>(levels.size() - 1);
}

CovariateScaler::CovariateScaler(std::vector<ColumnScale> columns, double time_scale)
    : columns_(std::move(columns)), time_scale_(time_scale) {
  if (!(time_scale_ > 0)) throw DataError("time scale must be positive");
  for (const auto& c : columns_) {
    if (c.kind == ColumnKind::kContinuous && !(c.max > c.min)) {
      throw DataError("continuous covariate " + c.name + " is constant; cannot scale");
    }
  }
}

std::vector<double> CovariateScaler::encode(std::span<const std::string> raw) const {
  if (raw.size() != columns_.size()) {
    throw DataError("expected " + std::to_string(columns_.size()) + " covariates, got " + std::to_string(raw.size()));
  }
  std::vector<double> out(raw.size());
  for (std::size_t c = 0; c < raw.size(); ++c) out[c] = columns_[c].encode(raw[c]);
  return out;
}

std::vector<double> CovariateScaler::encode(const std::map<std::string, std::string>& named) const {
  std::vector<std::string> raw;
  for (const auto& c : columns_) {
    const auto it = named.find(c.name);
    if (it == named.end()) throw DataError("covariate '" + c.name + "' not given");
    raw.push_back(it->second);
  }
  if (named.size() != columns_.size()) throw DataError("unknown covariate name in query");
  return encode(raw);
}

CovariateScaler fit_scaler(const std::vector<std::string>& names, const std::vector<std::vector<std::string>>& raw_rows,
                           std::span<const double> times, const SurvivalSchema& schema) {
  std::vector<ColumnScale> columns;
  for (std::size_t c = 0; c < names.size(); ++c) {
    ColumnScale col;
    col.name = names[c];
    const bool categorical =
        std::find(schema.categorical.begin(), schema.categorical.end(), names[c]) != schema.categorical.end();
    if (categorical) {
      col.kind = ColumnKind::kCategorical;
      std::set<std::string> seen;
      bool numeric = true;
      for (const auto& row : raw_rows) {
        seen.insert(row[c]);
        double v;
        numeric = numeric && try_parse_double(row[c], v);
      }
      col.levels.assign(seen.begin(), seen.end());
      if (numeric) {
        std::sort(col.levels.begin(), col.levels.end(), [](const std::string& a, const std::string& b) {
          double va = 0, vb = 0;
          try_parse_double(a, va);
          try_parse_double(b, vb);
          return va < vb;
        });
      }
    } else {
      col.min = INFINITY;
      col.max = -INFINITY;
      for (std::size_t r = 0; r < raw_rows.size(); ++r) {
        const double v = parse_double(raw_rows[r][c], r + 1, names[c]);
        col.min = std::min(col.min, v);
        col.max = std::max(col.max, v);
      }
    }
    columns.push_back(std::move(col));
  }
  double t_max = 0;
  for (double t : times) t_max = std::max(t_max, t);
  return CovariateScaler(std::move(columns), (1.0 + kTimeMargin) * t_max);
}

std::vector<std::string> SurvivalData::covariate_names() const {
  std::vector<std::string> out;
  for (const auto& c : scaler.columns()) out.push_back(c.name);
  return out;
}

SurvivalData load_survival(const std::string& path, const SurvivalSchema& schema, std::size_t n_clusters,
                           const CovariateScaler* scaler) {
  const CsvTable table = read_csv(path);
  const std::size_t c_cluster = table.column("cluster_id");
  const std::size_t c_time = table.column("time");
  const std::size_t c_event = table.column("event");
  std::vector<std::size_t> cov_cols;
  std::vector<std::string> cov_names;
  for (std::size_t c = 0; c < table.header.size(); ++c) {
    if (c == c_cluster || c == c_time || c == c_event) continue;
    cov_cols.push_back(c);
    cov_names.push_back(table.header[c]);
  }
  for (const auto& name : schema.categorical) {
    if (std::find(cov_names.begin(), cov_names.end(), name) == cov_names.end()) {
      throw DataError("categorical column '" + name + "' not present in " + path);
    }
  }

  SurvivalData data;
  data.n_clusters = n_clusters;
  std::vector<double> times;
  std::vector<std::vector<std::string>> raw_cov;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const std::size_t k = r + 1;
    SurvivalRecord rec;
    const long cid = parse_int(row[c_cluster], k, "cluster_id");
    if (cid < 1 || static_cast<std::size_t>(cid) > n_clusters) {
      throw DataError("unknown cluster_id " + std::to_string(cid) + " at row " + std::to_string(k));
    }
    rec.cluster = static_cast<std::size_t>(cid - 1);
    rec.time = parse_double(row[c_time], k, "time");
    if (!(rec.time > 0)) throw DataError("nonpositive time at row " + std::to_string(k));
    const long ev = parse_int(row[c_event], k, "event");
    if (ev != 0 && ev != 1) throw DataError("event must be 0 or 1 at row " + std::to_string(k));
    rec.event = static_cast<int>(ev);
    std::vector<std::string> raw;
    for (auto c : cov_cols) raw.push_back(row[c]);
    times.push_back(rec.time);
    raw_cov.push_back(std::move(raw));
    data.records.push_back(std::move(rec));
  }
  if (data.records.empty()) throw DataError(path + ": no survival records");

  if (scaler) {
    if (scaler->size() != cov_names.size()) throw DataError(path + ": covariate columns do not match the fitted scaler");
    for (std::size_t c = 0; c < cov_names.size(); ++c) {
      if (scaler->columns()[c].name != cov_names[c]) {
        throw DataError(path + ": covariate column " + cov_names[c] + " does not match the fitted scaler");
      }
    }
    data.scaler = *scaler;
  } else {
    data.scaler = fit_scaler(cov_names, raw_cov, times, schema);
  }
  for (std::size_t r = 0; r < data.records.size(); ++r) data.records[r].covariates = data.scaler.encode(raw_cov[r]);
  return data;
}

// ---------------------------------------------------------------------------
// Graphs

AdjacencyGraph::AdjacencyGraph(Eigen::MatrixXd a) : adjacency_(std::move(a)) {
  const auto n = adjacency_.rows();
  degrees_ = adjacency_.rowwise().sum();
  neighbors_.resize(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index k = 0; k < n; ++k) {
      if (adjacency_(i, k) != 0.0) neighbors_[static_cast<std::size_t>(i)].push_back(static_cast<std::size_t>(k));
    }
    if (degrees_(i) == 0.0) throw DataError("isolated node " + std::to_string(i + 1) + " (degree 0)");
  }
}

AdjacencyGraph AdjacencyGraph::from_edges(std::size_t n_nodes,
                                          const std::vector<std::pair<std::size_t, std::size_t>>& edges) {
  if (n_nodes == 0) throw DataError("graph has no nodes");
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n_nodes), static_cast<Eigen::Index>(n_nodes));
  for (auto [i, j] : edges) {
    if (i >= n_nodes || j >= n_nodes) throw DataError("edge references node outside 1.." + std::to_string(n_nodes));
    if (i == j) throw DataError("self-loop at node " + std::to_string(i + 1));
    a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = 1.0;
    a(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = 1.0;
  }
  return AdjacencyGraph(std::move(a));
}

AdjacencyGraph AdjacencyGraph::from_dense(const Eigen::MatrixXd& a) {
  if (a.rows() != a.cols() || a.rows() == 0) throw DataError("adjacency matrix must be square and nonempty");
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    if (a(i, i) != 0.0) throw DataError("self-loop at node " + std::to_string(i + 1));
    for (Eigen::Index k = 0; k < a.cols(); ++k) {
      if (a(i, k) != 0.0 && a(i, k) != 1.0) throw DataError("adjacency entries must be 0 or 1");
      if (a(i, k) != a(k, i)) {
        throw DataError("asymmetric adjacency at (" + std::to_string(i + 1) + "," + std::to_string(k + 1) + ")");
      }
    }
  }
  return AdjacencyGraph(a);
}

std::vector<std::pair<std::size_t, std::size_t>> AdjacencyGraph::edges() const {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t i = 0; i < neighbors_.size(); ++i) {
    for (auto k : neighbors_[i]) {
      if (i < k) out.emplace_back(i, k);
    }
  }
  return out;
}

AdjacencyGraph load_adjacency(const std::string& path) {
  const CsvTable table = read_csv(path);
  if (table.header.size() == 2 && table.header[0] == "i" && table.header[1] == "j") {
    std::vector<std::pair<std::size_t, std::size_t>> edges;
    std::size_t n = 0;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
      const long i = parse_int(table.rows[r][0], r + 1, "i");
      const long j = parse_int(table.rows[r][1], r + 1, "j");
      if (i < 1 || j < 1) throw DataError("node ids are 1-based; bad edge at row " + std::to_string(r + 1));
      if (i == j) throw DataError("self-loop at node " + std::to_string(i));
      edges.emplace_back(static_cast<std::size_t>(i - 1), static_cast<std::size_t>(j - 1));
      n = std::max({n, static_cast<std::size_t>(i), static_cast<std::size_t>(j)});
    }
    return AdjacencyGraph::from_edges(n, edges);
  }
  const auto n = static_cast<Eigen::Index>(table.header.size());
  if (static_cast<Eigen::Index>(table.rows.size()) != n) {
    throw DataError(path + ": dense adjacency must have as many rows as columns");
  }
  Eigen::MatrixXd a(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index k = 0; k < n; ++k) {
      a(i, k) = parse_double(table.rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)],
                             static_cast<std::size_t>(i + 1), table.header[static_cast<std::size_t>(k)]);
    }
  }
  return AdjacencyGraph::from_dense(a);
}

SurveyCounts load_survey(const std::string& path, const AdjacencyGraph& graph) {
  const CsvTable table = read_csv(path);
  const auto c_id = table.column("cluster_id");
  const auto c_n0 = table.column("n0");
  const auto c_m0 = table.column("m0");
  const std::size_t n = graph.n_nodes();
  SurveyCounts out;
  out.n0.assign(n, -1);
  out.m0.assign(n, -1);
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const long id = parse_int(row[c_id], r + 1, "cluster_id");
    if (id < 1 || static_cast<std::size_t>(id) > n) {
      throw DataError("unknown cluster_id " + std::to_string(id) + " at row " + std::to_string(r + 1));
    }
    const auto i = static_cast<std::size_t>(id - 1);
    if (out.n0[i] >= 0) throw DataError("duplicate cluster_id " + std::to_string(id) + " in survey");
    const long n0 = parse_int(row[c_n0], r + 1, "n0");
    const long m0 = parse_int(row[c_m0], r + 1, "m0");
    if (n0 < 0 || m0 < 0) throw DataError("negative survey count at row " + std::to_string(r + 1));
    if (m0 > n0) throw DataError("m0 > n0 at row " + std::to_string(r + 1));
    out.n0[i] = static_cast<int>(n0);
    out.m0[i] = static_cast<int>(m0);
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (out.n0[i] < 0) throw DataError("survey has no row for cluster " + std::to_string(i + 1));
  }
  return out;
}

void write_adjacency(const std::string& path, const AdjacencyGraph& graph) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << "i,j\n";
  for (auto [i, j] : graph.edges()) out << i + 1 << ',' << j + 1 << '\n';
}

void write_survey(const std::string& path, const SurveyCounts& survey) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << "cluster_id,n0,m0\n";
  for (std::size_t i = 0; i < survey.size(); ++i) out << i + 1 << ',' << survey.n0[i] << ',' << survey.m0[i] << '\n';
}

}  // namespace spatsurv
