#include "spatsurv/posterior_io.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>

namespace spatsurv {
namespace fs = std::filesystem;

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

namespace {

std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p);
  if (!out) throw DataError("cannot write " + p.string());
  return out;
}

void write_row(std::ostream& out, const std::vector<double>& values) {
  for (std::size_t k = 0; k < values.size(); ++k) out << (k ? "," : "") << format_double(values[k]);
  out << '\n';
}

std::string cluster_columns(const char* prefix, Eigen::Index n) {
  std::string s;
  for (Eigen::Index i = 0; i < n; ++i) s += std::string(",") + prefix + std::to_string(i + 1);
  return s;
}

}  // namespace

nlohmann::json scaler_to_json(const CovariateScaler& scaler) {
  nlohmann::json cols = nlohmann::json::array();
  for (const auto& c : scaler.columns()) {
    nlohmann::json j{{"name", c.name}, {"kind", c.kind == ColumnKind::kCategorical ? "categorical" : "continuous"}};
    if (c.kind == ColumnKind::kCategorical) {
      j["levels"] = c.levels;
    } else {
      j["min"] = c.min;
      j["max"] = c.max;
    }
    cols.push_back(j);
  }
  return {{"time_scale", scaler.time_scale()}, {"columns", cols}};
}

CovariateScaler scaler_from_json(const nlohmann::json& j) {
  std::vector<ColumnScale> cols;
  for (const auto& c : j.at("columns")) {
    ColumnScale s;
    s.name = c.at("name").get<std::string>();
    if (c.at("kind").get<std::string>() == "categorical") {
      s.kind = ColumnKind::kCategorical;
      s.levels = c.at("levels").get<std::vector<std::string>>();
    } else {
      s.min = c.at("min").get<double>();
      s.max = c.at("max").get<double>();
    }
    cols.push_back(std::move(s));
  }
  return CovariateScaler(std::move(cols), j.at("time_scale").get<double>());
}

void write_posterior(const std::string& dir, const WeightedPosterior& posterior) {
  fs::create_directories(dir);
  const Eigen::Index n = static_cast<Eigen::Index>(posterior.n_clusters());
  auto scalars = open_out(fs::path(dir) / "scalars.csv");
  scalars << "draw,lambda0,sigma2,rho" << cluster_columns("R_", n) << '\n';
  auto mfile = open_out(fs::path(dir) / "m_draws.csv");
  mfile << "draw" << cluster_columns("M_", n) << '\n';
  auto wfile = open_out(fs::path(dir) / "weights.csv");
  wfile << "draw,log_weight,weight\n";
  auto ffile = open_out(fs::path(dir) / "forests.jsonl");
  for (std::size_t s = 0; s < posterior.size(); ++s) {
    const auto& d = posterior.draws[s];
    std::vector<double> row{static_cast<double>(s), d.lambda0, d.eta1.sigma2, d.eta1.rho};
    row.insert(row.end(), d.log_frailty.data(), d.log_frailty.data() + d.log_frailty.size());
    write_row(scalars, row);
    row = {static_cast<double>(s)};
    row.insert(row.end(), d.m.data(), d.m.data() + d.m.size());
    write_row(mfile, row);
    write_row(wfile, {static_cast<double>(s), posterior.log_weights[s], posterior.weights[s]});
    ffile << forest_to_json(d.forest) << '\n';
  }
}

void write_manifest(const std::string& dir, const nlohmann::json& manifest) {
  fs::create_directories(dir);
  auto out = open_out(fs::path(dir) / "manifest.json");
  out << manifest.dump(2) << '\n';
}

LoadedPosterior read_posterior(const std::string& dir) {
  LoadedPosterior out;
  const fs::path root(dir);
  {
    std::ifstream in(root / "manifest.json");
    if (!in) throw DataError("missing manifest.json in " + dir);
    try {
      out.manifest = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(std::string("malformed manifest: ") + e.what());
    }
  }
  try {
    out.scaler = scaler_from_json(out.manifest.at("scaler"));
    out.posterior.time_scale = out.manifest.at("time_scale").get<double>();
    const auto mh = out.manifest.at("m_hat").get<std::vector<double>>();
    out.posterior.m_hat = Eigen::Map<const Eigen::VectorXd>(mh.data(), static_cast<Eigen::Index>(mh.size()));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("incomplete manifest: ") + e.what());
  }
  const auto n = static_cast<std::size_t>(out.posterior.m_hat.size());

  const CsvTable scalars = read_csv((root / "scalars.csv").string());
  const CsvTable mdraws = read_csv((root / "m_draws.csv").string());
  const CsvTable weights = read_csv((root / "weights.csv").string());
  if (scalars.header.size() != 4 + n || mdraws.header.size() != 1 + n) throw DataError("posterior files disagree on cluster count");
  if (scalars.rows.size() != mdraws.rows.size() || scalars.rows.size() != weights.rows.size()) {
    throw DataError("posterior files disagree on draw count");
  }
  std::ifstream forests(root / "forests.jsonl");
  if (!forests) throw DataError("missing forests.jsonl in " + dir);
  std::string line;
  auto& post = out.posterior;
  for (std::size_t s = 0; s < scalars.rows.size(); ++s) {
    if (!std::getline(forests, line)) throw DataError("forests.jsonl has fewer draws than scalars.csv");
    PosteriorDraw d;
    d.forest = forest_from_json(line);
    const auto& row = scalars.rows[s];
    d.lambda0 = parse_double(row[1], s, "lambda0");
    d.eta1.sigma2 = parse_double(row[2], s, "sigma2");
    d.eta1.rho = parse_double(row[3], s, "rho");
    d.log_frailty.resize(static_cast<Eigen::Index>(n));
    d.m.resize(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
      d.log_frailty[static_cast<Eigen::Index>(i)] = parse_double(row[4 + i], s, scalars.header[4 + i]);
      d.m[static_cast<Eigen::Index>(i)] = parse_double(mdraws.rows[s][1 + i], s, mdraws.header[1 + i]);
    }
    post.draws.push_back(std::move(d));
    post.log_weights.push_back(parse_double(weights.rows[s][1], s, "log_weight"));
  }
  normalize_weights(post);
  return out;
}

void write_smu(const std::string& dir, const SmuPosterior& smu) {
  fs::create_directories(dir);
  const Eigen::Index n = smu.m_hat.size();
  auto samples = open_out(fs::path(dir) / "smu_samples.csv");
  samples << "draw,sigma2,rho" << cluster_columns("M_", n) << '\n';
  for (std::size_t s = 0; s < smu.samples.size(); ++s) {
    const auto& d = smu.samples[s];
    std::vector<double> row{static_cast<double>(s), d.sigma2, d.rho};
    row.insert(row.end(), d.m.data(), d.m.data() + d.m.size());
    write_row(samples, row);
  }
  auto mhat = open_out(fs::path(dir) / "m_hat.csv");
  mhat << "cluster_id,m_hat\n";
  for (Eigen::Index i = 0; i < n; ++i) mhat << i + 1 << ',' << format_double(smu.m_hat[i]) << '\n';
}

SmuPosterior read_smu(const std::string& dir) {
  SmuPosterior smu;
  const CsvTable mhat = read_csv((fs::path(dir) / "m_hat.csv").string());
  smu.m_hat.resize(static_cast<Eigen::Index>(mhat.rows.size()));
  for (std::size_t i = 0; i < mhat.rows.size(); ++i) {
    if (parse_int(mhat.rows[i][0], i, "cluster_id") != static_cast<long>(i + 1)) throw DataError("m_hat.csv is not in cluster order");
    smu.m_hat[static_cast<Eigen::Index>(i)] = parse_double(mhat.rows[i][1], i, "m_hat");
  }
  const fs::path sp = fs::path(dir) / "smu_samples.csv";
  if (!fs::exists(sp)) return smu;
  const CsvTable samples = read_csv(sp.string());
  const std::size_t n = mhat.rows.size();
  if (samples.header.size() != 3 + n) throw DataError("smu_samples.csv disagrees with m_hat.csv");
  for (std::size_t s = 0; s < samples.rows.size(); ++s) {
    SmuSample d;
    d.sigma2 = parse_double(samples.rows[s][1], s, "sigma2");
    d.rho = parse_double(samples.rows[s][2], s, "rho");
    d.m.resize(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) d.m[static_cast<Eigen::Index>(i)] = parse_double(samples.rows[s][3 + i], s, samples.header[3 + i]);
    smu.samples.push_back(std::move(d));
  }
  return smu;
}

}  // namespace spatsurv
