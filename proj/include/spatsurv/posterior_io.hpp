#pragma once

#include <string>

#include <nlohmann/json.hpp>

#include "spatsurv/data.hpp"
#include "spatsurv/pipeline.hpp"

namespace spatsurv {

nlohmann::json scaler_to_json(const CovariateScaler& scaler);
CovariateScaler scaler_from_json(const nlohmann::json& j);

/// Writes scalars.csv, m_draws.csv, weights.csv and forests.jsonl into `dir` (created if
/// needed). The manifest is written separately so callers can add run metadata.
void write_posterior(const std::string& dir, const WeightedPosterior& posterior);

struct LoadedPosterior {
  WeightedPosterior posterior;
  CovariateScaler scaler;
  nlohmann::json manifest;
};

/// Reads a directory produced by write_posterior plus its manifest.json.
LoadedPosterior read_posterior(const std::string& dir);

void write_manifest(const std::string& dir, const nlohmann::json& manifest);

/// smu_samples.csv (draw, sigma2, rho, M per cluster) and m_hat.csv (cluster_id, m_hat).
void write_smu(const std::string& dir, const SmuPosterior& smu);
SmuPosterior read_smu(const std::string& dir);

/// Shortest text that round-trips the double.
std::string format_double(double v);

}  // namespace spatsurv
