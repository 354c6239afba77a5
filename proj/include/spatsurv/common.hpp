#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace spatsurv {

using Rng = std::mt19937_64;

/// Raised for malformed or inconsistent input data (CLI exit code 3).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a sampler or likelihood evaluation breaks down (CLI exit code 4).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Saturation bound applied to ensemble outputs before any probit evaluation.
inline constexpr double kProbitClamp = 12.0;

double normal_cdf(double x);
/// log Phi(x) with x clamped to [-kProbitClamp, kProbitClamp].
double log_normal_cdf(double x);
/// log(1 - Phi(x)) with the same clamp.
double log_normal_ccdf(double x);
double normal_quantile(double p);

double logit(double p);
double expit(double x);

/// FNV-1a, used for stream names and file digests.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string hex_digest(std::uint64_t h);
std::string file_digest(const std::string& path);

/// Independent generator for a named sub-stream of a master seed.
Rng make_stream(std::uint64_t master_seed, std::string_view name);
/// Independent generator indexed by integers (per-iteration, per-subject streams).
Rng make_stream(std::uint64_t master_seed, std::uint64_t a, std::uint64_t b);

}  // namespace spatsurv
