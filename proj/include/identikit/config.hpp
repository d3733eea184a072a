#pragma once

// Run configuration: JSON with schema_version 1. Unknown fields are errors;
// every default is written back into `resolved`, which reports embed.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "identikit/diagnostics.hpp"
#include "identikit/solvers.hpp"
#include "json.hpp"

namespace identikit {

using Json = nlohmann::ordered_json;

inline constexpr int kSchemaVersion = 1;

struct FunctionalSpec {
  std::string name;
  bool builtin = true;
  // Explicit tables: either (x, value) points interpolated linearly on a
  // one-dimensional latent space, or one value per latent node.
  std::vector<std::pair<double, double>> points;
  std::vector<double> values;
  bool up_to_constant = false;
};

struct FisherOptions {
  std::vector<double> rhos{1.0, 1.5, 2.0};
  std::size_t starts = 32;
};

struct RateOptions {
  std::string functional;  // empty: first configured functional
  std::vector<std::size_t> ns{500, 2000, 8000, 32000};
  std::size_t reps = 50;
};

struct PathOptions {
  std::string functional;
  double rho = 1.0;
  std::vector<double> ts{0.5, 0.25, 0.125, 0.0625};
};

struct EstimateOptions {
  std::string functional;
  std::string data;       // CSV of observations, one per row
  std::size_t simulate = 0;
};

struct RunConfig {
  std::string model;
  Json params;  // resolved model parameters
  std::size_t coarse = 0, fine = 0;
  std::vector<FunctionalSpec> functionals;
  Thresholds thresholds;
  RegPolicy policy;
  FisherOptions fisher;
  RateOptions rates;
  PathOptions path;
  EstimateOptions estimate;
  std::uint64_t seed = 1;
  std::string output = "out";
  // Full configuration with defaults expanded. The output directory is left
  // out so that reports do not depend on where they are written.
  Json resolved;

  // Functional referenced by a command; falls back to the first configured one.
  const std::string& functional_for(const std::string& requested) const;
};

const std::vector<std::string>& model_names();

// Parses and validates; throws Error(Config) naming the offending field, or
// the line and column for malformed JSON.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);

// Re-resolves after command-line overrides of seed or estimate inputs.
void refresh_resolved(RunConfig& cfg);

}  // namespace identikit
