#pragma once

// JSON run configuration: defaults, validation, dotted overrides and the
// typed views consumed by the pipelines.

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "shl/experiments.hpp"

namespace shl {

struct RunConfig {
  nlohmann::json doc;  // fully defaulted
  std::vector<std::string> warnings;

  /// FNV-1a 64 of the canonical dump, as 16 hex digits.
  std::string hash() const;
  std::uint64_t seed() const;
};

nlohmann::json default_config();

/// Merge `doc` and the "section.key=value" overrides onto the defaults.
/// Unknown keys and lint failures are errors when `strict`, warnings otherwise.
RunConfig parse_config(const nlohmann::json& doc, bool strict, const std::vector<std::string>& overrides = {});
RunConfig load_config(const std::filesystem::path& path, bool strict, const std::vector<std::string>& overrides = {});

/// Every leaf as ("section.key", default as JSON text).
std::vector<std::pair<std::string, std::string>> config_keys();

std::uint64_t fnv1a64(std::string_view bytes);

FieldSpec field_spec(const RunConfig& cfg);
SolveOptions solver_options(const RunConfig& cfg);
SourceSpec source_spec(const RunConfig& cfg);
EnsembleConfig ensemble_config(const RunConfig& cfg);
ProbeConfig probe_config(const RunConfig& cfg);
OneDConfig oned_config(const RunConfig& cfg);
/// Grid of the single-realization pipelines: [grid] L (default 32 rho) and N
/// (default by the resolution rule).
TorusGrid sample_grid(const RunConfig& cfg);

}  // namespace shl
