#pragma once

// Campaign output: CSV tables, summary.json and log-log SVG plots.
//
// Layout under the output directory:
//   summary.json          config echo, config hash, seed, every statistic
//   csv/rates.csv         one row per (eps, order)
//   csv/fits.csv          fitted slopes with standard errors
//   csv/tensors.csv       ensemble tensors per eps
//   csv/probe.csv         weak/strong probe table
//   csv/oned.csv          1D growth table
//   plots/*.svg

#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "shl/experiments.hpp"

namespace shl {

struct ReportBundle {
  nlohmann::json config;  // echoed run configuration
  std::string config_hash;
  std::uint64_t seed = 0;
  std::optional<EnsembleReport> ensemble;
  std::optional<ProbeReport> probe;
  std::optional<OneDReport> oned;
};

nlohmann::json to_json(const ReportBundle& bundle);
ReportBundle bundle_from_json(const nlohmann::json& summary);

/// Writes every table and plot; tables without data are header-only and
/// plots without data say so.
void emit_report(const ReportBundle& bundle, const std::filesystem::path& dir);
/// Reads dir/summary.json back.
ReportBundle read_report(const std::filesystem::path& dir);

/// Shortest round-trip decimal form used in every CSV cell.
std::string format_number(double v);

}  // namespace shl
