#pragma once

// Subcommand pipelines behind the `shl` executable.

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "shl/config.hpp"

namespace shl {

struct DispatchOptions {
  std::filesystem::path out;  // overrides [output] dir when non-empty
  int threads = 0;            // 0: SHL_THREADS, then hardware concurrency
  bool dry_run = false;       // converge only
};

const std::vector<std::string>& subcommands();

/// Runs one pipeline and writes its outputs; human-readable results go to
/// `log`. Returns the process exit status.
int dispatch(const std::string& subcommand, const RunConfig& cfg, const DispatchOptions& opts, std::ostream& log);

}  // namespace shl
