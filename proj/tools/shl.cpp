#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <CLI11.hpp>
#include <iostream>

#include "shl/cli.hpp"
#include "shl/error.hpp"

int main(int argc, char** argv) {
  spdlog::set_default_logger(spdlog::stderr_color_mt("shl"));

  std::string keys = "\nConfig keys (section.key = default):\n";
  for (const auto& [k, v] : shl::config_keys()) keys += "  " + k + " = " + v + "\n";

  CLI::App app{"Higher-order stochastic homogenization experiments"};
  app.footer(keys);
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::uint64_t seed = 0;
  int threads = 0;
  std::string out;
  bool strict = false;
  bool quiet = false;
  std::vector<std::string> sets;
  app.add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
  auto* seed_opt = app.add_option("--seed", seed, "Root seed (overrides field.seed)");
  app.add_option("--threads", threads, "Worker threads (default: SHL_THREADS, then available parallelism)")->check(CLI::NonNegativeNumber);
  app.add_option("--out", out, "Output directory (overrides output.dir)");
  app.add_flag("--strict", strict, "Unknown keys and lint failures are errors");
  app.add_option("--set", sets, "Override a config leaf: section.key=value (repeatable)");
  app.add_flag("--quiet", quiet, "Only warnings and errors on stderr");

  bool dry_run = false;
  const std::map<std::string, std::string> help{
      {"sample-field", "Sample one coefficient realization and write snapshots"},
      {"correctors", "Corrector hierarchy for one realization, with audit and snapshots"},
      {"tensors", "Print the effective tensors of one realization"},
      {"solve", "Heterogeneous solve vs. homogenized proxy and two-scale expansion at the first eps"},
      {"converge", "Monte-Carlo campaign over the eps ladder"},
      {"weak-probe", "Weak vs. strong corrector growth along a ray"},
      {"oned-exact", "1D explicit-corrector suite and 1D ensemble check"},
      {"report", "Regenerate CSV tables and plots from summary.json"},
  };
  for (const auto& name : shl::subcommands()) {
    auto* sub = app.add_subcommand(name, help.at(name));
    if (name == "converge") sub->add_flag("--dry-run", dry_run, "Print the planned schedule and cost estimate only");
  }

  CLI11_PARSE(app, argc, argv);
  if (quiet) spdlog::set_level(spdlog::level::warn);

  try {
    if (*seed_opt) sets.push_back("field.seed=" + std::to_string(seed));
    const shl::RunConfig cfg = config_path.empty() ? shl::parse_config(nlohmann::json::object(), strict, sets)
                                                   : shl::load_config(config_path, strict, sets);
    shl::DispatchOptions opts;
    opts.out = out;
    opts.threads = threads;
    opts.dry_run = dry_run;
    return shl::dispatch(app.get_subcommands().front()->get_name(), cfg, opts, std::cout);
  } catch (const shl::Error& e) {
    spdlog::error("{}", e.what());
    return 2;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 3;
  }
}
