#include "shl/config.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "shl/error.hpp"

namespace shl {

using nlohmann::json;

json default_config() {
  return json{
      {"grid", {{"d", 2}, {"L", 0.0}, {"N", 0}, {"cells_per_rho", 8.0}, {"min_N", 64}}},
      {"field",
       {{"family", "gaussian"},
        {"rho", 1.0},
        {"kappa", 1},
        {"lambda", 0.2},
        {"map", "scalar-sigmoid"},
        {"seed", 1},
        {"amplitude", 1.0},
        {"constant", 0.0}}},
      {"solver", {{"tol", 1e-10}, {"max_iters", 0}, {"dealias", false}, {"preconditioner", "inverse-laplacian"}}},
      {"source",
       {{"kind", "trig"},
        {"amplitude", 1.0},
        {"frequency", 1},
        {"width", 0.25},
        {"center", json::array()},
        {"component", 0}}},
      {"hierarchy", {{"order", 1}}},
      {"ensemble",
       {{"eps", {0.125, 0.0625, 0.03125}},
        {"samples", 64},
        {"samples_per_rung", json::array()},
        {"p", 2.0},
        {"strong", true},
        {"antithetic", false},
        {"max_failures", 3},
        {"observable",
         {{"kind", "trig"},
          {"amplitude", 1.0},
          {"frequency", 1},
          {"width", 0.25},
          {"center", json::array()},
          {"component", 0}}}}},
      {"probes",
       {{"L_over_rho", 128.0},
        {"samples", 512},
        {"target_order", 2},
        {"radius", 1.0},
        {"anchor_radius", 1.0},
        {"channel", {1.0}},
        {"ray", json::array()},
        {"constant", false},
        {"oned_L_over_rho", 512.0},
        {"oned_samples", 64},
        {"oned_cells_per_rho", 16.0},
        {"growth_x", {8.0, 16.0, 32.0, 64.0}}}},
      {"output", {{"dir", "out"}, {"snapshots", true}}},
  };
}

namespace {

bool compatible(const json& def, const json& v) {
  if (def.is_boolean()) return v.is_boolean();
  if (def.is_string()) return v.is_string();
  if (def.is_number_integer()) return v.is_number_integer() || (v.is_number_float() && std::floor(v.get<double>()) == v.get<double>());
  if (def.is_number()) return v.is_number();
  if (def.is_array()) {
    if (!v.is_array()) return false;
    for (const auto& x : v)
      if (!x.is_number()) return false;
    return true;
  }
  return false;
}

void merge(json& target, const json& src, const std::string& path, bool strict, std::vector<std::string>& warnings) {
  if (!src.is_object()) throw Error(Errc::Config, path.empty() ? "config must be a JSON object" : path + ": expected an object");
  for (auto it = src.begin(); it != src.end(); ++it) {
    const std::string p = path + "/" + it.key();
    if (!target.contains(it.key())) {
      if (strict) throw Error(Errc::Config, p + ": unknown key");
      warnings.push_back(p + ": unknown key ignored");
      continue;
    }
    json& def = target[it.key()];
    if (def.is_object()) {
      merge(def, it.value(), p, strict, warnings);
      continue;
    }
    if (!compatible(def, it.value())) throw Error(Errc::Config, p + ": expected " + std::string(def.type_name()) + ", got " + it.value().dump());
    if (def.is_number_integer() && it.value().is_number_float()) def = static_cast<std::int64_t>(it.value().get<double>());
    else def = it.value();
  }
}

json override_doc(const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos || eq == 0) throw Error(Errc::Config, "override '" + spec + "' is not key=value");
  const std::string key = spec.substr(0, eq);
  const std::string text = spec.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  std::vector<std::string> parts;
  std::stringstream ss(key);
  for (std::string part; std::getline(ss, part, '.');) parts.push_back(part);
  json doc = value;
  for (auto it = parts.rbegin(); it != parts.rend(); ++it) doc = json{{*it, doc}};
  return doc;
}

void lint(RunConfig& cfg, bool strict) {
  const json& d = cfg.doc;
  auto soft = [&](const std::string& msg) {
    if (strict) throw Error(Errc::Config, msg);
    cfg.warnings.push_back(msg);
  };
  const int dim = d["grid"]["d"];
  if (dim < 1 || dim > 3) throw Error(Errc::Config, "/grid/d: must be 1, 2 or 3");
  const double lambda = d["field"]["lambda"];
  if (!(lambda > 0.0 && lambda < 1.0)) throw Error(Errc::Config, "/field/lambda: must lie in (0, 1)");
  if (!(d["field"]["rho"].get<double>() > 0.0)) throw Error(Errc::Config, "/field/rho: must be positive");
  if (d["field"]["kappa"].get<int>() < 1) throw Error(Errc::Config, "/field/kappa: must be at least 1");
  if (!(d["solver"]["tol"].get<double>() > 0.0)) throw Error(Errc::Config, "/solver/tol: must be positive");
  const std::string pre = d["solver"]["preconditioner"];
  if (pre != "inverse-laplacian" && pre != "none") throw Error(Errc::Config, "/solver/preconditioner: unknown value '" + pre + "'");
  parse_kernel_family(d["field"]["family"]);
  parse_coefficient_map(d["field"]["map"]);

  const double cells = d["grid"]["cells_per_rho"];
  if (cells < 8.0) soft("/grid/cells_per_rho: below the 8 cells per correlation length resolution rule");
  const int N = d["grid"]["N"];
  const double L = d["grid"]["L"];
  if (N > 0 && L > 0.0 && N * d["field"]["rho"].get<double>() / L < 8.0)
    soft("/grid/N: fewer than 8 cells per correlation length");

  const int order = d["hierarchy"]["order"];
  if (order < 1) throw Error(Errc::Config, "/hierarchy/order: must be at least 1");
  if (order > 4) soft("/hierarchy/order: orders above 4 are untested");

  const auto& eps = d["ensemble"]["eps"];
  for (std::size_t i = 0; i < eps.size(); ++i) {
    const double e = eps[i];
    if (!(e > 0.0 && e <= 1.0)) throw Error(Errc::Config, "/ensemble/eps/" + std::to_string(i) + ": must lie in (0, 1]");
    const double k = std::log2(1.0 / e);
    if (std::abs(k - std::round(k)) > 1e-12) soft("/ensemble/eps/" + std::to_string(i) + ": not a reciprocal power of two");
    if (i > 0 && !(e < eps[i - 1].get<double>())) throw Error(Errc::Config, "/ensemble/eps: ladder must be strictly decreasing");
  }
  if (d["ensemble"]["samples"].get<int>() < 2) throw Error(Errc::Config, "/ensemble/samples: must be at least 2");
  const auto& spr = d["ensemble"]["samples_per_rung"];
  if (!spr.empty()) {
    if (spr.size() != eps.size()) throw Error(Errc::Config, "/ensemble/samples_per_rung: one count per eps required");
    for (const auto& m : spr)
      if (m.get<double>() < 2 || std::floor(m.get<double>()) != m.get<double>())
        throw Error(Errc::Config, "/ensemble/samples_per_rung: counts must be integers >= 2");
  }
  if (!(d["ensemble"]["p"].get<double>() >= 1.0)) throw Error(Errc::Config, "/ensemble/p: must be at least 1");
  if (d["probes"]["target_order"].get<int>() < 1) throw Error(Errc::Config, "/probes/target_order: must be at least 1");
}

}  // namespace

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string RunConfig::hash() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(doc.dump())));
  return buf;
}

std::uint64_t RunConfig::seed() const { return doc["field"]["seed"].get<std::uint64_t>(); }

RunConfig parse_config(const json& doc, bool strict, const std::vector<std::string>& overrides) {
  RunConfig cfg;
  cfg.doc = default_config();
  merge(cfg.doc, doc.is_null() ? json::object() : doc, "", strict, cfg.warnings);
  for (const auto& o : overrides) merge(cfg.doc, override_doc(o), "", true, cfg.warnings);
  lint(cfg, strict);
  for (const auto& w : cfg.warnings) spdlog::warn("config: {}", w);
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path, bool strict, const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::Io, "cannot open config " + path.string());
  json doc = json::parse(in, nullptr, false);
  if (doc.is_discarded()) throw Error(Errc::Config, path.string() + ": not a well-formed JSON document");
  return parse_config(doc, strict, overrides);
}

namespace {

void flatten_leaves(const json& j, const std::string& prefix, std::vector<std::pair<std::string, std::string>>& out) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (it.value().is_object()) flatten_leaves(it.value(), key, out);
    else out.emplace_back(key, it.value().dump());
  }
}

}  // namespace

std::vector<std::pair<std::string, std::string>> config_keys() {
  std::vector<std::pair<std::string, std::string>> out;
  flatten_leaves(default_config(), "", out);
  return out;
}

FieldSpec field_spec(const RunConfig& cfg) {
  const json& f = cfg.doc["field"];
  FieldSpec s;
  s.kernel.family = parse_kernel_family(f["family"]);
  s.kernel.rho = f["rho"];
  s.kernel.kappa = f["kappa"];
  s.kernel.amplitude = f["amplitude"];
  s.lambda = f["lambda"];
  s.map = parse_coefficient_map(f["map"]);
  s.constant = f["constant"];
  return s;
}

SolveOptions solver_options(const RunConfig& cfg) {
  const json& s = cfg.doc["solver"];
  SolveOptions o;
  o.tol = s["tol"];
  o.max_iters = s["max_iters"];
  o.dealias = s["dealias"];
  o.preconditioner = s["preconditioner"] == "none" ? Preconditioner::None : Preconditioner::InverseLaplacian;
  return o;
}

namespace {

SourceSpec source_from(const json& s) {
  SourceSpec o;
  o.kind = s["kind"];
  o.amplitude = s["amplitude"];
  o.frequency = s["frequency"];
  o.width = s["width"];
  o.center = s["center"].get<std::vector<double>>();
  o.component = s["component"];
  return o;
}

}  // namespace

SourceSpec source_spec(const RunConfig& cfg) { return source_from(cfg.doc["source"]); }

EnsembleConfig ensemble_config(const RunConfig& cfg) {
  const json& e = cfg.doc["ensemble"];
  EnsembleConfig c;
  c.d = cfg.doc["grid"]["d"];
  c.eps = e["eps"].get<std::vector<double>>();
  c.samples = e["samples"];
  for (const auto& m : e["samples_per_rung"]) c.samples_per_rung.push_back(static_cast<std::size_t>(m.get<double>()));
  c.order = cfg.doc["hierarchy"]["order"];
  c.p = e["p"];
  c.cells_per_rho = cfg.doc["grid"]["cells_per_rho"];
  c.min_N = cfg.doc["grid"]["min_N"];
  c.field = field_spec(cfg);
  c.solver = solver_options(cfg);
  c.source = source_spec(cfg);
  c.observable = source_from(e["observable"]);
  c.strong = e["strong"];
  c.antithetic = e["antithetic"];
  c.seed = cfg.seed();
  c.max_failures = e["max_failures"];
  return c;
}

ProbeConfig probe_config(const RunConfig& cfg) {
  const json& p = cfg.doc["probes"];
  ProbeConfig c;
  c.d = cfg.doc["grid"]["d"];
  c.L_over_rho = p["L_over_rho"];
  c.cells_per_rho = cfg.doc["grid"]["cells_per_rho"];
  c.samples = p["samples"];
  c.target_order = p["target_order"];
  c.radius = p["radius"];
  c.anchor_radius = p["anchor_radius"];
  c.channel = p["channel"].get<std::vector<double>>();
  c.ray = p["ray"].get<std::vector<double>>();
  c.field = field_spec(cfg);
  c.solver = solver_options(cfg);
  c.seed = cfg.seed();
  c.constant_probe = p["constant"];
  return c;
}

OneDConfig oned_config(const RunConfig& cfg) {
  const json& p = cfg.doc["probes"];
  OneDConfig c;
  c.L_over_rho = p["oned_L_over_rho"];
  c.cells_per_rho = p["oned_cells_per_rho"];
  c.samples = p["oned_samples"];
  c.field = field_spec(cfg);
  c.solver = solver_options(cfg);
  c.growth_x = p["growth_x"].get<std::vector<double>>();
  c.seed = cfg.seed();
  return c;
}

TorusGrid sample_grid(const RunConfig& cfg) {
  const json& g = cfg.doc["grid"];
  const double rho = cfg.doc["field"]["rho"];
  const double L = g["L"].get<double>() > 0.0 ? g["L"].get<double>() : 32.0 * rho;
  const int N = g["N"].get<int>() > 0 ? g["N"].get<int>() : resolution_for(L, rho, g["cells_per_rho"], 16);
  return make_grid(g["d"], L, N);
}

}  // namespace shl
