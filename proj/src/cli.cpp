#include "shl/cli.hpp"

#include <spdlog/spdlog.h>

#include <cmath>
#include <fstream>
#include <ostream>

#include "shl/error.hpp"
#include "shl/parallel.hpp"
#include "shl/report.hpp"

namespace shl {

using nlohmann::json;
namespace fs = std::filesystem;

const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> names{"sample-field", "correctors", "tensors", "solve",
                                              "converge",     "weak-probe", "oned-exact", "report"};
  return names;
}

namespace {

struct Context {
  const RunConfig& cfg;
  fs::path out;
  int threads;
  bool snapshots;
  std::ostream& log;
};

void write_json(const fs::path& path, const json& j) {
  fs::create_directories(path.parent_path());
  std::ofstream o(path, std::ios::binary);
  if (!o) throw Error(Errc::Io, "cannot write " + path.string());
  o << j.dump(2) << "\n";
}

json manifest_head(const Context& c, const TorusGrid& g) {
  return {{"config", c.cfg.doc},
          {"config_hash", c.cfg.hash()},
          {"seed", c.cfg.seed()},
          {"grid", {{"d", g.d}, {"L", g.L}, {"N", g.N}}},
          {"files", json::array()}};
}

void snapshot(const Context& c, json& manifest, const std::string& name, const Field& f) {
  if (!c.snapshots) return;
  const fs::path rel = fs::path("snapshots") / (name + ".shlb");
  fs::create_directories(c.out / "snapshots");
  write_snapshot(c.out / rel, f);
  manifest["files"].push_back(rel.generic_string());
}

json tensor_json(const ConstTensor& t) {
  return {{"order", t.order() - 1}, {"values", std::vector<double>(t.values().begin(), t.values().end())}};
}

void print_tensor(std::ostream& log, const std::string& label, const ConstTensor& t) {
  const int d = t.dim();
  const std::size_t lead = t.size() / static_cast<std::size_t>(d * d);
  for (std::size_t I = 0; I < lead; ++I) {
    const MultiIndex m = decode(I, t.order() - 2, d);
    log << label << (m.order() ? "[" + to_string(m) + "]" : std::string()) << " =";
    for (int r = 0; r < d; ++r) {
      log << (r ? " ;" : " [");
      for (int cc = 0; cc < d; ++cc)
        log << " " << format_number(t[(I * static_cast<std::size_t>(d) + static_cast<std::size_t>(r)) * static_cast<std::size_t>(d) +
                                      static_cast<std::size_t>(cc)]);
    }
    log << " ]\n";
  }
}

CoefficientField realization(const Context& c, const TorusGrid& g, Field* G = nullptr) {
  auto [a, field] = sample_coefficient_with_field(field_spec(c.cfg), g, child(root_stream(c.cfg.seed()), 0));
  if (G) *G = std::move(field);
  return a;
}

int run_sample_field(const Context& c) {
  const TorusGrid g = sample_grid(c.cfg);
  Field G;
  const CoefficientField a = realization(c, g, &G);
  json m = manifest_head(c, g);
  double amin = INFINITY, amax = -INFINITY;
  for (int r = 0; r < g.d; ++r) {
    const auto v = a.a.component(static_cast<std::size_t>(r * g.d + r));
    for (double x : v) {
      amin = std::min(amin, x);
      amax = std::max(amax, x);
    }
  }
  m["a_diag_min"] = amin;
  m["a_diag_max"] = amax;
  if (G.components()) {
    const auto v = G.component(0);
    const double mean = lattice_mean(v);
    double var = 0;
    for (double x : v) var += (x - mean) * (x - mean);
    var /= static_cast<double>(v.size());
    m["G_mean"] = mean;
    m["G_variance"] = var;
    c.log << "G: mean " << format_number(mean) << ", variance " << format_number(var) << "\n";
    snapshot(c, m, "G", G);
  }
  c.log << "a: diagonal range [" << format_number(amin) << ", " << format_number(amax) << "]\n";
  snapshot(c, m, "a", a.a);
  write_json(c.out / "manifest.json", m);
  return 0;
}

int run_correctors(const Context& c, bool tensors_only) {
  const TorusGrid g = sample_grid(c.cfg);
  const CoefficientField a = realization(c, g);
  const int n = c.cfg.doc["hierarchy"]["order"];
  const CorrectorHierarchy h = compute_hierarchy(a, n, solver_options(c.cfg), c.threads);
  json m = manifest_head(c, g);
  m["tensors"] = json::array();
  m["tensors_symmetrized"] = json::array();
  std::string csv = "order,multi_index,r,c,value,symmetrized\n";
  for (int k = 1; k <= n; ++k) {
    const ConstTensor& t = h.at(k).abar;
    const ConstTensor s = symmetrized_action(t);
    m["tensors"].push_back(tensor_json(t));
    m["tensors_symmetrized"].push_back(tensor_json(s));
    print_tensor(c.log, "abar^" + std::to_string(k), t);
    if (k > 1) print_tensor(c.log, "sym abar^" + std::to_string(k), s);
    for (std::size_t q = 0; q < t.size(); ++q) {
      const MultiIndex mi = decode(q, t.order(), g.d);
      const MultiIndex lead{std::vector<int>(mi.idx.begin(), mi.idx.end() - 2)};
      csv += std::to_string(k) + ",\"" + to_string(lead) + "\"," + std::to_string(mi.idx[mi.idx.size() - 2] + 1) + "," +
             std::to_string(mi.idx.back() + 1) + "," + format_number(t[q]) + "," + format_number(s[q]) + "\n";
    }
  }
  int iters = 0;
  for (const auto& o : h.orders)
    for (const auto& r : o.reports) iters = std::max(iters, r.iterations);
  m["cg_iterations_max"] = iters;
  if (!tensors_only) {
    json audit = json::array();
    for (const auto& r : flux_divergence_audit(h)) {
      audit.push_back({{"order", r.order},
                       {"div_q", r.div_q},
                       {"div_sigma_minus_q", r.div_sigma},
                       {"skew_defect", r.skew_defect},
                       {"anchor_phi", r.anchor_phi},
                       {"anchor_sigma", r.anchor_sigma},
                       {"anchor_q", r.anchor_q}});
      c.log << "order " << r.order << ": div q " << format_number(r.div_q) << ", div sigma - q " << format_number(r.div_sigma)
            << ", anchors " << format_number(std::max({r.anchor_phi, r.anchor_sigma, r.anchor_q})) << "\n";
    }
    m["audit"] = audit;
    for (int k = 1; k <= n; ++k) {
      snapshot(c, m, "phi_" + std::to_string(k), h.at(k).phi);
      snapshot(c, m, "sigma_" + std::to_string(k), h.at(k).sigma);
    }
  }
  fs::create_directories(c.out / "csv");
  std::ofstream(c.out / "csv" / "tensors.csv", std::ios::binary) << csv;
  write_json(c.out / "manifest.json", m);
  return 0;
}

int run_solve(const Context& c) {
  const EnsembleConfig ec = ensemble_config(c.cfg);
  if (ec.eps.empty()) throw Error(Errc::Config, "/ensemble/eps: solve needs at least one eps");
  const double eps = ec.eps.front();
  const int N = resolution_for(1.0 / eps, ec.field.kernel.rho, ec.cells_per_rho, ec.min_N);
  const TorusGrid micro = make_grid(ec.d, 1.0 / eps, N);
  const TorusGrid macro = macro_grid_for(micro, eps);
  const CoefficientField a = realization(c, micro);
  const CorrectorHierarchy h = compute_hierarchy(a, ec.order, ec.solver, c.threads);
  const CoefficientField am = regrid(a, macro);
  const Field f = make_source(ec.source, macro);
  const SolveResult u = solve_divform_variable(am, f, ec.solver);
  TensorList tensors;
  for (const auto& o : h.orders) tensors.push_back(o.abar);
  const HomogProxy P = assemble_proxy(solve_tilde_hierarchy(tensors, f, ec.order), eps, ec.order);
  const TwoScaleExpansion ex = two_scale_expand(h, P.potential, macro, eps, ec.order);
  const double es = error_norm_strong(u.grad, ex.grad);
  const double mis = two_scale_residual(am, h, u.grad, ex, P, tensors).mismatch;
  const double pim = proxy_identity_mismatch(P, tensors, f);
  json m = manifest_head(c, micro);
  m["eps"] = eps;
  m["order"] = ec.order;
  m["cg_iterations"] = u.report.iterations;
  m["converged"] = u.report.converged;
  m["e_strong"] = es;
  m["residual_mismatch"] = mis;
  m["proxy_identity_mismatch"] = pim;
  c.log << "eps " << format_number(eps) << ", N " << N << ", CG iterations " << u.report.iterations << "\n";
  c.log << "e_strong " << format_number(es) << ", residual identity mismatch " << format_number(mis) << ", proxy identity mismatch "
        << format_number(pim) << "\n";
  snapshot(c, m, "grad_u", u.grad);
  snapshot(c, m, "grad_proxy", P.grad);
  snapshot(c, m, "grad_expansion", ex.grad);
  write_json(c.out / "manifest.json", m);
  return u.report.converged ? 0 : 1;
}

ReportBundle bundle_head(const Context& c) {
  ReportBundle b;
  b.config = c.cfg.doc;
  b.config_hash = c.cfg.hash();
  b.seed = c.cfg.seed();
  return b;
}

void print_fits(std::ostream& log, const std::map<std::string, RateFit>& fits) {
  for (const auto& [k, f] : fits)
    log << k << ": slope " << format_number(f.slope) << " +- " << format_number(f.stderr_slope) << " (R2 " << format_number(f.r2)
        << ")\n";
}

int run_converge(const Context& c, bool dry_run) {
  const EnsembleConfig ec = ensemble_config(c.cfg);
  if (dry_run) {
    double total = 0;
    c.log << "eps,N,L_micro,samples,solves_per_sample,cost_seconds_heuristic\n";
    const auto plan = plan_ensemble(ec);
    for (std::size_t i = 0; i < plan.size(); ++i) {
      const auto& p = plan[i];
      c.log << format_number(p.eps) << "," << p.N << "," << format_number(p.L_micro) << "," << samples_at(ec, i) << ","
            << format_number(p.solves_per_sample) << "," << format_number(std::round(p.cost_seconds)) << "\n";
      total += p.cost_seconds;
    }
    c.log << "total heuristic cost: " << format_number(std::round(total)) << " s (N^d log N per solve, 10/lambda CG iterations)\n";
    return 0;
  }
  ReportBundle b = bundle_head(c);
  b.ensemble = run_ensemble(ec, c.threads);
  emit_report(b, c.out);
  for (const auto& r : b.ensemble->rungs) {
    c.log << "eps " << format_number(r.eps) << " (N " << r.N << ", M " << r.samples << "): e_strong " << format_number(r.e_strong_mean);
    for (const auto& o : r.orders) c.log << ", e_mean[n=" << o.n << "] " << format_number(o.e_mean_proj);
    c.log << ", var_obs " << format_number(r.var_obs) << "\n";
  }
  print_fits(c.log, b.ensemble->fits);
  return 0;
}

int run_probe(const Context& c) {
  ReportBundle b = bundle_head(c);
  b.probe = weak_pairing_probe(probe_config(c.cfg), c.threads);
  emit_report(b, c.out);
  for (const auto& r : b.probe->rows)
    c.log << "x " << format_number(r.r) << ": weak " << format_number(r.weak) << " +- " << format_number(r.weak_se) << ", strong "
          << format_number(r.strong) << "\n";
  c.log << "weak slope " << format_number(b.probe->weak_fit.slope) << " +- " << format_number(b.probe->weak_fit.stderr_slope)
        << ", strong slope " << format_number(b.probe->strong_fit.slope) << " +- " << format_number(b.probe->strong_fit.stderr_slope)
        << "\n";
  return 0;
}

int run_oned(const Context& c) {
  ReportBundle b = bundle_head(c);
  b.oned = one_d_exact_suite(oned_config(c.cfg), c.threads);
  EnsembleConfig ec = ensemble_config(c.cfg);
  ec.d = 1;
  ec.order = 1;
  ec.strong = false;
  b.ensemble = run_ensemble(ec, c.threads);
  emit_report(b, c.out);
  const auto& o = *b.oned;
  c.log << "max |phi_solver - phi_explicit| " << format_number(o.max_phi_error) << "\n";
  c.log << "max relative |abar - harmonic mean| " << format_number(o.max_abar_rel_error) << "\n";
  c.log << "growth exponent " << format_number(o.growth_fit.slope) << " +- " << format_number(o.growth_fit.stderr_slope) << "\n";
  for (const auto& r : b.ensemble->rungs)
    c.log << "eps " << format_number(r.eps) << ": e_mean " << format_number(r.orders.at(0).e_mean) << " (SE "
          << format_number(r.orders.at(0).e_mean_se) << ")\n";
  return 0;
}

int run_report(const Context& c) {
  const ReportBundle b = read_report(c.out);
  emit_report(b, c.out);
  if (b.ensemble) print_fits(c.log, b.ensemble->fits);
  return 0;
}

}  // namespace

int dispatch(const std::string& sub, const RunConfig& cfg, const DispatchOptions& opts, std::ostream& log) {
  const fs::path out = opts.out.empty() ? fs::path(cfg.doc["output"]["dir"].get<std::string>()) : opts.out;
  Context c{cfg, out, resolve_threads(opts.threads), cfg.doc["output"]["snapshots"].get<bool>(), log};
  if (sub == "sample-field") return run_sample_field(c);
  if (sub == "correctors") return run_correctors(c, false);
  if (sub == "tensors") return run_correctors(c, true);
  if (sub == "solve") return run_solve(c);
  if (sub == "converge") return run_converge(c, opts.dry_run);
  if (sub == "weak-probe") return run_probe(c);
  if (sub == "oned-exact") return run_oned(c);
  if (sub == "report") return run_report(c);
  throw Error(Errc::Config, "unknown subcommand '" + sub + "'");
}

}  // namespace shl
