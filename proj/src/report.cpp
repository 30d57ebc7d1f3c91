#include "shl/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "shl/error.hpp"

namespace shl {

using nlohmann::json;

std::string format_number(double v) {
  if (!std::isfinite(v)) return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

namespace {

json fit_json(const RateFit& f) {
  return {{"slope", f.slope}, {"intercept", f.intercept}, {"stderr", f.stderr_slope}, {"r2", f.r2}, {"points", f.points}};
}

RateFit fit_from(const json& j) {
  RateFit f;
  f.slope = j.at("slope");
  f.intercept = j.at("intercept");
  f.stderr_slope = j.at("stderr");
  f.r2 = j.at("r2");
  f.points = j.at("points");
  return f;
}

json tensors_json(const TensorList& t) {
  json a = json::array();
  for (const auto& x : t) a.push_back({{"d", x.dim()}, {"k", x.order()}, {"values", std::vector<double>(x.values().begin(), x.values().end())}});
  return a;
}

TensorList tensors_from(const json& a) {
  TensorList out;
  for (const auto& x : a) {
    ConstTensor t(x.at("d"), x.at("k"));
    const auto v = x.at("values").get<std::vector<double>>();
    if (v.size() != t.size()) throw Error(Errc::Io, "summary.json: tensor size mismatch");
    for (std::size_t i = 0; i < v.size(); ++i) t[i] = v[i];
    out.push_back(t);
  }
  return out;
}

// JSON has no NaN; finite values only.
double finite(double v) { return std::isfinite(v) ? v : 0.0; }

json ensemble_json(const EnsembleReport& r) {
  json rungs = json::array();
  for (const auto& g : r.rungs) {
    json orders = json::array();
    for (const auto& o : g.orders)
      orders.push_back({{"n", o.n},
                        {"e_mean", o.e_mean},
                        {"e_mean_se", o.e_mean_se},
                        {"e_mean_proj", o.e_mean_proj},
                        {"e_mean_proj_se", o.e_mean_proj_se},
                        {"e_flux", o.e_flux},
                        {"e_flux_se", o.e_flux_se},
                        {"e_flux_proj", o.e_flux_proj},
                        {"e_flux_proj_se", o.e_flux_proj_se}});
    rungs.push_back({{"eps", g.eps},
                     {"N", g.N},
                     {"L_micro", g.L_micro},
                     {"samples", g.samples},
                     {"failures", g.failures},
                     {"aborted", g.aborted},
                     {"e_strong", g.e_strong},
                     {"e_strong_mean", g.e_strong_mean},
                     {"e_strong_se", g.e_strong_se},
                     {"orders", orders},
                     {"observable", g.observable},
                     {"var_obs", g.var_obs},
                     {"var_obs_se", g.var_obs_se},
                     {"residual_mismatch", g.residual_mismatch},
                     {"xi0_mean_norm", g.xi0_mean_norm},
                     {"xi0_se_norm", g.xi0_se_norm},
                     {"xi_obs_mean", finite(g.xi_obs_mean)},
                     {"xi_obs_se", finite(g.xi_obs_se)},
                     {"tensors", tensors_json(g.tensors)},
                     {"tensors_se", tensors_json(g.tensors_se)},
                     {"cg_iterations_max", g.cg_iterations_max}});
  }
  json fits = json::object();
  for (const auto& [k, f] : r.fits) fits[k] = fit_json(f);
  return {{"d", r.config.d},
          {"order", r.config.order},
          {"p", r.config.p},
          {"eps", r.config.eps},
          {"rungs", rungs},
          {"fits", fits}};
}

EnsembleReport ensemble_from(const json& j) {
  EnsembleReport r;
  r.config.d = j.at("d");
  r.config.order = j.at("order");
  r.config.p = j.at("p");
  r.config.eps = j.at("eps").get<std::vector<double>>();
  for (const auto& g : j.at("rungs")) {
    RungReport x;
    x.eps = g.at("eps");
    x.N = g.at("N");
    x.L_micro = g.at("L_micro");
    x.samples = g.at("samples");
    x.failures = g.at("failures");
    x.aborted = g.at("aborted");
    x.e_strong = g.at("e_strong").get<std::vector<double>>();
    x.e_strong_mean = g.at("e_strong_mean");
    x.e_strong_se = g.at("e_strong_se");
    for (const auto& o : g.at("orders")) {
      OrderStats s;
      s.n = o.at("n");
      s.e_mean = o.at("e_mean");
      s.e_mean_se = o.at("e_mean_se");
      s.e_mean_proj = o.at("e_mean_proj");
      s.e_mean_proj_se = o.at("e_mean_proj_se");
      s.e_flux = o.at("e_flux");
      s.e_flux_se = o.at("e_flux_se");
      s.e_flux_proj = o.at("e_flux_proj");
      s.e_flux_proj_se = o.at("e_flux_proj_se");
      x.orders.push_back(s);
    }
    x.observable = g.at("observable").get<std::vector<double>>();
    x.var_obs = g.at("var_obs");
    x.var_obs_se = g.at("var_obs_se");
    x.residual_mismatch = g.at("residual_mismatch").get<std::vector<double>>();
    x.xi0_mean_norm = g.at("xi0_mean_norm");
    x.xi0_se_norm = g.at("xi0_se_norm");
    x.xi_obs_mean = g.at("xi_obs_mean");
    x.xi_obs_se = g.at("xi_obs_se");
    x.tensors = tensors_from(g.at("tensors"));
    x.tensors_se = tensors_from(g.at("tensors_se"));
    x.cg_iterations_max = g.at("cg_iterations_max");
    r.rungs.push_back(std::move(x));
  }
  for (const auto& [k, f] : j.at("fits").items()) r.fits[k] = fit_from(f);
  return r;
}

json probe_json(const ProbeReport& p) {
  json rows = json::array();
  for (const auto& r : p.rows)
    rows.push_back({{"r", r.r}, {"weak", r.weak}, {"weak_se", r.weak_se}, {"strong", r.strong}, {"strong_se", r.strong_se}});
  return {{"N", p.N},
          {"samples", p.samples},
          {"target_order", p.config.target_order},
          {"L_over_rho", p.config.L_over_rho},
          {"constant_probe", p.config.constant_probe},
          {"rows", rows},
          {"weak_fit", fit_json(p.weak_fit)},
          {"strong_fit", fit_json(p.strong_fit)}};
}

ProbeReport probe_from(const json& j) {
  ProbeReport p;
  p.N = j.at("N");
  p.samples = j.at("samples");
  p.config.target_order = j.at("target_order");
  p.config.L_over_rho = j.at("L_over_rho");
  p.config.constant_probe = j.at("constant_probe");
  for (const auto& r : j.at("rows")) {
    ProbeRow x;
    x.r = r.at("r");
    x.weak = r.at("weak");
    x.weak_se = r.at("weak_se");
    x.strong = r.at("strong");
    x.strong_se = r.at("strong_se");
    p.rows.push_back(x);
    p.config.ray.push_back(x.r);
  }
  p.weak_fit = fit_from(j.at("weak_fit"));
  p.strong_fit = fit_from(j.at("strong_fit"));
  return p;
}

json oned_json(const OneDReport& o) {
  return {{"N", o.N},
          {"samples", o.samples},
          {"L_over_rho", o.config.L_over_rho},
          {"max_phi_error", o.max_phi_error},
          {"max_abar_rel_error", o.max_abar_rel_error},
          {"growth", o.growth},
          {"growth_fit", fit_json(o.growth_fit)}};
}

OneDReport oned_from(const json& j) {
  OneDReport o;
  o.N = j.at("N");
  o.samples = j.at("samples");
  o.config.L_over_rho = j.at("L_over_rho");
  o.max_phi_error = j.at("max_phi_error");
  o.max_abar_rel_error = j.at("max_abar_rel_error");
  o.growth = j.at("growth").get<std::vector<std::pair<double, double>>>();
  o.growth_fit = fit_from(j.at("growth_fit"));
  return o;
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::Io, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(Errc::Io, "write failed for " + path.string());
}

std::string csv_row(std::initializer_list<std::string> cells) {
  std::string s;
  bool first = true;
  for (const auto& c : cells) {
    if (!first) s += ',';
    s += c;
    first = false;
  }
  return s + '\n';
}

std::string fmt(double v) { return format_number(v); }
std::string fmt(std::size_t v) { return std::to_string(v); }
std::string fmt(int v) { return std::to_string(v); }

struct Series {
  std::string name;
  std::vector<std::pair<double, double>> pts;
  std::optional<RateFit> fit;
};

// Log-log plot with decade grid lines, markers and fitted lines.
std::string svg_loglog(const std::string& title, const std::string& xlabel, const std::vector<Series>& series) {
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"};
  const double W = 640, H = 440, ml = 70, mr = 170, mt = 40, mb = 50;
  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (const auto& s : series)
    for (const auto& [x, y] : s.pts)
      if (x > 0 && y > 0) {
        x0 = std::min(x0, std::log10(x));
        x1 = std::max(x1, std::log10(x));
        y0 = std::min(y0, std::log10(y));
        y1 = std::max(y1, std::log10(y));
      }
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << title << "</text>\n";
  if (!std::isfinite(x0)) {
    o << "<text x=\"" << W / 2 << "\" y=\"" << H / 2 << "\" text-anchor=\"middle\">no data</text>\n</svg>\n";
    return o.str();
  }
  x0 = std::floor(x0 - 0.05);
  x1 = std::ceil(x1 + 0.05);
  y0 = std::floor(y0 - 0.05);
  y1 = std::ceil(y1 + 0.05);
  const double pw = W - ml - mr, ph = H - mt - mb;
  auto X = [&](double lx) { return ml + (lx - x0) / (x1 - x0) * pw; };
  auto Y = [&](double ly) { return mt + (y1 - ly) / (y1 - y0) * ph; };
  auto num = [](double v) { return format_number(std::round(v * 100.0) / 100.0); };
  o << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << pw << "\" height=\"" << ph << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (double lx = x0; lx <= x1 + 1e-9; lx += 1) {
    o << "<line x1=\"" << num(X(lx)) << "\" y1=\"" << mt << "\" x2=\"" << num(X(lx)) << "\" y2=\"" << mt + ph
      << "\" stroke=\"#ddd\"/>\n";
    o << "<text x=\"" << num(X(lx)) << "\" y=\"" << mt + ph + 16 << "\" text-anchor=\"middle\">1e" << static_cast<int>(lx) << "</text>\n";
  }
  for (double ly = y0; ly <= y1 + 1e-9; ly += 1) {
    o << "<line x1=\"" << ml << "\" y1=\"" << num(Y(ly)) << "\" x2=\"" << ml + pw << "\" y2=\"" << num(Y(ly))
      << "\" stroke=\"#ddd\"/>\n";
    o << "<text x=\"" << ml - 6 << "\" y=\"" << num(Y(ly) + 4) << "\" text-anchor=\"end\">1e" << static_cast<int>(ly) << "</text>\n";
  }
  o << "<text x=\"" << ml + pw / 2 << "\" y=\"" << H - 10 << "\" text-anchor=\"middle\">" << xlabel << "</text>\n";
  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto& s = series[i];
    const char* c = colors[i % 7];
    for (const auto& [x, y] : s.pts)
      if (x > 0 && y > 0)
        o << "<circle cx=\"" << num(X(std::log10(x))) << "\" cy=\"" << num(Y(std::log10(y))) << "\" r=\"3.5\" fill=\"" << c << "\"/>\n";
    std::string label = s.name;
    if (s.fit && s.fit->points >= 2) {
      double a = INFINITY, b = -INFINITY;
      for (const auto& [x, y] : s.pts)
        if (x > 0 && y > 0) {
          a = std::min(a, std::log10(x));
          b = std::max(b, std::log10(x));
        }
      // log v = intercept + slope log x, natural logs.
      auto fy = [&](double lx) { return (s.fit->intercept + s.fit->slope * lx * std::log(10.0)) / std::log(10.0); };
      o << "<line x1=\"" << num(X(a)) << "\" y1=\"" << num(Y(fy(a))) << "\" x2=\"" << num(X(b)) << "\" y2=\"" << num(Y(fy(b)))
        << "\" stroke=\"" << c << "\" stroke-dasharray=\"5,3\"/>\n";
      label += " (slope " + num(s.fit->slope) + " ± " + num(s.fit->stderr_slope) + ")";
    }
    o << "<text x=\"" << ml + pw + 8 << "\" y=\"" << mt + 14 + 18 * static_cast<double>(i) << "\" fill=\"" << c << "\">" << label
      << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

}  // namespace

json to_json(const ReportBundle& b) {
  json j{{"config", b.config}, {"config_hash", b.config_hash}, {"seed", b.seed}};
  if (b.ensemble) j["ensemble"] = ensemble_json(*b.ensemble);
  if (b.probe) j["probe"] = probe_json(*b.probe);
  if (b.oned) j["oned"] = oned_json(*b.oned);
  return j;
}

ReportBundle bundle_from_json(const json& j) {
  ReportBundle b;
  try {
    b.config = j.at("config");
    b.config_hash = j.at("config_hash");
    b.seed = j.at("seed");
    if (j.contains("ensemble")) b.ensemble = ensemble_from(j.at("ensemble"));
    if (j.contains("probe")) b.probe = probe_from(j.at("probe"));
    if (j.contains("oned")) b.oned = oned_from(j.at("oned"));
  } catch (const json::exception& e) {
    throw Error(Errc::Io, std::string("summary.json: ") + e.what());
  }
  return b;
}

void emit_report(const ReportBundle& b, const std::filesystem::path& dir) {
  write_file(dir / "summary.json", to_json(b).dump(2) + "\n");

  std::string rates = csv_row({"eps", "N", "M", "failures", "order", "e_strong_mean", "e_strong_se", "e_mean", "e_mean_se",
                               "e_mean_proj", "e_mean_proj_se", "e_flux", "e_flux_se", "e_flux_proj", "e_flux_proj_se", "var_obs",
                               "var_obs_se", "xi0_mean_norm", "xi0_se_norm", "residual_mismatch_max", "cg_iterations_max"});
  std::string fits = csv_row({"quantity", "slope", "stderr", "slope_minus_2se", "slope_plus_2se", "intercept", "r2", "points"});
  std::string tensors = csv_row({"eps", "order", "multi_index", "r", "c", "value", "se"});
  std::string probe = csv_row({"x", "weak_est", "weak_se", "strong_moment", "strong_se"});
  std::string oned = csv_row({"x", "increment_std"});
  std::vector<Series> rate_series, probe_series, oned_series;

  if (b.ensemble) {
    const auto& r = *b.ensemble;
    for (const auto& g : r.rungs) {
      const double mis = g.residual_mismatch.empty() ? 0.0 : *std::max_element(g.residual_mismatch.begin(), g.residual_mismatch.end());
      for (const auto& o : g.orders)
        rates += csv_row({fmt(g.eps), fmt(g.N), fmt(g.samples), fmt(g.failures), fmt(o.n), fmt(g.e_strong_mean), fmt(g.e_strong_se),
                          fmt(o.e_mean), fmt(o.e_mean_se), fmt(o.e_mean_proj), fmt(o.e_mean_proj_se), fmt(o.e_flux), fmt(o.e_flux_se),
                          fmt(o.e_flux_proj), fmt(o.e_flux_proj_se), fmt(g.var_obs), fmt(g.var_obs_se), fmt(g.xi0_mean_norm),
                          fmt(g.xi0_se_norm), fmt(mis), fmt(g.cg_iterations_max)});
      for (std::size_t k = 0; k < g.tensors.size(); ++k) {
        const ConstTensor& t = g.tensors[k];
        const int d = t.dim();
        for (std::size_t q = 0; q < t.size(); ++q) {
          const MultiIndex m = decode(q, t.order(), d);
          const MultiIndex lead{std::vector<int>(m.idx.begin(), m.idx.end() - 2)};
          const double se = k < g.tensors_se.size() ? g.tensors_se[k][q] : 0.0;
          tensors += csv_row({fmt(g.eps), fmt(static_cast<int>(k + 1)), "\"" + to_string(lead) + "\"", fmt(m.idx[m.idx.size() - 2] + 1),
                              fmt(m.idx.back() + 1), fmt(t[q]), fmt(se)});
        }
      }
    }
    for (const auto& [k, f] : r.fits)
      fits += csv_row({k, fmt(f.slope), fmt(f.stderr_slope), fmt(f.slope - 2 * f.stderr_slope), fmt(f.slope + 2 * f.stderr_slope),
                       fmt(f.intercept), fmt(f.r2), fmt(f.points)});
    auto add = [&](const std::string& name, const std::string& fit_key, auto value) {
      Series s{name, {}, std::nullopt};
      for (const auto& g : r.rungs) s.pts.emplace_back(g.eps, value(g));
      if (auto it = r.fits.find(fit_key); it != r.fits.end()) s.fit = it->second;
      rate_series.push_back(std::move(s));
    };
    add("e_strong", "e_strong", [](const RungReport& g) { return g.e_strong_mean; });
    for (int n = 1; n <= r.config.order; ++n) {
      const std::string s = std::to_string(n);
      auto get = [n](const RungReport& g) { return static_cast<int>(g.orders.size()) >= n ? g.orders[n - 1].e_mean_proj : 0.0; };
      add("e_mean_proj n=" + s, "e_mean_proj_n" + s, get);
    }
    add("var_obs", "var_obs", [](const RungReport& g) { return g.var_obs; });
  }
  if (b.probe) {
    Series w{"|weak|", {}, b.probe->weak_fit}, s{"strong", {}, b.probe->strong_fit};
    for (const auto& row : b.probe->rows) {
      probe += csv_row({fmt(row.r), fmt(row.weak), fmt(row.weak_se), fmt(row.strong), fmt(row.strong_se)});
      w.pts.emplace_back(row.r, std::abs(row.weak));
      s.pts.emplace_back(row.r, row.strong);
    }
    fits += csv_row({"probe_weak", fmt(b.probe->weak_fit.slope), fmt(b.probe->weak_fit.stderr_slope),
                     fmt(b.probe->weak_fit.slope - 2 * b.probe->weak_fit.stderr_slope),
                     fmt(b.probe->weak_fit.slope + 2 * b.probe->weak_fit.stderr_slope), fmt(b.probe->weak_fit.intercept),
                     fmt(b.probe->weak_fit.r2), fmt(b.probe->weak_fit.points)});
    fits += csv_row({"probe_strong", fmt(b.probe->strong_fit.slope), fmt(b.probe->strong_fit.stderr_slope),
                     fmt(b.probe->strong_fit.slope - 2 * b.probe->strong_fit.stderr_slope),
                     fmt(b.probe->strong_fit.slope + 2 * b.probe->strong_fit.stderr_slope), fmt(b.probe->strong_fit.intercept),
                     fmt(b.probe->strong_fit.r2), fmt(b.probe->strong_fit.points)});
    probe_series = {w, s};
  }
  if (b.oned) {
    Series s{"std(phi(y+x) - phi(y))", {}, b.oned->growth_fit};
    for (const auto& [x, v] : b.oned->growth) {
      oned += csv_row({fmt(x), fmt(v)});
      s.pts.emplace_back(x, v);
    }
    const auto& f = b.oned->growth_fit;
    fits += csv_row({"oned_growth", fmt(f.slope), fmt(f.stderr_slope), fmt(f.slope - 2 * f.stderr_slope), fmt(f.slope + 2 * f.stderr_slope),
                     fmt(f.intercept), fmt(f.r2), fmt(f.points)});
    oned_series = {s};
  }

  write_file(dir / "csv" / "rates.csv", rates);
  write_file(dir / "csv" / "fits.csv", fits);
  write_file(dir / "csv" / "tensors.csv", tensors);
  write_file(dir / "csv" / "probe.csv", probe);
  write_file(dir / "csv" / "oned.csv", oned);
  write_file(dir / "plots" / "rates.svg", svg_loglog("Errors and fluctuations vs eps", "eps", rate_series));
  write_file(dir / "plots" / "probe.svg", svg_loglog("Corrector probe along the ray", "distance / rho", probe_series));
  write_file(dir / "plots" / "oned.svg", svg_loglog("1D corrector increments", "x / rho", oned_series));
}

ReportBundle read_report(const std::filesystem::path& dir) {
  std::ifstream in(dir / "summary.json");
  if (!in) throw Error(Errc::Io, "cannot open " + (dir / "summary.json").string());
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw Error(Errc::Io, (dir / "summary.json").string() + ": malformed JSON");
  return bundle_from_json(j);
}

}  // namespace shl
