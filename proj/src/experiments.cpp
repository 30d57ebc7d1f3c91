#include "shl/experiments.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <numbers>
#include <optional>
#include <set>

#include "shl/error.hpp"
#include "shl/parallel.hpp"
#include "shl/spectral.hpp"

namespace shl {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double bump(double t) { return std::abs(t) < 1.0 ? std::exp(-1.0 / (1.0 - t * t)) : 0.0; }

double min_image(double x, double L) { return x - L * std::round(x / L); }

}  // namespace

Field make_source(const SourceSpec& spec, const TorusGrid& macro) {
  const int d = macro.d;
  Field f(macro, Rank::vector(d));
  const std::size_t n = macro.points();
  if (spec.kind == "trig") {
    const double k = kTwoPi * spec.frequency / macro.L;
    auto dst = f.component(0);
    for (std::size_t s = 0; s < n; ++s) {
      const auto c = macro.coords(s);
      double v = spec.amplitude * std::sin(k * c[0] * macro.h);
      for (int a = 1; a < d; ++a) v *= std::cos(k * c[a] * macro.h);
      dst[s] = v;
    }
  } else if (spec.kind == "bump") {
    if (spec.component < 0 || spec.component >= d) throw Error(Errc::OutOfRange, "bump component out of range");
    if (!(spec.width > 0.0) || spec.width > macro.L / 2) throw Error(Errc::OutOfRange, "bump width must lie in (0, L/2]");
    std::vector<double> center = spec.center;
    if (center.empty()) center.assign(static_cast<std::size_t>(d), macro.L / 2);
    if (center.size() != static_cast<std::size_t>(d)) throw Error(Errc::RankMismatch, "bump center needs d coordinates");
    auto dst = f.component(static_cast<std::size_t>(spec.component));
    for (std::size_t s = 0; s < n; ++s) {
      const auto c = macro.coords(s);
      double r2 = 0.0;
      for (int a = 0; a < d; ++a) {
        const double dx = min_image(c[a] * macro.h - center[a], macro.L);
        r2 += dx * dx;
      }
      dst[s] = spec.amplitude * bump(std::sqrt(r2) / spec.width);
    }
  } else {
    throw Error(Errc::Config, "unknown source kind '" + spec.kind + "'");
  }
  return f;
}

int resolution_for(double L, double rho, double cells_per_rho, int min_N) {
  const double want = std::max<double>(min_N, std::ceil(cells_per_rho * L / rho - 1e-9));
  return static_cast<int>(std::bit_ceil(static_cast<unsigned>(want)));
}

namespace {

std::pair<CoefficientField, Field> sample_with(const FieldSpec& spec, const TorusGrid& grid, const PeriodicKernel* kernel,
                                               const Stream& stream, double sign) {
  if (spec.constant > 0.0) return {constant_coefficient(grid, spec.constant, spec.lambda), Field()};
  WhiteNoise w = sample_white_noise(grid, spec.kernel.kappa, stream);
  if (sign < 0.0) w.data *= -1.0;
  Field G = kernel ? sample_gaussian_field(*kernel, w) : sample_gaussian_field(periodize_kernel(spec.kernel, grid), w);
  CoefficientField a = coefficient_from_gaussian(G, spec.lambda, spec.map);
  return {std::move(a), std::move(G)};
}

}  // namespace

CoefficientField sample_coefficient(const FieldSpec& spec, const TorusGrid& grid, const Stream& stream) {
  return sample_with(spec, grid, nullptr, stream, 1.0).first;
}

std::pair<CoefficientField, Field> sample_coefficient_with_field(const FieldSpec& spec, const TorusGrid& grid,
                                                                 const Stream& stream) {
  return sample_with(spec, grid, nullptr, stream, 1.0);
}

// ---------------------------------------------------------------------------
// Commutators

namespace {

using Key = std::vector<int>;

Key sorted(Key k) {
  std::sort(k.begin(), k.end());
  return k;
}

}  // namespace

Commutators commutator_fields(const CoefficientField& a, const CorrectorHierarchy& h, const Field& u_grad,
                              const TensorList& tensors, const Spectrum& w_potential, double eps, int n) {
  const TorusGrid& macro = u_grad.grid();
  const int d = macro.d;
  const std::size_t np = macro.points();
  if (n < 1 || n > h.order() || static_cast<int>(tensors.size()) < n)
    throw Error(Errc::InsufficientOrder, "commutator order exceeds the available correctors");

  Commutators out;
  // Xi^n = a grad u - Abar^n grad u.
  out.xi = Field(macro, Rank::vector(d));
  for (int r = 0; r < d; ++r) {
    auto dst = out.xi.component(static_cast<std::size_t>(r));
    for (int c = 0; c < d; ++c) {
      const auto ac = a.a.component(static_cast<std::size_t>(r * d + c));
      const auto g = u_grad.component(static_cast<std::size_t>(c));
      for (std::size_t x = 0; x < np; ++x) dst[x] += ac[x] * g[x];
    }
  }
  out.xi -= apply_effective_operator(tensors, u_grad, eps, n);

  // Standard commutator: grad F^n[T^n_x w](x) and Abar^n applied to F^n[T^n_x w] at x.
  Spectral macro_sp(macro);
  Spectral micro_sp(h.grid);
  std::map<Key, std::vector<double>> wd;  // d^alpha w on the macro lattice
  auto wder = [&](const Key& k) -> const std::vector<double>& {
    const Key s = sorted(k);
    auto it = wd.find(s);
    if (it != wd.end()) return it->second;
    Spectrum tmp = w_potential;
    apply_derivative(macro_sp, MultiIndex{s}, tmp);
    return wd.emplace(s, macro_sp.inverse(tmp)).first->second;
  };
  std::map<std::pair<std::size_t, Key>, std::vector<double>> pd;  // d^A phi^j_I (micro units)
  auto phider = [&](int j, std::size_t I, const Key& A) -> const std::vector<double>& {
    const Key s = sorted(A);
    const std::size_t tag = (static_cast<std::size_t>(j) << 32) | I;
    auto key = std::make_pair(tag, s);
    auto it = pd.find(key);
    if (it != pd.end()) return it->second;
    const auto phi = h.at(j).phi.component(I);
    Spectrum tmp = micro_sp.forward(phi);
    apply_derivative(micro_sp, MultiIndex{s}, tmp);
    return pd.emplace(key, micro_sp.inverse(tmp)).first->second;
  };

  // grad V(x) with V = F^n[T^n_x w].
  Field gradV(macro, Rank::vector(d));
  for (int r = 0; r < d; ++r) {
    auto dst = gradV.component(static_cast<std::size_t>(r));
    const auto& w1 = wder({r});
    for (std::size_t x = 0; x < np; ++x) dst[x] = w1[x];
  }
  for (int j = 1; j <= n; ++j) {
    const CorrectorOrder& o = h.at(j);
    const std::size_t nI = ipow(static_cast<std::size_t>(d), j);
    for (std::size_t I = 0; I < nI; ++I) {
      const Key idx = decode(I, j, d).idx;
      const auto& wI = wder(idx);
      const auto phi = o.phi.component(I);
      for (int r = 0; r < d; ++r) {
        auto dst = gradV.component(static_cast<std::size_t>(r));
        const auto gphi = o.grad_phi.component(I * static_cast<std::size_t>(d) + static_cast<std::size_t>(r));
        const double wg = std::pow(eps, j - 1);
        for (std::size_t x = 0; x < np; ++x) dst[x] += wg * gphi[x] * wI[x];
        if (j + 1 <= n) {
          Key k2 = idx;
          k2.push_back(r);
          const auto& wIr = wder(k2);
          const double wk = std::pow(eps, j);
          for (std::size_t x = 0; x < np; ++x) dst[x] += wk * phi[x] * wIr[x];
        }
      }
    }
  }

  out.xi0 = Field(macro, Rank::vector(d));
  for (int r = 0; r < d; ++r) {
    auto dst = out.xi0.component(static_cast<std::size_t>(r));
    for (int c = 0; c < d; ++c) {
      const auto ac = a.a.component(static_cast<std::size_t>(r * d + c));
      const auto g = gradV.component(static_cast<std::size_t>(c));
      for (std::size_t x = 0; x < np; ++x) dst[x] += ac[x] * g[x];
    }
  }
  // Abar^n grad V(x) = sum_k eps^{k-1} abar^k_{J;r,c} d_J d_c V(x), with the
  // product rule distributing d_K, K = (J, c), between phi^j(./eps) and d_I P.
  for (int k = 1; k <= n; ++k) {
    const ConstTensor& t = tensors[k - 1];
    const double wk = std::pow(eps, k - 1);
    const std::size_t nK = ipow(static_cast<std::size_t>(d), k);
    for (std::size_t Kf = 0; Kf < nK; ++Kf) {
      const Key K = decode(Kf, k, d).idx;  // (J..., c)
      const std::size_t Jf = Kf / static_cast<std::size_t>(d);
      const int c = K.back();
      std::vector<double> dKV(np, 0.0);
      // j = 0: d_K P(x) = d_K w(x) when k <= n.
      {
        const auto& wK = wder(K);
        for (std::size_t x = 0; x < np; ++x) dKV[x] += wK[x];
      }
      for (int j = 1; j <= n; ++j) {
        const std::size_t nI = ipow(static_cast<std::size_t>(d), j);
        for (std::size_t I = 0; I < nI; ++I) {
          const Key idx = decode(I, j, d).idx;
          for (unsigned mask = 0; mask < (1u << k); ++mask) {
            Key A, B = idx;
            for (int p = 0; p < k; ++p) {
              if (mask & (1u << p)) A.push_back(K[p]);
              else B.push_back(K[p]);
            }
            if (static_cast<int>(B.size()) > n) continue;  // Taylor polynomial of degree n
            const double w = std::pow(eps, j - static_cast<int>(A.size()));
            const auto& pA = phider(j, I, A);
            const auto& wB = wder(B);
            for (std::size_t x = 0; x < np; ++x) dKV[x] += w * pA[x] * wB[x];
          }
        }
      }
      for (int r = 0; r < d; ++r) {
        const double v = t[(Jf * static_cast<std::size_t>(d) + static_cast<std::size_t>(r)) * static_cast<std::size_t>(d) +
                           static_cast<std::size_t>(c)];
        if (v == 0.0) continue;
        auto dst = out.xi0.component(static_cast<std::size_t>(r));
        for (std::size_t x = 0; x < np; ++x) dst[x] -= wk * v * dKV[x];
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Ensembles

std::size_t samples_at(const EnsembleConfig& cfg, std::size_t rung) {
  return cfg.samples_per_rung.empty() ? cfg.samples : cfg.samples_per_rung.at(rung);
}

std::vector<PlannedRung> plan_ensemble(const EnsembleConfig& cfg) {
  std::vector<PlannedRung> out;
  const double iters = 10.0 / cfg.field.lambda;
  for (std::size_t ri = 0; ri < cfg.eps.size(); ++ri) {
    const double eps = cfg.eps[ri];
    const double L = 1.0 / eps;
    const int N = resolution_for(L, cfg.field.kernel.rho, cfg.cells_per_rho, cfg.min_N);
    double solves = 1.0;
    for (int k = 1; k <= cfg.order; ++k) solves += std::pow(cfg.d, k);
    const double pts = std::pow(static_cast<double>(N), cfg.d);
    // 2d transforms per CG iteration at ~5 N^d log2 N^d flops, ~1 Gflop/s.
    const double per_solve = iters * 2.0 * cfg.d * 5.0 * pts * std::log2(pts) * 1e-9;
    out.push_back({eps, N, L, solves, per_solve * solves * static_cast<double>(samples_at(cfg, ri))});
  }
  return out;
}

namespace {

struct SampleOut {
  bool ok = false;
  std::string error;
  Field grad, flux, xi0;
  double e_strong = 0, obs = 0, xi_obs = 0, mismatch = 0;
  TensorList tensors;
  std::vector<cplx> proj_grad, proj_flux;  // [component][mode]
  int iterations = 0;
};

double pairing(const Field& g, const Field& v) {
  double s = 0.0;
  const auto a = g.data();
  const auto b = v.data();
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s * g.grid().cell_volume();
}

// Field from a few Fourier coefficients per component.
Field from_modes(const Spectral& sp, const std::vector<std::size_t>& modes, const std::vector<cplx>& coef, int comps) {
  Field f(sp.grid(), Rank::vector(comps));
  Spectrum tmp(sp.size());
  for (int c = 0; c < comps; ++c) {
    std::fill(tmp.begin(), tmp.end(), cplx{});
    for (std::size_t m = 0; m < modes.size(); ++m) tmp[modes[m]] = coef[static_cast<std::size_t>(c) * modes.size() + m];
    sp.inverse(tmp, f.component(static_cast<std::size_t>(c)));
  }
  return f;
}

Field standard_error_field(const Welford& w, const TorusGrid& grid, int comps) {
  Field f(grid, Rank::vector(comps));
  const auto se = w.standard_error();
  std::copy(se.begin(), se.end(), f.data().begin());
  return f;
}

double variance_se(std::span<const double> v) {
  const double n = static_cast<double>(v.size());
  if (n < 4) return 0.0;
  const auto [mean, se] = mean_se(v);
  (void)se;
  double m2 = 0, m4 = 0;
  for (double x : v) {
    const double d2 = (x - mean) * (x - mean);
    m2 += d2;
    m4 += d2 * d2;
  }
  m2 /= n;
  m4 /= n;
  // Large-sample variance of the sample variance.
  return std::sqrt(std::max(m4 - m2 * m2 * (n - 3.0) / (n - 1.0), 0.0) / n);
}

}  // namespace

EnsembleReport run_ensemble(const EnsembleConfig& cfg, int threads) {
  if (!cfg.samples_per_rung.empty() && cfg.samples_per_rung.size() != cfg.eps.size())
    throw Error(Errc::Config, "samples_per_rung must list one count per eps");
  for (std::size_t ri = 0; ri < cfg.eps.size(); ++ri) {
    if (samples_at(cfg, ri) < 2) throw Error(Errc::Config, "ensemble needs at least 2 samples per rung");
    if (cfg.antithetic && samples_at(cfg, ri) % 2) throw Error(Errc::Config, "antithetic sampling needs even sample counts");
  }
  for (std::size_t i = 1; i < cfg.eps.size(); ++i)
    if (!(cfg.eps[i] < cfg.eps[i - 1])) throw Error(Errc::Config, "eps ladder must be strictly decreasing");
  threads = resolve_threads(threads);
  const int d = cfg.d;
  const int n = cfg.order;
  EnsembleReport report;
  report.config = cfg;
  const Stream root = root_stream(cfg.seed);

  for (std::size_t ri = 0; ri < cfg.eps.size(); ++ri) {
    const double eps = cfg.eps[ri];
    RungReport rung;
    rung.eps = eps;
    rung.L_micro = 1.0 / eps;
    rung.N = resolution_for(rung.L_micro, cfg.field.kernel.rho, cfg.cells_per_rho, cfg.min_N);
    const TorusGrid micro = make_grid(d, rung.L_micro, rung.N);
    const TorusGrid macro = macro_grid_for(micro, eps);
    const Field f = make_source(cfg.source, macro);
    const Field g = make_source(cfg.observable, macro);
    std::optional<PeriodicKernel> kernel;
    if (cfg.field.constant <= 0.0) kernel = periodize_kernel(cfg.field.kernel, micro);
    const Stream rung_stream = child(root, ri);
    const std::size_t M_target = samples_at(cfg, ri);
    spdlog::info("rung eps = {} (N = {}, L = {}): {} samples", eps, rung.N, rung.L_micro, M_target);

    Spectral sp(macro);
    std::vector<std::size_t> modes;
    {
      std::vector<Spectrum> fh;
      double peak = 0.0;
      for (int c = 0; c < d; ++c) {
        fh.push_back(sp.forward(f.component(static_cast<std::size_t>(c))));
        for (const auto& v : fh.back()) peak = std::max(peak, std::abs(v));
      }
      for (std::size_t s = 0; s < sp.size(); ++s) {
        bool on = false;
        for (int c = 0; c < d; ++c) on = on || std::abs(fh[c][s]) > 1e-12 * peak;
        if (on) modes.push_back(s);
      }
    }

    auto run_sample = [&](std::size_t i) {
      SampleOut out;
      try {
        const Stream st = child(rung_stream, cfg.antithetic ? i / 2 : i);
        const double sign = (cfg.antithetic && (i % 2)) ? -1.0 : 1.0;
        auto [a, G] = sample_with(cfg.field, micro, kernel ? &*kernel : nullptr, st, sign);
        (void)G;
        const CorrectorHierarchy h = compute_hierarchy(a, n, cfg.solver, 1);
        const CoefficientField am = regrid(a, macro);
        SolveResult u = solve_divform_variable(am, f, cfg.solver);
        if (!u.report.converged) throw Error(Errc::NonConvergence, "heterogeneous solve did not converge");
        out.iterations = u.report.iterations;
        for (const auto& o : h.orders) {
          out.tensors.push_back(o.abar);
          for (const auto& rep : o.reports) out.iterations = std::max(out.iterations, rep.iterations);
        }
        out.flux = Field(macro, Rank::vector(d));
        for (int r = 0; r < d; ++r) {
          auto dst = out.flux.component(static_cast<std::size_t>(r));
          for (int c = 0; c < d; ++c) {
            const auto ac = am.a.component(static_cast<std::size_t>(r * d + c));
            const auto gc = u.grad.component(static_cast<std::size_t>(c));
            for (std::size_t x = 0; x < dst.size(); ++x) dst[x] += ac[x] * gc[x];
          }
        }
        for (int c = 0; c < d; ++c) {
          const Spectrum gh = sp.forward(u.grad.component(static_cast<std::size_t>(c)));
          const Spectrum fh = sp.forward(out.flux.component(static_cast<std::size_t>(c)));
          for (std::size_t m : modes) {
            out.proj_grad.push_back(gh[m]);
            out.proj_flux.push_back(fh[m]);
          }
        }
        out.obs = pairing(g, u.grad);
        if (cfg.strong) {
          const TildeHierarchy tilde = solve_tilde_hierarchy(out.tensors, f, n);
          const HomogProxy P = assemble_proxy(tilde, eps, n);
          const TwoScaleExpansion ex = two_scale_expand(h, P.potential, macro, eps, n);
          out.e_strong = error_norm_strong(u.grad, ex.grad);
          out.mismatch = two_scale_residual(am, h, u.grad, ex, P, out.tensors).mismatch;
          Commutators cm = commutator_fields(am, h, u.grad, out.tensors, P.potential, eps, n);
          out.xi_obs = pairing(g, cm.xi);
          out.xi0 = std::move(cm.xi0);
        }
        out.grad = std::move(u.grad);
        out.ok = true;
      } catch (const Error& e) {
        if (e.code() != Errc::NonConvergence && e.code() != Errc::IndefiniteOperator) throw;
        out.error = e.what();
      }
      return out;
    };

    // Statistical units: single samples, or antithetic pairs averaged into one.
    const std::size_t unit = cfg.antithetic ? 2 : 1;
    Welford w_grad, w_flux, w_xi0;
    std::vector<TensorList> tensors;
    std::vector<std::vector<cplx>> pg, pf;
    std::vector<double> xi_obs;
    auto fold = [&](std::span<SampleOut> group) {
      for (const auto& o : group)
        if (!o.ok) {
          rung.failures += 1;
          spdlog::warn("sample failed: {}", o.error);
        }
      if (rung.failures >= static_cast<std::size_t>(cfg.max_failures)) rung.aborted = true;
      for (const auto& o : group)
        if (!o.ok) return;
      SampleOut& u = group[0];
      const double w = 1.0 / static_cast<double>(group.size());
      for (std::size_t j = 1; j < group.size(); ++j) {
        const SampleOut& o = group[j];
        u.grad += o.grad;
        u.flux += o.flux;
        if (cfg.strong) u.xi0 += o.xi0;
        for (int k = 0; k < n; ++k) u.tensors[k] += o.tensors[k];
        for (std::size_t q = 0; q < u.proj_grad.size(); ++q) {
          u.proj_grad[q] += o.proj_grad[q];
          u.proj_flux[q] += o.proj_flux[q];
        }
      }
      if (group.size() > 1) {
        u.grad *= w;
        u.flux *= w;
        if (cfg.strong) u.xi0 *= w;
        for (auto& t : u.tensors) t *= w;
        for (std::size_t q = 0; q < u.proj_grad.size(); ++q) {
          u.proj_grad[q] *= w;
          u.proj_flux[q] *= w;
        }
      }
      w_grad.add(u.grad.data());
      w_flux.add(u.flux.data());
      if (cfg.strong) w_xi0.add(u.xi0.data());
      tensors.push_back(std::move(u.tensors));
      pg.push_back(std::move(u.proj_grad));
      pf.push_back(std::move(u.proj_flux));
      for (const auto& o : group) {
        if (cfg.strong) {
          rung.e_strong.push_back(o.e_strong);
          rung.residual_mismatch.push_back(o.mismatch);
          xi_obs.push_back(o.xi_obs);
        }
        rung.observable.push_back(o.obs);
        rung.cg_iterations_max = std::max(rung.cg_iterations_max, o.iterations);
        rung.samples += 1;
      }
    };
    const std::size_t batch = static_cast<std::size_t>(std::max(threads, 1)) * 2;
    for (std::size_t start = 0; start < M_target && !rung.aborted; start += batch) {
      const std::size_t count = std::min(batch, M_target - start);
      std::vector<SampleOut> outs(count);
      parallel_for(count, threads, [&](std::size_t j) { outs[j] = run_sample(start + j); });
      for (std::size_t j = 0; j < count && !rung.aborted; j += unit) fold(std::span(outs).subspan(j, unit));
    }
    if (rung.aborted) spdlog::warn("rung eps = {} aborted after {} failures", eps, rung.failures);
    const std::size_t M = tensors.size();
    if (M < 2) {
      report.rungs.push_back(std::move(rung));
      continue;
    }

    // Ensemble tensors.
    for (int k = 1; k <= n; ++k) {
      Welford wt;
      for (const auto& t : tensors) wt.add(t[k - 1].values());
      ConstTensor mean(d, k + 1), se(d, k + 1);
      const auto sev = wt.standard_error();
      for (std::size_t q = 0; q < mean.size(); ++q) {
        mean[q] = wt.mean()[q];
        se[q] = sev[q];
      }
      rung.tensors.push_back(mean);
      rung.tensors_se.push_back(se);
    }

    rung.mean_grad = Field(macro, Rank::vector(d));
    std::copy(w_grad.mean().begin(), w_grad.mean().end(), rung.mean_grad.data().begin());
    Field mean_flux(macro, Rank::vector(d));
    std::copy(w_flux.mean().begin(), w_flux.mean().end(), mean_flux.data().begin());
    const Field se_grad = standard_error_field(w_grad, macro, d);
    const Field se_flux = standard_error_field(w_flux, macro, d);

    // Delete-a-group jackknife over contiguous groups of units.
    const std::size_t G = std::min<std::size_t>(M, 32);
    auto group_of = [&](std::size_t i) { return i * G / M; };
    auto mean_modes = [&](const std::vector<std::vector<cplx>>& v, std::size_t skip) {
      std::vector<cplx> m(v.front().size(), cplx{});
      double cnt = 0;
      for (std::size_t i = 0; i < v.size(); ++i) {
        if (group_of(i) == skip) continue;
        for (std::size_t q = 0; q < m.size(); ++q) m[q] += v[i][q];
        cnt += 1;
      }
      for (auto& x : m) x /= cnt;
      return m;
    };
    auto mean_tensors = [&](std::size_t skip) {
      TensorList out;
      for (int k = 1; k <= n; ++k) {
        ConstTensor t(d, k + 1);
        double cnt = 0;
        for (std::size_t i = 0; i < tensors.size(); ++i) {
          if (group_of(i) == skip) continue;
          t += tensors[i][k - 1];
          cnt += 1;
        }
        t *= 1.0 / cnt;
        out.push_back(t);
      }
      return out;
    };
    const std::size_t none = static_cast<std::size_t>(-1);

    for (int k = 1; k <= n; ++k) {
      OrderStats os;
      os.n = k;
      const HomogProxy P = assemble_proxy(solve_tilde_hierarchy(rung.tensors, f, k), eps, k);
      const Field target_flux = apply_effective_operator(rung.tensors, P.grad, eps, k);
      os.e_mean = error_norm_mean(rung.mean_grad, P.grad, eps, cfg.p);
      os.e_mean_se = lp_norm(local_quadratic_average(se_grad, eps), cfg.p);
      os.e_flux = error_norm_mean(mean_flux, target_flux, eps, cfg.p);
      os.e_flux_se = lp_norm(local_quadratic_average(se_flux, eps), cfg.p);

      auto proj_stat = [&](std::size_t skip) {
        const TensorList T = skip == none ? rung.tensors : mean_tensors(skip);
        const HomogProxy Pj = skip == none ? P : assemble_proxy(solve_tilde_hierarchy(T, f, k), eps, k);
        const Field mg = from_modes(sp, modes, mean_modes(pg, skip), d);
        const Field mf = from_modes(sp, modes, mean_modes(pf, skip), d);
        const Field tf = apply_effective_operator(T, Pj.grad, eps, k);
        return std::make_pair(error_norm_mean(mg, Pj.grad, eps, cfg.p), error_norm_mean(mf, tf, eps, cfg.p));
      };
      const auto full = proj_stat(none);
      os.e_mean_proj = full.first;
      os.e_flux_proj = full.second;
      std::vector<std::pair<double, double>> jk(G);
      parallel_for(G, threads, [&](std::size_t i) { jk[i] = proj_stat(i); });
      double mg = 0, mf = 0;
      for (const auto& [a, b] : jk) {
        mg += a;
        mf += b;
      }
      mg /= static_cast<double>(G);
      mf /= static_cast<double>(G);
      double sg = 0, sf = 0;
      for (const auto& [a, b] : jk) {
        sg += (a - mg) * (a - mg);
        sf += (b - mf) * (b - mf);
      }
      const double fac = static_cast<double>(G - 1) / static_cast<double>(G);
      os.e_mean_proj_se = std::sqrt(fac * sg);
      os.e_flux_proj_se = std::sqrt(fac * sf);
      rung.orders.push_back(os);
    }

    if (!xi_obs.empty()) std::tie(rung.xi_obs_mean, rung.xi_obs_se) = mean_se(xi_obs);
    if (!rung.e_strong.empty()) std::tie(rung.e_strong_mean, rung.e_strong_se) = mean_se(rung.e_strong);
    {
      Welford wo;
      for (double x : rung.observable) wo.add(x);
      rung.var_obs = wo.variance0();
      rung.var_obs_se = variance_se(rung.observable);
    }
    if (cfg.strong && w_xi0.count() > 1) {
      Field m(macro, Rank::vector(d));
      std::copy(w_xi0.mean().begin(), w_xi0.mean().end(), m.data().begin());
      rung.xi0_mean_norm = lp_norm(m, 2.0);
      rung.xi0_se_norm = lp_norm(standard_error_field(w_xi0, macro, d), 2.0);
    }
    report.rungs.push_back(std::move(rung));
  }
  fit_report(report);
  return report;
}

void fit_report(EnsembleReport& report) {
  report.fits.clear();
  auto fit = [&](const std::string& name, auto value) {
    std::vector<std::pair<double, double>> pts;
    for (const auto& r : report.rungs) {
      const double v = value(r);
      if (r.samples >= 2 && v > 0.0 && std::isfinite(v)) pts.emplace_back(r.eps, v);
    }
    if (pts.size() >= 3) report.fits[name] = fit_rate(pts);
  };
  fit("e_strong", [](const RungReport& r) { return r.e_strong_mean; });
  fit("var_obs", [](const RungReport& r) { return r.var_obs; });
  for (int k = 1; k <= report.config.order; ++k) {
    auto get = [k](const RungReport& r) -> const OrderStats* {
      return static_cast<int>(r.orders.size()) >= k ? &r.orders[k - 1] : nullptr;
    };
    const std::string s = std::to_string(k);
    fit("e_mean_n" + s, [&](const RungReport& r) { auto o = get(r); return o ? o->e_mean : 0.0; });
    fit("e_mean_proj_n" + s, [&](const RungReport& r) { auto o = get(r); return o ? o->e_mean_proj : 0.0; });
    fit("e_flux_n" + s, [&](const RungReport& r) { auto o = get(r); return o ? o->e_flux : 0.0; });
    fit("e_flux_proj_n" + s, [&](const RungReport& r) { auto o = get(r); return o ? o->e_flux_proj : 0.0; });
  }
}

// ---------------------------------------------------------------------------
// Probes

namespace {

// Normalized lattice ball indicator's spectrum for circular averaging.
Spectrum ball_spectrum(const Spectral& sp, double radius) {
  const TorusGrid& g = sp.grid();
  std::vector<double> ball(g.points(), 0.0);
  double count = 0;
  const double r2 = radius * radius * (1.0 + 1e-12);
  for (std::size_t s = 0; s < g.points(); ++s) {
    const auto c = g.coords(s);
    double d2 = 0;
    for (int a = 0; a < g.d; ++a) {
      const int m = std::min(c[a], g.N - c[a]);
      d2 += (m * g.h) * (m * g.h);
    }
    if (d2 <= r2) {
      ball[s] = 1.0;
      count += 1;
    }
  }
  for (double& v : ball) v /= count;
  return sp.forward(ball);
}

std::vector<double> ball_average(const Spectral& sp, const Spectrum& ball, std::span<const double> v) {
  Spectrum x = sp.forward(v);
  for (std::size_t s = 0; s < x.size(); ++s) x[s] *= ball[s];
  return sp.inverse(x);
}

}  // namespace

ProbeReport weak_pairing_probe(const ProbeConfig& cfg, int threads) {
  threads = resolve_threads(threads);
  const double rho = cfg.field.kernel.rho;
  const double L = cfg.L_over_rho * rho;
  const int N = resolution_for(L, rho, cfg.cells_per_rho, 16);
  const TorusGrid grid = make_grid(cfg.d, L, N);
  if (cfg.target_order < 1) throw Error(Errc::OutOfRange, "probe target order must be at least 1");
  if (cfg.channel.size() > static_cast<std::size_t>(cfg.field.kernel.kappa))
    throw Error(Errc::RankMismatch, "probe channel vector longer than kappa");

  // Default ray starts at 4 rho: at 2 rho the point is still inside the
  // coefficient correlation range of the probe ball.
  std::vector<double> ray = cfg.ray;
  if (ray.empty())
    for (double r = 4; r <= cfg.L_over_rho / 4 + 1e-9; r *= 2) ray.push_back(r);
  std::vector<int> steps;
  for (double r : ray) {
    if (r * rho > L / 2 + 1e-12) throw Error(Errc::OutOfRange, "probe ray leaves the half period");
    steps.push_back(static_cast<int>(std::lround(r * rho / grid.h)));
  }

  ProbeReport rep;
  rep.config = cfg;
  rep.config.ray = ray;
  rep.N = N;
  const PeriodicKernel kernel = periodize_kernel(cfg.field.kernel, grid);
  Spectral sp(grid);
  const Spectrum probe_ball = ball_spectrum(sp, cfg.radius * rho);
  const Spectrum anchor_ball = ball_spectrum(sp, cfg.anchor_radius * rho);
  const Stream root = root_stream(cfg.seed);
  const MultiIndex path{std::vector<int>(static_cast<std::size_t>(cfg.target_order), 0)};
  const std::size_t np = grid.points();
  const std::size_t R = steps.size();

  struct Out {
    std::vector<double> weak, strong;
  };
  auto run = [&](std::size_t i) {
    auto [a, G] = sample_with(cfg.field, grid, &kernel, child(root, i), 1.0);
    const auto links = compute_corrector_chain(a, path, cfg.solver);
    const auto phi = links.back().phi.component(0);
    std::vector<double> X(np, 1.0);
    if (!cfg.constant_probe) {
      std::vector<double> gv(np, 0.0);
      for (std::size_t c = 0; c < cfg.channel.size(); ++c) {
        const auto gc = G.component(c);
        for (std::size_t x = 0; x < np; ++x) gv[x] += cfg.channel[c] * gc[x];
      }
      X = ball_average(sp, probe_ball, gv);
      for (double& v : X) v = std::tanh(v);
    }
    const std::vector<double> anchor = ball_average(sp, anchor_ball, phi);
    Out o{std::vector<double>(R, 0.0), std::vector<double>(R, 0.0)};
    for (std::size_t k = 0; k < R; ++k) {
      double w = 0, s = 0;
      for (std::size_t y = 0; y < np; ++y) {
        auto c = grid.coords(y);
        c[0] += steps[k];
        const double t = phi[grid.site(c)] - anchor[y];
        w += X[y] * t;
        s += t * t;
      }
      o.weak[k] = w / static_cast<double>(np);
      o.strong[k] = s / static_cast<double>(np);
    }
    return o;
  };

  Welford ww(R), ws(R);
  const std::size_t batch = static_cast<std::size_t>(threads) * 2;
  for (std::size_t start = 0; start < cfg.samples; start += batch) {
    const std::size_t count = std::min(batch, cfg.samples - start);
    std::vector<Out> outs(count);
    parallel_for(count, threads, [&](std::size_t j) { outs[j] = run(start + j); });
    for (const auto& o : outs) {
      ww.add(o.weak);
      ws.add(o.strong);
    }
  }
  rep.samples = ww.count();
  const auto wse = ww.standard_error();
  const auto sse = ws.standard_error();
  std::vector<std::pair<double, double>> wp, spairs;
  for (std::size_t k = 0; k < R; ++k) {
    ProbeRow row;
    row.r = ray[k];
    row.weak = ww.mean()[k];
    row.weak_se = wse[k];
    row.strong = std::sqrt(std::max(ws.mean()[k], 0.0));
    row.strong_se = row.strong > 0 ? sse[k] / (2.0 * row.strong) : 0.0;
    rep.rows.push_back(row);
    if (std::abs(row.weak) > 0) wp.emplace_back(row.r, std::abs(row.weak));
    if (row.strong > 0) spairs.emplace_back(row.r, row.strong);
  }
  if (wp.size() >= 3) rep.weak_fit = fit_rate(wp);
  if (spairs.size() >= 3) rep.strong_fit = fit_rate(spairs);
  return rep;
}

// ---------------------------------------------------------------------------
// 1D

std::vector<double> explicit_1d_corrector(const CoefficientField& a) {
  const TorusGrid& g = a.a.grid();
  if (g.d != 1) throw Error(Errc::InvalidArgument, "explicit corrector is one-dimensional");
  const auto av = a.a.component(0);
  std::vector<double> inv(av.size());
  for (std::size_t x = 0; x < av.size(); ++x) inv[x] = 1.0 / av[x];
  const double m = lattice_mean(inv);
  for (double& v : inv) v = (v - m) / m;
  Spectral sp(g);
  Spectrum s = sp.forward(inv);
  for (std::size_t k = 0; k < s.size(); ++k) {
    const double kk = sp.k(0, k);
    s[k] = kk != 0.0 ? s[k] / cplx{0.0, kk} : cplx{};
  }
  return sp.inverse(s);
}

OneDReport one_d_exact_suite(const OneDConfig& cfg, int threads) {
  threads = resolve_threads(threads);
  const double rho = cfg.field.kernel.rho;
  const double L = cfg.L_over_rho * rho;
  const int N = resolution_for(L, rho, cfg.cells_per_rho, 16);
  const TorusGrid grid = make_grid(1, L, N);
  OneDReport rep;
  rep.config = cfg;
  rep.N = N;
  const PeriodicKernel kernel = periodize_kernel(cfg.field.kernel, grid);
  const Stream root = root_stream(cfg.seed);
  std::vector<int> steps;
  for (double x : cfg.growth_x) {
    if (x * rho > L / 2 + 1e-12) throw Error(Errc::OutOfRange, "growth point beyond the half period");
    steps.push_back(static_cast<int>(std::lround(x * rho / grid.h)));
  }
  struct Out {
    double phi_err = 0, abar_err = 0;
    std::vector<double> incr;
  };
  auto run = [&](std::size_t i) {
    const CoefficientField a = sample_with(cfg.field, grid, &kernel, child(root, i), 1.0).first;
    const CorrectorOrder o = compute_corrector_order(a, nullptr, 1, cfg.solver);
    const std::vector<double> ex = explicit_1d_corrector(a);
    const auto phi = o.phi.component(0);
    const double shift = lattice_mean(phi) - lattice_mean(ex);
    Out out;
    for (std::size_t x = 0; x < phi.size(); ++x) out.phi_err = std::max(out.phi_err, std::abs(phi[x] - ex[x] - shift));
    double inv = 0;
    for (double v : a.a.component(0)) inv += 1.0 / v;
    const double harmonic = static_cast<double>(phi.size()) / inv;
    out.abar_err = std::abs(o.abar[0] - harmonic) / harmonic;
    for (int s : steps) {
      double acc = 0;
      for (std::size_t y = 0; y < phi.size(); ++y) {
        const double dphi = phi[(y + static_cast<std::size_t>(s)) % phi.size()] - phi[y];
        acc += dphi * dphi;
      }
      out.incr.push_back(acc / static_cast<double>(phi.size()));
    }
    return out;
  };
  Welford wi(steps.size());
  const std::size_t batch = static_cast<std::size_t>(threads) * 2;
  for (std::size_t start = 0; start < cfg.samples; start += batch) {
    const std::size_t count = std::min(batch, cfg.samples - start);
    std::vector<Out> outs(count);
    parallel_for(count, threads, [&](std::size_t j) { outs[j] = run(start + j); });
    for (const auto& o : outs) {
      rep.max_phi_error = std::max(rep.max_phi_error, o.phi_err);
      rep.max_abar_rel_error = std::max(rep.max_abar_rel_error, o.abar_err);
      wi.add(o.incr);
    }
  }
  rep.samples = wi.count();
  for (std::size_t k = 0; k < steps.size(); ++k) rep.growth.emplace_back(cfg.growth_x[k], std::sqrt(wi.mean()[k]));
  if (rep.growth.size() >= 3) rep.growth_fit = fit_rate(rep.growth);
  return rep;
}

}  // namespace shl
