#include "shl/correctors.hpp"

#include <cmath>
#include <numeric>

#include "shl/error.hpp"
#include "shl/parallel.hpp"
#include "shl/spectral.hpp"

namespace shl {

int resolve_threads(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("SHL_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

namespace {

int pairs(int d) { return d * (d - 1) / 2; }

// Right side s_r = a_{r,c} phi - sigma_{r,c} of the order-n equation for one
// multi-index; phi and sigma are the order n-1 data (null for n = 1).
Field corrector_source(const CoefficientField& cf, std::span<const double> phi_prev, const Field* sigma_prev,
                       std::size_t sigma_offset, int c) {
  const TorusGrid& g = cf.a.grid();
  const int d = g.d;
  Field s(g, Rank::vector(d));
  const std::size_t n = g.points();
  for (int r = 0; r < d; ++r) {
    const auto a = cf.a.component(static_cast<std::size_t>(r * d + c));
    auto dst = s.component(static_cast<std::size_t>(r));
    if (phi_prev.empty()) {
      std::copy(a.begin(), a.end(), dst.begin());
    } else {
      for (std::size_t x = 0; x < n; ++x) dst[x] = a[x] * phi_prev[x];
    }
    if (sigma_prev && r != c)
      for (std::size_t x = 0; x < n; ++x) dst[x] -= skew_entry(*sigma_prev, sigma_offset, r, c, x);
  }
  return s;
}

// flux = a grad phi + s, in place into `flux`.
void add_flux(const CoefficientField& cf, const Field& grad, Field& flux) {
  const int d = cf.a.grid().d;
  const std::size_t n = cf.a.points();
  for (int r = 0; r < d; ++r) {
    auto dst = flux.component(static_cast<std::size_t>(r));
    for (int c = 0; c < d; ++c) {
      const auto a = cf.a.component(static_cast<std::size_t>(r * d + c));
      const auto g = grad.component(static_cast<std::size_t>(c));
      for (std::size_t x = 0; x < n; ++x) dst[x] += a[x] * g[x];
    }
  }
}

struct Solved {
  SolveResult res;
  Field q;
  std::vector<double> column;
  Field sigma;
};

Solved solve_one(const CoefficientField& cf, std::span<const double> phi_prev, const Field* sigma_prev,
                 std::size_t sigma_offset, int c, const SolveOptions& opts, const MultiIndex& label) {
  Field flux = corrector_source(cf, phi_prev, sigma_prev, sigma_offset, c);
  SolveResult res = solve_divform_variable(cf, flux, opts);
  if (!res.report.converged)
    throw Error(Errc::NonConvergence, "corrector " + to_string(label) + ": residual " +
                                          std::to_string(res.report.final_residual) + " after " +
                                          std::to_string(res.report.iterations) + " iterations");
  add_flux(cf, res.grad, flux);
  const int d = cf.a.grid().d;
  std::vector<double> column(static_cast<std::size_t>(d));
  for (int r = 0; r < d; ++r) {
    auto comp = flux.component(static_cast<std::size_t>(r));
    column[r] = lattice_mean(comp);
    for (double& v : comp) v -= column[r];
  }
  FluxCorrector fc = solve_flux_corrector(flux);
  return Solved{std::move(res), std::move(flux), std::move(column), std::move(fc.sigma)};
}

void copy_into(const Field& src, Field& dst, std::size_t offset) {
  for (std::size_t c = 0; c < src.components(); ++c) {
    auto s = src.component(c);
    auto t = dst.component(offset + c);
    std::copy(s.begin(), s.end(), t.begin());
  }
}

}  // namespace

CorrectorOrder compute_corrector_order(const CoefficientField& cf, const CorrectorOrder* prev, int n,
                                       const SolveOptions& opts, int threads) {
  const TorusGrid& g = cf.a.grid();
  const int d = g.d;
  if (n < 1) throw Error(Errc::OutOfRange, "corrector order must be at least 1");
  if (n > 1 && (!prev || prev->n != n - 1)) throw Error(Errc::InsufficientOrder, "order n - 1 data required");

  const std::size_t count = ipow(static_cast<std::size_t>(d), n);
  CorrectorOrder out;
  out.n = n;
  out.phi = Field(g, Rank::family(n, d));
  out.grad_phi = Field(g, Rank::family(n, d, {d}));
  out.sigma = Field(g, Rank::family(n, d, {pairs(d)}));
  out.q = Field(g, Rank::family(n, d, {d}));
  out.abar = ConstTensor(d, n + 1);
  out.reports.resize(count);

  parallel_for(count, threads, [&](std::size_t flat) {
    const MultiIndex label = decode(flat, n, d);
    const std::size_t parent = flat / static_cast<std::size_t>(d);
    const int c = static_cast<int>(flat % static_cast<std::size_t>(d));
    std::span<const double> phi_prev;
    const Field* sigma_prev = nullptr;
    if (prev) {
      phi_prev = prev->phi.component(parent);
      sigma_prev = &prev->sigma;
    }
    Solved s = solve_one(cf, phi_prev, sigma_prev, parent * static_cast<std::size_t>(pairs(d)), c, opts, label);
    std::copy(s.res.u.data().begin(), s.res.u.data().end(), out.phi.component(flat).begin());
    copy_into(s.res.grad, out.grad_phi, flat * static_cast<std::size_t>(d));
    copy_into(s.q, out.q, flat * static_cast<std::size_t>(d));
    copy_into(s.sigma, out.sigma, flat * static_cast<std::size_t>(pairs(d)));
    for (int r = 0; r < d; ++r)
      out.abar[parent * static_cast<std::size_t>(d * d) + static_cast<std::size_t>(r * d + c)] = s.column[r];
    out.reports[flat] = std::move(s.res.report);
  });
  return out;
}

CorrectorHierarchy compute_hierarchy(const CoefficientField& a, int n_max, const SolveOptions& opts, int threads) {
  if (n_max < 1) throw Error(Errc::OutOfRange, "hierarchy order must be at least 1");
  CorrectorHierarchy h{a.a.grid(), {}};
  h.orders.reserve(static_cast<std::size_t>(n_max));
  for (int n = 1; n <= n_max; ++n)
    h.orders.push_back(compute_corrector_order(a, n == 1 ? nullptr : &h.orders.back(), n, opts, threads));
  return h;
}

std::vector<ChainLink> compute_corrector_chain(const CoefficientField& cf, const MultiIndex& path,
                                               const SolveOptions& opts) {
  const int d = cf.a.grid().d;
  std::vector<ChainLink> links;
  MultiIndex label;
  for (int k = 0; k < path.order(); ++k) {
    const int c = path.idx[k];
    label.idx.push_back(c);
    std::span<const double> phi_prev;
    const Field* sigma_prev = nullptr;
    if (k > 0) {
      phi_prev = links.back().phi.component(0);
      sigma_prev = &links.back().sigma;
    }
    Solved s = solve_one(cf, phi_prev, sigma_prev, 0, c, opts, label);
    (void)d;
    links.push_back(ChainLink{std::move(s.res.u), std::move(s.res.grad), std::move(s.sigma), std::move(s.q),
                              std::move(s.column), std::move(s.res.report)});
  }
  return links;
}

ConstTensor effective_tensor_symmetrized(const CorrectorHierarchy& h, const CoefficientField& cf, int n) {
  if (n < 1 || n % 2 == 0) throw Error(Errc::InvalidArgument, "the quadratic formula needs odd n");
  const int m = (n - 1) / 2;
  if (m + 1 > h.order()) throw Error(Errc::InsufficientOrder, "hierarchy order " + std::to_string(h.order()) +
                                                                   " is below " + std::to_string(m + 1));
  const TorusGrid& g = h.grid;
  const int d = g.d;
  const std::size_t np = g.points();
  const CorrectorOrder& top = h.at(m + 1);
  const CorrectorOrder* low = m >= 1 ? &h.at(m) : nullptr;

  ConstTensor out(d, n + 1);
  for (std::size_t flat = 0; flat < out.size(); ++flat) {
    // Layout (i_1, ..., i_{n-1}, j, i_n).
    const MultiIndex full = decode(flat, n + 1, d);
    std::vector<int> i(full.idx.begin(), full.idx.begin() + (n - 1));
    const int j = full.idx[n - 1];
    i.push_back(full.idx[n]);  // i[0..n-1] = i_1..i_n
    MultiIndex Lj{{j}};
    for (int t = n; t >= m + 2; --t) Lj.idx.push_back(i[t - 1]);
    MultiIndex R{std::vector<int>(i.begin(), i.begin() + (m + 1))};

    const std::size_t lg = encode(Lj, d) * static_cast<std::size_t>(d);
    const std::size_t rg = encode(R, d) * static_cast<std::size_t>(d);
    double acc = 0.0;
    for (std::size_t x = 0; x < np; ++x) {
      double v = 0.0;
      for (int r = 0; r < d; ++r)
        for (int c = 0; c < d; ++c)
          v += top.grad_phi.at(lg + static_cast<std::size_t>(r), x) * cf.a.at(static_cast<std::size_t>(r * d + c), x) *
               top.grad_phi.at(rg + static_cast<std::size_t>(c), x);
      const int er = Lj.idx[m];
      const int ec = R.idx[m];
      double pl = 1.0, pr = 1.0;
      if (low) {
        pl = low->phi.at(encode(MultiIndex{std::vector<int>(Lj.idx.begin(), Lj.idx.begin() + m)}, d), x);
        pr = low->phi.at(encode(MultiIndex{std::vector<int>(R.idx.begin(), R.idx.begin() + m)}, d), x);
      }
      v -= pl * cf.a.at(static_cast<std::size_t>(er * d + ec), x) * pr;
      acc += v;
    }
    out[flat] = (m % 2 == 0 ? -1.0 : 1.0) * acc / static_cast<double>(np);
  }
  return out;
}

ConstTensor symmetrized_action(const ConstTensor& abar) { return symmetrize_multiindex(abar); }

namespace {

double rms(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s / static_cast<double>(v.size()));
}

double anchor_ratio(std::span<const double> v) {
  const double mean = lattice_mean(v);
  const double norm = rms(v);
  return norm > 0.0 ? std::abs(mean) / norm : std::abs(mean);
}

}  // namespace

std::vector<AuditRow> flux_divergence_audit(const CorrectorHierarchy& h) {
  std::vector<AuditRow> rows;
  const TorusGrid& g = h.grid;
  const int d = g.d;
  Spectral sp(g);
  const std::size_t ns = sp.size();
  for (const CorrectorOrder& o : h.orders) {
    AuditRow row;
    row.order = o.n;
    const std::size_t count = o.phi.components();
    for (std::size_t I = 0; I < count; ++I) {
      row.anchor_phi = std::max(row.anchor_phi, anchor_ratio(o.phi.component(I)));
      std::vector<Spectrum> qh;
      for (int r = 0; r < d; ++r) {
        const auto qc = o.q.component(I * static_cast<std::size_t>(d) + static_cast<std::size_t>(r));
        row.anchor_q = std::max(row.anchor_q, anchor_ratio(qc));
        qh.push_back(sp.forward(qc));
      }
      double div2 = 0.0, ref2 = 0.0;
      for (std::size_t s = 0; s < ns; ++s) {
        cplx kq{};
        double q2 = 0.0;
        for (int r = 0; r < d; ++r) {
          kq += sp.k(r, s) * qh[r][s];
          q2 += std::norm(qh[r][s]);
        }
        div2 += sp.weight(s) * std::norm(kq);
        ref2 += sp.weight(s) * sp.k2(s) * q2;
      }
      if (ref2 > 0.0) row.div_q = std::max(row.div_q, std::sqrt(div2 / ref2));

      // div sigma - q, with (div sigma)_r = sum_c d_c sigma_{rc}.
      const std::size_t off = I * static_cast<std::size_t>(pairs(d));
      for (int p = 0; p < pairs(d); ++p)
        row.anchor_sigma = std::max(row.anchor_sigma, anchor_ratio(o.sigma.component(off + static_cast<std::size_t>(p))));
      double err2 = 0.0, qn2 = 0.0;
      std::vector<double> col(g.points());
      for (int r = 0; r < d; ++r) {
        Spectrum acc(ns, cplx{});
        for (int c = 0; c < d; ++c) {
          if (c == r) continue;
          for (std::size_t x = 0; x < g.points(); ++x) col[x] = skew_entry(o.sigma, off, r, c, x);
          const Spectrum sh = sp.forward(col);
          for (std::size_t s = 0; s < ns; ++s) acc[s] += cplx{0.0, sp.k(c, s)} * sh[s];
        }
        for (std::size_t s = 0; s < ns; ++s) {
          err2 += sp.weight(s) * std::norm(acc[s] - qh[r][s]);
          qn2 += sp.weight(s) * std::norm(qh[r][s]);
        }
      }
      if (qn2 > 0.0) row.div_sigma = std::max(row.div_sigma, std::sqrt(err2 / qn2));
      else row.div_sigma = std::max(row.div_sigma, std::sqrt(err2));
    }
    rows.push_back(row);
  }
  return rows;
}

}  // namespace shl
