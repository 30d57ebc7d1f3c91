#include "shl/ellsolve.hpp"

#include <spdlog/spdlog.h>

#include <cmath>

#include "shl/error.hpp"
#include "shl/spectral.hpp"

namespace shl {

namespace {

void check_symmetric(const CoefficientField& cf) {
  const int d = cf.a.grid().d;
  for (int r = 0; r < d; ++r)
    for (int c = r + 1; c < d; ++c) {
      const auto x = cf.a.component(static_cast<std::size_t>(r * d + c));
      const auto y = cf.a.component(static_cast<std::size_t>(c * d + r));
      for (std::size_t s = 0; s < x.size(); ++s)
        if (x[s] != y[s]) throw Error(Errc::InvalidArgument, "conjugate gradient requires a symmetric coefficient");
    }
}

struct Operator {
  const Spectral& sp;
  const CoefficientField& cf;
  bool dealias;
  int d;
  std::vector<std::vector<double>> grad;
  std::vector<double> flux;
  Spectrum tmp;

  Operator(const Spectral& s, const CoefficientField& a, bool dl)
      : sp(s), cf(a), dealias(dl), d(s.grid().d), grad(static_cast<std::size_t>(d), std::vector<double>(s.grid().points())),
        flux(s.grid().points()), tmp(s.size()) {}

  // out = F[-div a grad u] for u given by its spectrum.
  void apply(const Spectrum& u, Spectrum& out) {
    const std::size_t ns = sp.size();
    for (int i = 0; i < d; ++i) {
      for (std::size_t s = 0; s < ns; ++s) tmp[s] = cplx{0.0, sp.k(i, s)} * u[s];
      sp.inverse(tmp, grad[i]);
    }
    std::fill(out.begin(), out.end(), cplx{});
    const std::size_t n = flux.size();
    for (int r = 0; r < d; ++r) {
      std::fill(flux.begin(), flux.end(), 0.0);
      for (int c = 0; c < d; ++c) {
        const auto a = cf.a.component(static_cast<std::size_t>(r * d + c));
        const auto& g = grad[c];
        for (std::size_t x = 0; x < n; ++x) flux[x] += a[x] * g[x];
      }
      sp.forward(flux, tmp);
      for (std::size_t s = 0; s < ns; ++s) out[s] -= cplx{0.0, sp.k(r, s)} * tmp[s];
    }
    if (dealias)
      for (std::size_t s = 0; s < ns; ++s)
        if (!sp.inside_two_thirds(s)) out[s] = cplx{};
  }
};

}  // namespace

SolveResult solve_divform_variable(const CoefficientField& cf, const Field& f, const SolveOptions& opts) {
  const TorusGrid& grid = cf.a.grid();
  const int d = grid.d;
  if (!(f.grid() == grid)) throw Error(Errc::GridMismatch, "coefficient and source grids differ");
  if (f.components() != static_cast<std::size_t>(d)) throw Error(Errc::RankMismatch, "source must be a vector field");
  if (!(opts.tol > 0.0 && opts.tol < 1.0)) throw Error(Errc::OutOfRange, "tolerance must lie in (0, 1)");
  check_symmetric(cf);
  const int max_iters = opts.max_iters > 0 ? opts.max_iters : 10 * grid.N;

  Spectral sp(grid);
  const std::size_t ns = sp.size();
  Spectrum b(ns, cplx{});
  for (int i = 0; i < d; ++i) {
    const Spectrum fi = sp.forward(f.component(static_cast<std::size_t>(i)));
    for (std::size_t s = 0; s < ns; ++s) b[s] += cplx{0.0, sp.k(i, s)} * fi[s];
  }
  if (opts.dealias)
    for (std::size_t s = 0; s < ns; ++s)
      if (!sp.inside_two_thirds(s)) b[s] = cplx{};

  auto precondition = [&](const Spectrum& r, Spectrum& z) {
    for (std::size_t s = 0; s < ns; ++s) {
      const double k2 = sp.k2(s);
      if (opts.preconditioner == Preconditioner::None) z[s] = k2 > 0.0 ? r[s] : cplx{};
      else z[s] = k2 > 0.0 ? r[s] / k2 : cplx{};
    }
  };

  Operator A(sp, cf, opts.dealias);
  Spectrum x(ns, cplx{}), r = b, z(ns), p(ns), Ap(ns);
  precondition(r, z);
  p = z;
  double rz = sp.inner(r, z);
  const double rz0 = rz;
  SolveReport rep;
  rep.history.push_back(1.0);
  if (rz0 <= 0.0) {
    rep.converged = true;
    rep.final_residual = 0.0;
  }
  while (!rep.converged && rep.iterations < max_iters) {
    A.apply(p, Ap);
    const double pAp = sp.inner(p, Ap);
    if (!(pAp > 0.0))
      throw Error(Errc::IndefiniteOperator, "non-positive curvature " + std::to_string(pAp) + " at iteration " +
                                                std::to_string(rep.iterations));
    const double alpha = rz / pAp;
    for (std::size_t s = 0; s < ns; ++s) {
      x[s] += alpha * p[s];
      r[s] -= alpha * Ap[s];
    }
    precondition(r, z);
    const double rz_new = sp.inner(r, z);
    ++rep.iterations;
    rep.final_residual = std::sqrt(std::max(rz_new, 0.0) / rz0);
    rep.history.push_back(rep.final_residual);
    if (rep.final_residual <= opts.tol) {
      rep.converged = true;
      break;
    }
    const double beta = rz_new / rz;
    rz = rz_new;
    for (std::size_t s = 0; s < ns; ++s) p[s] = z[s] + beta * p[s];
  }

  SolveResult out{Field(grid, Rank::scalar()), Field(grid, Rank::vector(d)), rep};
  x[0] = cplx{};
  sp.inverse(x, out.u.component(0));
  Spectrum tmp(ns);
  for (int i = 0; i < d; ++i) {
    for (std::size_t s = 0; s < ns; ++s) tmp[s] = cplx{0.0, sp.k(i, s)} * x[s];
    sp.inverse(tmp, out.grad.component(static_cast<std::size_t>(i)));
  }
  return out;
}

namespace {

bool symmetric_part_positive(const ConstTensor& a) {
  const int d = a.dim();
  double m[3][3];
  for (int r = 0; r < d; ++r)
    for (int c = 0; c < d; ++c) m[r][c] = 0.5 * (a[static_cast<std::size_t>(r * d + c)] + a[static_cast<std::size_t>(c * d + r)]);
  // Sylvester's criterion.
  if (!(m[0][0] > 0.0)) return false;
  if (d == 1) return true;
  const double m2 = m[0][0] * m[1][1] - m[0][1] * m[1][0];
  if (!(m2 > 0.0)) return false;
  if (d == 2) return true;
  const double m3 = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
                    m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
  return m3 > 0.0;
}

}  // namespace

Field solve_divform_constant(const ConstTensor& abar, const Field& f) {
  const TorusGrid& grid = f.grid();
  const int d = grid.d;
  if (abar.dim() != d || abar.order() != 2) throw Error(Errc::RankMismatch, "expected a d x d constant matrix");
  if (f.components() != static_cast<std::size_t>(d)) throw Error(Errc::RankMismatch, "source must be a vector field");
  if (!symmetric_part_positive(abar)) throw Error(Errc::IndefiniteSymbol, "symmetric part of the tensor is not positive definite");
  Spectral sp(grid);
  const std::size_t ns = sp.size();
  std::vector<Spectrum> fh;
  for (int i = 0; i < d; ++i) fh.push_back(sp.forward(f.component(static_cast<std::size_t>(i))));
  Spectrum u(ns);
  for (std::size_t s = 0; s < ns; ++s) {
    double sym = 0.0;
    cplx kf{};
    for (int r = 0; r < d; ++r) {
      kf += sp.k(r, s) * fh[r][s];
      for (int c = 0; c < d; ++c) sym += sp.k(r, s) * abar[static_cast<std::size_t>(r * d + c)] * sp.k(c, s);
    }
    // grad u_hat = i k u_hat with u_hat = i (k.f_hat) / (k.abar k)
    u[s] = sym > 0.0 ? cplx{0.0, 1.0} * kf / sym : cplx{};
  }
  Field out(grid, Rank::vector(d));
  Spectrum tmp(ns);
  for (int i = 0; i < d; ++i) {
    for (std::size_t s = 0; s < ns; ++s) tmp[s] = cplx{0.0, sp.k(i, s)} * u[s];
    sp.inverse(tmp, out.component(static_cast<std::size_t>(i)));
  }
  return out;
}

int skew_slot(int j, int k, int d) {
  // Row-major enumeration of pairs j < k.
  return j * d - j * (j + 1) / 2 + (k - j - 1);
}

double skew_entry(const Field& sigma, std::size_t offset, int j, int k, std::size_t site) {
  if (j == k) return 0.0;
  const int d = sigma.grid().d;
  if (j < k) return sigma.at(offset + static_cast<std::size_t>(skew_slot(j, k, d)), site);
  return -sigma.at(offset + static_cast<std::size_t>(skew_slot(k, j, d)), site);
}

FluxCorrector solve_flux_corrector(const Field& q) {
  const TorusGrid& grid = q.grid();
  const int d = grid.d;
  if (q.components() != static_cast<std::size_t>(d)) throw Error(Errc::RankMismatch, "flux must be a vector field");
  Spectral sp(grid);
  const std::size_t ns = sp.size();
  std::vector<Spectrum> qh;
  for (int i = 0; i < d; ++i) qh.push_back(sp.forward(q.component(static_cast<std::size_t>(i))));

  double div2 = 0.0, ref2 = 0.0;
  for (std::size_t s = 0; s < ns; ++s) {
    cplx kq{};
    double q2 = 0.0;
    for (int i = 0; i < d; ++i) {
      kq += sp.k(i, s) * qh[i][s];
      q2 += std::norm(qh[i][s]);
    }
    div2 += sp.weight(s) * std::norm(kq);
    ref2 += sp.weight(s) * sp.k2(s) * q2;
  }
  FluxCorrector out{Field(grid, Rank{{d * (d - 1) / 2}}), ref2 > 0.0 ? std::sqrt(div2 / ref2) : 0.0};
  // Round-off fluxes (constant coefficients, the across-layer flux of a laminate) carry no divergence information.
  if (d > 1 && out.divergence_ratio > 1e-8 && max_abs(q.data()) > 1e-9)
    spdlog::warn("flux corrector: relative divergence of q is {:.3e} (> 1e-8)", out.divergence_ratio);

  Spectrum tmp(ns);
  for (int j = 0; j < d; ++j)
    for (int k = j + 1; k < d; ++k) {
      for (std::size_t s = 0; s < ns; ++s) {
        const double k2 = sp.k2(s);
        tmp[s] = k2 > 0.0 ? (cplx{0.0, sp.k(j, s)} * qh[k][s] - cplx{0.0, sp.k(k, s)} * qh[j][s]) / k2 : cplx{};
      }
      sp.inverse(tmp, out.sigma.component(static_cast<std::size_t>(skew_slot(j, k, d))));
    }
  return out;
}

}  // namespace shl
