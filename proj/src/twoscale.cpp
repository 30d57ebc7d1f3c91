#include "shl/twoscale.hpp"

#include <cmath>

#include "shl/error.hpp"

namespace shl {

TorusGrid macro_grid_for(const TorusGrid& micro, double eps) {
  if (!(eps > 0.0)) throw Error(Errc::OutOfRange, "eps must be positive");
  const double L = micro.L * eps;
  if (std::abs(L - 1.0) > 1e-12)
    throw Error(Errc::LatticeMisalignment, "micro period " + std::to_string(micro.L) + " is not 1/eps for eps = " +
                                               std::to_string(eps));
  return make_grid(micro.d, 1.0, micro.N);
}

Field regrid(const Field& f, const TorusGrid& grid) {
  if (grid.d != f.grid().d || grid.N != f.grid().N) throw Error(Errc::LatticeMisalignment, "lattices differ");
  Field out(grid, f.rank());
  std::copy(f.data().begin(), f.data().end(), out.data().begin());
  return out;
}

CoefficientField regrid(const CoefficientField& a, const TorusGrid& grid) {
  return CoefficientField{regrid(a.a, grid), a.lambda, a.symmetric};
}

namespace {

// d_I U and grad d_I U for every multi-index of order k, on the macro grid.
struct Derivs {
  std::vector<std::vector<double>> value;  // [I][x]
  std::vector<std::vector<double>> grad;   // [I * d + r][x]
};

Derivs derivatives(const Spectral& sp, const Spectrum& U, int k) {
  const int d = sp.grid().d;
  const std::size_t nI = ipow(static_cast<std::size_t>(d), k);
  Derivs out;
  Spectrum tmp(sp.size());
  for (std::size_t I = 0; I < nI; ++I) {
    MultiIndex mi = decode(I, k, d);
    tmp = U;
    apply_derivative(sp, mi, tmp);
    out.value.push_back(sp.inverse(tmp));
    for (int r = 0; r < d; ++r) {
      MultiIndex mr = mi;
      mr.idx.push_back(r);
      tmp = U;
      apply_derivative(sp, mr, tmp);
      out.grad.push_back(sp.inverse(tmp));
    }
  }
  return out;
}

}  // namespace

TwoScaleExpansion two_scale_expand(const CorrectorHierarchy& h, const Spectrum& potential, const TorusGrid& macro,
                                   double eps, int n) {
  if (n < 0) throw Error(Errc::OutOfRange, "expansion order must be nonnegative");
  if (n > h.order()) throw Error(Errc::InsufficientOrder, "hierarchy order below expansion order");
  if (n > 0) {
    const TorusGrid expected = macro_grid_for(h.grid, eps);
    if (!(expected == macro)) throw Error(Errc::LatticeMisalignment, "macro grid does not match the corrector lattice");
  }
  const int d = macro.d;
  const std::size_t np = macro.points();
  Spectral sp(macro);
  TwoScaleExpansion out{n, eps, Field(macro, Rank::scalar()), Field(macro, Rank::vector(d))};
  {
    const Derivs d0 = derivatives(sp, potential, 0);
    std::copy(d0.value[0].begin(), d0.value[0].end(), out.F.component(0).begin());
    for (int r = 0; r < d; ++r)
      std::copy(d0.grad[r].begin(), d0.grad[r].end(), out.grad.component(static_cast<std::size_t>(r)).begin());
  }
  for (int k = 1; k <= n; ++k) {
    const CorrectorOrder& o = h.at(k);
    const Derivs D = derivatives(sp, potential, k);
    const double wk = std::pow(eps, k);
    const double wg = std::pow(eps, k - 1);
    auto F = out.F.component(0);
    for (std::size_t I = 0; I < D.value.size(); ++I) {
      const auto phi = o.phi.component(I);
      const auto& v = D.value[I];
      for (std::size_t x = 0; x < np; ++x) F[x] += wk * phi[x] * v[x];
      for (int r = 0; r < d; ++r) {
        auto g = out.grad.component(static_cast<std::size_t>(r));
        const auto gphi = o.grad_phi.component(I * static_cast<std::size_t>(d) + static_cast<std::size_t>(r));
        const auto& gv = D.grad[I * static_cast<std::size_t>(d) + static_cast<std::size_t>(r)];
        for (std::size_t x = 0; x < np; ++x) g[x] += wg * gphi[x] * v[x] + wk * phi[x] * gv[x];
      }
    }
  }
  return out;
}

namespace {

double l2(const Field& f) { return lp_norm(f, 2.0); }

}  // namespace

ResidualCheck two_scale_residual(const CoefficientField& a, const CorrectorHierarchy& h, const Field& u_grad,
                                 const TwoScaleExpansion& ex, const HomogProxy& proxy, const TensorList& tensors) {
  const TorusGrid& macro = u_grad.grid();
  const int d = macro.d;
  const int n = ex.n;
  const std::size_t np = macro.points();
  if (!(a.a.grid() == macro) || !(ex.grad.grid() == macro)) throw Error(Errc::GridMismatch, "inputs must share the macro grid");

  ResidualCheck rc{Field(macro, Rank::vector(d)), proxy_defect(proxy, tensors), 0.0};
  for (int r = 0; r < d; ++r) {
    auto dst = rc.lhs.component(static_cast<std::size_t>(r));
    for (int c = 0; c < d; ++c) {
      const auto ac = a.a.component(static_cast<std::size_t>(r * d + c));
      const auto gu = u_grad.component(static_cast<std::size_t>(c));
      const auto gf = ex.grad.component(static_cast<std::size_t>(c));
      for (std::size_t x = 0; x < np; ++x) dst[x] -= ac[x] * (gu[x] - gf[x]);
    }
  }

  if (n >= 1) {
    const CorrectorOrder& o = h.at(n);
    Spectral sp(macro);
    const Derivs D = derivatives(sp, proxy.potential, n);
    const double w = std::pow(ex.eps, n);
    const int pr = d * (d - 1) / 2;
    for (std::size_t I = 0; I < D.value.size(); ++I) {
      const auto phi = o.phi.component(I);
      for (int r = 0; r < d; ++r) {
        auto dst = rc.rhs.component(static_cast<std::size_t>(r));
        for (int c = 0; c < d; ++c) {
          const auto ac = a.a.component(static_cast<std::size_t>(r * d + c));
          const auto& gv = D.grad[I * static_cast<std::size_t>(d) + static_cast<std::size_t>(c)];
          for (std::size_t x = 0; x < np; ++x) {
            const double sig = skew_entry(o.sigma, I * static_cast<std::size_t>(pr), r, c, x);
            dst[x] += w * (ac[x] * phi[x] - sig) * gv[x];
          }
        }
      }
    }
  }

  const Field pl = gradient_part(rc.lhs);
  const Field pr = gradient_part(rc.rhs);
  const double ref = std::max(l2(pl), l2(pr));
  const double mis = l2(pl - pr);
  rc.mismatch = ref > 0.0 ? mis / ref : mis;
  return rc;
}

double error_norm_strong(const Field& u_grad, const Field& expansion_grad) {
  const Field diff = u_grad - expansion_grad;
  return lp_norm(local_quadratic_average(diff, std::min(1.0, diff.grid().L / 2)), 2.0);
}

double error_norm_mean(const Field& mean_grad, const Field& proxy_grad, double eps, double p) {
  const Field diff = mean_grad - proxy_grad;
  return lp_norm(local_quadratic_average(diff, eps), p);
}

}  // namespace shl
