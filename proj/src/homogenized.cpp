#include "shl/homogenized.hpp"

#include <cmath>

#include "shl/error.hpp"

namespace shl {

TensorList symmetrized(const TensorList& tensors) {
  TensorList out;
  for (const auto& t : tensors) out.push_back(symmetrize_multiindex(t));
  return out;
}

namespace {

// S_k(xi) = sum abar^k_{I;r,c} xi_r xi_c xi_I: symbol of -div abar^k grad grad^{k-1}
// up to the factor i^{k+1}.
double symbol(const ConstTensor& t, const Spectral& sp, std::size_t s) {
  const int d = t.dim();
  double acc = 0.0;
  for (std::size_t flat = 0; flat < t.size(); ++flat) {
    const double v = t[flat];
    if (v == 0.0) continue;
    std::size_t rest = flat;
    double prod = v;
    for (int j = 0; j < t.order(); ++j) {
      prod *= sp.k(static_cast<int>(rest % static_cast<std::size_t>(d)), s);
      rest /= static_cast<std::size_t>(d);
    }
    acc += prod;
  }
  return acc;
}

cplx ipow_i(int p) {
  switch (((p % 4) + 4) % 4) {
    case 0: return {1.0, 0.0};
    case 1: return {0.0, 1.0};
    case 2: return {-1.0, 0.0};
    default: return {0.0, -1.0};
  }
}

Field gradient_of(const Spectral& sp, const Spectrum& u) {
  const int d = sp.grid().d;
  Field g(sp.grid(), Rank::vector(d));
  Spectrum tmp(sp.size());
  for (int i = 0; i < d; ++i) {
    for (std::size_t s = 0; s < sp.size(); ++s) tmp[s] = cplx{0.0, sp.k(i, s)} * u[s];
    sp.inverse(tmp, g.component(static_cast<std::size_t>(i)));
  }
  return g;
}

}  // namespace

TildeHierarchy solve_tilde_hierarchy(const TensorList& raw, const Field& f, int n) {
  const TorusGrid& grid = f.grid();
  const int d = grid.d;
  if (n < 1 || static_cast<int>(raw.size()) < n) throw Error(Errc::InsufficientOrder, "need tensors abar^1..abar^n");
  if (f.components() != static_cast<std::size_t>(d)) throw Error(Errc::RankMismatch, "source must be a vector field");
  const TensorList t = symmetrized(TensorList(raw.begin(), raw.begin() + n));
  {
    // Same positivity check as the constant-coefficient solver.
    const ConstTensor& a1 = t[0];
    bool ok = a1[0] > 0.0;
    if (d >= 2) ok = ok && a1[0] * a1[static_cast<std::size_t>(d + 1)] - a1[1] * a1[static_cast<std::size_t>(d)] > 0.0;
    if (d == 3) {
      double m[3][3];
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) m[r][c] = a1[static_cast<std::size_t>(r * 3 + c)];
      const double det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
                         m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
      ok = ok && det > 0.0;
    }
    if (!ok) throw Error(Errc::IndefiniteSymbol, "symmetric part of abar^1 is not positive definite");
  }

  Spectral sp(grid);
  const std::size_t ns = sp.size();
  std::vector<std::vector<double>> S(static_cast<std::size_t>(n), std::vector<double>(ns));
  for (int k = 0; k < n; ++k)
    for (std::size_t s = 0; s < ns; ++s) S[k][s] = symbol(t[k], sp, s);

  std::vector<Spectrum> fh;
  for (int i = 0; i < d; ++i) fh.push_back(sp.forward(f.component(static_cast<std::size_t>(i))));

  TildeHierarchy out{grid, {}, {}};
  for (int k = 1; k <= n; ++k) {
    Spectrum u(ns, cplx{});
    for (std::size_t s = 0; s < ns; ++s) {
      const double s1 = S[0][s];
      if (!(s1 > 0.0)) continue;
      cplx rhs{};
      if (k == 1) {
        for (int i = 0; i < d; ++i) rhs += cplx{0.0, sp.k(i, s)} * fh[i][s];
      } else {
        for (int j = 2; j <= k; ++j) rhs += ipow_i(j + 1) * S[j - 1][s] * out.potential[k - j][s];
      }
      u[s] = rhs / s1;
    }
    out.grad.push_back(gradient_of(sp, u));
    out.potential.push_back(std::move(u));
  }
  return out;
}

HomogProxy assemble_proxy(const TildeHierarchy& tilde, double eps, int n) {
  if (!(eps > 0.0)) throw Error(Errc::OutOfRange, "eps must be positive");
  if (static_cast<int>(tilde.grad.size()) < n) throw Error(Errc::InsufficientOrder, "tilde hierarchy too short");
  HomogProxy p;
  p.n = n;
  p.eps = eps;
  p.grid = tilde.grid;
  p.grad = Field(tilde.grid, Rank::vector(tilde.grid.d));
  p.potential.assign(tilde.potential[0].size(), cplx{});
  for (int k = 1; k <= n; ++k) {
    const double w = std::pow(eps, k - 1);
    p.grad_tilde.push_back(tilde.grad[k - 1]);
    p.tilde_potential.push_back(tilde.potential[k - 1]);
    p.grad += w * tilde.grad[k - 1];
    for (std::size_t s = 0; s < p.potential.size(); ++s) p.potential[s] += w * tilde.potential[k - 1][s];
  }
  return p;
}

Field apply_tensor_term(const ConstTensor& t, const Field& grad_w) {
  const TorusGrid& grid = grad_w.grid();
  const int d = grid.d;
  const int k = t.order() - 1;
  Field out(grid, Rank::vector(d));
  if (k == 1) {
    for (int r = 0; r < d; ++r) {
      auto dst = out.component(static_cast<std::size_t>(r));
      for (int c = 0; c < d; ++c) {
        const double v = t[static_cast<std::size_t>(r * d + c)];
        const auto g = grad_w.component(static_cast<std::size_t>(c));
        for (std::size_t x = 0; x < g.size(); ++x) dst[x] += v * g[x];
      }
    }
    return out;
  }
  Spectral sp(grid);
  const std::size_t ns = sp.size();
  std::vector<Spectrum> gh;
  for (int c = 0; c < d; ++c) gh.push_back(sp.forward(grad_w.component(static_cast<std::size_t>(c))));
  const std::size_t nI = ipow(static_cast<std::size_t>(d), k - 1);
  for (int r = 0; r < d; ++r) {
    Spectrum acc(ns, cplx{});
    for (std::size_t I = 0; I < nI; ++I) {
      const MultiIndex mi = decode(I, k - 1, d);
      for (int c = 0; c < d; ++c) {
        const double v = t[(I * static_cast<std::size_t>(d) + static_cast<std::size_t>(r)) * static_cast<std::size_t>(d) +
                           static_cast<std::size_t>(c)];
        if (v == 0.0) continue;
        for (std::size_t s = 0; s < ns; ++s) {
          double prod = v;
          for (int ax : mi.idx) prod *= sp.k(ax, s);
          acc[s] += prod * ipow_i(k - 1) * gh[c][s];
        }
      }
    }
    sp.inverse(acc, out.component(static_cast<std::size_t>(r)));
  }
  return out;
}

Field apply_effective_operator(const TensorList& tensors, const Field& grad_w, double eps, int n) {
  if (static_cast<int>(tensors.size()) < n) throw Error(Errc::InsufficientOrder, "need tensors abar^1..abar^n");
  Field out(grad_w.grid(), Rank::vector(grad_w.grid().d));
  for (int k = 1; k <= n; ++k) out += std::pow(eps, k - 1) * apply_tensor_term(tensors[k - 1], grad_w);
  return out;
}

Field proxy_defect(const HomogProxy& proxy, const TensorList& tensors) {
  const int n = proxy.n;
  Field out(proxy.grid, Rank::vector(proxy.grid.d));
  for (int k = 2; k <= n; ++k)
    for (int l = n + 2 - k; l <= n; ++l)
      out += std::pow(proxy.eps, k + l - 2) * apply_tensor_term(tensors[k - 1], proxy.grad_tilde[l - 1]);
  return out;
}

double proxy_identity_mismatch(const HomogProxy& proxy, const TensorList& tensors, const Field& f) {
  Field g = apply_effective_operator(tensors, proxy.grad, proxy.eps, proxy.n);
  g += f;
  g -= proxy_defect(proxy, tensors);
  const double ref = divergence_h_minus1_norm(f);
  const double mis = divergence_h_minus1_norm(g);
  return ref > 0.0 ? mis / ref : mis;
}

}  // namespace shl
