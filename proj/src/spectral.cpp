#include "shl/spectral.hpp"

#include <fftw3.h>

#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <tuple>
#include <unordered_map>

#include "shl/error.hpp"

namespace shl {

namespace {

// FFTW's planner is not thread-safe; execution with new arrays is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

struct AlignedBuffers {
  double* real = nullptr;
  fftw_complex* spec = nullptr;

  AlignedBuffers(std::size_t nr, std::size_t nc)
      : real(fftw_alloc_real(nr)), spec(fftw_alloc_complex(nc)) {}
  AlignedBuffers(const AlignedBuffers&) = delete;
  AlignedBuffers& operator=(const AlignedBuffers&) = delete;
  ~AlignedBuffers() {
    fftw_free(real);
    fftw_free(spec);
  }
};

}  // namespace

struct Spectral::Tables {
  TorusGrid grid;
  std::size_t nspec = 0;
  fftw_plan fwd = nullptr;
  fftw_plan bwd = nullptr;
  std::vector<std::array<int, 3>> modes;
  std::vector<double> kd;  // axis-major: kd[axis * nspec + s]
  std::vector<double> k2;
  std::vector<double> weight;
  std::vector<unsigned char> two_thirds;

  ~Tables() {
    std::lock_guard lock(planner_mutex());
    if (fwd) fftw_destroy_plan(fwd);
    if (bwd) fftw_destroy_plan(bwd);
  }

  AlignedBuffers& buffers() const {
    thread_local std::unordered_map<const Tables*, std::unique_ptr<AlignedBuffers>> cache;
    auto& slot = cache[this];
    if (!slot) slot = std::make_unique<AlignedBuffers>(grid.points(), nspec);
    return *slot;
  }
};

namespace {

std::shared_ptr<const Spectral::Tables> build_tables(const TorusGrid& g);

}  // namespace

Spectral::Spectral(const TorusGrid& grid) {
  static std::mutex cache_mutex;
  static std::map<std::tuple<int, int, double>, std::shared_ptr<const Tables>> cache;
  std::lock_guard lock(cache_mutex);
  auto key = std::make_tuple(grid.d, grid.N, grid.L);
  auto it = cache.find(key);
  if (it == cache.end()) it = cache.emplace(key, build_tables(grid)).first;
  t_ = it->second;
}

namespace {

std::shared_ptr<const Spectral::Tables> build_tables(const TorusGrid& g) {
  auto t = std::make_shared<Spectral::Tables>();
  t->grid = g;
  const int N = g.N;
  const int half = N / 2 + 1;
  std::size_t nspec = static_cast<std::size_t>(half);
  for (int a = 1; a < g.d; ++a) nspec *= static_cast<std::size_t>(N);
  t->nspec = nspec;

  std::array<int, 3> n{N, N, N};
  {
    AlignedBuffers tmp(g.points(), nspec);
    std::lock_guard lock(planner_mutex());
    // FFTW_ESTIMATE keeps the plan, hence the floating-point result, reproducible.
    t->fwd = fftw_plan_dft_r2c(g.d, n.data(), tmp.real, tmp.spec, FFTW_ESTIMATE);
    t->bwd = fftw_plan_dft_c2r(g.d, n.data(), tmp.spec, tmp.real, FFTW_ESTIMATE);
  }
  if (!t->fwd || !t->bwd) throw Error(Errc::InvalidArgument, "FFTW planning failed");

  const double base = 2.0 * std::numbers::pi / g.L;
  t->modes.resize(nspec);
  t->kd.assign(static_cast<std::size_t>(g.d) * nspec, 0.0);
  t->k2.assign(nspec, 0.0);
  t->weight.assign(nspec, 1.0);
  t->two_thirds.assign(nspec, 1);
  for (std::size_t s = 0; s < nspec; ++s) {
    // Last axis runs fastest over 0..N/2; the others over 0..N-1.
    std::array<int, 3> idx{0, 0, 0};
    std::size_t rem = s;
    idx[g.d - 1] = static_cast<int>(rem % half);
    rem /= half;
    for (int a = g.d - 2; a >= 0; --a) {
      idx[a] = static_cast<int>(rem % N);
      rem /= N;
    }
    std::array<int, 3> m{0, 0, 0};
    double k2 = 0.0;
    bool inside = true;
    for (int a = 0; a < g.d; ++a) {
      m[a] = idx[a] <= N / 2 ? idx[a] : idx[a] - N;
      const double ka = (idx[a] == N / 2) ? 0.0 : base * m[a];
      t->kd[a * nspec + s] = ka;
      k2 += ka * ka;
      if (3 * std::abs(m[a]) >= N) inside = false;
    }
    t->modes[s] = m;
    t->k2[s] = k2;
    t->two_thirds[s] = inside ? 1 : 0;
    const int last = idx[g.d - 1];
    if (last != 0 && last != N / 2) t->weight[s] = 2.0;
  }
  return t;
}

}  // namespace

const TorusGrid& Spectral::grid() const { return t_->grid; }
std::size_t Spectral::size() const { return t_->nspec; }

void Spectral::forward(std::span<const double> in, std::span<cplx> out) const {
  if (in.size() != t_->grid.points() || out.size() != t_->nspec)
    throw Error(Errc::RankMismatch, "forward transform size mismatch");
  auto& b = t_->buffers();
  std::copy(in.begin(), in.end(), b.real);
  fftw_execute_dft_r2c(t_->fwd, b.real, b.spec);
  auto* src = reinterpret_cast<const cplx*>(b.spec);
  std::copy(src, src + t_->nspec, out.begin());
}

Spectrum Spectral::forward(std::span<const double> in) const {
  Spectrum out(t_->nspec);
  forward(in, out);
  return out;
}

void Spectral::inverse(std::span<const cplx> in, std::span<double> out) const {
  if (out.size() != t_->grid.points() || in.size() != t_->nspec)
    throw Error(Errc::RankMismatch, "inverse transform size mismatch");
  auto& b = t_->buffers();
  std::copy(in.begin(), in.end(), reinterpret_cast<cplx*>(b.spec));
  fftw_execute_dft_c2r(t_->bwd, b.spec, b.real);
  const double scale = 1.0 / static_cast<double>(t_->grid.points());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = b.real[i] * scale;
}

std::vector<double> Spectral::inverse(std::span<const cplx> in) const {
  std::vector<double> out(t_->grid.points());
  inverse(in, out);
  return out;
}

double Spectral::k(int axis, std::size_t s) const { return t_->kd[axis * t_->nspec + s]; }
double Spectral::k2(std::size_t s) const { return t_->k2[s]; }
double Spectral::weight(std::size_t s) const { return t_->weight[s]; }
std::array<int, 3> Spectral::mode(std::size_t s) const { return t_->modes[s]; }
bool Spectral::inside_two_thirds(std::size_t s) const { return t_->two_thirds[s] != 0; }

std::size_t Spectral::index_of(std::array<int, 3> m) const {
  const int N = t_->grid.N;
  const int d = t_->grid.d;
  const int half = N / 2 + 1;
  int last = m[d - 1];
  if (last < 0) {
    for (int a = 0; a < d; ++a) m[a] = -m[a];
    last = -last;
  }
  if (last >= half) throw Error(Errc::OutOfRange, "mode outside the half spectrum");
  std::size_t s = 0;
  for (int a = 0; a < d - 1; ++a) {
    const int ia = ((m[a] % N) + N) % N;
    s = s * N + static_cast<std::size_t>(ia);
  }
  return s * half + static_cast<std::size_t>(last);
}

double Spectral::inner(std::span<const cplx> x, std::span<const cplx> y) const {
  double acc = 0.0;
  for (std::size_t s = 0; s < t_->nspec; ++s)
    acc += t_->weight[s] * (x[s].real() * y[s].real() + x[s].imag() * y[s].imag());
  return acc / static_cast<double>(t_->grid.points());
}

void apply_derivative(const Spectral& sp, const MultiIndex& m, std::span<cplx> spectrum) {
  if (m.idx.empty()) return;
  const std::size_t n = sp.size();
  for (std::size_t s = 0; s < n; ++s) {
    cplx factor{1.0, 0.0};
    for (int axis : m.idx) factor *= cplx{0.0, sp.k(axis, s)};
    spectrum[s] *= factor;
  }
}

Field gradient(const Field& scalar) {
  if (scalar.components() != 1) throw Error(Errc::RankMismatch, "gradient expects a scalar field");
  const auto& g = scalar.grid();
  Spectral sp(g);
  const Spectrum u = sp.forward(scalar.component(0));
  Field out(g, Rank::vector(g.d));
  Spectrum tmp(sp.size());
  for (int a = 0; a < g.d; ++a) {
    for (std::size_t s = 0; s < sp.size(); ++s) tmp[s] = cplx{0.0, sp.k(a, s)} * u[s];
    sp.inverse(tmp, out.component(a));
  }
  return out;
}

Field divergence(const Field& vector) {
  const auto& g = vector.grid();
  if (vector.components() != static_cast<std::size_t>(g.d))
    throw Error(Errc::RankMismatch, "divergence expects a vector field");
  Spectral sp(g);
  Spectrum acc(sp.size(), cplx{});
  for (int a = 0; a < g.d; ++a) {
    const Spectrum c = sp.forward(vector.component(a));
    for (std::size_t s = 0; s < sp.size(); ++s) acc[s] += cplx{0.0, sp.k(a, s)} * c[s];
  }
  Field out(g, Rank::scalar());
  sp.inverse(acc, out.component(0));
  return out;
}

Field derivative(const Field& scalar, const MultiIndex& m) {
  if (scalar.components() != 1) throw Error(Errc::RankMismatch, "derivative expects a scalar field");
  Spectral sp(scalar.grid());
  Spectrum u = sp.forward(scalar.component(0));
  apply_derivative(sp, m, u);
  Field out(scalar.grid(), Rank::scalar());
  sp.inverse(u, out.component(0));
  return out;
}

namespace {

// Fourier coefficients of the zero-mean potential whose gradient is the
// gradient part of g.
Spectrum potential_spectrum(const Spectral& sp, const Field& g) {
  const int d = sp.grid().d;
  if (g.components() != static_cast<std::size_t>(d))
    throw Error(Errc::RankMismatch, "expected a vector field");
  Spectrum div(sp.size(), cplx{});
  for (int a = 0; a < d; ++a) {
    const Spectrum c = sp.forward(g.component(a));
    for (std::size_t s = 0; s < sp.size(); ++s) div[s] += cplx{0.0, sp.k(a, s)} * c[s];
  }
  // -Lap u = -div g  =>  k2 u = -div g
  for (std::size_t s = 0; s < sp.size(); ++s) {
    const double k2 = sp.k2(s);
    div[s] = k2 > 0.0 ? -div[s] / k2 : cplx{};
  }
  return div;
}

}  // namespace

Field potential_from_gradient(const Field& vector) {
  Spectral sp(vector.grid());
  const Spectrum u = potential_spectrum(sp, vector);
  Field out(vector.grid(), Rank::scalar());
  sp.inverse(u, out.component(0));
  return out;
}

Field gradient_part(const Field& vector) {
  const auto& g = vector.grid();
  Spectral sp(g);
  const Spectrum u = potential_spectrum(sp, vector);
  Field out(g, Rank::vector(g.d));
  Spectrum tmp(sp.size());
  for (int a = 0; a < g.d; ++a) {
    for (std::size_t s = 0; s < sp.size(); ++s) tmp[s] = cplx{0.0, sp.k(a, s)} * u[s];
    sp.inverse(tmp, out.component(a));
  }
  return out;
}

Field curl(const Field& vector) {
  const auto& g = vector.grid();
  if (vector.components() != static_cast<std::size_t>(g.d))
    throw Error(Errc::RankMismatch, "curl expects a vector field");
  Spectral sp(g);
  std::vector<Spectrum> c;
  for (int a = 0; a < g.d; ++a) c.push_back(sp.forward(vector.component(a)));
  const int pairs = g.d * (g.d - 1) / 2;
  Field out(g, Rank{{pairs}});
  Spectrum tmp(sp.size());
  int p = 0;
  for (int j = 0; j < g.d; ++j) {
    for (int k = j + 1; k < g.d; ++k, ++p) {
      for (std::size_t s = 0; s < sp.size(); ++s)
        tmp[s] = cplx{0.0, sp.k(j, s)} * c[k][s] - cplx{0.0, sp.k(k, s)} * c[j][s];
      sp.inverse(tmp, out.component(p));
    }
  }
  return out;
}

double divergence_h_minus1_norm(const Field& vector) {
  const auto& g = vector.grid();
  Spectral sp(g);
  Spectrum div(sp.size(), cplx{});
  for (int a = 0; a < g.d; ++a) {
    const Spectrum c = sp.forward(vector.component(a));
    for (std::size_t s = 0; s < sp.size(); ++s) div[s] += cplx{0.0, sp.k(a, s)} * c[s];
  }
  double acc = 0.0;
  for (std::size_t s = 0; s < sp.size(); ++s) {
    const double k2 = sp.k2(s);
    if (k2 > 0.0) acc += sp.weight(s) * std::norm(div[s]) / k2;
  }
  // Parseval: sum_x |v|^2 h^d = (h^d / N^d) sum_k |v_hat|^2
  return std::sqrt(acc * g.cell_volume() / static_cast<double>(g.points()));
}

}  // namespace shl
