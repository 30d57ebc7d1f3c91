#include "shl/grid.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>

#include "shl/error.hpp"
#include "shl/spectral.hpp"

namespace shl {

std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::NonPowerOfTwo: return "NonPowerOfTwo";
    case Errc::OutOfRange: return "OutOfRange";
    case Errc::RankMismatch: return "RankMismatch";
    case Errc::GridMismatch: return "GridMismatch";
    case Errc::KernelTooWide: return "KernelTooWide";
    case Errc::NonConvergence: return "NonConvergence";
    case Errc::IndefiniteOperator: return "IndefiniteOperator";
    case Errc::IndefiniteSymbol: return "IndefiniteSymbol";
    case Errc::InsufficientOrder: return "InsufficientOrder";
    case Errc::LatticeMisalignment: return "LatticeMisalignment";
    case Errc::Config: return "Config";
    case Errc::Io: return "Io";
  }
  return "Unknown";
}

std::size_t TorusGrid::points() const { return ipow(static_cast<std::size_t>(N), d); }

double TorusGrid::cell_volume() const { return std::pow(h, d); }

std::array<int, 3> TorusGrid::coords(std::size_t site) const {
  std::array<int, 3> c{0, 0, 0};
  for (int a = d - 1; a >= 0; --a) {
    c[a] = static_cast<int>(site % static_cast<std::size_t>(N));
    site /= static_cast<std::size_t>(N);
  }
  return c;
}

std::size_t TorusGrid::site(std::array<int, 3> c) const {
  std::size_t s = 0;
  for (int a = 0; a < d; ++a) {
    const int w = ((c[a] % N) + N) % N;
    s = s * static_cast<std::size_t>(N) + static_cast<std::size_t>(w);
  }
  return s;
}

TorusGrid make_grid(int d, double L, int N) {
  if (d < 1 || d > 3) throw Error(Errc::InvalidArgument, "dimension must be 1, 2 or 3");
  if (!(L > 0.0) || !std::isfinite(L)) throw Error(Errc::InvalidArgument, "period must be positive");
  if (N < 4) throw Error(Errc::NonPowerOfTwo, "N must be a power of two >= 4, got " + std::to_string(N));
  if (!std::has_single_bit(static_cast<unsigned>(N)))
    throw Error(Errc::NonPowerOfTwo, "N must be a power of two, got " + std::to_string(N));
  // N is a power of two, so L/N is exact and h*N == L.
  return TorusGrid{d, L, N, L / N};
}

std::size_t ipow(std::size_t base, int exponent) {
  std::size_t r = 1;
  for (int i = 0; i < exponent; ++i) r *= base;
  return r;
}

Rank Rank::family(int k, int d, std::vector<int> tail) {
  Rank r;
  r.extents.assign(static_cast<std::size_t>(k), d);
  r.extents.insert(r.extents.end(), tail.begin(), tail.end());
  return r;
}

std::size_t Rank::components() const {
  std::size_t c = 1;
  for (int e : extents) c *= static_cast<std::size_t>(e);
  return c;
}

Field::Field(TorusGrid grid, Rank rank)
    : grid_(grid), rank_(std::move(rank)), components_(rank_.components()),
      data_(components_ * grid_.points(), 0.0) {}

std::span<double> Field::component(std::size_t c) {
  return std::span<double>(data_).subspan(c * points(), points());
}

std::span<const double> Field::component(std::size_t c) const {
  return std::span<const double>(data_).subspan(c * points(), points());
}

double Field::squared_norm_at(std::size_t site) const {
  double s = 0.0;
  for (std::size_t c = 0; c < components_; ++c) {
    const double v = data_[c * points() + site];
    s += v * v;
  }
  return s;
}

namespace {

void check_same(const Field& a, const Field& b) {
  if (!(a.grid() == b.grid())) throw Error(Errc::GridMismatch, "fields live on different grids");
  if (a.components() != b.components()) throw Error(Errc::RankMismatch, "fields have different ranks");
}

}  // namespace

Field& Field::operator+=(const Field& other) {
  check_same(*this, other);
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Field& Field::operator-=(const Field& other) {
  check_same(*this, other);
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

Field& Field::operator*=(double s) {
  for (double& v : data_) v *= s;
  return *this;
}

Field operator-(Field lhs, const Field& rhs) { return lhs -= rhs; }
Field operator+(Field lhs, const Field& rhs) { return lhs += rhs; }
Field operator*(double s, Field f) { return f *= s; }

std::size_t encode(const MultiIndex& m, int d) {
  std::size_t off = 0;
  for (int i : m.idx) {
    if (i < 0 || i >= d) throw Error(Errc::OutOfRange, "multi-index entry out of range");
    off = off * static_cast<std::size_t>(d) + static_cast<std::size_t>(i);
  }
  return off;
}

MultiIndex decode(std::size_t offset, int k, int d) {
  MultiIndex m;
  m.idx.assign(static_cast<std::size_t>(k), 0);
  for (int j = k - 1; j >= 0; --j) {
    m.idx[j] = static_cast<int>(offset % static_cast<std::size_t>(d));
    offset /= static_cast<std::size_t>(d);
  }
  return m;
}

std::string to_string(const MultiIndex& m) {
  std::string s;
  for (std::size_t j = 0; j < m.idx.size(); ++j) {
    if (j) s += ',';
    s += std::to_string(m.idx[j] + 1);
  }
  return s;
}

ConstTensor::ConstTensor(int d, int k) : d_(d), k_(k), values_(ipow(static_cast<std::size_t>(d), k), 0.0) {}

double ConstTensor::max_abs() const { return shl::max_abs(values_); }

ConstTensor& ConstTensor::operator-=(const ConstTensor& other) {
  if (other.d_ != d_ || other.k_ != k_) throw Error(Errc::RankMismatch, "tensor shapes differ");
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] -= other.values_[i];
  return *this;
}

ConstTensor& ConstTensor::operator+=(const ConstTensor& other) {
  if (other.d_ != d_ || other.k_ != k_) throw Error(Errc::RankMismatch, "tensor shapes differ");
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += other.values_[i];
  return *this;
}

ConstTensor& ConstTensor::operator*=(double s) {
  for (double& v : values_) v *= s;
  return *this;
}

ConstTensor symmetrize_multiindex(const ConstTensor& t) {
  const int d = t.dim();
  const int k = t.order();
  if (k < 1) throw Error(Errc::InvalidArgument, "symmetrization needs at least one index");
  ConstTensor out(d, k);
  std::vector<char> done(t.size(), 0);
  std::vector<int> perm(static_cast<std::size_t>(k));
  double kfact = 1.0;
  for (int j = 2; j <= k; ++j) kfact *= j;

  for (std::size_t flat = 0; flat < t.size(); ++flat) {
    if (done[flat]) continue;
    MultiIndex base = decode(flat, k, d);
    std::sort(base.idx.begin(), base.idx.end());
    const double v0 = t(base);
    // Averaging deviations from a representative makes symmetric input a fixed point bit for bit.
    double dev = 0.0;
    for (int j = 0; j < k; ++j) perm[j] = j;
    MultiIndex m = base;
    do {
      for (int j = 0; j < k; ++j) m.idx[j] = base.idx[perm[j]];
      dev += t(m) - v0;
    } while (std::next_permutation(perm.begin(), perm.end()));
    const double v = v0 + dev / kfact;
    m = base;
    do {
      const std::size_t e = encode(m, d);
      out[e] = v;
      done[e] = 1;
    } while (std::next_permutation(m.idx.begin(), m.idx.end()));
  }
  return out;
}

double lattice_mean(std::span<const double> values) {
  if (values.empty()) return 0.0;
  double s = 0.0;
  for (double v : values) s += v;
  return s / static_cast<double>(values.size());
}

double max_abs(std::span<const double> values) {
  double m = 0.0;
  for (double v : values) m = std::max(m, std::abs(v));
  return m;
}

Field local_quadratic_average(const Field& g, double eps) {
  const TorusGrid& grid = g.grid();
  if (!(eps > 0.0) || eps > grid.L / 2 * (1.0 + 1e-12))
    throw Error(Errc::OutOfRange, "local average radius must lie in (0, L/2]");
  Field out(grid, Rank::scalar());
  auto dst = out.component(0);
  const std::size_t n = grid.points();
  if (eps < grid.h) {
    for (std::size_t s = 0; s < n; ++s) dst[s] = std::sqrt(g.squared_norm_at(s));
    return out;
  }

  std::vector<double> sq(n), ball(n, 0.0);
  for (std::size_t s = 0; s < n; ++s) sq[s] = g.squared_norm_at(s);
  const double r2 = eps * eps * (1.0 + 1e-12);
  double count = 0.0;
  for (std::size_t s = 0; s < n; ++s) {
    const auto c = grid.coords(s);
    double dist2 = 0.0;
    for (int a = 0; a < grid.d; ++a) {
      const int m = std::min(c[a], grid.N - c[a]);
      dist2 += (m * grid.h) * (m * grid.h);
    }
    if (dist2 <= r2) {
      ball[s] = 1.0;
      count += 1.0;
    }
  }

  Spectral sp(grid);
  Spectrum a = sp.forward(sq);
  const Spectrum b = sp.forward(ball);
  for (std::size_t s = 0; s < sp.size(); ++s) a[s] *= b[s] / count;
  sp.inverse(a, dst);
  for (double& v : dst) v = std::sqrt(std::max(v, 0.0));
  return out;
}

double lp_norm(const Field& g, double p) {
  if (!(p >= 1.0)) throw Error(Errc::OutOfRange, "p must be at least 1");
  const std::size_t n = g.points();
  if (std::isinf(p)) {
    double m = 0.0;
    for (std::size_t s = 0; s < n; ++s) m = std::max(m, g.squared_norm_at(s));
    return std::sqrt(m);
  }
  double acc = 0.0;
  if (p == 2.0) {
    for (std::size_t s = 0; s < n; ++s) acc += g.squared_norm_at(s);
    return std::sqrt(acc * g.grid().cell_volume());
  }
  for (std::size_t s = 0; s < n; ++s) acc += std::pow(std::sqrt(g.squared_norm_at(s)), p);
  return std::pow(acc * g.grid().cell_volume(), 1.0 / p);
}

namespace {

constexpr char kMagic[5] = {'S', 'H', 'L', 'B', '1'};

static_assert(std::endian::native == std::endian::little, "snapshot I/O assumes a little-endian host");

template <class T>
void put(std::ofstream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::ifstream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  return v;
}

}  // namespace

void write_snapshot(const std::filesystem::path& path, const Field& f) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(Errc::Io, "cannot open " + path.string() + " for writing");
  os.write(kMagic, sizeof kMagic);
  put<std::int32_t>(os, f.grid().d);
  put<double>(os, f.grid().L);
  put<std::int32_t>(os, f.grid().N);
  put<std::int32_t>(os, static_cast<std::int32_t>(f.rank().extents.size()));
  for (int e : f.rank().extents) put<std::int32_t>(os, e);
  os.write(reinterpret_cast<const char*>(f.data().data()),
           static_cast<std::streamsize>(f.data().size() * sizeof(double)));
  if (!os) throw Error(Errc::Io, "write failed for " + path.string());
}

Field read_snapshot(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(Errc::Io, "cannot open " + path.string());
  char magic[5];
  is.read(magic, sizeof magic);
  if (!is || !std::equal(magic, magic + 5, kMagic)) throw Error(Errc::Io, path.string() + ": not an SHLB1 snapshot");
  const int d = get<std::int32_t>(is);
  const double L = get<double>(is);
  const int N = get<std::int32_t>(is);
  const int nr = get<std::int32_t>(is);
  if (!is || nr < 0 || nr > 16) throw Error(Errc::Io, path.string() + ": corrupt header");
  Rank r;
  for (int i = 0; i < nr; ++i) r.extents.push_back(get<std::int32_t>(is));
  Field f(make_grid(d, L, N), r);
  auto data = f.data();
  is.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(double)));
  if (!is) throw Error(Errc::Io, path.string() + ": truncated data");
  return f;
}

}  // namespace shl
