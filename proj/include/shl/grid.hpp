#pragma once

// Torus discretization, lattice fields and multi-index bookkeeping.

#include <array>
#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace shl {

/// Periodic cubic lattice [0, L)^d with N points per axis.
struct TorusGrid {
  int d = 1;
  double L = 1.0;
  int N = 4;
  double h = 0.25;

  std::size_t points() const;
  double cell_volume() const;
  double volume() const { return cell_volume() * static_cast<double>(points()); }

  /// Lattice coordinates of a flat (row-major) site index. Unused axes are zero.
  std::array<int, 3> coords(std::size_t site) const;
  /// Flat index of lattice coordinates, wrapped periodically.
  std::size_t site(std::array<int, 3> c) const;

  bool operator==(const TorusGrid&) const = default;
};

TorusGrid make_grid(int d, double L, int N);

std::size_t ipow(std::size_t base, int exponent);

/// Tensor signature of a field: the extent of each component index.
/// Scalar fields have no extents; a family of k multi-indexed vectors has
/// extents {d, ..., d, d}.
struct Rank {
  std::vector<int> extents;

  static Rank scalar() { return {}; }
  static Rank vector(int d) { return {{d}}; }
  static Rank matrix(int d) { return {{d, d}}; }
  /// k indices in 1..d, followed by `tail` extra component extents.
  static Rank family(int k, int d, std::vector<int> tail = {});

  std::size_t components() const;
  bool operator==(const Rank&) const = default;
};

/// Real lattice data. Storage is component-major: component c occupies
/// data[c * points, (c + 1) * points), with components ordered row-major
/// over the component multi-index.
class Field {
 public:
  Field() = default;
  Field(TorusGrid grid, Rank rank);

  const TorusGrid& grid() const { return grid_; }
  const Rank& rank() const { return rank_; }
  std::size_t components() const { return components_; }
  std::size_t points() const { return grid_.points(); }

  std::span<double> component(std::size_t c);
  std::span<const double> component(std::size_t c) const;
  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  double& at(std::size_t c, std::size_t site) { return data_[c * points() + site]; }
  double at(std::size_t c, std::size_t site) const { return data_[c * points() + site]; }

  /// Squared Euclidean norm over components at one site.
  double squared_norm_at(std::size_t site) const;

  Field& operator+=(const Field& other);
  Field& operator-=(const Field& other);
  Field& operator*=(double s);

 private:
  TorusGrid grid_;
  Rank rank_;
  std::size_t components_ = 0;
  std::vector<double> data_;
};

Field operator-(Field lhs, const Field& rhs);
Field operator+(Field lhs, const Field& rhs);
Field operator*(double s, Field f);

/// Ordered index tuple (i_1, ..., i_k), stored 0-based. The empty index is
/// the order-zero object.
struct MultiIndex {
  std::vector<int> idx;

  int order() const { return static_cast<int>(idx.size()); }
  bool operator==(const MultiIndex&) const = default;
};

std::size_t encode(const MultiIndex& m, int d);
MultiIndex decode(std::size_t offset, int k, int d);
/// 1-based, comma separated ("1,2"); empty for order zero.
std::string to_string(const MultiIndex& m);

/// Constant tensor with k indices, each in 0..d-1, stored row-major.
class ConstTensor {
 public:
  ConstTensor() = default;
  ConstTensor(int d, int k);

  int dim() const { return d_; }
  int order() const { return k_; }
  std::size_t size() const { return values_.size(); }

  double& operator[](std::size_t flat) { return values_[flat]; }
  double operator[](std::size_t flat) const { return values_[flat]; }
  double& operator()(const MultiIndex& m) { return values_[encode(m, d_)]; }
  double operator()(const MultiIndex& m) const { return values_[encode(m, d_)]; }

  std::span<const double> values() const { return values_; }
  double max_abs() const;

  ConstTensor& operator-=(const ConstTensor& other);
  ConstTensor& operator+=(const ConstTensor& other);
  ConstTensor& operator*=(double s);

 private:
  int d_ = 0;
  int k_ = 0;
  std::vector<double> values_;
};

/// Average of T over all permutations of its indices.
ConstTensor symmetrize_multiindex(const ConstTensor& t);

double lattice_mean(std::span<const double> values);
double max_abs(std::span<const double> values);

/// [g]_{2;eps}(x): root mean square of |g| over the lattice ball of radius eps
/// around x. Returns |g| pointwise when eps < h.
Field local_quadratic_average(const Field& g, double eps);

/// (sum_x |g(x)|^p h^d)^{1/p}; p = infinity gives the lattice maximum.
double lp_norm(const Field& g, double p);

/// Binary snapshot: "SHLB1", int32 d, float64 L, int32 N, int32 rank length,
/// int32 extents..., then little-endian float64 data in storage order.
void write_snapshot(const std::filesystem::path& path, const Field& f);
Field read_snapshot(const std::filesystem::path& path);

}  // namespace shl
