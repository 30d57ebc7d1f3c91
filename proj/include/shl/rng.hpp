#pragma once

// Counter-based Philox4x32-10 streams. A stream is a key; the n-th block of
// output is a pure function of (key, n), so any sample can be regenerated
// without replaying its predecessors.

#include <array>
#include <cstdint>
#include <span>

namespace shl {

struct Stream {
  std::uint64_t key = 0;

  bool operator==(const Stream&) const = default;
};

Stream root_stream(std::uint64_t seed);
/// Independent child stream; child(s, i) never coincides with s or child(s, j), j != i.
Stream child(const Stream& parent, std::uint64_t index);

/// One Philox4x32-10 block.
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter, std::array<std::uint32_t, 2> key);

/// Uniform double in (0, 1) from block `counter`, lane 0 or 1.
double uniform_open(const Stream& s, std::uint64_t counter, int lane);

/// Fill `out` with iid N(0, stddev^2) values: out[i] uses block i/2 (Box-Muller pair).
void fill_normal(const Stream& s, std::span<double> out, double stddev);

}  // namespace shl
