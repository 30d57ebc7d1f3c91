#pragma once

// Periodized corrector hierarchy: phi^n, sigma^n, q^n and the effective
// tensors abar^n, computed order by order on a single realization.

#include <vector>

#include "shl/ellsolve.hpp"
#include "shl/grid.hpp"
#include "shl/randfield.hpp"

namespace shl {

/// All multi-indices of one order n. Component c of `phi` is the multi-index
/// decode(c, n, d); vector-valued families append one trailing index.
struct CorrectorOrder {
  int n = 0;
  Field phi;       // Rank::family(n, d)
  Field grad_phi;  // Rank::family(n, d, {d})
  Field sigma;     // Rank::family(n, d, {d(d-1)/2}), strictly upper triangle
  Field q;         // Rank::family(n, d, {d})
  /// abar^n with indices (i_1, ..., i_{n-1}, r, c): the r-th entry of
  /// abar^n_{i_1...i_{n-1}} e_c.
  ConstTensor abar;
  std::vector<SolveReport> reports;  // one per multi-index
};

struct CorrectorHierarchy {
  TorusGrid grid;
  std::vector<CorrectorOrder> orders;  // orders[k - 1] holds order k

  int order() const { return static_cast<int>(orders.size()); }
  const CorrectorOrder& at(int k) const { return orders.at(static_cast<std::size_t>(k - 1)); }
};

/// Order n from order n - 1 (`prev` is null for n = 1, meaning phi^0 = 1, sigma^0 = 0).
/// Multi-indices are solved on up to `threads` workers.
CorrectorOrder compute_corrector_order(const CoefficientField& a, const CorrectorOrder* prev, int n,
                                       const SolveOptions& opts, int threads = 1);

CorrectorHierarchy compute_hierarchy(const CoefficientField& a, int n_max, const SolveOptions& opts, int threads = 1);

/// Corrector data along a single multi-index path (i_1), (i_1, i_2), ...:
/// enough to reach phi^n_{i_1...i_n} with n solves instead of d + ... + d^n.
struct ChainLink {
  Field phi;       // scalar
  Field grad_phi;  // vector
  Field sigma;     // d(d-1)/2 components
  Field q;         // vector
  std::vector<double> abar_column;  // abar^k_{i_1...i_{k-1}} e_{i_k}
  SolveReport report;
};

std::vector<ChainLink> compute_corrector_chain(const CoefficientField& a, const MultiIndex& path,
                                               const SolveOptions& opts);

/// bbar^n for odd n = 2m + 1 from correctors of order <= m + 1, in the layout of abar^n.
ConstTensor effective_tensor_symmetrized(const CorrectorHierarchy& h, const CoefficientField& a, int n);

/// Symmetrization over all n + 1 indices of abar^n (the part seen by the differential operator).
ConstTensor symmetrized_action(const ConstTensor& abar);

struct AuditRow {
  int order = 0;
  double div_q = 0;          // max over multi-indices of |k.q_hat| / (|k| |q_hat|)
  double div_sigma = 0;      // max ||div sigma - q|| / ||q||
  double skew_defect = 0;    // max |sigma + sigma^T|; zero by storage
  double anchor_phi = 0;     // max |mean phi| / ||phi||
  double anchor_sigma = 0;
  double anchor_q = 0;
};

std::vector<AuditRow> flux_divergence_audit(const CorrectorHierarchy& h);

}  // namespace shl
