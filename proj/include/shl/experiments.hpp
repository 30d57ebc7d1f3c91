#pragma once

// Monte-Carlo campaigns over an eps ladder, corrector probes and the 1D suite.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "shl/correctors.hpp"
#include "shl/homogenized.hpp"
#include "shl/randfield.hpp"
#include "shl/stats.hpp"
#include "shl/twoscale.hpp"

namespace shl {

/// Smooth macro data on the unit torus: the load f and the observable g.
struct SourceSpec {
  std::string kind = "trig";  // "trig" or "bump"
  double amplitude = 1.0;
  int frequency = 1;          // trig: f_1 = A sin(2 pi k x_1) prod_{a>1} cos(2 pi k x_a)
  double width = 0.25;        // bump: support radius
  std::vector<double> center;  // bump: defaults to the torus center
  int component = 0;          // bump: direction of the vector field
};

Field make_source(const SourceSpec& spec, const TorusGrid& macro);

struct FieldSpec {
  KernelSpec kernel;
  double lambda = 0.2;
  CoefficientMap map = CoefficientMap::ScalarSigmoid;
  /// When set, a = constant * Id instead of a random field.
  double constant = 0.0;
};

/// One realization a on `grid` from `stream`.
CoefficientField sample_coefficient(const FieldSpec& spec, const TorusGrid& grid, const Stream& stream);
/// With the Gaussian field that produced it (empty for constant coefficients).
std::pair<CoefficientField, Field> sample_coefficient_with_field(const FieldSpec& spec, const TorusGrid& grid,
                                                                 const Stream& stream);

/// Smallest power of two >= max(min_N, cells_per_rho * L / rho).
int resolution_for(double L, double rho, double cells_per_rho, int min_N);

struct EnsembleConfig {
  int d = 2;
  std::vector<double> eps{0.125, 0.0625, 0.03125};
  std::size_t samples = 64;
  std::vector<std::size_t> samples_per_rung;  // optional per-eps override of `samples`
  int order = 1;  // proxy / expansion order n
  double p = 2.0;
  double cells_per_rho = 8.0;
  int min_N = 64;
  FieldSpec field;
  SolveOptions solver;
  SourceSpec source;
  SourceSpec observable;  // g in int g . grad u
  bool strong = true;     // per-sample two-scale errors and commutators (needs the hierarchy up to order)
  bool antithetic = false;  // pair samples 2j, 2j + 1 with noise xi, -xi
  std::uint64_t seed = 1;
  int max_failures = 3;
};

struct OrderStats {
  int n = 0;
  double e_mean = 0, e_mean_se = 0;            // raw sample mean, SE = norm of the pointwise SE field
  double e_mean_proj = 0, e_mean_proj_se = 0;  // mean restricted to the Fourier support of f, jackknife SE
  double e_flux = 0, e_flux_se = 0;
  double e_flux_proj = 0, e_flux_proj_se = 0;
};

struct RungReport {
  double eps = 0;
  int N = 0;
  double L_micro = 0;
  std::size_t samples = 0;  // completed samples (an antithetic pair counts twice)
  std::size_t failures = 0;
  bool aborted = false;
  std::vector<double> e_strong;  // per sample, order n
  double e_strong_mean = 0, e_strong_se = 0;
  std::vector<OrderStats> orders;  // n = 1..order
  std::vector<double> observable;  // per sample int g . grad u
  double var_obs = 0, var_obs_se = 0;
  std::vector<double> residual_mismatch;  // per sample, when strong
  double xi0_mean_norm = 0, xi0_se_norm = 0;  // || mean Xi^{o,n} ||, || SE field ||
  double xi_obs_mean = 0, xi_obs_se = 0;      // int g . Xi^n over samples
  TensorList tensors;                          // sample means of abar^k_L
  TensorList tensors_se;
  int cg_iterations_max = 0;
  Field mean_grad;                             // streamed sample mean of grad u (macro grid)
};

struct EnsembleReport {
  EnsembleConfig config;
  std::vector<RungReport> rungs;
  std::map<std::string, RateFit> fits;
};

std::size_t samples_at(const EnsembleConfig& cfg, std::size_t rung);

/// Per-eps schedule: (eps, N, L_micro) and a heuristic cost in FFT units.
struct PlannedRung {
  double eps;
  int N;
  double L_micro;
  double solves_per_sample;
  double cost_seconds;
};
std::vector<PlannedRung> plan_ensemble(const EnsembleConfig& cfg);

EnsembleReport run_ensemble(const EnsembleConfig& cfg, int threads = 1);

/// Fits of e_strong, e_mean (per order), e_mean_proj and var_obs against eps.
void fit_report(EnsembleReport& report);

/// Xi^n = (a - Abar^n) grad u and the standard commutator Xi^{o,n}[grad w].
struct Commutators {
  Field xi;
  Field xi0;
};

Commutators commutator_fields(const CoefficientField& a_macro, const CorrectorHierarchy& h, const Field& u_grad,
                              const TensorList& tensors, const Spectrum& w_potential, double eps, int n);

struct ProbeConfig {
  int d = 2;
  double L_over_rho = 128;
  double cells_per_rho = 8;
  std::size_t samples = 512;
  int target_order = 2;    // phi^n along the path (1, 1, ..., 1)
  double radius = 1.0;     // probe ball radius rho_X, in units of rho
  double anchor_radius = 1.0;  // re-anchoring ball, in units of rho
  std::vector<double> channel{1.0};
  std::vector<double> ray;  // distances in units of rho; default 4, 8, ..., L/4
  FieldSpec field;
  SolveOptions solver;
  std::uint64_t seed = 7;
  bool constant_probe = false;  // X = 1
};

struct ProbeRow {
  double r = 0;
  double weak = 0, weak_se = 0;      // E[X (phi(x) - avg_B phi)]
  double strong = 0, strong_se = 0;  // E[|phi(x) - avg_B phi|^2]^{1/2}
};

struct ProbeReport {
  ProbeConfig config;
  int N = 0;
  std::vector<ProbeRow> rows;
  RateFit weak_fit, strong_fit;
  std::size_t samples = 0;
};

ProbeReport weak_pairing_probe(const ProbeConfig& cfg, int threads = 1);

struct OneDConfig {
  double L_over_rho = 512;
  double cells_per_rho = 16;  // at 8 the Nyquist content of 1/a limits phi agreement to ~5e-8
  std::size_t samples = 64;
  FieldSpec field;
  SolveOptions solver;
  std::vector<double> growth_x{8, 16, 32, 64};  // in units of rho
  std::uint64_t seed = 11;
};

struct OneDReport {
  OneDConfig config;
  int N = 0;
  double max_phi_error = 0;      // max over samples of max |phi_solver - phi_explicit|
  double max_abar_rel_error = 0; // |abar^1 - harmonic mean| / harmonic mean
  std::vector<std::pair<double, double>> growth;  // (x, std of phi(y + x) - phi(y))
  RateFit growth_fit;
  std::size_t samples = 0;
};

OneDReport one_d_exact_suite(const OneDConfig& cfg, int threads = 1);

/// phi^1 from the explicit 1D formula: spectral antiderivative of
/// (1/a - <1/a>) / <1/a>, zero mean.
std::vector<double> explicit_1d_corrector(const CoefficientField& a);

}  // namespace shl
