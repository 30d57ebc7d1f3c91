#include <doctest.h>

#include "shl/correctors.hpp"
#include "support.hpp"

using namespace shl;

namespace {

// a(x) = alpha(x_0) Id with alpha between 0.3 and 1.
CoefficientField laminate(const TorusGrid& g) {
  CoefficientField cf = constant_coefficient(g, 1.0, 0.2);
  for (std::size_t s = 0; s < g.points(); ++s) {
    const double x = g.coords(s)[0] * g.h;
    const double alpha = 0.65 + 0.35 * std::sin(test::kTwoPi * x / g.L) * std::cos(2 * test::kTwoPi * x / g.L);
    for (int i = 0; i < g.d; ++i) cf.a.at(static_cast<std::size_t>(i * g.d + i), s) = alpha;
  }
  return cf;
}

double harmonic_mean(std::span<const double> v) {
  double acc = 0.0;
  for (double x : v) acc += 1.0 / x;
  return static_cast<double>(v.size()) / acc;
}

}  // namespace

TEST_SUITE("correctors") {
  TEST_CASE("constant coefficient: abar^1 = c Id, everything else vanishes") {
    const TorusGrid g = make_grid(2, 4.0, 16);
    const CorrectorHierarchy h = compute_hierarchy(constant_coefficient(g, 0.6, 0.2), 3, {});
    CHECK(h.order() == 3);
    CHECK(h.at(1).abar[0] == doctest::Approx(0.6));
    CHECK(h.at(1).abar[3] == doctest::Approx(0.6));
    CHECK(std::abs(h.at(1).abar[1]) < 1e-14);
    for (int k = 1; k <= 3; ++k) {
      CHECK(max_abs(h.at(k).phi.data()) < 1e-14);
      CHECK(max_abs(h.at(k).sigma.data()) < 1e-14);
      if (k > 1) CHECK(h.at(k).abar.max_abs() < 1e-14);
    }
  }

  TEST_CASE("one dimension: abar^1 is the harmonic mean") {
    const TorusGrid g = make_grid(1, 32.0, 256);
    const CoefficientField a = test::random_coefficient(g, 1.0, 5);
    const CorrectorHierarchy h = compute_hierarchy(a, 1, {});
    CHECK(h.at(1).abar[0] == doctest::Approx(harmonic_mean(a.a.component(0))).epsilon(1e-8));
  }

  TEST_CASE("laminate: harmonic mean across, arithmetic mean along") {
    const TorusGrid g = make_grid(2, 1.0, 64);
    const CoefficientField a = laminate(g);
    const CorrectorHierarchy h = compute_hierarchy(a, 1, {});
    const double arith = lattice_mean(a.a.component(0));
    CHECK(h.at(1).abar[0] == doctest::Approx(harmonic_mean(a.a.component(0))).epsilon(1e-8));
    CHECK(h.at(1).abar[3] == doctest::Approx(arith).epsilon(1e-10));
    CHECK(std::abs(h.at(1).abar[1]) < 1e-10);
    CHECK(std::abs(h.at(1).abar[2]) < 1e-10);
  }

  TEST_CASE("symmetric coefficient: abar^1 symmetric and elliptic, sym abar^2 vanishes") {
    const TorusGrid g = make_grid(2, 16.0, 128);
    const CoefficientField a = test::random_coefficient(g, 1.0, 8);
    const CorrectorHierarchy h = compute_hierarchy(a, 2, {});
    const ConstTensor& a1 = h.at(1).abar;
    CHECK(a1[1] == doctest::Approx(a1[2]).epsilon(1e-8));
    CHECK(a1[0] > 0.2);
    CHECK(a1[3] > 0.2);
    CHECK(h.at(2).abar.order() == 3);
    CHECK(h.at(2).abar.max_abs() > 1e-6);
    CHECK(symmetrized_action(h.at(2).abar).max_abs() <= 1e-6 * a1.max_abs());
  }

  TEST_CASE("hierarchy is reproducible across worker counts") {
    const TorusGrid g = make_grid(2, 8.0, 64);
    const CoefficientField a = test::random_coefficient(g, 1.0, 12);
    const CorrectorHierarchy h1 = compute_hierarchy(a, 2, {}, 1);
    const CorrectorHierarchy h3 = compute_hierarchy(a, 2, {}, 3);
    for (int k = 1; k <= 2; ++k) {
      CHECK(test::max_diff(h1.at(k).phi.data(), h3.at(k).phi.data()) == 0.0);
      CHECK(test::max_diff(h1.at(k).abar.values(), h3.at(k).abar.values()) == 0.0);
    }
  }

  TEST_CASE("chain along one path matches the full hierarchy") {
    const TorusGrid g = make_grid(2, 8.0, 64);
    const CoefficientField a = test::random_coefficient(g, 1.0, 13);
    const CorrectorHierarchy h = compute_hierarchy(a, 2, {});
    const auto chain = compute_corrector_chain(a, MultiIndex{{1, 0}}, {});
    REQUIRE(chain.size() == 2);
    CHECK(test::max_diff(chain[0].phi.data(), h.at(1).phi.component(1)) < 1e-12);
    CHECK(test::max_diff(chain[1].phi.data(), h.at(2).phi.component(encode(MultiIndex{{1, 0}}, 2))) < 1e-12);
    // abar^2_{1} e_0: entries (1, r, 0).
    for (int r = 0; r < 2; ++r)
      CHECK(chain[1].abar_column[r] == doctest::Approx(h.at(2).abar(MultiIndex{{1, r, 0}})).epsilon(1e-12));
  }

  TEST_CASE("symmetrized tensors from lower-order correctors") {
    const TorusGrid g = make_grid(2, 8.0, 64);
    const CoefficientField c = constant_coefficient(g, 0.8, 0.2);
    const CorrectorHierarchy hc = compute_hierarchy(c, 2, {});
    CHECK(effective_tensor_symmetrized(hc, c, 3).max_abs() < 1e-14);

    const CoefficientField a = test::random_coefficient(g, 1.0, 14);
    const CorrectorHierarchy h = compute_hierarchy(a, 3, {});
    const ConstTensor b1 = effective_tensor_symmetrized(h, a, 1);
    CHECK(test::max_diff(b1.values(), symmetrized_action(h.at(1).abar).values()) < 1e-10);
    const ConstTensor b3 = effective_tensor_symmetrized(h, a, 3);
    const ConstTensor s3 = symmetrized_action(h.at(3).abar);
    CHECK(s3.max_abs() > 1e-4);
    CHECK(test::max_diff(symmetrized_action(b3).values(), s3.values()) < 1e-5 * s3.max_abs());
  }

  TEST_CASE("flux audit at 16 cells per correlation length") {
    const TorusGrid g = make_grid(2, 8.0, 128);
    const CoefficientField a = test::random_coefficient(g, 1.0, 15);
    const CorrectorHierarchy h2 = compute_hierarchy(a, 2, {});
    const auto audit = flux_divergence_audit(h2);
    REQUIRE(audit.size() == 2);
    for (const AuditRow& r : audit) {
      CHECK(r.div_q <= 1e-8);
      CHECK(r.div_sigma <= 1e-8);
      CHECK(r.skew_defect == 0.0);
      CHECK(r.anchor_phi <= 1e-12);
      CHECK(r.anchor_sigma <= 1e-12);
    }
    const auto audit1 = flux_divergence_audit(compute_hierarchy(a, 1, {}));
    CHECK(audit1[0].div_q == audit[0].div_q);
    CHECK(audit1[0].div_sigma == audit[0].div_sigma);
  }
}
