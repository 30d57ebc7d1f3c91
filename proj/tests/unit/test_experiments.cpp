#include <doctest.h>

#include "shl/error.hpp"
#include "shl/experiments.hpp"
#include "shl/twoscale.hpp"
#include "support.hpp"

using namespace shl;
using shl::test::kTwoPi;

namespace {

TensorList tensors_of(const CorrectorHierarchy& h) {
  TensorList t;
  for (const auto& o : h.orders) t.push_back(o.abar);
  return t;
}

EnsembleConfig tiny_ensemble() {
  EnsembleConfig c;
  c.eps = {0.25, 0.125, 0.0625};
  c.samples = 6;
  c.min_N = 32;
  c.order = 2;
  c.field.kernel.rho = 0.5;
  c.seed = 3;
  return c;
}

struct Setup {
  TorusGrid micro, macro;
  CoefficientField a, am;
  CorrectorHierarchy h;
  Field f;
  SolveResult u;
};

Setup setup(const CoefficientField& a, double eps, int n) {
  Setup s{a.a.grid(), macro_grid_for(a.a.grid(), eps), a, {}, {}, {}, {}};
  s.am = regrid(a, s.macro);
  s.h = compute_hierarchy(a, n, {});
  s.f = make_source(SourceSpec{}, s.macro);
  s.u = solve_divform_variable(s.am, s.f);
  return s;
}

}  // namespace

TEST_SUITE("experiments") {
  TEST_CASE("sources") {
    const TorusGrid g = make_grid(2, 1.0, 32);
    SourceSpec trig;
    trig.amplitude = 2.0;
    trig.frequency = 2;
    const Field f = make_source(trig, g);
    const std::size_t s = g.site({3, 5, 0});
    CHECK(f.at(0, s) == doctest::Approx(2.0 * std::sin(kTwoPi * 2 * 3 * g.h) * std::cos(kTwoPi * 2 * 5 * g.h)));
    CHECK(max_abs(f.component(1)) == 0.0);
    CHECK(std::abs(lattice_mean(f.component(0))) < 1e-14);

    SourceSpec bump;
    bump.kind = "bump";
    bump.width = 0.25;
    bump.component = 1;
    const Field b = make_source(bump, g);
    CHECK(max_abs(b.component(0)) == 0.0);
    CHECK(b.at(1, g.site({16, 16, 0})) == doctest::Approx(std::exp(-1.0)));
    CHECK(b.at(1, g.site({16, 16 + 8, 0})) == 0.0);
    CHECK(b.at(1, g.site({0, 0, 0})) == 0.0);

    SourceSpec bad;
    bad.kind = "square";
    CHECK_THROWS_AS(make_source(bad, g), Error);
  }

  TEST_CASE("resolution rule") {
    CHECK(resolution_for(8.0, 1.0, 8.0, 64) == 64);
    CHECK(resolution_for(32.0, 0.5, 8.0, 64) == 512);
    CHECK(resolution_for(10.0, 1.0, 8.0, 16) == 128);
    CHECK(resolution_for(1.0, 1.0, 8.0, 64) == 64);
  }

  TEST_CASE("constant coefficient: commutators vanish") {
    const double eps = 0.125;
    const Setup s = setup(constant_coefficient(make_grid(2, 8.0, 32), 0.6, 0.2), eps, 2);
    for (int n = 1; n <= 2; ++n) {
      const TensorList t = tensors_of(s.h);
      const HomogProxy P = assemble_proxy(solve_tilde_hierarchy(t, s.f, n), eps, n);
      const Commutators c = commutator_fields(s.am, s.h, s.u.grad, t, P.potential, eps, n);
      CHECK(max_abs(c.xi.data()) < 1e-10);
      CHECK(max_abs(c.xi0.data()) < 1e-10);
    }
  }

  TEST_CASE("first-order standard commutator closed form") {
    const double eps = 0.125;
    const Setup s = setup(test::random_coefficient(make_grid(2, 8.0, 64), 1.0, 50), eps, 1);
    const TensorList t = tensors_of(s.h);
    const HomogProxy P = assemble_proxy(solve_tilde_hierarchy(t, s.f, 1), eps, 1);
    const Commutators c = commutator_fields(s.am, s.h, s.u.grad, t, P.potential, eps, 1);
    // (a - abar^1)(e_i + grad phi_i) d_i w
    double err = 0.0;
    for (std::size_t x = 0; x < s.macro.points(); ++x) {
      double v[2] = {0, 0};
      for (int i = 0; i < 2; ++i) {
        const double wi = P.grad.at(static_cast<std::size_t>(i), x);
        for (int c2 = 0; c2 < 2; ++c2) v[c2] += ((c2 == i ? 1.0 : 0.0) + s.h.at(1).grad_phi.at(static_cast<std::size_t>(i * 2 + c2), x)) * wi;
      }
      for (int r = 0; r < 2; ++r) {
        double expect = 0.0;
        for (int c2 = 0; c2 < 2; ++c2)
          expect += (s.am.a.at(static_cast<std::size_t>(r * 2 + c2), x) - t[0][static_cast<std::size_t>(r * 2 + c2)]) * v[c2];
        err = std::max(err, std::abs(c.xi0.at(static_cast<std::size_t>(r), x) - expect));
      }
    }
    CHECK(err < 1e-10);
    CHECK_THROWS_AS(commutator_fields(s.am, s.h, s.u.grad, t, P.potential, eps, 2), Error);
  }

  TEST_CASE("first-order standard commutator has mean zero") {
    const double eps = 0.125;
    const TorusGrid micro = make_grid(2, 8.0, 32);
    Welford w;
    for (std::uint64_t m = 0; m < 64; ++m) {
      const Setup s = setup(test::random_coefficient(micro, 1.0, 500 + m), eps, 1);
      const TensorList t = tensors_of(s.h);
      const HomogProxy P = assemble_proxy(solve_tilde_hierarchy(t, s.f, 1), eps, 1);
      const Commutators c = commutator_fields(s.am, s.h, s.u.grad, t, P.potential, eps, 1);
      w.add(c.xi0.at(0, micro.site({5, 9, 0})));
    }
    CHECK(std::abs(w.mean0()) <= 4.0 * w.se0());
  }

  TEST_CASE("ensemble schedule and sample counts") {
    EnsembleConfig c = tiny_ensemble();
    const auto plan = plan_ensemble(c);
    REQUIRE(plan.size() == 3);
    CHECK(plan[0].N == 64);
    CHECK(plan[2].N == 256);
    CHECK(plan[2].L_micro == 16.0);
    CHECK(plan[2].cost_seconds > plan[0].cost_seconds);
    CHECK(samples_at(c, 1) == 6);
    c.samples_per_rung = {4, 6, 8};
    CHECK(samples_at(c, 2) == 8);
  }

  TEST_CASE("ensemble is independent of the worker count") {
    EnsembleConfig c = tiny_ensemble();
    c.eps = {0.25, 0.125};
    const EnsembleReport r1 = run_ensemble(c, 1);
    const EnsembleReport r3 = run_ensemble(c, 3);
    REQUIRE(r1.rungs.size() == 2);
    for (std::size_t i = 0; i < 2; ++i) {
      CHECK(r1.rungs[i].samples == 6);
      CHECK(r1.rungs[i].e_strong == r3.rungs[i].e_strong);
      CHECK(r1.rungs[i].observable == r3.rungs[i].observable);
      CHECK(r1.rungs[i].orders[1].e_mean_proj == r3.rungs[i].orders[1].e_mean_proj);
      CHECK(test::max_diff(r1.rungs[i].mean_grad.data(), r3.rungs[i].mean_grad.data()) == 0.0);
      for (double m : r1.rungs[i].residual_mismatch) CHECK(m < 1e-4);
    }
  }

  TEST_CASE("antithetic pairs share one noise with opposite sign") {
    EnsembleConfig c = tiny_ensemble();
    c.eps = {0.25};
    c.order = 1;
    c.strong = false;
    c.antithetic = true;
    c.field.map = CoefficientMap::ScalarSigmoid;
    const EnsembleReport r = run_ensemble(c, 1);
    REQUIRE(r.rungs[0].observable.size() == 6);
    // G and -G give a and lambda + 1 - a, so the pair is never identical.
    CHECK(r.rungs[0].observable[0] != r.rungs[0].observable[1]);
    c.samples = 5;
    CHECK_THROWS_AS(run_ensemble(c, 1), Error);
  }

  TEST_CASE("constant probe pairs to zero") {
    ProbeConfig p;
    p.L_over_rho = 32;
    p.samples = 6;
    p.target_order = 1;
    p.ray = {2, 4, 8};
    p.constant_probe = true;
    const ProbeReport r = weak_pairing_probe(p, 1);
    REQUIRE(r.rows.size() == 3);
    for (const ProbeRow& row : r.rows) {
      CHECK(std::abs(row.weak) <= std::max(3.0 * row.weak_se, 1e-12));
      CHECK(row.strong > 0.0);
    }
    p.ray = {20};
    CHECK_THROWS_AS(weak_pairing_probe(p, 1), Error);
  }

  TEST_CASE("1D suite on a short torus") {
    OneDConfig c;
    c.L_over_rho = 64;
    c.samples = 4;
    c.growth_x = {2, 4, 8, 16};
    const OneDReport r = one_d_exact_suite(c, 1);
    CHECK(r.samples == 4);
    CHECK(r.max_phi_error <= 1e-8);
    CHECK(r.max_abar_rel_error <= 1e-10);
    CHECK(r.growth.size() == 4);
  }
}
