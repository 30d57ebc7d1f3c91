#include <doctest.h>

#include <filesystem>

#include "shl/error.hpp"
#include "support.hpp"

using namespace shl;
using shl::test::kTwoPi;

TEST_SUITE("grid") {
  TEST_CASE("make_grid spacing and contract") {
    CHECK(make_grid(2, 1.0, 8).h == 0.125);
    CHECK(make_grid(1, 16.0, 1024).h == 0.015625);
    CHECK_THROWS_AS(make_grid(2, 1.0, 7), Error);
    try {
      make_grid(2, 1.0, 7);
    } catch (const Error& e) {
      CHECK(e.code() == Errc::NonPowerOfTwo);
    }
    CHECK_THROWS(make_grid(4, 1.0, 8));
    CHECK_THROWS(make_grid(2, -1.0, 8));
  }

  TEST_CASE("coords and site round trip with wrapping") {
    const TorusGrid g = make_grid(3, 1.0, 8);
    for (std::size_t s = 0; s < g.points(); s += 37) CHECK(g.site(g.coords(s)) == s);
    CHECK(g.site({-1, 0, 0}) == g.site({7, 0, 0}));
    CHECK(g.site({8, 9, -8}) == g.site({0, 1, 0}));
  }

  TEST_CASE("multi-index encode/decode") {
    for (int d = 1; d <= 3; ++d)
      for (int k = 0; k <= 3; ++k)
        for (std::size_t off = 0; off < ipow(static_cast<std::size_t>(d), k); ++off) CHECK(encode(decode(off, k, d), d) == off);
    CHECK(to_string(MultiIndex{{0, 1}}) == "1,2");
    CHECK(to_string(MultiIndex{}) == "");
    CHECK(Rank::family(2, 3, {3}).components() == 27);
  }

  TEST_CASE("local quadratic average") {
    const TorusGrid g = make_grid(2, 4.0, 32);
    Field c(g, Rank::vector(2));
    for (std::size_t s = 0; s < g.points(); ++s) {
      c.at(0, s) = 3.0;
      c.at(1, s) = -4.0;
    }
    const Field r = local_quadratic_average(c, 0.7);
    for (double v : r.data()) CHECK(v == doctest::Approx(5.0).epsilon(1e-12));

    const TorusGrid g1 = make_grid(1, 2.0, 64);
    const Field s = test::scalar_field(g1, [&](double x, double, double) { return std::sin(kTwoPi * x / g1.L); });
    const Field full = local_quadratic_average(s, g1.L / 2);
    for (double v : full.data()) CHECK(std::abs(v - std::sqrt(0.5)) < 1e-6);

    // Degenerate ball: eps below the lattice spacing.
    const Field point = local_quadratic_average(s, 0.5 * g1.h);
    for (std::size_t i = 0; i < g1.points(); ++i) CHECK(point.at(0, i) == doctest::Approx(std::abs(s.at(0, i))).epsilon(1e-14));
    CHECK_THROWS(local_quadratic_average(s, g1.L));
  }

  TEST_CASE("lp norms") {
    const TorusGrid g = make_grid(2, 2.0, 16);
    Field one(g, Rank::scalar());
    for (double& v : one.data()) v = 1.0;
    CHECK(lp_norm(one, 2.0) == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(lp_norm(Field(g, Rank::scalar()), 2.0) == 0.0);
    Field spike(g, Rank::scalar());
    spike.at(0, 17) = 1.0;
    CHECK(lp_norm(spike, 1.0) == doctest::Approx(g.h * g.h).epsilon(1e-14));
    CHECK(lp_norm(spike, INFINITY) == 1.0);
  }

  TEST_CASE("symmetrize_multiindex") {
    ConstTensor t(2, 2);
    t(MultiIndex{{0, 1}}) = 1.0;
    const ConstTensor s = symmetrize_multiindex(t);
    CHECK(s(MultiIndex{{0, 1}}) == 0.5);
    CHECK(s(MultiIndex{{1, 0}}) == 0.5);
    CHECK(s(MultiIndex{{0, 0}}) == 0.0);

    ConstTensor anti(2, 2);
    anti(MultiIndex{{0, 1}}) = 2.5;
    anti(MultiIndex{{1, 0}}) = -2.5;
    CHECK(symmetrize_multiindex(anti).max_abs() == 0.0);

    ConstTensor r(3, 3);
    for (std::size_t i = 0; i < r.size(); ++i) r[i] = std::sin(1.0 + static_cast<double>(i));
    const ConstTensor once = symmetrize_multiindex(r);
    const ConstTensor twice = symmetrize_multiindex(once);
    for (std::size_t i = 0; i < r.size(); ++i) CHECK(once[i] == twice[i]);
    CHECK(once(MultiIndex{{0, 1, 2}}) == doctest::Approx(once(MultiIndex{{2, 0, 1}})).epsilon(1e-15));
  }

  TEST_CASE("snapshot round trip and errors") {
    const TorusGrid g = make_grid(2, 3.0, 8);
    Field f(g, Rank::family(1, 2, {2}));
    for (std::size_t i = 0; i < f.data().size(); ++i) f.data()[i] = std::cos(0.1 * static_cast<double>(i));
    const auto path = std::filesystem::temp_directory_path() / "shl_grid_snapshot.shlb";
    write_snapshot(path, f);
    const Field back = read_snapshot(path);
    CHECK(back.grid() == g);
    CHECK(back.rank() == f.rank());
    CHECK(test::max_diff(back.data(), f.data()) == 0.0);
    std::filesystem::remove(path);
    CHECK_THROWS_AS(read_snapshot(path), Error);
  }

  TEST_CASE("field arithmetic checks grids") {
    Field a(make_grid(1, 1.0, 8), Rank::scalar());
    Field b(make_grid(1, 2.0, 8), Rank::scalar());
    CHECK_THROWS_AS(a += b, Error);
  }
}
