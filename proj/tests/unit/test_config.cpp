#include <doctest.h>

#include "shl/config.hpp"
#include "shl/error.hpp"
#include "support.hpp"

using namespace shl;
using nlohmann::json;

TEST_SUITE("config") {
  TEST_CASE("defaults and typed views") {
    const RunConfig c = parse_config(json::object(), true);
    CHECK(c.warnings.empty());
    CHECK(c.doc["solver"]["tol"] == 1e-10);
    CHECK(c.doc["ensemble"]["samples"] == 64);
    const EnsembleConfig ec = ensemble_config(c);
    CHECK(ec.eps == std::vector<double>{0.125, 0.0625, 0.03125});
    CHECK(ec.samples == 64);
    CHECK(ec.solver.tol == 1e-10);
    CHECK(ec.cells_per_rho == 8.0);
    CHECK(ec.observable.kind == "trig");
    CHECK(oned_config(c).cells_per_rho == 16.0);
    const TorusGrid g = sample_grid(c);
    CHECK(g.L == 32.0);
    CHECK(g.N == 256);
  }

  TEST_CASE("ladder and range validation") {
    CHECK_THROWS_AS(parse_config(json{{"ensemble", {{"eps", {0.125, 0.25}}}}}, false), Error);
    CHECK_THROWS_AS(parse_config(json{{"ensemble", {{"eps", {0.125, 0.125}}}}}, false), Error);
    CHECK_THROWS_AS(parse_config(json{{"field", {{"lambda", 1.5}}}}, false), Error);
    CHECK_THROWS_AS(parse_config(json{{"ensemble", {{"samples", 1}}}}, false), Error);
    CHECK_THROWS_AS(parse_config(json{{"ensemble", {{"samples_per_rung", {4, 4}}}}}, false), Error);
    CHECK_THROWS_AS(parse_config(json{{"solver", {{"preconditioner", "multigrid"}}}}, false), Error);
    try {
      parse_config(json{{"field", {{"rho", "wide"}}}}, false);
      FAIL("expected a type error");
    } catch (const Error& e) {
      CHECK(std::string(e.what()).find("/field/rho") != std::string::npos);
    }
  }

  TEST_CASE("unknown keys and soft lint: strict vs lax") {
    const json doc{{"field", {{"rhoo", 2.0}}}};
    CHECK_THROWS_AS(parse_config(doc, true), Error);
    const RunConfig lax = parse_config(doc, false);
    REQUIRE(lax.warnings.size() == 1);
    CHECK(lax.warnings[0].find("rhoo") != std::string::npos);

    const json coarse{{"grid", {{"cells_per_rho", 4.0}}}};
    CHECK_THROWS_AS(parse_config(coarse, true), Error);
    CHECK(parse_config(coarse, false).warnings.size() == 1);
    const json odd{{"ensemble", {{"eps", {0.3, 0.1, 0.05}}}}};
    CHECK_THROWS_AS(parse_config(odd, true), Error);
  }

  TEST_CASE("dotted overrides") {
    const RunConfig c = parse_config(json::object(), false,
                                     {"field.rho=0.5", "ensemble.eps=[0.25,0.125,0.0625]", "source.kind=bump", "field.seed=9"});
    CHECK(c.doc["field"]["rho"] == 0.5);
    CHECK(c.doc["ensemble"]["eps"].size() == 3);
    CHECK(c.doc["source"]["kind"] == "bump");
    CHECK(c.seed() == 9);
    CHECK_THROWS_AS(parse_config(json::object(), false, {"field.nope=1"}), Error);
    CHECK_THROWS_AS(parse_config(json::object(), false, {"missing-equals"}), Error);
  }

  TEST_CASE("hash is stable and sensitive") {
    const RunConfig a = parse_config(json::object(), true);
    const RunConfig b = parse_config(json{{"field", {{"rho", 1.0}}}}, true);
    const RunConfig c = parse_config(json::object(), true, {"field.seed=2"});
    CHECK(a.hash().size() == 16);
    CHECK(a.hash() == b.hash());
    CHECK(a.hash() != c.hash());
    CHECK(fnv1a64("") == 0xcbf29ce484222325ull);
    CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cull);
  }

  TEST_CASE("file round trip") {
    const auto dir = test::scratch_dir("config");
    const RunConfig a = parse_config(json::object(), true, {"field.rho=0.5"});
    {
      std::ofstream o(dir / "run.json");
      o << a.doc.dump(2);
    }
    const RunConfig b = load_config(dir / "run.json", true);
    CHECK(b.doc == a.doc);
    CHECK(b.hash() == a.hash());
    CHECK_THROWS_AS(load_config(dir / "absent.json", true), Error);
    {
      std::ofstream o(dir / "broken.json");
      o << "{ \"field\": ";
    }
    CHECK_THROWS_AS(load_config(dir / "broken.json", true), Error);
  }

  TEST_CASE("key listing covers every leaf") {
    const auto keys = config_keys();
    std::map<std::string, std::string> m(keys.begin(), keys.end());
    CHECK(m.at("solver.tol") == "1e-10");
    CHECK(m.at("ensemble.samples_per_rung") == "[]");
    CHECK(m.at("probes.channel") == "[1.0]");
    CHECK(m.count("probes.oned_cells_per_rho") == 1);
  }
}
