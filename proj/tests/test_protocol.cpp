#include <doctest.h>

#include <msf/protocol.hpp>
#include <msf/util.hpp>

#include <random>

using namespace msf;

namespace {

const LatticeGeometry kGeom{18, 10, Boundary::Open, Boundary::Open};

DefectPath horizontal(const std::string& id, int x0, int x1, int y) {
  DefectPath d;
  d.id = id;
  for (int x = x0; x <= x1; ++x) d.sites.push_back({x, y});
  return d;
}

std::set<Site> final_sites(const Schedule& s, const ProtocolProgram& prog,
                           const LatticeGeometry& geom) {
  PotentialField pot = PotentialField::Constant(geom.sites(), prog.params.mu0);
  for (const auto& d : prog.defects)
    for (const Site& st : d.sites) pot[geom.site(st.x, st.y)] = prog.params.mud;
  auto traj = replay_site_sets(s, geom, pot, prog.params.mu0, prog.params.mud);
  return traj.back();
}

std::set<Site> to_set(const DefectPath& d) { return {d.sites.begin(), d.sites.end()}; }

}  // namespace

TEST_CASE("parse: defect declaration and one statement") {
  ProtocolProgram p = parse("defect d1 = (2,4)..(15,4)\nshrink d1 right 1\n");
  REQUIRE(p.defects.size() == 1);
  CHECK(p.defects[0].sites.size() == 14);
  CHECK(p.defects[0].sites.front() == Site{2, 4});
  CHECK(p.defects[0].sites.back() == Site{15, 4});
  REQUIRE(p.statements.size() == 1);
  CHECK(p.statements[0].kind == Statement::Kind::Shrink);
  CHECK(p.statements[0].dir == Direction::Right);
  CHECK(p.statements[0].count == 1);
}

TEST_CASE("parse: undeclared defect is an error with a location") {
  try {
    parse("shrink dX right 1\n");
    FAIL("expected ProtocolError");
  } catch (const ProtocolError& e) {
    CHECK(std::string(e.what()).find("line 1") != std::string::npos);
    CHECK(std::string(e.what()).find("dX") != std::string::npos);
  }
}

TEST_CASE("parse: errors carry line and column") {
  CHECK_THROWS_AS(parse("defect d1 = (2,4)..(15 4)\n"), ProtocolError);
  CHECK_THROWS_AS(parse("bogus d1\n"), ProtocolError);
  CHECK_THROWS_AS(parse("param nope = 3\n"), ProtocolError);
  CHECK_THROWS_AS(parse("defect d1 = (2,4)..(5,7)\n"), ProtocolError);  // not axis-aligned
  CHECK_THROWS_AS(parse("defect d = (2,4)..(4,4)\ndefect d = (2,6)..(4,6)\n"), ProtocolError);
}

TEST_CASE("parse: empty program compiles to an empty schedule") {
  ProtocolProgram p = parse("# just a comment\n\n");
  CHECK(p.statements.empty());
  Schedule s = compile(p, kGeom);
  CHECK(s.events.empty());
  CHECK(s.total_time == 0.0);
}

TEST_CASE("round trip: parse(print(prog)) == prog") {
  const char* sources[] = {
      "defect d1 = (2,4)..(15,4)\nshrink d1 right 2\ngrow d1 right 2\n",
      "param mu0 = 9.5\nparam mud = 0.25\nparam tau_site = 17.5\nparam substeps = 12\n"
      "defect a = (3,3)..(3,8)\n",
      "defect d1 = (2,4)..(12,4)\nexchange d1 at (7,4)\nfuse d1 left\n",
      "defect d1 = (2,3)..(9,3)\ndefect d2 = (2,8)..(9,8)\nexchange d1 d2 at (6,3)\n",
  };
  for (const char* src : sources) {
    ProtocolProgram p1 = parse(src);
    ProtocolProgram p2 = parse(print(p1));
    CHECK(p1 == p2);
  }
}

TEST_CASE("round trip: randomized shrink/grow programs") {
  std::mt19937_64 rng(42);
  for (int trial = 0; trial < 25; ++trial) {
    std::string src = "defect d1 = (4,5)..(13,5)\n";
    const char* dirs[] = {"left", "right", "up", "down"};
    int n = 1 + int(rng() % 5);
    for (int i = 0; i < n; ++i) {
      src += (rng() % 2 ? "shrink d1 " : "grow d1 ");
      src += dirs[rng() % 4];
      src += " " + std::to_string(1 + int(rng() % 3)) + "\n";
    }
    ProtocolProgram p1 = parse(src);
    CHECK(p1 == parse(print(p1)));
  }
}

TEST_CASE("compile: shrink emits one ramp at the released end") {
  ProtocolProgram p = parse("defect d1 = (2,4)..(15,4)\nshrink d1 right 1\n");
  p.params.tau_site = 8.0;
  Schedule s = compile(p, kGeom);
  REQUIRE(s.events.size() == 1);
  CHECK(s.events[0].site == Site{15, 4});
  CHECK(s.events[0].mu_from == p.params.mud);
  CHECK(s.events[0].mu_to == p.params.mu0);
  CHECK(s.events[0].t_start == 0.0);
  CHECK(s.events[0].t_end == 8.0);
  CHECK(s.total_time == 8.0);
}

TEST_CASE("compile: grow beyond the lattice edge fails") {
  ProtocolProgram p = parse("defect d1 = (2,0)..(6,0)\ngrow d1 down 1\n");
  CHECK_THROWS_AS(compile(p, kGeom), ProtocolError);
}

TEST_CASE("compile: grow onto an occupied site fails") {
  ProtocolProgram p = parse(
      "defect d1 = (2,4)..(6,4)\ndefect d2 = (8,4)..(10,4)\ngrow d1 right 2\n");
  CHECK_THROWS_AS(compile(p, kGeom), ProtocolError);
}

TEST_CASE("compile: shrink below one site fails") {
  ProtocolProgram p = parse("defect d1 = (2,4)..(3,4)\nshrink d1 right 2\n");
  CHECK_THROWS_AS(compile(p, kGeom), ProtocolError);
}

TEST_CASE("compile: events are strictly sequential and per-site disjoint") {
  ProtocolProgram p = parse("defect d1 = (2,4)..(12,4)\nexchange d1 at (7,4)\n");
  p.params.tau_site = 4.0;
  Schedule s = compile(p, kGeom);
  for (std::size_t i = 0; i < s.events.size(); ++i) {
    CHECK(s.events[i].t_start == doctest::Approx(4.0 * i));
    CHECK(s.events[i].t_end == doctest::Approx(4.0 * (i + 1)));
  }
  // per-site events disjoint in time follows from strict sequencing
  CHECK(s.total_time == doctest::Approx(4.0 * s.events.size()));
}

TEST_CASE("same-defect exchange: site-set returns to the initial one") {
  ProtocolProgram p = parse("defect d1 = (2,4)..(15,4)\nexchange d1 at (8,4)\n");
  Schedule s = compile(p, kGeom);
  CHECK(final_sites(s, p, kGeom) == to_set(p.defects[0]));
  // replay validates the simple-path invariant at every boundary internally
  CHECK(s.events.size() >= 2 * 13u);
}

TEST_CASE("same-defect exchange twice restores the geometry") {
  ProtocolProgram p = parse(
      "defect d1 = (2,4)..(15,4)\nexchange d1 at (8,4)\nexchange d1 at (8,4)\n");
  Schedule s = compile(p, kGeom);
  CHECK(final_sites(s, p, kGeom) == to_set(p.defects[0]));
}

TEST_CASE("exchange guards") {
  // junction out of span
  CHECK_THROWS_AS(compile(parse("defect d1 = (2,4)..(15,4)\nexchange d1 at (15,4)\n"), kGeom),
                  ProtocolError);
  CHECK_THROWS_AS(compile(parse("defect d1 = (2,4)..(15,4)\nexchange d1 at (8,5)\n"), kGeom),
                  ProtocolError);
  // length-2 defect rejected
  CHECK_THROWS_AS(compile(parse("defect d1 = (2,4)..(3,4)\nexchange d1 at (2,4)\n"), kGeom),
                  ProtocolError);
  // arm cannot fit: junction row at the bottom edge of a shallow lattice
  LatticeGeometry shallow{18, 3, Boundary::Open, Boundary::Open};
  CHECK_THROWS_AS(compile(parse("defect d1 = (2,1)..(15,1)\nexchange d1 at (8,1)\n"), shallow),
                  ProtocolError);
}

TEST_CASE("two-defect exchange: geometry idempotent, connectivity maintained") {
  LatticeGeometry geom{12, 28, Boundary::Open, Boundary::Open};
  ProtocolProgram p = parse(
      "defect d1 = (2,9)..(9,9)\ndefect d2 = (2,18)..(9,18)\nexchange d1 d2 at (6,9)\n");
  Schedule s = compile(p, geom);
  std::set<Site> want = to_set(p.defects[0]);
  for (const Site& st : p.defects[1].sites) want.insert(st);
  CHECK(final_sites(s, p, geom) == want);
}

TEST_CASE("two-defect exchange guards") {
  LatticeGeometry geom{12, 28, Boundary::Open, Boundary::Open};
  // junction column crossing a third defect -> collision
  CHECK_THROWS_AS(
      compile(parse("defect d1 = (2,9)..(9,9)\ndefect d2 = (2,18)..(9,18)\n"
                    "defect d3 = (4,14)..(9,14)\nexchange d1 d2 at (6,9)\n"),
              geom),
      ProtocolError);
  // zero-length junction path (adjacent rows)
  CHECK_THROWS_AS(
      compile(parse("defect d1 = (2,9)..(9,9)\ndefect d2 = (2,10)..(9,10)\n"
                    "exchange d1 d2 at (6,9)\n"),
              geom),
      ProtocolError);
  // junction column out of a span
  CHECK_THROWS_AS(
      compile(parse("defect d1 = (2,9)..(9,9)\ndefect d2 = (2,18)..(9,18)\n"
                    "exchange d1 d2 at (11,9)\n"),
              geom),
      ProtocolError);
}

TEST_CASE("fuse: n-1 events, final defect is a single central site") {
  ProtocolProgram p = parse("defect d1 = (2,4)..(15,4)\nfuse d1 right\n");
  Schedule s = compile(p, kGeom);
  CHECK(s.events.size() == 13);
  std::set<Site> fin = final_sites(s, p, kGeom);
  REQUIRE(fin.size() == 1);
  // ends retract alternately, right first: the survivor sits at mid-path,
  // far from both initial end modes
  CHECK(*fin.begin() == Site{8, 4});
}

TEST_CASE("fuse: single-site defect gives an empty schedule") {
  ProtocolProgram p = parse("defect d1 = (5,5)..(5,5)\nfuse d1 right\n");
  Schedule s = compile(p, kGeom);
  CHECK(s.events.empty());
}

TEST_CASE("builtin generators produce valid, geometry-idempotent programs") {
  DefectPath d = horizontal("d1", 2, 15, 6);
  ProtocolParams params;
  ProtocolProgram p = builtin_exchange_same_defect(kGeom, d, 8, params);
  Schedule s = compile(p, kGeom);
  CHECK(final_sites(s, p, kGeom) == to_set(d));

  ProtocolProgram f = builtin_fuse_to_site(kGeom, d, Direction::Right, params);
  Schedule fs = compile(f, kGeom);
  CHECK(fs.events.size() == 13);
}

TEST_CASE("schedule CSV has the documented header") {
  ProtocolProgram p = parse("defect d1 = (2,4)..(5,4)\nshrink d1 right 1\n");
  std::string csv = schedule_csv(compile(p, kGeom));
  CHECK(csv.rfind("site_x,site_y,t_start,t_end,mu_from,mu_to,shape\n", 0) == 0);
  CHECK(csv.find("smoothstep") != std::string::npos);
}

TEST_CASE("reversed schedule mirrors events and ramps") {
  ProtocolProgram p = parse("defect d1 = (2,4)..(6,4)\nshrink d1 right 2\n");
  p.params.tau_site = 3.0;
  Schedule s = compile(p, kGeom);
  Schedule r = s.reversed();
  REQUIRE(r.events.size() == 2);
  CHECK(r.total_time == s.total_time);
  CHECK(r.events[0].site == s.events[1].site);
  CHECK(r.events[0].mu_from == s.events[1].mu_to);
  CHECK(r.events[0].mu_to == s.events[1].mu_from);
  CHECK(r.events[0].t_start == 0.0);
}

TEST_CASE("ramp shapes") {
  CHECK(ramp_value(RampShape::Linear, 1.0, 3.0, 0.5) == doctest::Approx(2.0));
  CHECK(ramp_value(RampShape::Smoothstep, 1.0, 3.0, 0.0) == 1.0);
  CHECK(ramp_value(RampShape::Smoothstep, 1.0, 3.0, 1.0) == doctest::Approx(3.0).epsilon(1e-15));
  CHECK(ramp_value(RampShape::Smoothstep, 1.0, 3.0, 0.5) == doctest::Approx(2.0).epsilon(1e-15));
  // smooth start: derivative ~ 0 near the endpoints
  const double d0 = ramp_value(RampShape::Smoothstep, 0.0, 1.0, 1e-4);
  CHECK(d0 < 1e-7);
}

TEST_CASE("is_union_of_simple_paths") {
  std::set<Site> path{{0, 0}, {1, 0}, {2, 0}, {2, 1}};
  CHECK(is_union_of_simple_paths(path));
  std::set<Site> two{{0, 0}, {1, 0}, {5, 5}, {5, 6}};
  CHECK(is_union_of_simple_paths(two));
  std::set<Site> tee{{0, 1}, {1, 1}, {2, 1}, {1, 0}};  // branch at (1,1)... degree 3
  CHECK_FALSE(is_union_of_simple_paths(tee));
  std::set<Site> cycle{{0, 0}, {1, 0}, {1, 1}, {0, 1}};
  CHECK_FALSE(is_union_of_simple_paths(cycle));
}
