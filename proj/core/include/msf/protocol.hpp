#pragma once

#include <optional>
#include <set>
#include <string>
#include <vector>

#include "msf/lattice.hpp"

namespace msf {

struct Site {
  int x = 0;
  int y = 0;
  auto operator<=>(const Site&) const = default;
};

// Connected 4-neighbor path of lattice sites, pairwise distinct.
struct DefectPath {
  std::string id;
  std::vector<Site> sites;

  void validate(const LatticeGeometry& geom) const;
};

enum class Direction { Left, Right, Up, Down };
Site step(Site s, Direction d);
std::string to_string(Direction d);

struct Statement {
  enum class Kind { Shrink, Grow, Exchange, Fuse } kind;
  std::string defect;               // first operand
  std::string defect2;              // Exchange only, may be empty (same-defect)
  Direction dir = Direction::Left;  // Shrink/Grow/Fuse
  int count = 1;                    // Shrink/Grow
  Site at{};                        // Exchange junction
  int line = 0;
};

struct ProtocolParams {
  double mu0 = 10.0;
  double mud = 0.1;
  double tau_site = 32.0;  // ramp duration per site, units of 1/J
  int substeps = 40;       // integration substeps per ramp
};

struct ProtocolProgram {
  std::vector<DefectPath> defects;
  ProtocolParams params;
  std::vector<Statement> statements;

  const DefectPath* find_defect(const std::string& id) const;
  bool operator==(const ProtocolProgram&) const;
};

// Line-oriented protocol language:
//   defect IDENT = (x1,y1)..(x2,y2)        axis-aligned inclusive path
//   param (mu0|mud|tau_site|substeps) = NUMBER
//   shrink IDENT (left|right|up|down) INT
//   grow   IDENT (left|right|up|down) INT
//   exchange IDENT [IDENT] at (x,y)
//   fuse IDENT (left|right)
//   # comment
ProtocolProgram parse(const std::string& source);
std::string print(const ProtocolProgram& prog);

enum class RampShape { Smoothstep, Linear };

// mu(t) between mu_from and mu_to for t/tau in [0,1].
double ramp_value(RampShape shape, double mu_from, double mu_to, double frac);

struct RampEvent {
  Site site;
  double t_start = 0.0;
  double t_end = 0.0;
  double mu_from = 0.0;
  double mu_to = 0.0;
  RampShape shape = RampShape::Smoothstep;
};

// Time-ordered per-site ramps; strictly sequential (one site at a time).
struct Schedule {
  double total_time = 0.0;
  std::vector<RampEvent> events;

  Schedule reversed() const;  // time-reversed schedule (mu_from/mu_to swapped)
};

std::string schedule_csv(const Schedule& s);

// Compiles a program to a Schedule. Exchange and fuse statements are lowered
// through the builtin generators below. Maintains and checks the invariant
// that the defect-site set is a disjoint union of simple paths at every event
// boundary; throws ProtocolError on violations (moves off the lattice,
// collisions, ambiguous grows).
Schedule compile(const ProtocolProgram& prog, const LatticeGeometry& geom,
                 RampShape shape = RampShape::Smoothstep);

// --- Builtin experiment generators -----------------------------------------
//
// The figures fix these sequences only pictorially, so the decomposition is
// documented here and produced as an ordinary program (one exchange/fuse
// statement) that compile() lowers to an editable schedule.

// Exchange the two end modes of one defect through a T-junction: retract the
// left end to the junction, walk it down the vertical arm, carry the right
// end across the top row to the far left, bring the parked end back up and
// out to the right. Every intermediate site-set is one simple L/I-shaped path.
ProtocolProgram builtin_exchange_same_defect(const LatticeGeometry& geom, const DefectPath& defect,
                                             int junction_column, const ProtocolParams& params);

// Exchange the junction-column ends of two parallel horizontal defects via a
// vertical connector: join end-to-end through the connector, cut the merged
// path one site above the lower row, retract the connector, regrow both
// defects. The single cut event is the only non-end move.
ProtocolProgram builtin_exchange_two_defects(const LatticeGeometry& geom, const DefectPath& d1,
                                             const DefectPath& d2, int junction_column,
                                             const ProtocolParams& params,
                                             int min_intermediate_len = 3);

// Shrinks the defect from target_end until one site remains (the site at the
// opposite end).
ProtocolProgram builtin_fuse_to_site(const LatticeGeometry& geom, const DefectPath& defect,
                                     Direction target_end, const ProtocolParams& params);

// Replays a schedule against a site-set simulator; returns the defect site-set
// trajectory at event boundaries and checks the path invariant throughout.
std::vector<std::set<Site>> replay_site_sets(const Schedule& s, const LatticeGeometry& geom,
                                             const PotentialField& initial, double mu0, double mud);

// True if every connected component of `sites` is a simple path (all degrees
// <= 2, no cycles).
bool is_union_of_simple_paths(const std::set<Site>& sites);

}  // namespace msf
