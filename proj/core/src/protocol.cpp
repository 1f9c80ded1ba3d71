#include "msf/protocol.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <sstream>

#include "msf/util.hpp"

namespace msf {

Site step(Site s, Direction d) {
  switch (d) {
    case Direction::Left: return {s.x - 1, s.y};
    case Direction::Right: return {s.x + 1, s.y};
    case Direction::Up: return {s.x, s.y + 1};
    case Direction::Down: return {s.x, s.y - 1};
  }
  return s;
}

std::string to_string(Direction d) {
  switch (d) {
    case Direction::Left: return "left";
    case Direction::Right: return "right";
    case Direction::Up: return "up";
    case Direction::Down: return "down";
  }
  return "?";
}

static bool adjacent(Site a, Site b) { return std::abs(a.x - b.x) + std::abs(a.y - b.y) == 1; }

void DefectPath::validate(const LatticeGeometry& geom) const {
  if (sites.empty()) throw ConfigError("defect '" + id + "' has no sites");
  std::set<Site> seen;
  for (std::size_t i = 0; i < sites.size(); ++i) {
    const Site& s = sites[i];
    if (!geom.inside(s.x, s.y))
      throw ConfigError("defect '" + id + "' leaves the lattice at (" + std::to_string(s.x) + "," +
                        std::to_string(s.y) + ")");
    if (!seen.insert(s).second) throw ConfigError("defect '" + id + "' repeats a site");
    if (i > 0 && !adjacent(sites[i - 1], s))
      throw ConfigError("defect '" + id + "' has non-adjacent consecutive sites");
  }
}

const DefectPath* ProtocolProgram::find_defect(const std::string& id) const {
  for (const auto& d : defects)
    if (d.id == id) return &d;
  return nullptr;
}

static bool statements_equal(const Statement& a, const Statement& b) {
  return a.kind == b.kind && a.defect == b.defect && a.defect2 == b.defect2 && a.dir == b.dir &&
         a.count == b.count && a.at == b.at;  // line numbers intentionally ignored
}

bool ProtocolProgram::operator==(const ProtocolProgram& o) const {
  if (defects.size() != o.defects.size() || statements.size() != o.statements.size()) return false;
  for (std::size_t i = 0; i < defects.size(); ++i)
    if (defects[i].id != o.defects[i].id || defects[i].sites != o.defects[i].sites) return false;
  if (params.mu0 != o.params.mu0 || params.mud != o.params.mud ||
      params.tau_site != o.params.tau_site || params.substeps != o.params.substeps)
    return false;
  for (std::size_t i = 0; i < statements.size(); ++i)
    if (!statements_equal(statements[i], o.statements[i])) return false;
  return true;
}

// ---- Lexer / parser ---------------------------------------------------------

namespace {

struct Token {
  enum class Kind { Ident, Number, Punct, End } kind = Kind::End;
  std::string text;
  int col = 0;
};

class LineLexer {
 public:
  LineLexer(const std::string& line, int lineno) : line_(line), lineno_(lineno) { advance(); }

  const Token& peek() const { return tok_; }
  Token take() {
    Token t = tok_;
    advance();
    return t;
  }

  [[noreturn]] void fail(const std::string& msg, int col) const {
    throw ProtocolError("line " + std::to_string(lineno_) + ", column " + std::to_string(col) +
                        ": " + msg);
  }

  Token expect_punct(const std::string& p) {
    if (tok_.kind != Token::Kind::Punct || tok_.text != p)
      fail("expected '" + p + "'", tok_.col);
    return take();
  }
  std::string expect_ident(const char* what) {
    if (tok_.kind != Token::Kind::Ident) fail(std::string("expected ") + what, tok_.col);
    return take().text;
  }
  int expect_int(const char* what) {
    if (tok_.kind != Token::Kind::Number || tok_.text.find_first_of(".eE") != std::string::npos)
      fail(std::string("expected integer ") + what, tok_.col);
    return std::stoi(take().text);
  }
  double expect_number(const char* what) {
    if (tok_.kind != Token::Kind::Number) fail(std::string("expected number ") + what, tok_.col);
    return std::stod(take().text);
  }
  void expect_end() {
    if (tok_.kind != Token::Kind::End) fail("unexpected trailing input", tok_.col);
  }

 private:
  void advance() {
    while (pos_ < line_.size() && std::isspace(static_cast<unsigned char>(line_[pos_]))) ++pos_;
    tok_.col = static_cast<int>(pos_) + 1;
    if (pos_ >= line_.size() || line_[pos_] == '#') {
      tok_ = {Token::Kind::End, "", tok_.col};
      return;
    }
    const char c = line_[pos_];
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::size_t b = pos_;
      while (pos_ < line_.size() &&
             (std::isalnum(static_cast<unsigned char>(line_[pos_])) || line_[pos_] == '_'))
        ++pos_;
      tok_ = {Token::Kind::Ident, line_.substr(b, pos_ - b), tok_.col};
      return;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '-' || c == '+') {
      std::size_t b = pos_;
      ++pos_;
      auto dot_starts_range = [&] {  // ".." is the range operator, not a decimal point
        return line_[pos_] == '.' && pos_ + 1 < line_.size() && line_[pos_ + 1] == '.';
      };
      while (pos_ < line_.size() &&
             (std::isdigit(static_cast<unsigned char>(line_[pos_])) ||
              (line_[pos_] == '.' && !dot_starts_range()) || line_[pos_] == 'e' ||
              line_[pos_] == 'E' ||
              ((line_[pos_] == '+' || line_[pos_] == '-') &&
               (line_[pos_ - 1] == 'e' || line_[pos_ - 1] == 'E'))))
        ++pos_;
      tok_ = {Token::Kind::Number, line_.substr(b, pos_ - b), tok_.col};
      return;
    }
    if (c == '.' && pos_ + 1 < line_.size() && line_[pos_ + 1] == '.') {
      pos_ += 2;
      tok_ = {Token::Kind::Punct, "..", tok_.col};
      return;
    }
    ++pos_;
    tok_ = {Token::Kind::Punct, std::string(1, c), tok_.col};
  }

  std::string line_;
  int lineno_;
  std::size_t pos_ = 0;
  Token tok_;
};

Site parse_site(LineLexer& lx) {
  lx.expect_punct("(");
  int x = lx.expect_int("x coordinate");
  lx.expect_punct(",");
  int y = lx.expect_int("y coordinate");
  lx.expect_punct(")");
  return {x, y};
}

Direction parse_direction(LineLexer& lx) {
  const Token t = lx.peek();
  std::string s = lx.expect_ident("direction (left|right|up|down)");
  if (s == "left") return Direction::Left;
  if (s == "right") return Direction::Right;
  if (s == "up") return Direction::Up;
  if (s == "down") return Direction::Down;
  lx.fail("unknown direction '" + s + "'", t.col);
}

std::vector<Site> axis_aligned_sites(Site a, Site b, int lineno) {
  std::vector<Site> out;
  if (a.x != b.x && a.y != b.y)
    throw ProtocolError("line " + std::to_string(lineno) + ": defect path must be axis-aligned");
  int dx = (b.x > a.x) - (b.x < a.x);
  int dy = (b.y > a.y) - (b.y < a.y);
  Site s = a;
  out.push_back(s);
  while (s != b) {
    s = {s.x + dx, s.y + dy};
    out.push_back(s);
  }
  return out;
}

}  // namespace

ProtocolProgram parse(const std::string& source) {
  ProtocolProgram prog;
  std::istringstream in(source);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    LineLexer lx(line, lineno);
    if (lx.peek().kind == Token::Kind::End) continue;
    const Token head = lx.peek();
    const std::string kw = lx.expect_ident("keyword");

    if (kw == "defect") {
      DefectPath d;
      d.id = lx.expect_ident("defect name");
      if (prog.find_defect(d.id))
        lx.fail("defect '" + d.id + "' already declared", head.col);
      lx.expect_punct("=");
      Site a = parse_site(lx);
      lx.expect_punct("..");
      Site b = parse_site(lx);
      lx.expect_end();
      d.sites = axis_aligned_sites(a, b, lineno);
      prog.defects.push_back(std::move(d));
    } else if (kw == "param") {
      const Token nt = lx.peek();
      std::string name = lx.expect_ident("parameter name");
      lx.expect_punct("=");
      double v = lx.expect_number("parameter value");
      lx.expect_end();
      if (name == "mu0")
        prog.params.mu0 = v;
      else if (name == "mud")
        prog.params.mud = v;
      else if (name == "tau_site")
        prog.params.tau_site = v;
      else if (name == "substeps")
        prog.params.substeps = static_cast<int>(v);
      else
        lx.fail("unknown parameter '" + name + "'", nt.col);
    } else if (kw == "shrink" || kw == "grow") {
      Statement st;
      st.kind = kw == "shrink" ? Statement::Kind::Shrink : Statement::Kind::Grow;
      st.line = lineno;
      const Token dt = lx.peek();
      st.defect = lx.expect_ident("defect name");
      if (!prog.find_defect(st.defect)) lx.fail("undeclared defect '" + st.defect + "'", dt.col);
      st.dir = parse_direction(lx);
      st.count = lx.expect_int("site count");
      lx.expect_end();
      if (st.count < 1) lx.fail("site count must be >= 1", dt.col);
      prog.statements.push_back(st);
    } else if (kw == "exchange") {
      Statement st;
      st.kind = Statement::Kind::Exchange;
      st.line = lineno;
      const Token dt = lx.peek();
      st.defect = lx.expect_ident("defect name");
      if (!prog.find_defect(st.defect)) lx.fail("undeclared defect '" + st.defect + "'", dt.col);
      if (lx.peek().kind == Token::Kind::Ident && lx.peek().text != "at") {
        const Token d2 = lx.peek();
        st.defect2 = lx.expect_ident("defect name");
        if (!prog.find_defect(st.defect2))
          lx.fail("undeclared defect '" + st.defect2 + "'", d2.col);
      }
      const Token att = lx.peek();
      if (lx.expect_ident("'at'") != "at") lx.fail("expected 'at'", att.col);
      st.at = parse_site(lx);
      lx.expect_end();
      prog.statements.push_back(st);
    } else if (kw == "fuse") {
      Statement st;
      st.kind = Statement::Kind::Fuse;
      st.line = lineno;
      const Token dt = lx.peek();
      st.defect = lx.expect_ident("defect name");
      if (!prog.find_defect(st.defect)) lx.fail("undeclared defect '" + st.defect + "'", dt.col);
      st.dir = parse_direction(lx);
      if (st.dir != Direction::Left && st.dir != Direction::Right)
        lx.fail("fuse end must be left or right", head.col);
      lx.expect_end();
      prog.statements.push_back(st);
    } else {
      lx.fail("unknown keyword '" + kw + "'", head.col);
    }
  }
  return prog;
}

std::string print(const ProtocolProgram& prog) {
  std::ostringstream out;
  out << "param mu0 = " << fmt_g17(prog.params.mu0) << "\n";
  out << "param mud = " << fmt_g17(prog.params.mud) << "\n";
  out << "param tau_site = " << fmt_g17(prog.params.tau_site) << "\n";
  out << "param substeps = " << prog.params.substeps << "\n";
  for (const auto& d : prog.defects) {
    const Site a = d.sites.front();
    const Site b = d.sites.back();
    auto expect = axis_aligned_sites(a, b, 0);
    if (expect != d.sites)
      throw ProtocolError("defect '" + d.id + "' is not axis-aligned; not printable");
    out << "defect " << d.id << " = (" << a.x << "," << a.y << ")..(" << b.x << "," << b.y << ")\n";
  }
  for (const auto& st : prog.statements) {
    switch (st.kind) {
      case Statement::Kind::Shrink:
        out << "shrink " << st.defect << " " << to_string(st.dir) << " " << st.count << "\n";
        break;
      case Statement::Kind::Grow:
        out << "grow " << st.defect << " " << to_string(st.dir) << " " << st.count << "\n";
        break;
      case Statement::Kind::Exchange:
        out << "exchange " << st.defect;
        if (!st.defect2.empty()) out << " " << st.defect2;
        out << " at (" << st.at.x << "," << st.at.y << ")\n";
        break;
      case Statement::Kind::Fuse:
        out << "fuse " << st.defect << " " << to_string(st.dir) << "\n";
        break;
    }
  }
  return out.str();
}

double ramp_value(RampShape shape, double mu_from, double mu_to, double frac) {
  frac = std::clamp(frac, 0.0, 1.0);
  double w = frac;
  if (shape == RampShape::Smoothstep) {
    const double s = std::sin(0.5 * std::numbers::pi * frac);
    w = s * s;
  }
  return mu_from + (mu_to - mu_from) * w;
}

Schedule Schedule::reversed() const {
  Schedule r;
  r.total_time = total_time;
  r.events.reserve(events.size());
  for (auto it = events.rbegin(); it != events.rend(); ++it) {
    RampEvent e = *it;
    std::swap(e.mu_from, e.mu_to);
    const double t0 = total_time - it->t_end;
    e.t_end = t0 + (it->t_end - it->t_start);
    e.t_start = t0;
    r.events.push_back(e);
  }
  return r;
}

std::string schedule_csv(const Schedule& s) {
  std::ostringstream out;
  out << "site_x,site_y,t_start,t_end,mu_from,mu_to,shape\n";
  for (const auto& e : s.events) {
    out << e.site.x << "," << e.site.y << "," << fmt_g17(e.t_start) << "," << fmt_g17(e.t_end)
        << "," << fmt_g17(e.mu_from) << "," << fmt_g17(e.mu_to) << ","
        << (e.shape == RampShape::Smoothstep ? "smoothstep" : "linear") << "\n";
  }
  return out.str();
}

namespace {

// validity of a defect set: every component is a tree (no cycles) that is a
// simple path, except that one transient trijunction per component is allowed
// (the two-defect exchange passes through a T-shaped joined configuration)
bool valid_defect_components(const std::set<Site>& sites, bool allow_tee) {
  std::set<Site> left(sites);
  while (!left.empty()) {
    std::vector<Site> stack{*left.begin()};
    left.erase(left.begin());
    int vertices = 0;
    int edge_ends = 0;
    int branch_points = 0;
    std::vector<Site> comp;
    while (!stack.empty()) {
      Site s = stack.back();
      stack.pop_back();
      ++vertices;
      comp.push_back(s);
      for (Direction d : {Direction::Left, Direction::Right, Direction::Up, Direction::Down}) {
        Site n = step(s, d);
        if (sites.count(n)) ++edge_ends;
        if (auto it = left.find(n); it != left.end()) {
          left.erase(it);
          stack.push_back(n);
        }
      }
    }
    const int edges = edge_ends / 2;
    if (edges != vertices - 1) return false;  // cycle
    for (const Site& s : comp) {
      int deg = 0;
      for (Direction d : {Direction::Left, Direction::Right, Direction::Up, Direction::Down})
        if (sites.count(step(s, d))) ++deg;
      if (deg > 3) return false;
      if (deg == 3) ++branch_points;
    }
    if (branch_points > (allow_tee ? 1 : 0)) return false;
  }
  return true;
}

}  // namespace

bool is_union_of_simple_paths(const std::set<Site>& sites) {
  return valid_defect_components(sites, false);
}

// ---- Compiler ---------------------------------------------------------------

namespace {

struct CompileState {
  const LatticeGeometry& geom;
  const ProtocolParams& params;
  RampShape shape;
  Schedule sched;
  std::map<std::string, std::vector<Site>> paths;
  std::set<Site> occupied;
  int next_split = 0;

  [[noreturn]] void fail(int line, const std::string& msg) const {
    throw ProtocolError((line > 0 ? "line " + std::to_string(line) + ": " : "") + msg);
  }

  bool allow_tee = false;  // two-defect joins pass through one trijunction

  void emit(Site s, double mu_from, double mu_to) {
    RampEvent e;
    e.site = s;
    e.t_start = sched.total_time;
    e.t_end = e.t_start + params.tau_site;
    e.mu_from = mu_from;
    e.mu_to = mu_to;
    e.shape = shape;
    sched.events.push_back(e);
    sched.total_time = e.t_end;
    if (!valid_defect_components(occupied, allow_tee))
      throw ProtocolError("internal: defect set is not a union of simple paths");
  }

  std::vector<Site>& path(const std::string& id, int line) {
    auto it = paths.find(id);
    if (it == paths.end()) fail(line, "undeclared defect '" + id + "'");
    return it->second;
  }

  static Direction outward(const std::vector<Site>& p, bool back) {
    const Site end = back ? p.back() : p.front();
    const Site inner = back ? p[p.size() - 2] : p[1];
    if (end.x > inner.x) return Direction::Right;
    if (end.x < inner.x) return Direction::Left;
    if (end.y > inner.y) return Direction::Up;
    return Direction::Down;
  }

  // free = inside lattice, unoccupied, and adjacent only to `from` within the
  // defect set (no merges or branch points from user-level grows)
  bool grow_target_ok(Site target, Site from) const {
    if (!geom.inside(target.x, target.y)) return false;
    if (occupied.count(target)) return false;
    for (Direction d : {Direction::Left, Direction::Right, Direction::Up, Direction::Down}) {
      Site n = step(target, d);
      if (n != from && occupied.count(n)) return false;
    }
    return true;
  }

  void shrink_end(std::vector<Site>& p, bool back) {
    Site s = back ? p.back() : p.front();
    if (back)
      p.pop_back();
    else
      p.erase(p.begin());
    occupied.erase(s);
    emit(s, params.mud, params.mu0);
  }

  void extend_end(std::vector<Site>& p, bool back, Site target, int line) {
    if (!geom.inside(target.x, target.y))
      fail(line, "grow moves off the lattice at (" + std::to_string(target.x) + "," +
                     std::to_string(target.y) + ")");
    if (occupied.count(target))
      fail(line, "grow onto an occupied defect site (" + std::to_string(target.x) + "," +
                     std::to_string(target.y) + ")");
    const Site from = back ? p.back() : p.front();
    if (!grow_target_ok(target, from))
      fail(line, "grow would merge or branch the defect at (" + std::to_string(target.x) + "," +
                     std::to_string(target.y) + ")");
    if (back)
      p.push_back(target);
    else
      p.insert(p.begin(), target);
    occupied.insert(target);
    emit(target, params.mu0, params.mud);
  }

  // Merge-permitted extension used only by the two-defect join: target may be
  // adjacent to exactly one other path end.
  void extend_end_allow_merge(std::vector<Site>& p, bool back, Site target, int line) {
    if (!geom.inside(target.x, target.y)) fail(line, "grow moves off the lattice");
    if (occupied.count(target)) fail(line, "grow onto an occupied defect site");
    if (back)
      p.push_back(target);
    else
      p.insert(p.begin(), target);
    occupied.insert(target);
    emit(target, params.mu0, params.mud);
  }

  void cut_site(std::vector<Site>& p, Site at, int line) {
    auto it = std::find(p.begin(), p.end(), at);
    if (it == p.end() || it == p.begin() || it + 1 == p.end())
      fail(line, "cut site must be interior to the path");
    std::vector<Site> tail(it + 1, p.end());
    p.erase(it, p.end());
    paths["__split" + std::to_string(next_split++)] = tail;
    occupied.erase(at);
    emit(at, params.mud, params.mu0);
  }
};

void lower_shrink(CompileState& cs, const Statement& st) {
  auto& p = cs.path(st.defect, st.line);
  for (int i = 0; i < st.count; ++i) {
    if (p.size() <= 1) cs.fail(st.line, "cannot shrink defect '" + st.defect + "' below one site");
    const bool back_match = CompileState::outward(p, true) == st.dir;
    const bool front_match = CompileState::outward(p, false) == st.dir;
    if (!back_match && !front_match)
      cs.fail(st.line, "no end of defect '" + st.defect + "' points " + to_string(st.dir));
    if (back_match && front_match)
      cs.fail(st.line, "ambiguous shrink: both ends of '" + st.defect + "' point " +
                           to_string(st.dir));
    cs.shrink_end(p, back_match);
  }
}

void lower_grow(CompileState& cs, const Statement& st) {
  auto& p = cs.path(st.defect, st.line);
  for (int i = 0; i < st.count; ++i) {
    // prefer straight growth at the end already pointing in st.dir
    const bool back_straight = p.size() >= 2 && CompileState::outward(p, true) == st.dir;
    const bool front_straight = p.size() >= 2 && CompileState::outward(p, false) == st.dir;
    bool back;
    if (back_straight || front_straight) {
      back = back_straight;
    } else {
      const bool back_ok = cs.grow_target_ok(step(p.back(), st.dir), p.back());
      const bool front_ok = cs.grow_target_ok(step(p.front(), st.dir), p.front());
      if (back_ok && front_ok && p.size() >= 2)
        cs.fail(st.line, "ambiguous grow: both ends of '" + st.defect + "' can extend " +
                             to_string(st.dir));
      back = back_ok || p.size() < 2;
    }
    cs.extend_end(p, back, step(back ? p.back() : p.front(), st.dir), st.line);
  }
}

// Fuse both end modes onto one site: the ends retract alternately toward the
// middle of the path, so the readout site is far from both initial modes and
// the pair meets only at the end. `dir` names the end that retracts first
// and, for even lengths, which side of center survives.
void lower_fuse(CompileState& cs, const Statement& st) {
  auto& p = cs.path(st.defect, st.line);
  if (p.size() == 1) return;
  {
    const bool back_match = CompileState::outward(p, true) == st.dir;
    const bool front_match = CompileState::outward(p, false) == st.dir;
    if (!back_match && !front_match)
      cs.fail(st.line, "no end of defect '" + st.defect + "' points " + to_string(st.dir));
    if (back_match && front_match)
      cs.fail(st.line, "ambiguous fuse: both ends of '" + st.defect + "' point " +
                           to_string(st.dir));
    // orient the stored path so the named end is the back
    if (front_match) std::reverse(p.begin(), p.end());
  }
  const Site r0 = p[(p.size() - 1) / 2];
  while (p.size() > 1) {
    // retract whichever end is farther from r0 along the path; ties go to
    // the named end (the back)
    const auto it = std::find(p.begin(), p.end(), r0);
    const std::size_t from_front = static_cast<std::size_t>(it - p.begin());
    const std::size_t from_back = p.size() - 1 - from_front;
    cs.shrink_end(p, from_back >= from_front);
  }
}

struct HorizontalSpan {
  int y = 0;
  int x_lo = 0;
  int x_hi = 0;
};

HorizontalSpan horizontal_span(const std::vector<Site>& p, const std::string& id, int line) {
  for (const Site& s : p)
    if (s.y != p.front().y)
      throw ProtocolError((line > 0 ? "line " + std::to_string(line) + ": " : "") + "defect '" +
                          id + "' must be a horizontal line for this exchange");
  auto [lo, hi] = std::minmax_element(p.begin(), p.end(),
                                      [](const Site& a, const Site& b) { return a.x < b.x; });
  return {p.front().y, lo->x, hi->x};
}

// Single-defect T-junction exchange; see builtin_exchange_same_defect.
void lower_exchange_same(CompileState& cs, const Statement& st) {
  auto& p = cs.path(st.defect, st.line);
  const HorizontalSpan h = horizontal_span(p, st.defect, st.line);
  const int xj = st.at.x;
  if (p.size() < 3) cs.fail(st.line, "defect too short to exchange (need at least 3 sites)");
  if (st.at.y != h.y) cs.fail(st.line, "junction does not lie on the defect row");
  if (xj <= h.x_lo || xj >= h.x_hi)
    cs.fail(st.line, "junction column " + std::to_string(xj) + " is not interior to the defect");

  // vertical arm on the roomier side; deeper arms suppress the transient
  // end-mode splitting (and with it the dynamical phase picked up while the
  // path is short), so use the full available depth up to 7 sites
  const int room_down = h.y;                     // rows below
  const int room_up = cs.geom.Ly - 1 - h.y;      // rows above
  const Direction arm_dir = room_down >= room_up ? Direction::Down : Direction::Up;
  const int depth = std::min(7, std::max(room_down, room_up));
  if (depth < 2) cs.fail(st.line, "vertical arm would exit the lattice (need depth >= 2)");

  // orient the path left-to-right
  if (p.front().x > p.back().x) std::reverse(p.begin(), p.end());

  const int n_left = xj - h.x_lo;
  const int n_right = h.x_hi - xj;

  for (int i = 0; i < n_left; ++i) cs.shrink_end(p, false);             // left end -> junction
  for (int i = 0; i < depth; ++i)                                       // walk it down the arm
    cs.extend_end(p, false, step(p.front(), arm_dir), st.line);
  for (int i = 0; i < n_right; ++i) cs.shrink_end(p, true);             // right end -> junction
  for (int i = 0; i < n_left; ++i)                                      // carry it to the far left
    cs.extend_end(p, true, step(p.back(), Direction::Left), st.line);
  for (int i = 0; i < depth; ++i) cs.shrink_end(p, false);              // retract the arm
  for (int i = 0; i < n_right; ++i)                                     // restore the right span
    cs.extend_end(p, false, step(p.front(), Direction::Right), st.line);

  if (p.front().x > p.back().x) std::reverse(p.begin(), p.end());
}

// Two-defect exchange through a transient trijunction; see
// builtin_exchange_two_defects. The upper defect reaches down a vertical
// connector and T-merges onto the lower row (the trijunction keeps all four
// modes at zero energy); cutting the lower row on the far side of the
// junction hands the junction mode to the left stump, and the zig-zag path
// then circulates the other end mode around to the upper row.
void lower_exchange_two(CompileState& cs, const Statement& st, int min_len) {
  auto& p1ref = cs.path(st.defect, st.line);
  auto& p2ref = cs.path(st.defect2, st.line);
  HorizontalSpan h1 = horizontal_span(p1ref, st.defect, st.line);
  HorizontalSpan h2 = horizontal_span(p2ref, st.defect2, st.line);

  // lower defect plays the d1 role
  const bool swapped = h1.y > h2.y;
  std::vector<Site>& p1 = swapped ? p2ref : p1ref;
  std::vector<Site>& p2 = swapped ? p1ref : p2ref;
  if (swapped) std::swap(h1, h2);

  const int xc = st.at.x;
  const int dy = h2.y - h1.y;
  if (dy < 2) cs.fail(st.line, "junction path between the defects is empty");
  if (xc <= h1.x_lo || xc >= h1.x_hi || xc <= h2.x_lo || xc > h2.x_hi)
    cs.fail(st.line, "junction column " + std::to_string(xc) + " is out of a defect span");
  if (xc - h1.x_lo < min_len || xc - h2.x_lo + 1 < min_len)
    cs.fail(st.line, "intermediate defect would be shorter than " + std::to_string(min_len));
  for (int y = h1.y + 1; y < h2.y; ++y)
    if (cs.occupied.count({xc, y}))
      cs.fail(st.line, "junction path collides with a defect at (" + std::to_string(xc) + "," +
                           std::to_string(y) + ")");

  if (p1.front().x > p1.back().x) std::reverse(p1.begin(), p1.end());
  if (p2.front().x > p2.back().x) std::reverse(p2.begin(), p2.end());
  cs.allow_tee = true;

  // 1. upper defect retracts to the junction column
  for (int x = h2.x_hi; x > xc; --x) cs.shrink_end(p2, true);
  // 2. ... and grows down the connector; the last step lands next to the
  //    lower row's interior and forms the trijunction
  for (int y = h2.y - 1; y > h1.y; --y) cs.extend_end_allow_merge(p2, true, Site{xc, y}, st.line);
  // 3. cut the lower row just left of the junction column
  cs.cut_site(p1, Site{xc - 1, h1.y}, st.line);
  std::vector<Site>& tail = cs.paths["__split" + std::to_string(cs.next_split - 1)];
  std::vector<Site> right_leg = tail;  // [xc .. x_hi] x {y1}
  cs.paths.erase("__split" + std::to_string(cs.next_split - 1));
  // the zig-zag path: upper row + connector + lower-right leg
  for (const Site& s : right_leg) p2.push_back(s);
  // 4. the zig-zag retracts its lower leg into the connector
  for (int x = h1.x_hi; x >= xc; --x) cs.shrink_end(p2, true);
  // 5. left stump regrows one site (the junction column is still occupied
  //    above the row, so it stops there)
  cs.extend_end(p1, true, Site{xc - 1, h1.y}, st.line);
  // 6. the connector retracts upward
  for (int y = h1.y + 1; y < h2.y; ++y) cs.shrink_end(p2, true);
  // 7. both rows regrow to their original spans
  for (int x = xc; x <= h1.x_hi; ++x) cs.extend_end(p1, true, Site{x, h1.y}, st.line);
  for (int x = xc + 1; x <= h2.x_hi; ++x) cs.extend_end(p2, true, Site{x, h2.y}, st.line);
  cs.allow_tee = false;
}

}  // namespace

Schedule compile(const ProtocolProgram& prog, const LatticeGeometry& geom, RampShape shape) {
  geom.validate();
  CompileState cs{geom, prog.params, shape, {}, {}, {}, 0};
  for (const auto& d : prog.defects) {
    d.validate(geom);
    for (const Site& s : d.sites) {
      if (cs.occupied.count(s))
        throw ProtocolError("defects overlap at (" + std::to_string(s.x) + "," +
                            std::to_string(s.y) + ")");
      cs.occupied.insert(s);
    }
    cs.paths[d.id] = d.sites;
  }
  if (!is_union_of_simple_paths(cs.occupied))
    throw ProtocolError("initial defects are not disjoint simple paths");

  for (const auto& st : prog.statements) {
    switch (st.kind) {
      case Statement::Kind::Shrink: lower_shrink(cs, st); break;
      case Statement::Kind::Grow: lower_grow(cs, st); break;
      case Statement::Kind::Fuse: lower_fuse(cs, st); break;
      case Statement::Kind::Exchange:
        if (st.defect2.empty())
          lower_exchange_same(cs, st);
        else
          lower_exchange_two(cs, st, 3);
        break;
    }
  }
  return cs.sched;
}

// ---- Builtin generators -----------------------------------------------------

ProtocolProgram builtin_exchange_same_defect(const LatticeGeometry& geom, const DefectPath& defect,
                                             int junction_column, const ProtocolParams& params) {
  defect.validate(geom);
  ProtocolProgram prog;
  prog.params = params;
  prog.defects = {defect};
  Statement st;
  st.kind = Statement::Kind::Exchange;
  st.defect = defect.id;
  st.at = {junction_column, defect.sites.front().y};
  prog.statements = {st};
  compile(prog, geom);  // validate eagerly so misuse fails at build time
  return prog;
}

ProtocolProgram builtin_exchange_two_defects(const LatticeGeometry& geom, const DefectPath& d1,
                                             const DefectPath& d2, int junction_column,
                                             const ProtocolParams& params,
                                             int min_intermediate_len) {
  d1.validate(geom);
  d2.validate(geom);
  // length-bound guard against accidental near-zero modes in the cut pieces
  auto span_of = [](const DefectPath& d) {
    auto [lo, hi] = std::minmax_element(d.sites.begin(), d.sites.end(),
                                        [](const Site& a, const Site& b) { return a.x < b.x; });
    return std::pair{lo->x, hi->x};
  };
  const auto [lo1, hi1] = span_of(d1);
  const auto [lo2, hi2] = span_of(d2);
  if (junction_column - lo1 < min_intermediate_len ||
      junction_column - lo2 + 1 < min_intermediate_len)
    throw ProtocolError("junction column leaves an intermediate defect shorter than " +
                        std::to_string(min_intermediate_len) + " sites");
  (void)hi1;
  (void)hi2;

  ProtocolProgram prog;
  prog.params = params;
  prog.defects = {d1, d2};
  Statement st;
  st.kind = Statement::Kind::Exchange;
  st.defect = d1.id;
  st.defect2 = d2.id;
  st.at = {junction_column, d1.sites.front().y};
  prog.statements = {st};
  compile(prog, geom);
  return prog;
}

ProtocolProgram builtin_fuse_to_site(const LatticeGeometry& geom, const DefectPath& defect,
                                     Direction target_end, const ProtocolParams& params) {
  defect.validate(geom);
  if (target_end != Direction::Left && target_end != Direction::Right)
    throw ProtocolError("fuse end must be left or right");
  ProtocolProgram prog;
  prog.params = params;
  prog.defects = {defect};
  Statement st;
  st.kind = Statement::Kind::Fuse;
  st.defect = defect.id;
  st.dir = target_end;
  prog.statements = {st};
  compile(prog, geom);
  return prog;
}

std::vector<std::set<Site>> replay_site_sets(const Schedule& s, const LatticeGeometry& geom,
                                             const PotentialField& initial, double mu0,
                                             double mud) {
  std::set<Site> cur;
  for (int si = 0; si < geom.sites(); ++si)
    if (initial[si] == mud && mud != mu0) cur.insert({geom.site_x(si), geom.site_y(si)});

  std::vector<std::set<Site>> out;
  out.push_back(cur);
  for (const auto& e : s.events) {
    if (e.mu_to == mud)
      cur.insert(e.site);
    else
      cur.erase(e.site);
    if (!valid_defect_components(cur, true))
      throw ProtocolError("schedule breaks the defect-path invariant at t=" +
                          std::to_string(e.t_end));
    out.push_back(cur);
  }
  return out;
}

}  // namespace msf
