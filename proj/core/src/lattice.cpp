#include "msf/lattice.hpp"

#include <cmath>
#include <random>

#include "msf/util.hpp"

namespace msf {

int LatticeGeometry::neighbor(int s, int dx, int dy) const {
  int x = site_x(s) + dx;
  int y = site_y(s) + dy;
  if (bx == Boundary::Periodic) x = (x % Lx + Lx) % Lx;
  if (by == Boundary::Periodic) y = (y % Ly + Ly) % Ly;
  if (!inside(x, y)) return -1;
  return site(x, y);
}

void LatticeGeometry::validate() const {
  if (Lx < 2 || Ly < 2) throw ConfigError("lattice must be at least 2x2");
}

void CouplingParams::validate() const {
  if (!(J > 0.0)) throw ConfigError("coupling J must be positive");
  if (Delta == 0.0) throw ConfigError("pairing Delta must be nonzero");
  if (!std::isfinite(J) || !std::isfinite(Delta)) throw ConfigError("non-finite couplings");
}

void NoiseConfig::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must be in [0,1]");
  if (!(V_T >= 0.0)) throw ConfigError("V_T must be >= 0");
  if (!(lambda_R >= 0.0)) throw ConfigError("lambda_R must be >= 0");
}

SkewMatrix build_skew_matrix(const LatticeGeometry& geom, const PotentialField& pot,
                             const CouplingParams& cpl) {
  geom.validate();
  cpl.validate();
  const int n = geom.sites();
  if (pot.size() != n) throw ConfigError("potential field size does not match lattice");
  if (!pot.allFinite()) throw ConfigError("non-finite potential entries");

  SkewMatrix A;
  A.a = Eigen::MatrixXd::Zero(2 * n, 2 * n);

  auto add = [&](int p, int q, double v) {
    A.a(p, q) += v;
    A.a(q, p) -= v;
  };

  const double t4 = cpl.J / 4.0;
  const double d4 = cpl.Delta / 4.0;

  for (int s = 0; s < n; ++s) {
    const int pa = SkewMatrix::index(s, 0);
    const int pb = SkewMatrix::index(s, 1);
    add(pa, pb, pot[s] / 2.0);

    // x bond
    if (int sx = geom.neighbor(s, 1, 0); sx >= 0) {
      const int qa = SkewMatrix::index(sx, 0);
      const int qb = SkewMatrix::index(sx, 1);
      add(pa, qb, -t4);
      add(pb, qa, t4);
      add(pa, qb, -d4);
      add(pb, qa, -d4);
    }
    // y bond (pairing phase i relative to x)
    if (int sy = geom.neighbor(s, 0, 1); sy >= 0) {
      const int qa = SkewMatrix::index(sy, 0);
      const int qb = SkewMatrix::index(sy, 1);
      add(pa, qb, -t4);
      add(pb, qa, t4);
      add(pa, qa, d4);
      add(pb, qb, -d4);
    }
  }
  return A;
}

void update_onsite_blocks(SkewMatrix& A, const PotentialField& pot) {
  const int n = static_cast<int>(pot.size());
  for (int s = 0; s < n; ++s) {
    const int pa = SkewMatrix::index(s, 0);
    const int pb = SkewMatrix::index(s, 1);
    // replace, not accumulate: bond terms never touch the on-site entries
    A.a(pa, pb) = pot[s] / 2.0;
    A.a(pb, pa) = -pot[s] / 2.0;
  }
}

PotentialField noise_offsets(const NoiseConfig& cfg, const LatticeGeometry& geom) {
  const int n = geom.sites();
  PotentialField off = PotentialField::Zero(n);

  if (cfg.V_T > 0.0) {
    const double cx = (geom.Lx - 1) / 2.0;
    const double cy = (geom.Ly - 1) / 2.0;
    const double pref = cfg.V_T / (2.0 * (double(geom.Lx) * geom.Lx + double(geom.Ly) * geom.Ly));
    for (int s = 0; s < n; ++s) {
      const double dx = geom.site_x(s) - cx;
      const double dy = geom.site_y(s) - cy;
      off[s] += pref * (dx * dx + dy * dy);
    }
  }

  if (cfg.lambda_R > 0.0) {
    std::mt19937_64 rng(cfg.seed);
    for (int s = 0; s < n; ++s) {
      const double u = canonical_u53(rng());
      off[s] += cfg.lambda_R * (2.0 * u - 1.0);
    }
  }
  return off;
}

PotentialField apply_noise(const PotentialField& pot, const PotentialField& base,
                           const NoiseConfig& cfg, const LatticeGeometry& geom) {
  cfg.validate();
  if (pot.size() != base.size() || pot.size() != geom.sites())
    throw ConfigError("potential field size mismatch");

  const int n = geom.sites();
  PotentialField out = base;

  if (cfg.alpha == 1.0) {
    out = pot;
  } else {
    const double spill = (1.0 - cfg.alpha) / 4.0;
    for (int s = 0; s < n; ++s) {
      const double dev = pot[s] - base[s];
      if (dev == 0.0) continue;
      out[s] += cfg.alpha * dev;
      for (auto [dx, dy] : {std::pair{1, 0}, {-1, 0}, {0, 1}, {0, -1}}) {
        if (int q = geom.neighbor(s, dx, dy); q >= 0) out[q] += spill * dev;
        // spill over an open edge is lost, not renormalized
      }
    }
  }

  out += noise_offsets(cfg, geom);
  return out;
}

}  // namespace msf
