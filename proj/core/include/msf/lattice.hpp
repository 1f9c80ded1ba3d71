#pragma once

#include <Eigen/Dense>
#include <cstdint>

namespace msf {

enum class Boundary { Open, Periodic };

// Square lattice, lattice constant a = 1. Site index = y*Lx + x.
struct LatticeGeometry {
  int Lx = 0;
  int Ly = 0;
  Boundary bx = Boundary::Open;
  Boundary by = Boundary::Open;

  int sites() const { return Lx * Ly; }
  int site(int x, int y) const { return y * Lx + x; }
  int site_x(int s) const { return s % Lx; }
  int site_y(int s) const { return s / Lx; }
  bool inside(int x, int y) const { return x >= 0 && x < Lx && y >= 0 && y < Ly; }

  // Neighbor in direction (dx, dy); -1 if it falls off an open edge.
  int neighbor(int s, int dx, int dy) const;

  void validate() const;  // Lx, Ly >= 2
};

struct CouplingParams {
  double J = 1.0;      // nearest-neighbor hopping rate
  double Delta = 1.0;  // p-wave pairing strength

  void validate() const;  // J > 0, Delta != 0
};

// Per-site chemical potential (mu_0 background / mu_d on defect lines).
using PotentialField = Eigen::VectorXd;

struct NoiseConfig {
  double alpha = 1.0;     // addressing fraction landing on the target site
  double V_T = 0.0;       // harmonic trap strength
  double lambda_R = 0.0;  // quenched disorder amplitude
  std::uint64_t seed = 0;

  void validate() const;
  bool trivial() const { return alpha == 1.0 && V_T == 0.0 && lambda_R == 0.0; }
};

// 2N x 2N real antisymmetric matrix A with H = (i/2) sum A_pq gamma_p gamma_q.
// Majorana index p = 2*site + species, species A=0, B=1.
struct SkewMatrix {
  Eigen::MatrixXd a;

  Eigen::Index dim() const { return a.rows(); }
  static int index(int site, int species) { return 2 * site + species; }
};

// Assembles A from geometry, per-site potentials and couplings.
// Conventions (fixed by the single-site and torus oracles):
//   on-site block      A[(r,A),(r,B)] = mu_r / 2
//   hopping, x and y   A[(r,A),(r',B)] -= J/4,  A[(r,B),(r',A)] += J/4
//   pairing, x links   A[(r,A),(r',B)] -= Delta/4, A[(r,B),(r',A)] -= Delta/4
//   pairing, y links   A[(r,A),(r',A)] += Delta/4, A[(r,B),(r',B)] -= Delta/4
// so that a uniform torus reproduces quasiparticle energies |d(k)| with
// d = (Delta sin kx, Delta sin ky, mu - J(cos kx + cos ky)).
SkewMatrix build_skew_matrix(const LatticeGeometry& geom, const PotentialField& pot,
                             const CouplingParams& cpl);

// In-place refresh of all on-site blocks for a new potential field. Hopping
// and pairing entries are untouched; used by the time evolution hot loop.
void update_onsite_blocks(SkewMatrix& A, const PotentialField& pot);

// Physical potential felt by the atoms:
//  (i)  commanded deviations (pot - base) spread: alpha stays on target,
//       (1-alpha)/4 to each nearest neighbor, spill over open edges discarded;
//  (ii) harmonic trap V_T/(2(Lx^2+Ly^2)) * d_r^2 from the geometric center;
//  (iii) quenched disorder, uniform in [-lambda_R, lambda_R], drawn once from seed.
PotentialField apply_noise(const PotentialField& pot, const PotentialField& base,
                           const NoiseConfig& cfg, const LatticeGeometry& geom);

// The static (time-independent) noise offsets: trap + disorder.
PotentialField noise_offsets(const NoiseConfig& cfg, const LatticeGeometry& geom);

}  // namespace msf
