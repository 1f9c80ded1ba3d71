#pragma once

#include <Eigen/Dense>
#include <vector>

#include "msf/lattice.hpp"

namespace msf {

// Canonical form of a real antisymmetric A: rows of O are an orthonormal
// basis (u_1, w_1, u_2, w_2, ...) with O A O^T block off-diagonal, block j
// equal to [[0, -eps_j], [eps_j, 0]], eps_j >= 0 ascending.
//
// det O = +1 is enforced whenever the input admits it. For nonsingular A the
// orientation is forced by sign(Pf(A)): with the fixed block convention
// det O = sign(Pf(A)) * (-1)^N, so half of all inputs only admit det O = -1
// (already the 2x2 on-site block with mu > 0). When a numerically zero pair
// exists the orientation is absorbed there and det O = +1 always holds.
struct CanonicalForm {
  Eigen::MatrixXd O;    // 2N x 2N, rows = canonical basis vectors
  Eigen::VectorXd eps;  // N canonical energies, >= 0, ascending

  Eigen::Index pairs() const { return eps.size(); }
  Eigen::VectorXd mode_u(Eigen::Index j) const { return O.row(2 * j); }
  Eigen::VectorXd mode_w(Eigen::Index j) const { return O.row(2 * j + 1); }
};

CanonicalForm canonical_form(const Eigen::MatrixXd& A);
inline CanonicalForm canonical_form(const SkewMatrix& A) { return canonical_form(A.a); }

// Canonical energies only (no basis); cheaper, used for gap sampling.
Eigen::VectorXd canonical_energies(const Eigen::MatrixXd& A);

int orientation_sign(const CanonicalForm& cf);  // sign of det O

// Quasiparticle energies use the E = 2*eps convention (a single site with
// potential mu has E = mu). `energies` lists 2N values, each E_j twice
// (particle/hole pair), matching the BdG spectrum count.
struct SpectrumReport {
  std::vector<double> energies;  // sorted ascending, non-negative, 2N entries
  int zero_mode_count = 0;       // entries below the zero threshold
  double splitting = 0.0;        // E of the near-zero pair (0 if none)
  double gap = 0.0;              // lowest E above the zero-mode set
};

SpectrumReport quasiparticle_spectrum(const Eigen::MatrixXd& A, double zero_threshold = 1e-6);
SpectrumReport spectrum_from_energies(const Eigen::VectorXd& eps, double zero_threshold);

// One Majorana mode: gamma_i = sum_p eta[p] gamma_p, real unit-norm.
struct MajoranaMode {
  Eigen::VectorXd eta;
  double energy = 0.0;  // quasiparticle energy E = 2*eps of its canonical pair
};

// Real-space weight of a mode on each lattice site: eta_{r,A}^2 + eta_{r,B}^2.
Eigen::VectorXd site_weights(const Eigen::VectorXd& eta);
// Weight-averaged position.
std::array<double, 2> mode_centroid(const Eigen::VectorXd& eta, const LatticeGeometry& geom);

// Extracts the near-zero modes (quasiparticle E below threshold), localizes
// them within the degenerate subspace (pairwise centroid-separation sweeps),
// and returns them ordered by ascending centroid x, then y, each with its
// largest-magnitude entry positive. Throws NumericError on an odd count.
std::vector<MajoranaMode> zero_modes(const CanonicalForm& cf, const LatticeGeometry& geom,
                                     double zero_threshold = 1e-6);

// Lowest quasiparticle energy after excluding the n_exclude/2 smallest
// canonical pairs (n_exclude = number of MSF modes tracked by the protocol).
double instantaneous_gap(const Eigen::VectorXd& eps, int n_exclude);
double instantaneous_gap(const Eigen::MatrixXd& A, int n_exclude);

}  // namespace msf
