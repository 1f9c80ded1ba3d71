#pragma once

#include <array>

namespace msf {

struct BlochParams {
  double J = 1.0;
  double Delta = 1.0;
  double mu = 0.0;
};

struct BZGrid {
  int Nk = 24;  // grid size per axis, >= 4
};

// d(k) of the two-band Bloch Hamiltonian H(k) = d . sigma:
//   (Delta sin kx, Delta sin ky, mu - J(cos kx + cos ky))
std::array<double, 3> d_vector(double kx, double ky, const BlochParams& p);

// (-|d|, +|d|)
std::array<double, 2> band_energies(double kx, double ky, const BlochParams& p);

// Minimum of |d(k)| over the discretized Brillouin zone.
double min_gap_over_bz(const BlochParams& p, const BZGrid& g);

// First Chern number of the lower band, computed with the gauge-invariant
// plaquette (link-variable) discretization; integer-exact for gapped input.
// Orientation is fixed so the result equals sign(mu) for 0 < |mu| < 2J.
// Throws NumericError("gap closed...") if min |d| over the grid < gap_tol.
int chern_number(const BlochParams& p, const BZGrid& g, double gap_tol = 1e-6);

// Sum of plaquette Berry phases (the integral before dividing by 2pi and
// rounding); exposed for the quantization check.
double berry_phase_sum(const BlochParams& p, const BZGrid& g);

}  // namespace msf
