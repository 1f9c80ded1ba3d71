#include "msf/bloch.hpp"

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "msf/lattice.hpp"
#include "msf/util.hpp"

namespace msf {

namespace {

using cd = std::complex<double>;
using Spinor = std::array<cd, 2>;

// Lower-band eigenstate of d . sigma, stable away from |d| = 0.
Spinor lower_band_state(double dx, double dy, double dz) {
  const double d = std::sqrt(dx * dx + dy * dy + dz * dz);
  // (dx - i dy, -(dz + d)) is degenerate only when dz = -d, i.e. dx = dy = 0, dz < 0
  if (dz + d > 1e-12 * d) {
    const cd a(dx, -dy);
    const cd b(-(dz + d), 0.0);
    const double nrm = std::sqrt(std::norm(a) + std::norm(b));
    return {a / nrm, b / nrm};
  }
  return {cd(1.0, 0.0), cd(0.0, 0.0)};
}

cd overlap(const Spinor& u, const Spinor& v) {
  return std::conj(u[0]) * v[0] + std::conj(u[1]) * v[1];
}

// Orientation constant anchoring the overall sign so that C1 = sign(mu)
// for 0 < |mu| < 2J (the raw plaquette-sum sign depends on the band and
// Nambu conventions, which are otherwise arbitrary).
constexpr double kOrientation = 1.0;

}  // namespace

std::array<double, 3> d_vector(double kx, double ky, const BlochParams& p) {
  return {p.Delta * std::sin(kx), p.Delta * std::sin(ky),
          p.mu - p.J * (std::cos(kx) + std::cos(ky))};
}

std::array<double, 2> band_energies(double kx, double ky, const BlochParams& p) {
  auto [dx, dy, dz] = d_vector(kx, ky, p);
  const double d = std::sqrt(dx * dx + dy * dy + dz * dz);
  return {-d, d};
}

double min_gap_over_bz(const BlochParams& p, const BZGrid& g) {
  double m = std::numeric_limits<double>::infinity();
  const double dk = 2.0 * std::numbers::pi / g.Nk;
  for (int i = 0; i < g.Nk; ++i)
    for (int j = 0; j < g.Nk; ++j) {
      const double kx = -std::numbers::pi + i * dk;
      const double ky = -std::numbers::pi + j * dk;
      m = std::min(m, band_energies(kx, ky, p)[1]);
    }
  return m;
}

double berry_phase_sum(const BlochParams& p, const BZGrid& g) {
  const int nk = g.Nk;
  const double dk = 2.0 * std::numbers::pi / nk;

  std::vector<Spinor> states(static_cast<std::size_t>(nk) * nk);
  for (int i = 0; i < nk; ++i)
    for (int j = 0; j < nk; ++j) {
      auto [dx, dy, dz] = d_vector(-std::numbers::pi + i * dk, -std::numbers::pi + j * dk, p);
      states[static_cast<std::size_t>(i) * nk + j] = lower_band_state(dx, dy, dz);
    }
  auto at = [&](int i, int j) -> const Spinor& {
    return states[static_cast<std::size_t>((i % nk + nk) % nk) * nk + (j % nk + nk) % nk];
  };

  // U(1) link variables from state overlaps; plaquette field strength is the
  // phase of the oriented product, gauge invariant by construction.
  double sum = 0.0;
  for (int i = 0; i < nk; ++i)
    for (int j = 0; j < nk; ++j) {
      const cd ux = overlap(at(i, j), at(i + 1, j));
      const cd uy = overlap(at(i + 1, j), at(i + 1, j + 1));
      const cd vx = overlap(at(i, j + 1), at(i + 1, j + 1));
      const cd vy = overlap(at(i, j), at(i, j + 1));
      sum += std::arg(ux * uy / (vx * vy));
    }
  return kOrientation * sum;
}

int chern_number(const BlochParams& p, const BZGrid& g, double gap_tol) {
  if (g.Nk < 4) throw ConfigError("BZ grid must have Nk >= 4");
  CouplingParams{p.J, p.Delta}.validate();
  if (min_gap_over_bz(p, g) < gap_tol * p.J)
    throw NumericError("gap closed: Bloch spectrum is not gapped on the BZ grid");

  const double total = berry_phase_sum(p, g);
  const double c1 = total / (2.0 * std::numbers::pi);
  const long rounded = std::lround(c1);
  if (std::abs(c1 - static_cast<double>(rounded)) > 1e-6)
    throw NumericError("Berry phase sum is not integer-quantized");
  return static_cast<int>(rounded);
}

}  // namespace msf
