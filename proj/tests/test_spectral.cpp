#include <doctest.h>

#include <msf/lattice.hpp>
#include <msf/spectral.hpp>
#include <msf/util.hpp>

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <random>

using namespace msf;

namespace {

Eigen::MatrixXd random_skew(int dim, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  Eigen::MatrixXd R(dim, dim);
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j) R(i, j) = g(rng);
  return R - R.transpose();
}

Eigen::MatrixXd canonical_blocks(const Eigen::VectorXd& eps) {
  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(2 * eps.size(), 2 * eps.size());
  for (Eigen::Index j = 0; j < eps.size(); ++j) {
    K(2 * j, 2 * j + 1) = -eps[j];
    K(2 * j + 1, 2 * j) = eps[j];
  }
  return K;
}

SkewMatrix defect_lattice_18x10() {
  LatticeGeometry g{18, 10, Boundary::Open, Boundary::Open};
  CouplingParams cpl{1.0, 1.0};
  PotentialField pot = PotentialField::Constant(g.sites(), 10.0);
  for (int x = 2; x <= 15; ++x) pot[g.site(x, 6)] = 0.1;
  return build_skew_matrix(g, pot, cpl);
}

}  // namespace

TEST_CASE("canonical form of a 2x2 on-site block") {
  const double mu = 0.7;
  Eigen::MatrixXd A(2, 2);
  A << 0, mu / 2, -mu / 2, 0;
  CanonicalForm cf = canonical_form(A);
  CHECK(cf.eps[0] == doctest::Approx(mu / 2).epsilon(1e-15));
  // block convention holds exactly
  Eigen::MatrixXd K = cf.O * A * cf.O.transpose();
  CHECK(K(0, 1) == doctest::Approx(-mu / 2).epsilon(1e-14));
  CHECK(K(1, 0) == doctest::Approx(mu / 2).epsilon(1e-14));
}

TEST_CASE("block-diagonal input: eps = [0.5, 1.5]") {
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(4, 4);
  A(0, 1) = 0.5;   // mu = 1
  A(1, 0) = -0.5;
  A(2, 3) = 1.5;   // mu = 3
  A(3, 2) = -1.5;
  CanonicalForm cf = canonical_form(A);
  CHECK(cf.eps[0] == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(cf.eps[1] == doctest::Approx(1.5).epsilon(1e-14));
}

TEST_CASE("random skew: +/- i eps match a generic complex eigensolver") {
  for (unsigned seed : {1u, 2u, 3u}) {
    Eigen::MatrixXd A = random_skew(8, seed);
    CanonicalForm cf = canonical_form(A);

    Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(A.cast<std::complex<double>>());
    std::vector<double> imag_parts;
    for (int i = 0; i < 8; ++i) imag_parts.push_back(es.eigenvalues()[i].imag());
    std::sort(imag_parts.begin(), imag_parts.end());
    for (Eigen::Index j = 0; j < 4; ++j) {
      CHECK(std::abs(imag_parts[4 + j] - cf.eps[j]) < 1e-12);  // +i eps branch, ascending
      CHECK(std::abs(imag_parts[3 - j] + cf.eps[j]) < 1e-12);  // -i eps branch
      CHECK(std::abs(es.eigenvalues()[static_cast<Eigen::Index>(0)].real()) < 1e-12);
    }
  }
}

TEST_CASE("canonical form invariants on random input") {
  Eigen::MatrixXd A = random_skew(24, 7);
  CanonicalForm cf = canonical_form(A);
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(24, 24);

  CHECK((cf.O * cf.O.transpose() - I).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((cf.O * A * cf.O.transpose() - canonical_blocks(cf.eps)).cwiseAbs().maxCoeff() < 1e-10);
  // reconstruction
  CHECK((cf.O.transpose() * canonical_blocks(cf.eps) * cf.O - A).cwiseAbs().maxCoeff() < 1e-9);
  // eps sorted ascending, non-negative
  for (Eigen::Index j = 0; j + 1 < cf.eps.size(); ++j) CHECK(cf.eps[j] <= cf.eps[j + 1]);
  CHECK(cf.eps[0] >= 0.0);
  CHECK(std::abs(std::abs(static_cast<double>(orientation_sign(cf))) - 1.0) == 0.0);
}

TEST_CASE("spectrum parity: canonical energies of A and -A^T coincide") {
  Eigen::MatrixXd A = random_skew(12, 11);
  Eigen::MatrixXd B = -A.transpose();
  Eigen::VectorXd ea = canonical_form(A).eps;
  Eigen::VectorXd eb = canonical_form(B).eps;
  CHECK((ea - eb).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("quasiparticle spectrum doubles each energy (particle/hole)") {
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(4, 4);
  A(0, 1) = 0.35;
  A(1, 0) = -0.35;
  A(2, 3) = 1.0;
  A(3, 2) = -1.0;
  SpectrumReport rep = quasiparticle_spectrum(A, 1e-6);
  REQUIRE(rep.energies.size() == 4);
  CHECK(rep.energies[0] == doctest::Approx(0.7));
  CHECK(rep.energies[1] == doctest::Approx(0.7));
  CHECK(rep.energies[2] == doctest::Approx(2.0));
  CHECK(rep.zero_mode_count == 0);
  CHECK(rep.gap == doctest::Approx(0.7));
}

TEST_CASE("18x10 defect lattice: two zero modes, tiny splitting, gap about J") {
  SkewMatrix A = defect_lattice_18x10();
  SpectrumReport rep = quasiparticle_spectrum(A.a, 1e-6);
  CHECK(rep.zero_mode_count == 2);
  CHECK(rep.splitting < 1e-8);
  CHECK(rep.gap > 0.5);
  CHECK(rep.gap < 1.5);
}

TEST_CASE("18x10 defect lattice: zero modes localize at the defect ends") {
  LatticeGeometry g{18, 10, Boundary::Open, Boundary::Open};
  SkewMatrix A = defect_lattice_18x10();
  CanonicalForm cf = canonical_form(A.a);
  auto modes = zero_modes(cf, g, 1e-6);
  REQUIRE(modes.size() == 2);

  // ordering by centroid x
  auto c1 = mode_centroid(modes[0].eta, g);
  auto c2 = mode_centroid(modes[1].eta, g);
  CHECK(c1[0] < c2[0]);

  // >= 90% of the weight within Chebyshev distance 3 of each defect end
  auto weight_near = [&](const Eigen::VectorXd& eta, int ex, int ey) {
    Eigen::VectorXd w = site_weights(eta);
    double near = 0.0;
    for (int s = 0; s < g.sites(); ++s)
      if (std::max(std::abs(g.site_x(s) - ex), std::abs(g.site_y(s) - ey)) <= 3) near += w[s];
    return near / w.sum();
  };
  CHECK(weight_near(modes[0].eta, 2, 6) >= 0.9);
  CHECK(weight_near(modes[1].eta, 15, 6) >= 0.9);

  // unit norm
  CHECK(modes[0].eta.norm() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(modes[1].eta.norm() == doctest::Approx(1.0).epsilon(1e-12));
  // orthonormal set
  CHECK(std::abs(modes[0].eta.dot(modes[1].eta)) < 1e-10);
}

TEST_CASE("localization rotation preserves the near-zero subspace") {
  LatticeGeometry g{18, 10, Boundary::Open, Boundary::Open};
  SkewMatrix A = defect_lattice_18x10();
  CanonicalForm cf = canonical_form(A.a);
  auto modes = zero_modes(cf, g, 1e-6);
  Eigen::MatrixXd P_raw = cf.mode_u(0) * cf.mode_u(0).transpose() +
                          cf.mode_w(0) * cf.mode_w(0).transpose();
  Eigen::MatrixXd P_loc = modes[0].eta * modes[0].eta.transpose() +
                          modes[1].eta * modes[1].eta.transpose();
  CHECK((P_raw - P_loc).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("gauge check: swapping and negating modes preserves span and orthonormality") {
  LatticeGeometry g{18, 10, Boundary::Open, Boundary::Open};
  SkewMatrix A = defect_lattice_18x10();
  auto modes = zero_modes(canonical_form(A.a), g, 1e-6);
  Eigen::VectorXd a = modes[1].eta;
  Eigen::VectorXd b = -modes[0].eta;
  CHECK(a.norm() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(b.norm() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(std::abs(a.dot(b)) < 1e-10);
  Eigen::MatrixXd P1 = modes[0].eta * modes[0].eta.transpose() +
                       modes[1].eta * modes[1].eta.transpose();
  Eigen::MatrixXd P2 = a * a.transpose() + b * b.transpose();
  CHECK((P1 - P2).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("instantaneous gap definitions") {
  Eigen::VectorXd eps(3);
  eps << 1e-9, 0.45, 0.9;
  CHECK(instantaneous_gap(eps, 2) == 2 * 0.45);
  CHECK(instantaneous_gap(eps, 0) == 2e-9);
  CHECK_THROWS_AS(instantaneous_gap(eps, 1), NumericError);
  CHECK_THROWS_AS(instantaneous_gap(eps, 8), NumericError);
}

TEST_CASE("non-finite input is rejected") {
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(2, 2);
  A(0, 1) = std::numeric_limits<double>::quiet_NaN();
  A(1, 0) = -A(0, 1);
  CHECK_THROWS_AS(canonical_form(A), NumericError);
}
