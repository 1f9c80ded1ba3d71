#include <doctest.h>

#include <msf/evolve.hpp>
#include <msf/gaussian.hpp>
#include <msf/lattice.hpp>
#include <msf/run.hpp>
#include <msf/util.hpp>

#include <complex>
#include <random>
#include <unsupported/Eigen/KroneckerProduct>

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

}  // namespace

TEST_CASE("single site, mu > 0: ground state is empty, i<gA gB> = -1") {
  Eigen::MatrixXd A(2, 2);
  A << 0, 0.35, -0.35, 0;  // mu = 0.7
  CanonicalForm cf = canonical_form(A);
  CovarianceMatrix gamma = ground_covariance(cf);
  CHECK(gamma(0, 1) == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(site_occupations(gamma)[0] == doctest::Approx(0.0).epsilon(1e-12));

  // mu < 0: occupied
  Eigen::MatrixXd Am = -A;
  CovarianceMatrix gm = ground_covariance(canonical_form(Am));
  CHECK(site_occupations(gm)[0] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("purity: Gamma Gamma^T = I for gapped input") {
  Eigen::MatrixXd A = random_skew(12, 9);
  CovarianceMatrix gamma = ground_covariance(canonical_form(A));
  CHECK((gamma * gamma.transpose() - Eigen::MatrixXd::Identity(12, 12)).cwiseAbs().maxCoeff() <
        1e-9);
  CHECK((gamma + gamma.transpose()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("finite-beta covariance reproduces the ground state in the beta -> inf limit") {
  Eigen::MatrixXd A = random_skew(8, 21);
  CanonicalForm cf = canonical_form(A);
  CovarianceMatrix g0 = ground_covariance(cf);
  CovarianceMatrix gb = thermal_covariance(cf, 1e6);
  CHECK((g0 - gb).cwiseAbs().maxCoeff() < 1e-6);
  // beta = 0 is the maximally mixed state
  CovarianceMatrix ginf = thermal_covariance(cf, 0.0);
  CHECK(ginf.cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("pair correlation: 2x2 Pfaffian rules") {
  CovarianceMatrix g(2, 2);
  g << 0, 0.37, -0.37, 0;
  CHECK(pair_correlation(g, 0, 1) == 0.37);
  CHECK(pair_correlation(g, 1, 0) == -0.37);
  CHECK(pair_correlation(g, 0, 0) == 0.0);
  // Pf^2 = det for the antisymmetric 2x2
  std::mt19937_64 rng(4);
  for (int i = 0; i < 10; ++i) {
    double a = canonical_u53(rng()) * 4 - 2;
    Eigen::Matrix2d m;
    m << 0, a, -a, 0;
    CHECK(a * a == doctest::Approx(m.determinant()).epsilon(1e-12));
  }
}

TEST_CASE("msf sector pinning and antisymmetry of mode correlations") {
  RunConfig cfg;
  cfg.geom = {12, 9, Boundary::Open, Boundary::Open};
  cfg.cpl = {1.0, 1.0};
  cfg.mu0 = 10.0;
  cfg.mud = 0.1;
  DefectPath d;
  d.id = "d1";
  for (int x = 2; x <= 9; ++x) d.sites.push_back({x, 4});
  cfg.defects = {d};
  cfg.zero_threshold = 1e-3;
  cfg.validate();

  ModelContext ctx = make_context(cfg);
  CanonicalForm cf = canonical_form(ctx.skew(ctx.commanded0).a);
  auto modes = labeled_modes(cfg, cf);

  for (double sector : {1.0, -1.0}) {
    CovarianceMatrix g0 = ground_covariance(cf, cfg.zero_threshold, modes, sector);
    const Eigen::Index dim = g0.rows();
    CHECK((g0 + g0.transpose()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((g0 * g0.transpose() - Eigen::MatrixXd::Identity(dim, dim)).cwiseAbs().maxCoeff() <
          1e-8);
    Eigen::MatrixXd I = Eigen::MatrixXd::Identity(dim, dim);
    Eigen::MatrixXd corr = msf_correlations(modes, I, g0);
    CHECK(corr(0, 1) == doctest::Approx(sector).epsilon(1e-9));
    CHECK(corr(0, 1) == doctest::Approx(-corr(1, 0)).epsilon(1e-12));
  }
}

TEST_CASE("pushforward consistency: evolved Gamma matches mode-vector pushforward") {
  Eigen::MatrixXd A = random_skew(10, 31);
  CanonicalForm cf = canonical_form(A);
  CovarianceMatrix g0 = ground_covariance(cf);
  Eigen::MatrixXd O = step_generator(random_skew(10, 32), 0.9);

  std::vector<MajoranaMode> probes(2);
  probes[0].eta = Eigen::VectorXd::Unit(10, 3);
  probes[1].eta = Eigen::VectorXd::Unit(10, 7);
  Eigen::MatrixXd via_modes = msf_correlations(probes, O, g0);
  CovarianceMatrix gt = evolve_covariance(g0, O);
  CHECK(via_modes(0, 1) == doctest::Approx(gt(3, 7)).epsilon(1e-12));
  CHECK(via_modes(1, 0) == doctest::Approx(gt(7, 3)).epsilon(1e-12));
}

TEST_CASE("occupations are bounded in [0, 1]") {
  LatticeGeometry g{6, 6, Boundary::Open, Boundary::Open};
  CouplingParams cpl{1.0, 0.8};
  PotentialField pot = PotentialField::LinSpaced(g.sites(), -3.0, 3.0);
  CovarianceMatrix gamma = ground_covariance(canonical_form(build_skew_matrix(g, pot, cpl).a));
  Eigen::VectorXd occ = site_occupations(gamma);
  CHECK(occ.minCoeff() >= -1e-10);
  CHECK(occ.maxCoeff() <= 1.0 + 1e-10);
}

TEST_CASE("two-site many-body oracle: Gamma and occupations match the Fock ground state") {
  // H = mu1 n1 + mu2 n2 - t(c1^d c2 + h.c.) + (D c1^d c2^d + h.c.)
  const double mu1 = 0.7, mu2 = 1.3, t = 0.45, D = 0.3;

  // Gaussian side: 2-site chain along x with J/2 = t, Delta/2 = D
  LatticeGeometry g{2, 2, Boundary::Open, Boundary::Open};
  // use a 2x1 strip: build by hand to keep exactly two sites
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(4, 4);
  auto add = [&](int p, int q, double v) {
    A(p, q) += v;
    A(q, p) -= v;
  };
  add(0, 1, mu1 / 2);
  add(2, 3, mu2 / 2);
  add(0, 3, -t / 2);  // hopping
  add(1, 2, t / 2);
  add(0, 3, -D / 2);  // x-link pairing
  add(1, 2, -D / 2);

  CovarianceMatrix gamma = ground_covariance(canonical_form(A));

  // Fock side: basis |00>, |10>, |01>, |11> via c1 = a x I, c2 = Z x a
  using cd = std::complex<double>;
  Eigen::Matrix2cd a2, z2, id2;
  a2 << 0, 1, 0, 0;
  z2 << 1, 0, 0, -1;
  id2.setIdentity();
  Eigen::Matrix4cd c1 = Eigen::kroneckerProduct(a2, id2);
  Eigen::Matrix4cd c2 = Eigen::kroneckerProduct(z2, a2);
  Eigen::Matrix4cd H = mu1 * c1.adjoint() * c1 + mu2 * c2.adjoint() * c2 -
                       t * (c1.adjoint() * c2 + c2.adjoint() * c1) +
                       D * (c1.adjoint() * c2.adjoint() + c2 * c1);
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix4cd> es(H);
  Eigen::Vector4cd psi = es.eigenvectors().col(0);

  Eigen::Matrix4cd gam[4] = {c1.adjoint() + c1, cd(0, 1) * (c1.adjoint() - c1),
                             c2.adjoint() + c2, cd(0, 1) * (c2.adjoint() - c2)};
  for (int p = 0; p < 4; ++p)
    for (int q = 0; q < 4; ++q) {
      if (p == q) continue;
      const cd val = cd(0, 0.5) * (psi.dot((gam[p] * gam[q] - gam[q] * gam[p]) * psi));
      CHECK(std::abs(val.imag()) < 1e-10);
      CHECK(gamma(p, q) == doctest::Approx(val.real()).epsilon(1e-10));
    }

  const double n1 = (psi.dot((c1.adjoint() * c1) * psi)).real();
  const double n2 = (psi.dot((c2.adjoint() * c2) * psi)).real();
  Eigen::VectorXd occ = site_occupations(gamma);
  CHECK(occ[0] == doctest::Approx(n1).epsilon(1e-10));
  CHECK(occ[1] == doctest::Approx(n2).epsilon(1e-10));
}

TEST_CASE("fusion overlap: perfect and orthogonal mappings") {
  Eigen::VectorXd e1 = Eigen::VectorXd::Zero(8), e2 = Eigen::VectorXd::Zero(8);
  const int r0 = 1;
  e1[2 * r0] = 1.0;      // gamma_A
  e2[2 * r0 + 1] = 1.0;  // gamma_B
  CHECK(fusion_overlap(e1, e2, r0) == doctest::Approx(1.0).epsilon(1e-14));
  // swapped mapping lands on the conjugate branch
  CHECK(fusion_overlap(e2, e1, r0) == doctest::Approx(0.0).epsilon(1e-14));
  // modes far from r0
  Eigen::VectorXd f1 = Eigen::VectorXd::Unit(8, 4), f2 = Eigen::VectorXd::Unit(8, 6);
  CHECK(fusion_overlap(f1, f2, r0) == 0.0);
}
