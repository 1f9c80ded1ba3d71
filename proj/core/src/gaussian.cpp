#include "msf/gaussian.hpp"

#include <cmath>

#include "msf/evolve.hpp"
#include "msf/util.hpp"

namespace msf {

CovarianceMatrix ground_covariance(const CanonicalForm& cf, double zero_threshold,
                                   const std::vector<MajoranaMode>& msf_pairs, double sector) {
  const Eigen::Index dim = cf.O.rows();
  // Gamma = O^T D O with ground blocks [[0, 1], [-1, 0]] for every gapped
  // pair; sgn(eps) is ill-conditioned below the zero threshold, so those
  // pairs are pinned explicitly afterwards.
  Eigen::MatrixXd rotated = Eigen::MatrixXd::Zero(dim, dim);
  for (Eigen::Index j = 0; j < cf.pairs(); ++j) {
    if (2.0 * cf.eps[j] < zero_threshold) continue;
    rotated.row(2 * j) = cf.O.row(2 * j + 1);       //  eta_j = +1
    rotated.row(2 * j + 1) = -cf.O.row(2 * j);
  }
  CovarianceMatrix gamma = cf.O.transpose() * rotated;

  if (msf_pairs.size() % 2 != 0)
    throw NumericError("msf_pairs must contain complete qubit pairs");
  for (std::size_t i = 0; i + 1 < msf_pairs.size(); i += 2) {
    const Eigen::VectorXd& e1 = msf_pairs[i].eta;
    const Eigen::VectorXd& e2 = msf_pairs[i + 1].eta;
    // i<g1 g2> = sector on this pair's subspace
    gamma += sector * (e1 * e2.transpose() - e2 * e1.transpose());
  }
  return gamma;
}

CovarianceMatrix thermal_covariance(const CanonicalForm& cf, double beta) {
  const Eigen::Index dim = cf.O.rows();
  Eigen::MatrixXd rotated(dim, dim);
  for (Eigen::Index j = 0; j < cf.pairs(); ++j) {
    const double eta = std::tanh(beta * cf.eps[j]);
    rotated.row(2 * j) = eta * cf.O.row(2 * j + 1);
    rotated.row(2 * j + 1) = -eta * cf.O.row(2 * j);
  }
  return cf.O.transpose() * rotated;
}

double pair_correlation(const CovarianceMatrix& gamma, Eigen::Index p, Eigen::Index q) {
  if (p == q) return 0.0;
  // Pf of the 2x2 submatrix [[G_pp, G_pq],[G_qp, G_qq]] is its off-diagonal
  return gamma(p, q);
}

Eigen::MatrixXd msf_correlations(const std::vector<MajoranaMode>& modes,
                                 const Eigen::MatrixXd& O, const CovarianceMatrix& gamma0) {
  const Eigen::MatrixXd H = mode_matrix(modes);
  const Eigen::MatrixXd V = O * H;          // evolved coefficient vectors
  return V.transpose() * gamma0 * V;        // C_ij = i<g_i(t) g_j(t)>
}

Eigen::VectorXd site_occupations(const CovarianceMatrix& gamma) {
  const Eigen::Index n = gamma.rows() / 2;
  Eigen::VectorXd occ(n);
  for (Eigen::Index s = 0; s < n; ++s) occ[s] = 0.5 * (1.0 + gamma(2 * s, 2 * s + 1));
  return occ;
}

CovarianceMatrix evolve_covariance(const CovarianceMatrix& gamma0, const Eigen::MatrixXd& O) {
  return O.transpose() * gamma0 * O;
}

double fusion_overlap(const Eigen::VectorXd& eta1_t, const Eigen::VectorXd& eta2_t, int site_r0) {
  // c_r0 = (g_A + i g_B)/2 against v = (eta1 + i eta2)/2, normalized so a
  // perfect mapping (eta1 -> e_A, eta2 -> e_B) gives 1.
  const int pa = 2 * site_r0;
  const int pb = 2 * site_r0 + 1;
  const double re = eta1_t[pa] + eta2_t[pb];
  const double im = eta2_t[pa] - eta1_t[pb];
  return 0.5 * std::sqrt(re * re + im * im);
}

}  // namespace msf
