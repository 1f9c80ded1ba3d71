#pragma once

#include <Eigen/Dense>
#include <vector>

#include "msf/spectral.hpp"

namespace msf {

// Antisymmetric covariance matrix Gamma_pq = (i/2) Tr[rho (g_p g_q - g_q g_p)].
using CovarianceMatrix = Eigen::MatrixXd;

// Ground-state covariance. Gapped canonical pairs contribute their ground
// block; pairs with quasiparticle energy below zero_threshold contribute
// nothing here and are pinned explicitly through `msf_pairs`: consecutive
// modes (2i, 2i+1) form a qubit with i<g_{2i} g_{2i+1}> = sector.
// With all sectors fixed the state is pure: Gamma Gamma^T = I.
CovarianceMatrix ground_covariance(const CanonicalForm& cf, double zero_threshold = 1e-6,
                                   const std::vector<MajoranaMode>& msf_pairs = {},
                                   double sector = 1.0);

// Finite-temperature variant: eta_j = tanh(beta * eps_j) on every pair
// (arguments in the quasiparticle convention E_j = 2 eps_j, so the block
// value is tanh(beta E_j / 2)).
CovarianceMatrix thermal_covariance(const CanonicalForm& cf, double beta);

// i<g_p g_q> read from Gamma: the Pfaffian of the 2x2 submatrix
// [[G_pp, G_pq],[G_qp, G_qq]], i.e. G_pq. Returns 0 for p == q by the
// antisymmetry convention (the <g_p^2> contribution is excluded).
double pair_correlation(const CovarianceMatrix& gamma, Eigen::Index p, Eigen::Index q);

// i<g_i(t) g_j(t)> = (O eta_i)^T Gamma0 (O eta_j) for all mode pairs i < j.
Eigen::MatrixXd msf_correlations(const std::vector<MajoranaMode>& modes,
                                 const Eigen::MatrixXd& O, const CovarianceMatrix& gamma0);

// <c_r^dag c_r> = (1 + i<g_{r,A} g_{r,B}>)/2 per site from an evolved
// covariance O^T Gamma0 O.
Eigen::VectorXd site_occupations(const CovarianceMatrix& gamma);
CovarianceMatrix evolve_covariance(const CovarianceMatrix& gamma0, const Eigen::MatrixXd& O);

// Overlap between the local fermion mode c_r0 = (g_{r0,A} + i g_{r0,B})/2 and
// the braided-pair mode (g_1(t) + i g_2(t))/2, normalized so a perfect
// mapping gives 1.
double fusion_overlap(const Eigen::VectorXd& eta1_t, const Eigen::VectorXd& eta2_t, int site_r0);

struct FusionReport {
  std::vector<double> times;
  std::vector<double> overlap_series;     // |<c_r0, (g1(t)+i g2(t))/2>|, in [0,1]
  double final_fidelity = 0.0;
  double occupation_plus = 0.0;           // <n_r0> at T for sector +1
  double occupation_minus = 0.0;          // <n_r0> at T for sector -1
  double readout_agreement = 0.0;         // min over sectors of P(correct)
  bool gauge_flipped = false;             // eta_2 -> -eta_2 applied (see below)
  int readout_sign = +1;                  // sector s maps to n (1 - s*readout_sign)/2
};

}  // namespace msf
