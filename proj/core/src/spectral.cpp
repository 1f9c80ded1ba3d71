#include "msf/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "msf/util.hpp"

namespace msf {

namespace {

// Orthonormalize v against the first `k` rows of basis, in place.
void project_out(Eigen::VectorXd& v, const Eigen::MatrixXd& basis, Eigen::Index k) {
  for (int pass = 0; pass < 2; ++pass)
    for (Eigen::Index i = 0; i < k; ++i) v -= basis.row(i).dot(v) * basis.row(i).transpose();
}

void fix_vector_sign(Eigen::VectorXd& v) {
  Eigen::Index imax = 0;
  v.cwiseAbs().maxCoeff(&imax);
  if (v[imax] < 0.0) v = -v;
}

}  // namespace

// The canonical form is computed from the real symmetric eigenproblem of
// A^T A = -A^2 (eigenvalues eps_j^2, each doubled). Within each eigenvalue
// cluster the invariant subspace is paired skew-faithfully: u from the
// cluster basis, w = A u / ||A u||. Canonical energies are recovered as
// eps_j = ||A u_j||, which is accurate to machine precision in ||A|| even
// when eps_j^2 drowns in the symmetric solver's noise floor (the near-zero
// MSF splittings are the case that matters).
CanonicalForm canonical_form(const Eigen::MatrixXd& A) {
  if (A.rows() != A.cols() || A.rows() % 2 != 0) throw NumericError("A must be 2N x 2N");
  if (!A.allFinite()) throw NumericError("non-finite entries in skew matrix");
  const Eigen::Index dim = A.rows();
  const Eigen::Index npairs = dim / 2;

  Eigen::MatrixXd S = A.transpose() * A;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S);
  if (es.info() != Eigen::Success) throw NumericError("symmetric eigensolver failed");
  const Eigen::VectorXd& lam = es.eigenvalues();  // ascending, ~eps^2 doubled
  const Eigen::MatrixXd& V = es.eigenvectors();

  const double lam_scale = std::max(lam.cwiseAbs().maxCoeff(), 1e-300);
  const double cluster_tol = 1e-10 * lam_scale;

  CanonicalForm cf;
  cf.O.resize(dim, dim);
  cf.eps.resize(npairs);

  const double null_tol = 1e-14 * std::max(1.0, std::sqrt(lam_scale));

  Eigen::Index built = 0;  // rows of O filled so far
  Eigen::Index col = 0;    // eigenvector columns consumed
  Eigen::Index pair = 0;
  while (col < dim) {
    // collect a cluster of (numerically) equal eigenvalues
    Eigen::Index hi = col + 1;
    while (hi < dim && lam[hi] - lam[col] <= cluster_tol) ++hi;
    if ((hi - col) % 2 != 0) {
      if (hi < dim)
        ++hi;  // widen; true multiplicities are even
      else
        throw NumericError("canonical pairing failed: odd eigenvalue cluster");
    }

    auto next_free_direction = [&]() {
      Eigen::VectorXd bestv;
      double best = -1.0;
      for (Eigen::Index c = col; c < hi; ++c) {
        Eigen::VectorXd cand = V.col(c);
        project_out(cand, cf.O, built);
        const double nrm = cand.norm();
        if (nrm > best) {
          best = nrm;
          bestv = cand;
        }
        if (nrm > 0.7) break;  // deterministic early pick
      }
      if (best < 1e-8) throw NumericError("canonical pairing failed: degenerate cluster basis");
      return Eigen::VectorXd(bestv.normalized());
    };

    for (Eigen::Index k = 0; k < (hi - col) / 2; ++k) {
      Eigen::VectorXd u = next_free_direction();
      fix_vector_sign(u);
      cf.O.row(built) = u.transpose();
      ++built;

      Eigen::VectorXd w = A * u;
      const double eps = w.norm();
      if (eps > null_tol) {
        // w = A u / eps lies in the same invariant subspace with u^T A w = -eps
        w /= eps;
        project_out(w, cf.O, built);  // safety against rounding in degenerate clusters
        w.normalize();
      } else {
        w = next_free_direction();
        fix_vector_sign(w);
      }
      cf.O.row(built) = w.transpose();
      ++built;
      cf.eps[pair] = eps > null_tol ? eps : 0.0;
      ++pair;
    }
    col = hi;
  }

  // ascending eps with a stable reorder (clusters came out ascending in eps^2,
  // but the eps recomputation can reorder within noise)
  std::vector<Eigen::Index> order(npairs);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return cf.eps[a] < cf.eps[b]; });
  CanonicalForm out;
  out.O.resize(dim, dim);
  out.eps.resize(npairs);
  for (Eigen::Index j = 0; j < npairs; ++j) {
    out.eps[j] = cf.eps[order[j]];
    out.O.row(2 * j) = cf.O.row(2 * order[j]);
    out.O.row(2 * j + 1) = cf.O.row(2 * order[j] + 1);
  }

  // absorb a det = -1 orientation into an exactly-null pair when one exists
  if (out.eps.size() > 0 && out.eps[0] <= 1e-13 * std::sqrt(lam_scale)) {
    if (orientation_sign(out) < 0) out.O.row(1) = -out.O.row(1);
  }
  return out;
}

Eigen::VectorXd canonical_energies(const Eigen::MatrixXd& A) {
  Eigen::MatrixXd S = A.transpose() * A;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw NumericError("symmetric eigensolver failed");
  const Eigen::Index npairs = A.rows() / 2;
  Eigen::VectorXd eps(npairs);
  for (Eigen::Index j = 0; j < npairs; ++j)
    eps[j] = std::sqrt(std::max(0.0, es.eigenvalues()[2 * j]));
  return eps;
}

int orientation_sign(const CanonicalForm& cf) {
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(cf.O);
  double d = lu.determinant();
  return d >= 0 ? 1 : -1;
}

SpectrumReport spectrum_from_energies(const Eigen::VectorXd& eps, double zero_threshold) {
  SpectrumReport rep;
  rep.energies.reserve(2 * eps.size());
  for (Eigen::Index j = 0; j < eps.size(); ++j) {
    rep.energies.push_back(2.0 * eps[j]);
    rep.energies.push_back(2.0 * eps[j]);
  }
  std::sort(rep.energies.begin(), rep.energies.end());
  for (double e : rep.energies)
    if (e < zero_threshold) ++rep.zero_mode_count;
  rep.splitting = rep.zero_mode_count > 0 ? rep.energies[0] : 0.0;
  rep.gap = rep.zero_mode_count < static_cast<int>(rep.energies.size())
                ? rep.energies[rep.zero_mode_count]
                : 0.0;
  return rep;
}

SpectrumReport quasiparticle_spectrum(const Eigen::MatrixXd& A, double zero_threshold) {
  // canonical_form recovers eps = ||A u|| to machine accuracy in ||A||; the
  // values-only path would put a ~sqrt(eps_machine ||A||^2) floor under the
  // near-zero splittings, which is exactly what this report is for.
  return spectrum_from_energies(canonical_form(A).eps, zero_threshold);
}

Eigen::VectorXd site_weights(const Eigen::VectorXd& eta) {
  const Eigen::Index n = eta.size() / 2;
  Eigen::VectorXd w(n);
  for (Eigen::Index s = 0; s < n; ++s) w[s] = eta[2 * s] * eta[2 * s] + eta[2 * s + 1] * eta[2 * s + 1];
  return w;
}

std::array<double, 2> mode_centroid(const Eigen::VectorXd& eta, const LatticeGeometry& geom) {
  Eigen::VectorXd w = site_weights(eta);
  double total = w.sum();
  double cx = 0.0, cy = 0.0;
  for (Eigen::Index s = 0; s < w.size(); ++s) {
    cx += w[s] * geom.site_x(static_cast<int>(s));
    cy += w[s] * geom.site_y(static_cast<int>(s));
  }
  return {cx / total, cy / total};
}

namespace {

// Rotation angle maximizing the centroid separation of a mode pair, from the
// closed form: centroid differences are linear in (cos 2t, sin 2t), so the
// optimum is the leading eigenvector of a 2x2 Gram matrix.
double best_pair_angle(const Eigen::VectorXd& e1, const Eigen::VectorXd& e2,
                       const LatticeGeometry& geom) {
  const Eigen::Index n = e1.size() / 2;
  // site-resolved quadratic forms: q11, q22, q12
  double axc = 0, axs = 0, ayc = 0, ays = 0;
  for (Eigen::Index s = 0; s < n; ++s) {
    const double q11 = e1[2 * s] * e1[2 * s] + e1[2 * s + 1] * e1[2 * s + 1];
    const double q22 = e2[2 * s] * e2[2 * s] + e2[2 * s + 1] * e2[2 * s + 1];
    const double q12 = e1[2 * s] * e2[2 * s] + e1[2 * s + 1] * e2[2 * s + 1];
    const double x = geom.site_x(static_cast<int>(s));
    const double y = geom.site_y(static_cast<int>(s));
    // c1(t) - c2(t) = (q11 - q22) cos 2t + 2 q12 sin 2t, per coordinate
    axc += x * (q11 - q22);
    axs += x * 2.0 * q12;
    ayc += y * (q11 - q22);
    ays += y * 2.0 * q12;
  }
  Eigen::Matrix2d M;
  M << axc * axc + ayc * ayc, axc * axs + ayc * ays, axc * axs + ayc * ays,
      axs * axs + ays * ays;
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(M);
  const Eigen::Vector2d v = es.eigenvectors().col(1);  // leading
  return 0.5 * std::atan2(v[1], v[0]);
}

}  // namespace

std::vector<MajoranaMode> zero_modes(const CanonicalForm& cf, const LatticeGeometry& geom,
                                     double zero_threshold) {
  std::vector<Eigen::VectorXd> vecs;
  std::vector<double> energies;
  for (Eigen::Index j = 0; j < cf.pairs(); ++j) {
    if (2.0 * cf.eps[j] >= zero_threshold) break;
    vecs.push_back(cf.mode_u(j));
    vecs.push_back(cf.mode_w(j));
    energies.push_back(2.0 * cf.eps[j]);
    energies.push_back(2.0 * cf.eps[j]);
  }
  if (vecs.empty()) return {};
  if (vecs.size() % 2 != 0)
    throw NumericError("odd number of near-zero modes; zero threshold misconfigured");

  // localization sweeps: pairwise rotations maximizing centroid separation
  const int m = static_cast<int>(vecs.size());
  for (int sweep = 0; sweep < 60; ++sweep) {
    double moved = 0.0;
    for (int i = 0; i < m; ++i)
      for (int j = i + 1; j < m; ++j) {
        const double t = best_pair_angle(vecs[i], vecs[j], geom);
        if (std::abs(t) < 1e-12) continue;
        Eigen::VectorXd a = std::cos(t) * vecs[i] + std::sin(t) * vecs[j];
        Eigen::VectorXd b = -std::sin(t) * vecs[i] + std::cos(t) * vecs[j];
        vecs[i] = a;
        vecs[j] = b;
        moved = std::max(moved, std::abs(t));
      }
    if (moved < 1e-10) break;
  }

  std::vector<MajoranaMode> modes(m);
  for (int i = 0; i < m; ++i) {
    fix_vector_sign(vecs[i]);
    modes[i].eta = vecs[i];
    modes[i].energy = energies[i];
  }
  std::stable_sort(modes.begin(), modes.end(), [&](const MajoranaMode& a, const MajoranaMode& b) {
    auto ca = mode_centroid(a.eta, geom);
    auto cb = mode_centroid(b.eta, geom);
    if (std::abs(ca[0] - cb[0]) > 1e-9) return ca[0] < cb[0];
    return ca[1] < cb[1];
  });
  return modes;
}

double instantaneous_gap(const Eigen::VectorXd& eps, int n_exclude) {
  if (n_exclude < 0 || n_exclude % 2 != 0) throw NumericError("n_exclude must be even");
  const Eigen::Index skip = n_exclude / 2;
  if (skip >= eps.size()) throw NumericError("n_exclude exceeds spectrum size");
  return 2.0 * eps[skip];
}

double instantaneous_gap(const Eigen::MatrixXd& A, int n_exclude) {
  return instantaneous_gap(canonical_energies(A), n_exclude);
}

}  // namespace msf
