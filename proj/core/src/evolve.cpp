#include "msf/evolve.hpp"

#include <cmath>

#include "msf/util.hpp"

namespace msf {

Propagator Propagator::identity(Eigen::Index dim, double t0) {
  Propagator p;
  p.O = Eigen::MatrixXd::Identity(dim, dim);
  p.t = t0;
  return p;
}

double Propagator::orthogonality_defect() const {
  return (O * O.transpose() - Eigen::MatrixXd::Identity(O.rows(), O.cols()))
      .cwiseAbs()
      .maxCoeff();
}

Eigen::MatrixXd orthogonal_exponential(const CanonicalForm& cf, double s) {
  // exp(s A) = O^T exp(s K) O with K the canonical blocks [[0,-eps],[eps,0]]:
  // each pair of rows of O is rotated by angle -s*eps before the final product.
  const Eigen::Index dim = cf.O.rows();
  Eigen::MatrixXd rotated(dim, dim);
  for (Eigen::Index j = 0; j < cf.pairs(); ++j) {
    const double c = std::cos(s * cf.eps[j]);
    const double sn = std::sin(s * cf.eps[j]);
    rotated.row(2 * j) = c * cf.O.row(2 * j) - sn * cf.O.row(2 * j + 1);
    rotated.row(2 * j + 1) = sn * cf.O.row(2 * j) + c * cf.O.row(2 * j + 1);
  }
  return cf.O.transpose() * rotated;
}

Eigen::MatrixXd step_generator(const Eigen::MatrixXd& A, double dt, double scale) {
  if (!(dt > 0.0)) throw NumericError("dt must be positive");
  return orthogonal_exponential(canonical_form(A), scale * dt);
}

PotentialField ModelContext::physical(const PotentialField& commanded) const {
  return apply_noise(commanded, base, noise, geom);
}

SkewMatrix ModelContext::skew(const PotentialField& commanded) const {
  return build_skew_matrix(geom, physical(commanded), cpl);
}

namespace {

void reorthogonalize(Eigen::MatrixXd& O) {
  // symmetric polar projection: O <- O (O^T O)^{-1/2}
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(O.transpose() * O);
  Eigen::VectorXd inv_sqrt = es.eigenvalues().cwiseMax(1e-300).cwiseSqrt().cwiseInverse();
  O = O * (es.eigenvectors() * inv_sqrt.asDiagonal() * es.eigenvectors().transpose());
}

}  // namespace

Propagator evolve(const Schedule& schedule, const ModelContext& ctx, const EngineParams& params,
                  const EvolveObserver& observer) {
  if (params.substeps < 1) throw ConfigError("substeps must be >= 1");
  const Eigen::Index dim = 2 * ctx.geom.sites();
  if (ctx.commanded0.size() != ctx.geom.sites())
    throw ConfigError("schedule/lattice mismatch: potential size");

  PotentialField commanded = ctx.commanded0;
  SkewMatrix A = ctx.skew(commanded);
  Propagator prop = Propagator::identity(dim);
  long accum = 0;

  auto sample = [&](double t) {
    if (!observer) return;
    Checkpoint cp;
    cp.t = t;
    update_onsite_blocks(A, ctx.physical(commanded));
    cp.gap = instantaneous_gap(canonical_energies(A.a), params.gap_exclude_modes);
    cp.ortho_defect = prop.orthogonality_defect();
    observer(cp, prop.O);
  };

  sample(0.0);

  for (const auto& ev : schedule.events) {
    if (!ctx.geom.inside(ev.site.x, ev.site.y))
      throw ConfigError("schedule event outside the lattice");
    const int site = ctx.geom.site(ev.site.x, ev.site.y);
    const double duration = ev.t_end - ev.t_start;
    if (!(duration > 0.0)) throw ConfigError("schedule event with non-positive duration");
    const double dt = duration / params.substeps;

    for (int s = 0; s < params.substeps; ++s) {
      const double frac = (s + 0.5) / params.substeps;  // midpoint rule
      commanded[site] = ramp_value(ev.shape, ev.mu_from, ev.mu_to, frac);
      update_onsite_blocks(A, ctx.physical(commanded));
      prop.O *= orthogonal_exponential(canonical_form(A.a), kGeneratorScale * dt);
      prop.t = ev.t_start + (s + 1) * dt;
      if (++accum % params.reortho_every == 0) reorthogonalize(prop.O);
      if (params.sample_stride > 0 && (s + 1) % params.sample_stride == 0 &&
          s + 1 < params.substeps) {
        commanded[site] = ramp_value(ev.shape, ev.mu_from, ev.mu_to, double(s + 1) / params.substeps);
        sample(prop.t);
      }
    }
    commanded[site] = ev.mu_to;  // event boundary is exact
    sample(ev.t_end);
  }
  return prop;
}

Eigen::MatrixXd mode_matrix(const std::vector<MajoranaMode>& modes) {
  if (modes.empty()) throw NumericError("no modes given");
  Eigen::MatrixXd H(modes[0].eta.size(), static_cast<Eigen::Index>(modes.size()));
  for (std::size_t i = 0; i < modes.size(); ++i) H.col(static_cast<Eigen::Index>(i)) = modes[i].eta;
  return H;
}

BraidResult braid_matrix(const std::vector<MajoranaMode>& initial_modes,
                         const Eigen::MatrixXd& O) {
  const Eigen::MatrixXd H = mode_matrix(initial_modes);
  // B_ij = eta_j^T O eta_i
  Eigen::MatrixXd B = (H.transpose() * O * H).transpose();
  BraidResult r;
  r.B = B;
  r.leakage = Eigen::VectorXd::Ones(B.rows()) - B.rowwise().squaredNorm();
  return r;
}

NoncommutativityReport noncommutativity_check(const std::vector<MajoranaMode>& modes,
                                              const Eigen::MatrixXd& O_sigma12,
                                              const Eigen::MatrixXd& O_sigma23) {
  // Running program X then program Y evolves the generator trajectory of X
  // followed by that of Y, so the composite propagator is the product
  // O_X * O_Y (right-multiplied accumulation).
  NoncommutativityReport rep;
  rep.B_12_then_23 = braid_matrix(modes, O_sigma12 * O_sigma23).B;
  rep.B_23_then_12 = braid_matrix(modes, O_sigma23 * O_sigma12).B;
  rep.difference = (rep.B_12_then_23 - rep.B_23_then_12).cwiseAbs().maxCoeff();
  return rep;
}

}  // namespace msf
