#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

#include "msf/lattice.hpp"
#include "msf/protocol.hpp"
#include "msf/spectral.hpp"

namespace msf {

// Heisenberg propagator O(t) with gamma_p(t) = sum_q O_qp gamma_q(0).
// From dgamma_p/dt = i[H, gamma_p] = 2 sum_q A_pq gamma_q one gets
// gamma(t) = exp(2At) gamma(0), hence O(t) = exp(-2At) for constant A and
// right-multiplied accumulation O <- O * exp(-2 A dt) in time order.
struct Propagator {
  Eigen::MatrixXd O;
  double t = 0.0;

  static Propagator identity(Eigen::Index dim, double t = 0.0);
  double orthogonality_defect() const;  // max |O O^T - I|
};

inline constexpr double kGeneratorScale = -2.0;  // O(t) = exp(kGeneratorScale * A * t)

// Exact orthogonal exponential exp(scale * A * dt) via the canonical form
// (blockwise 2x2 rotations). Unconditionally orthogonal for any dt.
Eigen::MatrixXd step_generator(const Eigen::MatrixXd& A, double dt,
                               double scale = kGeneratorScale);
// Same, reusing an existing canonical form of A.
Eigen::MatrixXd orthogonal_exponential(const CanonicalForm& cf, double s);

struct EngineParams {
  int substeps = 40;          // substeps per ramp event (midpoint sampling)
  int sample_stride = 8;      // gap/correlation sample every this many substeps
  int reortho_every = 100;    // polar re-orthogonalization cadence
  int gap_exclude_modes = 2;  // MSF modes excluded from the gap
};

// Everything evolve() needs to reassemble A(t) from the instantaneous
// commanded potential field.
struct ModelContext {
  LatticeGeometry geom;
  CouplingParams cpl;
  PotentialField commanded0;  // commanded field at t = 0 (defects in place)
  NoiseConfig noise;

  // base field for crosstalk spreading (uniform background mu0)
  PotentialField base;

  PotentialField physical(const PotentialField& commanded) const;
  SkewMatrix skew(const PotentialField& commanded) const;
};

struct Checkpoint {
  double t = 0.0;
  double gap = 0.0;          // instantaneous quasiparticle gap (E convention)
  double ortho_defect = 0.0; // max |O O^T - I| at this checkpoint
};

// Called at every sample point with the running propagator.
using EvolveObserver = std::function<void(const Checkpoint&, const Eigen::MatrixXd& O)>;

// Integrates the time-ordered propagator over the schedule. Within each ramp
// event the potential is sampled at substep midpoints, A reassembled and the
// exact blockwise exponential accumulated; checkpoints are emitted at event
// boundaries and every sample_stride substeps.
Propagator evolve(const Schedule& schedule, const ModelContext& ctx, const EngineParams& params,
                  const EvolveObserver& observer = nullptr);

// B_ij = eta_j^T O eta_i: overlap of evolved mode i with initial mode j.
// leakage_i = 1 - sum_j B_ij^2 (weight outside the initial zero-mode span).
struct BraidResult {
  Eigen::MatrixXd B;
  Eigen::VectorXd leakage;
};

BraidResult braid_matrix(const std::vector<MajoranaMode>& initial_modes,
                         const Eigen::MatrixXd& O);
Eigen::MatrixXd mode_matrix(const std::vector<MajoranaMode>& modes);  // 2N x m

// Runs both orderings of two exchange programs and reports the composite
// braid matrices and their max-norm difference. Propagators of back-to-back
// schedules compose exactly (the generator trajectory concatenates), so each
// program is evolved once and the composites are matrix products.
struct NoncommutativityReport {
  Eigen::MatrixXd B_12_then_23;
  Eigen::MatrixXd B_23_then_12;
  double difference = 0.0;  // max-norm of the difference
};

NoncommutativityReport noncommutativity_check(const std::vector<MajoranaMode>& modes,
                                              const Eigen::MatrixXd& O_sigma12,
                                              const Eigen::MatrixXd& O_sigma23);

}  // namespace msf
