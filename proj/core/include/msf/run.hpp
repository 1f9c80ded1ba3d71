#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "msf/evolve.hpp"
#include "msf/gaussian.hpp"
#include "msf/lattice.hpp"
#include "msf/protocol.hpp"
#include "msf/spectral.hpp"

namespace msf {

// Which builtin experiment a config selects (absent: protocol source text).
enum class BuiltinProtocol { None, ExchangeSameDefect, ExchangeTwoDefects, FuseToSite };

struct RunConfig {
  LatticeGeometry geom;
  CouplingParams cpl;

  double mu0 = 10.0;
  double mud = 0.1;
  std::vector<DefectPath> defects;

  NoiseConfig noise;

  // engine
  double tau_site = 64.0;
  int substeps = 40;
  int sample_stride = 8;
  double zero_threshold = 1e-6;
  RampShape ramp = RampShape::Smoothstep;
  double msf_sector = 1.0;

  // protocol
  BuiltinProtocol builtin = BuiltinProtocol::None;
  std::string builtin_defect;   // operand defect id(s)
  std::string builtin_defect2;
  int junction_column = -1;
  Direction fuse_end = Direction::Right;
  std::string protocol_text;    // used when builtin == None

  // chern
  std::vector<double> chern_mu;
  int Nk = 24;

  // sweep
  std::string sweep_axis;  // tau_site | V_T | lambda_R | alpha
  std::vector<double> sweep_values;

  std::string out_dir = "out";
  std::uint64_t seed = 1;
  bool quiet = false;

  ProtocolParams protocol_params() const;
  void validate() const;
};

RunConfig parse_config_json(const std::string& json_text);
RunConfig load_config(const std::string& path);
std::string resolved_config_json(const RunConfig& cfg);

// Builds the commanded t=0 potential (mu0 background, mud on declared defects).
PotentialField initial_potential(const RunConfig& cfg);
ModelContext make_context(const RunConfig& cfg);

// Builds the program for the configured protocol (builtin or source text).
ProtocolProgram make_program(const RunConfig& cfg);

// ---- Runner results --------------------------------------------------------

struct SpectrumRun {
  SpectrumReport report;
  std::vector<MajoranaMode> modes;
};

struct ChernRun {
  std::vector<std::pair<double, int>> rows;  // (mu, C1)
};

struct SampleRow {
  double t = 0.0;
  double gap = 0.0;
  double ortho_defect = 0.0;
  Eigen::MatrixXd B;         // m x m at this checkpoint
  Eigen::VectorXd leakage;   // per mode
  Eigen::MatrixXd corr;      // i<g_i g_j> at this checkpoint
};

struct BraidRun {
  Schedule schedule;
  std::vector<MajoranaMode> modes;  // labeled gamma_1..gamma_m (defect order)
  std::vector<SampleRow> samples;
  BraidResult braid;
  Eigen::MatrixXd O_final;
  double min_gap = 0.0;
  double corr_initial = 0.0;  // i<g1 g2> at t = 0
  double corr_final = 0.0;    // i<g1 g2> at T
};

struct FuseRun {
  Schedule schedule;
  FusionReport report;
};

struct SweepCell {
  double value = 0.0;
  std::uint64_t seed = 0;
  double deviation = 0.0;  // ||B - B_ideal||_max (best over exchange orientation)
  double max_leakage = 0.0;
  double min_gap = 0.0;
};

struct SweepRun {
  std::string axis;
  std::vector<SweepCell> cells;
};

// Runners compute the result and, when out_dir is non-empty, write the
// documented output files plus metadata.json atomically.
SpectrumRun run_spectrum(const RunConfig& cfg, bool write_files = true);
ChernRun run_chern(const RunConfig& cfg, bool write_files = true);
BraidRun run_braid(const RunConfig& cfg, bool write_files = true);
FuseRun run_fuse(const RunConfig& cfg, bool write_files = true);
SweepRun run_sweep(const RunConfig& cfg, bool write_files = true);
Schedule run_compile(const RunConfig& cfg, bool write_files = true);

// Ideal exchange block [[0,-1],[1,0]] deviation, minimized over the two
// path orientations (the handedness of the T-junction is a convention).
double exchange_deviation(const Eigen::MatrixXd& B2);

// Labeled zero modes for the configured defects: modes are matched to defect
// endpoints and ordered defect by defect (first defect's two ends, then the
// next), so consecutive modes form the topological qubits.
std::vector<MajoranaMode> labeled_modes(const RunConfig& cfg, const CanonicalForm& cf);

// ---- Shipped experiment presets -------------------------------------------
// The configurations used throughout: an 18x10 lattice with one 14-site
// defect (spectrum/braid/fuse), the 12x28 two-defect layout, and the 20x12
// noise-study layout.
namespace presets {
RunConfig spectrum_18x10();
RunConfig braid_18x10();
RunConfig two_defect_12x28();
RunConfig noise_20x12();
RunConfig fuse_18x10();
RunConfig chern_scan();
}  // namespace presets

void write_metadata(const RunConfig& cfg);

}  // namespace msf
