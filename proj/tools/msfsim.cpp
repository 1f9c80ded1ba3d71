// msfsim: command-line driver for the Majorana-Shockley line-defect simulator.
//
// Subcommands: spectrum | chern | braid | fuse | sweep | compile
// Exit codes:  0 ok, 2 configuration error, 3 numeric/precondition error.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "msf/run.hpp"
#include "msf/util.hpp"

namespace {

struct CommonOpts {
  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  bool quiet = false;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--config", o.config_path, "Path to the JSON run configuration")->required();
  cmd->add_option("--out", o.out_dir, "Output directory (overrides config)");
  cmd->add_option("--seed", o.seed, "Seed override");
  cmd->add_flag("--quiet", o.quiet, "Suppress progress output");
}

msf::RunConfig resolve(const CommonOpts& o) {
  msf::RunConfig cfg = msf::load_config(o.config_path);
  if (!o.out_dir.empty()) cfg.out_dir = o.out_dir;
  if (o.seed) {
    cfg.seed = *o.seed;
    cfg.noise.seed = *o.seed;
  }
  cfg.quiet = o.quiet;
  return cfg;
}

void note(const msf::RunConfig& cfg, const std::string& msg) {
  if (!cfg.quiet) std::cout << msg << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Line-defect Majorana simulator: spectra, Chern numbers, braiding, fusion"};
  app.require_subcommand(1);

  CommonOpts o_spectrum, o_chern, o_braid, o_fuse, o_sweep, o_compile;
  add_common(app.add_subcommand("spectrum", "Quasiparticle spectrum and zero-mode maps"),
             o_spectrum);
  add_common(app.add_subcommand("chern", "Chern number over a list of mu values"), o_chern);
  add_common(app.add_subcommand("braid", "Compile and run a braiding protocol"), o_braid);
  add_common(app.add_subcommand("fuse", "Fuse a defect to one site and read the qubit out"),
             o_fuse);
  add_common(app.add_subcommand("sweep", "Braid once per value of a noise/engine axis"), o_sweep);
  add_common(app.add_subcommand("compile", "Compile a protocol to schedule.csv only"), o_compile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (app.got_subcommand("spectrum")) {
      msf::RunConfig cfg = resolve(o_spectrum);
      auto run = msf::run_spectrum(cfg);
      note(cfg, "zero modes: " + std::to_string(run.report.zero_mode_count) +
                    ", gap: " + msf::fmt_g17(run.report.gap));
    } else if (app.got_subcommand("chern")) {
      msf::RunConfig cfg = resolve(o_chern);
      auto run = msf::run_chern(cfg);
      for (auto [mu, c] : run.rows)
        note(cfg, "mu = " + msf::fmt_g17(mu) + "  C1 = " + std::to_string(c));
    } else if (app.got_subcommand("braid")) {
      msf::RunConfig cfg = resolve(o_braid);
      auto run = msf::run_braid(cfg);
      note(cfg, "min gap: " + msf::fmt_g17(run.min_gap) +
                    ", exchange deviation: " +
                    msf::fmt_g17(msf::exchange_deviation(run.braid.B.topLeftCorner(2, 2))));
    } else if (app.got_subcommand("fuse")) {
      msf::RunConfig cfg = resolve(o_fuse);
      auto run = msf::run_fuse(cfg);
      note(cfg, "final fidelity: " + msf::fmt_g17(run.report.final_fidelity) +
                    ", readout agreement: " + msf::fmt_g17(run.report.readout_agreement));
    } else if (app.got_subcommand("sweep")) {
      msf::RunConfig cfg = resolve(o_sweep);
      auto run = msf::run_sweep(cfg);
      for (const auto& c : run.cells)
        note(cfg, run.axis + " = " + msf::fmt_g17(c.value) +
                      "  deviation = " + msf::fmt_g17(c.deviation));
    } else if (app.got_subcommand("compile")) {
      msf::RunConfig cfg = resolve(o_compile);
      auto s = msf::run_compile(cfg);
      note(cfg, std::to_string(s.events.size()) + " events, total time " +
                    msf::fmt_g17(s.total_time));
    }
  } catch (const msf::ConfigError& e) {
    std::cerr << "{\"error\": {\"type\": \"config\", \"message\": \"" << e.what() << "\"}}\n";
    return 2;
  } catch (const msf::NumericError& e) {
    std::cerr << "{\"error\": {\"type\": \"numeric\", \"message\": \"" << e.what() << "\"}}\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "{\"error\": {\"type\": \"internal\", \"message\": \"" << e.what() << "\"}}\n";
    return 3;
  }
  return 0;
}
