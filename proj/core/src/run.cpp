#include "msf/run.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "msf/bloch.hpp"
#include "msf/util.hpp"

namespace msf {

using nlohmann::json;

namespace {

[[noreturn]] void cfg_fail(const std::string& msg) { throw ConfigError("config: " + msg); }

void check_keys(const json& obj, const std::string& where,
                std::initializer_list<const char*> allowed) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (const char* k : allowed)
      if (it.key() == k) ok = true;
    if (!ok) cfg_fail("unknown key '" + it.key() + "' in " + where);
  }
}

double num_at(const json& obj, const char* key, double dflt) {
  if (!obj.contains(key)) return dflt;
  if (!obj[key].is_number()) cfg_fail(std::string("'") + key + "' must be a number");
  return obj[key].get<double>();
}

int int_at(const json& obj, const char* key, int dflt) {
  if (!obj.contains(key)) return dflt;
  if (!obj[key].is_number_integer()) cfg_fail(std::string("'") + key + "' must be an integer");
  return obj[key].get<int>();
}

std::string str_at(const json& obj, const char* key, const std::string& dflt) {
  if (!obj.contains(key)) return dflt;
  if (!obj[key].is_string()) cfg_fail(std::string("'") + key + "' must be a string");
  return obj[key].get<std::string>();
}

Boundary parse_boundary(const std::string& s) {
  if (s == "open") return Boundary::Open;
  if (s == "periodic") return Boundary::Periodic;
  cfg_fail("boundary must be 'open' or 'periodic'");
}

Site parse_site_json(const json& j, const char* what) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number_integer() || !j[1].is_number_integer())
    cfg_fail(std::string(what) + " must be [x, y]");
  return {j[0].get<int>(), j[1].get<int>()};
}

// ---- output writing ---------------------------------------------------------

std::string jesc(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') out.push_back('\\');
    if (c == '\n') {
      out += "\\n";
      continue;
    }
    out.push_back(c);
  }
  return out;
}

std::string jnum(double x) { return std::isfinite(x) ? fmt_g17(x) : "null"; }

std::string jmatrix(const Eigen::MatrixXd& M) {
  std::ostringstream out;
  out << "[";
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    if (i) out << ",";
    out << "[";
    for (Eigen::Index j = 0; j < M.cols(); ++j) {
      if (j) out << ",";
      out << jnum(M(i, j));
    }
    out << "]";
  }
  out << "]";
  return out.str();
}

std::string jvector(const Eigen::VectorXd& v) {
  std::ostringstream out;
  out << "[";
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i) out << ",";
    out << jnum(v[i]);
  }
  out << "]";
  return out.str();
}

std::filesystem::path out_path(const RunConfig& cfg, const std::string& name) {
  return std::filesystem::path(cfg.out_dir) / name;
}

}  // namespace

ProtocolParams RunConfig::protocol_params() const {
  ProtocolParams p;
  p.mu0 = mu0;
  p.mud = mud;
  p.tau_site = tau_site;
  p.substeps = substeps;
  return p;
}

void RunConfig::validate() const {
  geom.validate();
  cpl.validate();
  noise.validate();
  if (!std::isfinite(mu0) || !std::isfinite(mud)) cfg_fail("non-finite potentials");
  if (!(tau_site > 0.0)) cfg_fail("tau_site must be positive");
  if (substeps < 1) cfg_fail("substeps must be >= 1");
  if (sample_stride < 0) cfg_fail("sample_stride must be >= 0");
  if (!(zero_threshold > 0.0)) cfg_fail("zero_threshold must be positive");
  if (msf_sector != 1.0 && msf_sector != -1.0) cfg_fail("msf_sector must be +1 or -1");
  if (Nk < 4) cfg_fail("Nk must be >= 4");
  std::set<std::string> ids;
  std::set<Site> used;
  for (const auto& d : defects) {
    d.validate(geom);
    if (!ids.insert(d.id).second) cfg_fail("duplicate defect id '" + d.id + "'");
    for (const Site& s : d.sites)
      if (!used.insert(s).second) cfg_fail("defects overlap");
  }
  if (!sweep_axis.empty() && sweep_axis != "tau_site" && sweep_axis != "V_T" &&
      sweep_axis != "lambda_R" && sweep_axis != "alpha")
    cfg_fail("sweep axis must be tau_site | V_T | lambda_R | alpha");
  if (builtin != BuiltinProtocol::None) {
    auto has = [&](const std::string& id) {
      return std::any_of(defects.begin(), defects.end(),
                         [&](const DefectPath& d) { return d.id == id; });
    };
    if (!has(builtin_defect)) cfg_fail("protocol references undeclared defect '" + builtin_defect + "'");
    if (builtin == BuiltinProtocol::ExchangeTwoDefects && !has(builtin_defect2))
      cfg_fail("protocol references undeclared defect '" + builtin_defect2 + "'");
  }
}

RunConfig parse_config_json(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::exception& e) {
    cfg_fail(std::string("invalid JSON: ") + e.what());
  }
  if (!root.is_object()) cfg_fail("top level must be an object");
  check_keys(root, "config",
             {"geometry", "couplings", "potential", "noise", "engine", "protocol", "chern",
              "sweep", "output", "seed"});

  RunConfig cfg;

  const json geo = root.value("geometry", json::object());
  check_keys(geo, "geometry", {"Lx", "Ly", "boundary"});
  cfg.geom.Lx = int_at(geo, "Lx", 0);
  cfg.geom.Ly = int_at(geo, "Ly", 0);
  if (geo.contains("boundary")) {
    const json& b = geo["boundary"];
    if (!b.is_array() || b.size() != 2) cfg_fail("boundary must be [x, y] strings");
    cfg.geom.bx = parse_boundary(b[0].get<std::string>());
    cfg.geom.by = parse_boundary(b[1].get<std::string>());
  }

  const json cp = root.value("couplings", json::object());
  check_keys(cp, "couplings", {"J", "Delta"});
  cfg.cpl.J = num_at(cp, "J", 1.0);
  cfg.cpl.Delta = num_at(cp, "Delta", 1.0);

  const json pot = root.value("potential", json::object());
  check_keys(pot, "potential", {"mu0", "mud", "defects"});
  cfg.mu0 = num_at(pot, "mu0", 10.0);
  cfg.mud = num_at(pot, "mud", 0.1);
  if (pot.contains("defects")) {
    if (!pot["defects"].is_array()) cfg_fail("potential.defects must be an array");
    for (const json& dj : pot["defects"]) {
      check_keys(dj, "defect", {"id", "from", "to"});
      DefectPath d;
      d.id = str_at(dj, "id", "");
      if (d.id.empty()) cfg_fail("defect needs an id");
      const Site a = parse_site_json(dj.at("from"), "defect.from");
      const Site b = parse_site_json(dj.at("to"), "defect.to");
      if (a.x != b.x && a.y != b.y) cfg_fail("defect '" + d.id + "' must be axis-aligned");
      int dx = (b.x > a.x) - (b.x < a.x), dy = (b.y > a.y) - (b.y < a.y);
      for (Site s = a;; s = {s.x + dx, s.y + dy}) {
        d.sites.push_back(s);
        if (s == b) break;
      }
      cfg.defects.push_back(std::move(d));
    }
  }

  const json nz = root.value("noise", json::object());
  check_keys(nz, "noise", {"alpha", "V_T", "lambda_R", "seed"});
  cfg.noise.alpha = num_at(nz, "alpha", 1.0);
  cfg.noise.V_T = num_at(nz, "V_T", 0.0);
  cfg.noise.lambda_R = num_at(nz, "lambda_R", 0.0);

  if (root.contains("seed")) {
    if (!root["seed"].is_number_integer()) cfg_fail("seed must be an integer");
    cfg.seed = root["seed"].get<std::uint64_t>();
  }
  cfg.noise.seed = nz.contains("seed") ? nz["seed"].get<std::uint64_t>() : cfg.seed;

  const json en = root.value("engine", json::object());
  check_keys(en, "engine",
             {"tau_site", "substeps", "sample_stride", "zero_threshold", "ramp", "msf_sector"});
  cfg.tau_site = num_at(en, "tau_site", cfg.tau_site);
  cfg.substeps = int_at(en, "substeps", cfg.substeps);
  cfg.sample_stride = int_at(en, "sample_stride", cfg.sample_stride);
  cfg.zero_threshold = num_at(en, "zero_threshold", cfg.zero_threshold);
  cfg.msf_sector = num_at(en, "msf_sector", cfg.msf_sector);
  const std::string ramp = str_at(en, "ramp", "smoothstep");
  if (ramp == "smoothstep")
    cfg.ramp = RampShape::Smoothstep;
  else if (ramp == "linear")
    cfg.ramp = RampShape::Linear;
  else
    cfg_fail("ramp must be 'smoothstep' or 'linear'");

  const json pr = root.value("protocol", json::object());
  check_keys(pr, "protocol", {"builtin", "defect", "defects", "junction", "end", "source", "file"});
  const std::string builtin = str_at(pr, "builtin", "");
  if (builtin.empty())
    cfg.builtin = BuiltinProtocol::None;
  else if (builtin == "exchange_same_defect")
    cfg.builtin = BuiltinProtocol::ExchangeSameDefect;
  else if (builtin == "exchange_two_defects")
    cfg.builtin = BuiltinProtocol::ExchangeTwoDefects;
  else if (builtin == "fuse")
    cfg.builtin = BuiltinProtocol::FuseToSite;
  else
    cfg_fail("unknown builtin protocol '" + builtin + "'");
  if (pr.contains("defects")) {
    const json& ds = pr["defects"];
    if (!ds.is_array() || ds.size() != 2) cfg_fail("protocol.defects must name two defects");
    cfg.builtin_defect = ds[0].get<std::string>();
    cfg.builtin_defect2 = ds[1].get<std::string>();
  } else {
    cfg.builtin_defect = str_at(pr, "defect", "");
  }
  if (pr.contains("junction")) cfg.junction_column = parse_site_json(pr["junction"], "junction").x;
  const std::string end = str_at(pr, "end", "right");
  if (end == "left")
    cfg.fuse_end = Direction::Left;
  else if (end == "right")
    cfg.fuse_end = Direction::Right;
  else
    cfg_fail("protocol.end must be 'left' or 'right'");
  if (pr.contains("source")) cfg.protocol_text = pr["source"].get<std::string>();
  if (pr.contains("file")) cfg.protocol_text = read_text_file(pr["file"].get<std::string>());

  const json ch = root.value("chern", json::object());
  check_keys(ch, "chern", {"mu", "Nk"});
  if (ch.contains("mu")) {
    if (!ch["mu"].is_array()) cfg_fail("chern.mu must be an array");
    for (const json& m : ch["mu"]) cfg.chern_mu.push_back(m.get<double>());
  }
  cfg.Nk = int_at(ch, "Nk", cfg.Nk);

  const json sw = root.value("sweep", json::object());
  check_keys(sw, "sweep", {"axis", "values"});
  cfg.sweep_axis = str_at(sw, "axis", "");
  if (sw.contains("values"))
    for (const json& v : sw["values"]) cfg.sweep_values.push_back(v.get<double>());

  const json outj = root.value("output", json::object());
  check_keys(outj, "output", {"dir"});
  cfg.out_dir = str_at(outj, "dir", cfg.out_dir);

  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::string text;
  try {
    text = read_text_file(path);
  } catch (const std::exception& e) {
    cfg_fail(e.what());
  }
  return parse_config_json(text);
}

std::string resolved_config_json(const RunConfig& cfg) {
  std::ostringstream o;
  auto bnd = [](Boundary b) { return b == Boundary::Open ? "\"open\"" : "\"periodic\""; };
  o << "{\n";
  o << "  \"geometry\": {\"Lx\": " << cfg.geom.Lx << ", \"Ly\": " << cfg.geom.Ly
    << ", \"boundary\": [" << bnd(cfg.geom.bx) << ", " << bnd(cfg.geom.by) << "]},\n";
  o << "  \"couplings\": {\"J\": " << jnum(cfg.cpl.J) << ", \"Delta\": " << jnum(cfg.cpl.Delta)
    << "},\n";
  o << "  \"potential\": {\"mu0\": " << jnum(cfg.mu0) << ", \"mud\": " << jnum(cfg.mud)
    << ", \"defects\": [";
  for (std::size_t i = 0; i < cfg.defects.size(); ++i) {
    const auto& d = cfg.defects[i];
    if (i) o << ", ";
    o << "{\"id\": \"" << jesc(d.id) << "\", \"from\": [" << d.sites.front().x << ", "
      << d.sites.front().y << "], \"to\": [" << d.sites.back().x << ", " << d.sites.back().y
      << "]}";
  }
  o << "]},\n";
  o << "  \"noise\": {\"alpha\": " << jnum(cfg.noise.alpha) << ", \"V_T\": " << jnum(cfg.noise.V_T)
    << ", \"lambda_R\": " << jnum(cfg.noise.lambda_R) << ", \"seed\": " << cfg.noise.seed
    << "},\n";
  o << "  \"engine\": {\"tau_site\": " << jnum(cfg.tau_site) << ", \"substeps\": " << cfg.substeps
    << ", \"sample_stride\": " << cfg.sample_stride
    << ", \"zero_threshold\": " << jnum(cfg.zero_threshold) << ", \"ramp\": \""
    << (cfg.ramp == RampShape::Smoothstep ? "smoothstep" : "linear")
    << "\", \"msf_sector\": " << jnum(cfg.msf_sector) << "},\n";
  o << "  \"protocol\": {";
  switch (cfg.builtin) {
    case BuiltinProtocol::None:
      o << "\"source\": \"" << jesc(cfg.protocol_text) << "\"";
      break;
    case BuiltinProtocol::ExchangeSameDefect:
      o << "\"builtin\": \"exchange_same_defect\", \"defect\": \"" << jesc(cfg.builtin_defect)
        << "\", \"junction\": [" << cfg.junction_column << ", 0]";
      break;
    case BuiltinProtocol::ExchangeTwoDefects:
      o << "\"builtin\": \"exchange_two_defects\", \"defects\": [\"" << jesc(cfg.builtin_defect)
        << "\", \"" << jesc(cfg.builtin_defect2) << "\"], \"junction\": [" << cfg.junction_column
        << ", 0]";
      break;
    case BuiltinProtocol::FuseToSite:
      o << "\"builtin\": \"fuse\", \"defect\": \"" << jesc(cfg.builtin_defect) << "\", \"end\": \""
        << (cfg.fuse_end == Direction::Left ? "left" : "right") << "\"";
      break;
  }
  o << "},\n";
  o << "  \"chern\": {\"mu\": [";
  for (std::size_t i = 0; i < cfg.chern_mu.size(); ++i)
    o << (i ? ", " : "") << jnum(cfg.chern_mu[i]);
  o << "], \"Nk\": " << cfg.Nk << "},\n";
  o << "  \"sweep\": {\"axis\": \"" << jesc(cfg.sweep_axis) << "\", \"values\": [";
  for (std::size_t i = 0; i < cfg.sweep_values.size(); ++i)
    o << (i ? ", " : "") << jnum(cfg.sweep_values[i]);
  o << "]},\n";
  o << "  \"output\": {\"dir\": \"" << jesc(cfg.out_dir) << "\"},\n";
  o << "  \"seed\": " << cfg.seed << "\n";
  o << "}\n";
  return o.str();
}

void write_metadata(const RunConfig& cfg) {
  std::ostringstream o;
  o << "{\n";
  o << "  \"tool\": \"msfsim\",\n";
  o << "  \"version\": \"" << kVersion << "\",\n";
  o << "  \"rng_algorithm\": \"" << kRngAlgorithm << "\",\n";
  o << "  \"config\": " << resolved_config_json(cfg);
  o << "}\n";
  atomic_write_file(out_path(cfg, "metadata.json").string(), o.str());
}

PotentialField initial_potential(const RunConfig& cfg) {
  PotentialField pot = PotentialField::Constant(cfg.geom.sites(), cfg.mu0);
  for (const auto& d : cfg.defects)
    for (const Site& s : d.sites) pot[cfg.geom.site(s.x, s.y)] = cfg.mud;
  return pot;
}

ModelContext make_context(const RunConfig& cfg) {
  ModelContext ctx;
  ctx.geom = cfg.geom;
  ctx.cpl = cfg.cpl;
  ctx.commanded0 = initial_potential(cfg);
  ctx.noise = cfg.noise;
  ctx.base = PotentialField::Constant(cfg.geom.sites(), cfg.mu0);
  return ctx;
}

ProtocolProgram make_program(const RunConfig& cfg) {
  switch (cfg.builtin) {
    case BuiltinProtocol::ExchangeSameDefect: {
      const DefectPath* d = nullptr;
      for (const auto& dd : cfg.defects)
        if (dd.id == cfg.builtin_defect) d = &dd;
      if (!d) cfg_fail("protocol defect not found");
      int junction = cfg.junction_column;
      if (junction < 0)
        junction = (d->sites.front().x + d->sites.back().x) / 2;  // defect midpoint
      return builtin_exchange_same_defect(cfg.geom, *d, junction, cfg.protocol_params());
    }
    case BuiltinProtocol::ExchangeTwoDefects: {
      const DefectPath *d1 = nullptr, *d2 = nullptr;
      for (const auto& dd : cfg.defects) {
        if (dd.id == cfg.builtin_defect) d1 = &dd;
        if (dd.id == cfg.builtin_defect2) d2 = &dd;
      }
      if (!d1 || !d2) cfg_fail("protocol defects not found");
      if (cfg.junction_column < 0) cfg_fail("two-defect exchange needs a junction column");
      return builtin_exchange_two_defects(cfg.geom, *d1, *d2, cfg.junction_column,
                                          cfg.protocol_params());
    }
    case BuiltinProtocol::FuseToSite: {
      const DefectPath* d = nullptr;
      for (const auto& dd : cfg.defects)
        if (dd.id == cfg.builtin_defect) d = &dd;
      if (!d) cfg_fail("protocol defect not found");
      return builtin_fuse_to_site(cfg.geom, *d, cfg.fuse_end, cfg.protocol_params());
    }
    case BuiltinProtocol::None: {
      ProtocolProgram prog = parse(cfg.protocol_text);
      // declared defects come from the config; the program may add more
      if (prog.defects.empty())
        for (const auto& d : cfg.defects) prog.defects.push_back(d);
      prog.params = cfg.protocol_params();
      return prog;
    }
  }
  cfg_fail("no protocol configured");
}

std::vector<MajoranaMode> labeled_modes(const RunConfig& cfg, const CanonicalForm& cf) {
  std::vector<MajoranaMode> modes = zero_modes(cf, cfg.geom, cfg.zero_threshold);
  const std::size_t expect = 2 * cfg.defects.size();
  if (modes.size() != expect)
    throw NumericError("expected " + std::to_string(expect) + " zero modes, found " +
                       std::to_string(modes.size()));

  // Label gamma_1..gamma_2m defect by defect so consecutive modes pair into
  // qubits and the junction-side ends of a two-defect layout are neighbors
  // (d1 front, d1 back, d2 back, d2 front, ...).
  std::vector<Site> wanted;
  for (std::size_t k = 0; k < cfg.defects.size(); ++k) {
    const auto& s = cfg.defects[k].sites;
    if (k == 0) {
      wanted.push_back(s.front());
      wanted.push_back(s.back());
    } else {
      wanted.push_back(s.back());
      wanted.push_back(s.front());
    }
  }

  std::vector<MajoranaMode> out;
  std::vector<bool> used(modes.size(), false);
  for (const Site& w : wanted) {
    double best = 1e300;
    std::size_t pick = modes.size();
    for (std::size_t i = 0; i < modes.size(); ++i) {
      if (used[i]) continue;
      auto c = mode_centroid(modes[i].eta, cfg.geom);
      const double d2 = (c[0] - w.x) * (c[0] - w.x) + (c[1] - w.y) * (c[1] - w.y);
      if (d2 < best) {
        best = d2;
        pick = i;
      }
    }
    if (pick == modes.size() || best > 9.0)
      throw NumericError("zero mode not localized near defect end (" + std::to_string(w.x) + "," +
                         std::to_string(w.y) + ")");
    used[pick] = true;
    out.push_back(modes[pick]);
  }
  return out;
}

// ---- runners ----------------------------------------------------------------

SpectrumRun run_spectrum(const RunConfig& cfg, bool write_files) {
  cfg.validate();
  ModelContext ctx = make_context(cfg);
  SkewMatrix A = ctx.skew(ctx.commanded0);
  CanonicalForm cf = canonical_form(A.a);

  SpectrumRun run;
  run.report = spectrum_from_energies(cf.eps, cfg.zero_threshold);
  run.modes = zero_modes(cf, cfg.geom, cfg.zero_threshold);

  if (write_files) {
    std::ostringstream e;
    e << "E\n";
    for (double v : run.report.energies) e << fmt_g17(v) << "\n";
    atomic_write_file(out_path(cfg, "energies.csv").string(), e.str());

    std::ostringstream m;
    m << "site_x,site_y";
    for (std::size_t i = 0; i < run.modes.size(); ++i) m << ",weight_mode" << i + 1;
    m << "\n";
    for (int s = 0; s < cfg.geom.sites(); ++s) {
      m << cfg.geom.site_x(s) << "," << cfg.geom.site_y(s);
      for (const auto& mode : run.modes) {
        const double w = mode.eta[2 * s] * mode.eta[2 * s] + mode.eta[2 * s + 1] * mode.eta[2 * s + 1];
        m << "," << fmt_g17(w);
      }
      m << "\n";
    }
    atomic_write_file(out_path(cfg, "modes.csv").string(), m.str());

    std::ostringstream sj;
    sj << "{\n  \"zero_mode_count\": " << run.report.zero_mode_count << ",\n  \"splitting\": "
       << (run.report.zero_mode_count > 0 ? jnum(run.report.splitting) : "null")
       << ",\n  \"gap\": " << jnum(run.report.gap) << ",\n  \"energy_count\": "
       << run.report.energies.size() << "\n}\n";
    atomic_write_file(out_path(cfg, "summary.json").string(), sj.str());
    write_metadata(cfg);
  }
  return run;
}

ChernRun run_chern(const RunConfig& cfg, bool write_files) {
  cfg.validate();
  if (cfg.chern_mu.empty()) cfg_fail("chern requires a list of mu values");
  ChernRun run;
  for (double mu : cfg.chern_mu) {
    BlochParams p{cfg.cpl.J, cfg.cpl.Delta, mu};
    run.rows.emplace_back(mu, chern_number(p, BZGrid{cfg.Nk}));
  }
  if (write_files) {
    std::ostringstream o;
    o << "mu,C1\n";
    for (auto [mu, c] : run.rows) o << fmt_g17(mu) << "," << c << "\n";
    atomic_write_file(out_path(cfg, "chern.csv").string(), o.str());
    write_metadata(cfg);
  }
  return run;
}

namespace {

struct TrackedEvolution {
  std::vector<SampleRow> samples;
  Propagator prop;
};

TrackedEvolution tracked_evolve(const RunConfig& cfg, const ModelContext& ctx,
                                const Schedule& schedule, const std::vector<MajoranaMode>& modes,
                                const CovarianceMatrix& gamma0) {
  EngineParams ep;
  ep.substeps = cfg.substeps;
  ep.sample_stride = cfg.sample_stride;
  ep.gap_exclude_modes = static_cast<int>(modes.size());

  const Eigen::MatrixXd H = mode_matrix(modes);
  TrackedEvolution ev;
  auto observer = [&](const Checkpoint& cp, const Eigen::MatrixXd& O) {
    SampleRow row;
    row.t = cp.t;
    row.gap = cp.gap;
    row.ortho_defect = cp.ortho_defect;
    const Eigen::MatrixXd V = O * H;
    row.B = (H.transpose() * V).transpose();
    row.leakage = Eigen::VectorXd::Ones(row.B.rows()) - row.B.rowwise().squaredNorm();
    row.corr = V.transpose() * gamma0 * V;
    ev.samples.push_back(std::move(row));
  };
  ev.prop = evolve(schedule, ctx, ep, observer);
  return ev;
}

void write_braid_files(const RunConfig& cfg, const BraidRun& run) {
  atomic_write_file(out_path(cfg, "schedule.csv").string(), schedule_csv(run.schedule));

  std::ostringstream g;
  g << "t,gap\n";
  for (const auto& s : run.samples) g << fmt_g17(s.t) << "," << fmt_g17(s.gap) << "\n";
  atomic_write_file(out_path(cfg, "gap.csv").string(), g.str());

  const Eigen::Index m = run.braid.B.rows();
  std::ostringstream c;
  c << "t";
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = i + 1; j < m; ++j) c << ",corr_" << i + 1 << "_" << j + 1;
  c << "\n";
  for (const auto& s : run.samples) {
    c << fmt_g17(s.t);
    for (Eigen::Index i = 0; i < m; ++i)
      for (Eigen::Index j = i + 1; j < m; ++j) c << "," << fmt_g17(s.corr(i, j));
    c << "\n";
  }
  atomic_write_file(out_path(cfg, "corr.csv").string(), c.str());

  std::ostringstream k;
  k << "t,gap";
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < m; ++j) k << ",B_" << i + 1 << "_" << j + 1;
  for (Eigen::Index i = 0; i < m; ++i) k << ",leakage_" << i + 1;
  k << "\n";
  for (const auto& s : run.samples) {
    k << fmt_g17(s.t) << "," << fmt_g17(s.gap);
    for (Eigen::Index i = 0; i < m; ++i)
      for (Eigen::Index j = 0; j < m; ++j) k << "," << fmt_g17(s.B(i, j));
    for (Eigen::Index i = 0; i < m; ++i) k << "," << fmt_g17(s.leakage[i]);
    k << "\n";
  }
  atomic_write_file(out_path(cfg, "checkpoints.csv").string(), k.str());

  std::ostringstream b;
  b << "{\n";
  b << "  \"B\": " << jmatrix(run.braid.B) << ",\n";
  b << "  \"leakage\": " << jvector(run.braid.leakage) << ",\n";
  b << "  \"min_gap\": " << jnum(run.min_gap) << ",\n";
  b << "  \"corr_initial\": " << jnum(run.corr_initial) << ",\n";
  b << "  \"corr_final\": " << jnum(run.corr_final) << ",\n";
  b << "  \"exchange_deviation\": "
    << jnum(run.braid.B.rows() >= 2 ? exchange_deviation(run.braid.B.topLeftCorner(2, 2)) : -1.0)
    << "\n";
  b << "}\n";
  atomic_write_file(out_path(cfg, "braid.json").string(), b.str());
  write_metadata(cfg);
}

}  // namespace

BraidRun run_braid(const RunConfig& cfg, bool write_files) {
  cfg.validate();
  ModelContext ctx = make_context(cfg);
  SkewMatrix A0 = ctx.skew(ctx.commanded0);
  CanonicalForm cf = canonical_form(A0.a);

  BraidRun run;
  run.modes = labeled_modes(cfg, cf);
  const CovarianceMatrix gamma0 =
      ground_covariance(cf, cfg.zero_threshold, run.modes, cfg.msf_sector);

  ProtocolProgram prog = make_program(cfg);
  run.schedule = compile(prog, cfg.geom, cfg.ramp);

  TrackedEvolution ev = tracked_evolve(cfg, ctx, run.schedule, run.modes, gamma0);
  run.samples = std::move(ev.samples);
  run.O_final = ev.prop.O;
  run.braid = braid_matrix(run.modes, run.O_final);
  run.min_gap = 1e300;
  for (const auto& s : run.samples) run.min_gap = std::min(run.min_gap, s.gap);
  run.corr_initial = run.samples.front().corr(0, 1);
  run.corr_final = run.samples.back().corr(0, 1);

  if (write_files) write_braid_files(cfg, run);
  return run;
}

double exchange_deviation(const Eigen::MatrixXd& B2) {
  Eigen::Matrix2d R;
  R << 0, -1, 1, 0;
  const double d1 = (B2 - R).cwiseAbs().maxCoeff();
  const double d2 = (B2 - R.transpose()).cwiseAbs().maxCoeff();
  return std::min(d1, d2);
}

FuseRun run_fuse(const RunConfig& cfg, bool write_files) {
  cfg.validate();
  ModelContext ctx = make_context(cfg);
  SkewMatrix A0 = ctx.skew(ctx.commanded0);
  CanonicalForm cf = canonical_form(A0.a);
  std::vector<MajoranaMode> modes = labeled_modes(cfg, cf);
  if (modes.size() != 2) throw NumericError("fusion needs exactly one defect (two MSF modes)");

  ProtocolProgram prog = make_program(cfg);
  FuseRun run;
  run.schedule = compile(prog, cfg.geom, cfg.ramp);

  // the site the defect collapses onto: the one never ramped to mu0
  const DefectPath* fused = &cfg.defects.front();
  for (const auto& dd : cfg.defects)
    if (dd.id == cfg.builtin_defect) fused = &dd;
  std::set<Site> remaining;
  for (const Site& s : fused->sites) remaining.insert(s);
  for (const auto& e : run.schedule.events)
    if (e.mu_to == cfg.mu0) remaining.erase(e.site);
  if (remaining.size() != 1)
    throw ProtocolError("fuse schedule does not terminate in a single site");
  const Site r0 = *remaining.begin();
  const int r0_site = cfg.geom.site(r0.x, r0.y);

  // single evolution; the observer records the r0 components of the evolved
  // mode vectors, everything else derives from the final propagator
  std::vector<std::array<double, 4>> comps;  // v1[pa], v1[pb], v2[pa], v2[pb]
  std::vector<double> times;
  Propagator prop;
  {
    EngineParams ep;
    ep.substeps = cfg.substeps;
    ep.sample_stride = cfg.sample_stride;
    ep.gap_exclude_modes = static_cast<int>(modes.size());
    const int pa = 2 * r0_site, pb = 2 * r0_site + 1;
    auto observer = [&](const Checkpoint& cp, const Eigen::MatrixXd& O) {
      const Eigen::VectorXd v1 = O * modes[0].eta;
      const Eigen::VectorXd v2 = O * modes[1].eta;
      comps.push_back({v1[pa], v1[pb], v2[pa], v2[pb]});
      times.push_back(cp.t);
    };
    prop = evolve(run.schedule, ctx, ep, observer);
  }

  auto overlap_at = [&](std::size_t i, double gauge) {
    const double re = comps[i][0] + gauge * comps[i][3];
    const double im = gauge * comps[i][2] - comps[i][1];
    return 0.5 * std::sqrt(re * re + im * im);
  };
  const double final_plus = overlap_at(comps.size() - 1, +1.0);
  const double final_minus = overlap_at(comps.size() - 1, -1.0);
  const double gauge = final_plus >= final_minus ? +1.0 : -1.0;

  run.report.gauge_flipped = gauge < 0;
  if (run.report.gauge_flipped) modes[1].eta = -modes[1].eta;

  run.report.times = times;
  run.report.overlap_series.reserve(comps.size());
  for (std::size_t i = 0; i < comps.size(); ++i)
    run.report.overlap_series.push_back(overlap_at(i, gauge));
  run.report.final_fidelity = run.report.overlap_series.back();

  // occupation readout for both qubit sectors (the propagator is sector
  // independent, only Gamma0 changes)
  const CovarianceMatrix gamma_plus = ground_covariance(cf, cfg.zero_threshold, modes, +1.0);
  const CovarianceMatrix gamma_minus = ground_covariance(cf, cfg.zero_threshold, modes, -1.0);
  const CovarianceMatrix gp = evolve_covariance(gamma_plus, prop.O);
  const CovarianceMatrix gm = evolve_covariance(gamma_minus, prop.O);
  run.report.occupation_plus = 0.5 * (1.0 + gp(2 * r0_site, 2 * r0_site + 1));
  run.report.occupation_minus = 0.5 * (1.0 + gm(2 * r0_site, 2 * r0_site + 1));

  // calibrated decision rule: sector +1 maps to the larger-occupation side
  if (run.report.occupation_plus >= run.report.occupation_minus) {
    run.report.readout_sign = +1;
    run.report.readout_agreement =
        std::min(run.report.occupation_plus, 1.0 - run.report.occupation_minus);
  } else {
    run.report.readout_sign = -1;
    run.report.readout_agreement =
        std::min(1.0 - run.report.occupation_plus, run.report.occupation_minus);
  }

  if (write_files) {
    std::ostringstream f;
    f << "t,overlap\n";
    for (std::size_t i = 0; i < run.report.times.size(); ++i)
      f << fmt_g17(run.report.times[i]) << "," << fmt_g17(run.report.overlap_series[i]) << "\n";
    atomic_write_file(out_path(cfg, "fusion.csv").string(), f.str());

    std::ostringstream r;
    r << "{\n";
    r << "  \"r0\": [" << r0.x << ", " << r0.y << "],\n";
    r << "  \"final_fidelity\": " << jnum(run.report.final_fidelity) << ",\n";
    r << "  \"overlap_initial\": " << jnum(run.report.overlap_series.front()) << ",\n";
    r << "  \"occupation_plus\": " << jnum(run.report.occupation_plus) << ",\n";
    r << "  \"occupation_minus\": " << jnum(run.report.occupation_minus) << ",\n";
    r << "  \"readout_sign\": " << run.report.readout_sign << ",\n";
    r << "  \"readout_agreement\": " << jnum(run.report.readout_agreement) << ",\n";
    r << "  \"gauge_flipped\": " << (run.report.gauge_flipped ? "true" : "false") << "\n";
    r << "}\n";
    atomic_write_file(out_path(cfg, "readout.json").string(), r.str());
    atomic_write_file(out_path(cfg, "schedule.csv").string(), schedule_csv(run.schedule));
    write_metadata(cfg);
  }
  return run;
}

SweepRun run_sweep(const RunConfig& cfg, bool write_files) {
  cfg.validate();
  if (cfg.sweep_axis.empty() || cfg.sweep_values.empty())
    cfg_fail("sweep requires an axis and values");

  SweepRun run;
  run.axis = cfg.sweep_axis;
  run.cells.resize(cfg.sweep_values.size());

  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;

  auto work = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= cfg.sweep_values.size()) return;
      try {
        const double value = cfg.sweep_values[i];
        RunConfig cell = cfg;
        cell.sweep_axis.clear();
        cell.sweep_values.clear();
        cell.noise.seed = derive_seed(cfg.seed, cfg.sweep_axis, value);
        if (cfg.sweep_axis == "tau_site")
          cell.tau_site = value;
        else if (cfg.sweep_axis == "V_T")
          cell.noise.V_T = value;
        else if (cfg.sweep_axis == "lambda_R")
          cell.noise.lambda_R = value;
        else if (cfg.sweep_axis == "alpha")
          cell.noise.alpha = value;
        BraidRun br = run_braid(cell, false);
        SweepCell& out = run.cells[i];
        out.value = value;
        out.seed = cell.noise.seed;
        out.deviation = exchange_deviation(br.braid.B.topLeftCorner(2, 2));
        out.max_leakage = br.braid.leakage.maxCoeff();
        out.min_gap = br.min_gap;
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mu);
        if (!error) error = std::current_exception();
        return;
      }
    }
  };

  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const std::size_t nthreads = std::min<std::size_t>(hw, cfg.sweep_values.size());
  std::vector<std::thread> threads;
  for (std::size_t i = 0; i < nthreads; ++i) threads.emplace_back(work);
  for (auto& t : threads) t.join();
  if (error) std::rethrow_exception(error);

  if (write_files) {
    std::ostringstream o;
    o << "axis,value,seed,deviation,max_leakage,min_gap\n";
    for (const auto& c : run.cells)
      o << run.axis << "," << fmt_g17(c.value) << "," << c.seed << "," << fmt_g17(c.deviation)
        << "," << fmt_g17(c.max_leakage) << "," << fmt_g17(c.min_gap) << "\n";
    atomic_write_file(out_path(cfg, "sweep.csv").string(), o.str());
    write_metadata(cfg);
  }
  return run;
}

Schedule run_compile(const RunConfig& cfg, bool write_files) {
  cfg.validate();
  ProtocolProgram prog = make_program(cfg);
  Schedule s = compile(prog, cfg.geom, cfg.ramp);
  if (write_files) {
    atomic_write_file(out_path(cfg, "schedule.csv").string(), schedule_csv(s));
    write_metadata(cfg);
  }
  return s;
}

// ---- presets ----------------------------------------------------------------

namespace presets {

RunConfig spectrum_18x10() {
  RunConfig cfg;
  cfg.geom = {18, 10, Boundary::Open, Boundary::Open};
  cfg.cpl = {1.0, 1.0};
  cfg.mu0 = 10.0;
  cfg.mud = 0.1;
  DefectPath d;
  d.id = "d1";
  for (int x = 2; x <= 15; ++x) d.sites.push_back({x, 7});
  cfg.defects = {d};
  return cfg;
}

RunConfig braid_18x10() {
  RunConfig cfg = spectrum_18x10();
  cfg.builtin = BuiltinProtocol::ExchangeSameDefect;
  cfg.builtin_defect = "d1";
  cfg.junction_column = 8;
  return cfg;
}

RunConfig two_defect_12x28() {
  RunConfig cfg;
  cfg.geom = {12, 28, Boundary::Open, Boundary::Open};
  cfg.cpl = {1.0, 0.91};
  cfg.mu0 = 9.1;   // 10 * Delta
  cfg.mud = 0.091; // 0.1 * Delta
  DefectPath d1, d2;
  d1.id = "d1";
  d2.id = "d2";
  for (int x = 2; x <= 9; ++x) {
    d1.sites.push_back({x, 9});
    d2.sites.push_back({x, 18});
  }
  cfg.defects = {d1, d2};
  cfg.builtin = BuiltinProtocol::ExchangeTwoDefects;
  cfg.builtin_defect = "d1";
  cfg.builtin_defect2 = "d2";
  cfg.junction_column = 8;
  return cfg;
}

RunConfig noise_20x12() {
  RunConfig cfg;
  cfg.geom = {20, 12, Boundary::Open, Boundary::Open};
  cfg.cpl = {1.0, 1.0};
  cfg.mu0 = 10.0;
  cfg.mud = 0.1;
  DefectPath d;
  d.id = "d1";
  for (int x = 3; x <= 16; ++x) d.sites.push_back({x, 7});
  cfg.defects = {d};
  cfg.builtin = BuiltinProtocol::ExchangeSameDefect;
  cfg.builtin_defect = "d1";
  cfg.junction_column = 9;
  cfg.noise.alpha = 0.9;
  cfg.noise.V_T = 0.5;
  cfg.noise.lambda_R = 0.05;
  cfg.sweep_axis = "V_T";
  cfg.sweep_values = {0.1, 0.5, 1.0};
  return cfg;
}

RunConfig fuse_18x10() {
  RunConfig cfg = spectrum_18x10();
  cfg.builtin = BuiltinProtocol::FuseToSite;
  cfg.builtin_defect = "d1";
  cfg.fuse_end = Direction::Right;
  return cfg;
}

RunConfig chern_scan() {
  RunConfig cfg;
  cfg.geom = {4, 4, Boundary::Periodic, Boundary::Periodic};
  cfg.cpl = {1.0, 1.0};
  cfg.chern_mu = {-3.0, -1.0, -0.1, 0.1, 1.0, 3.0};
  cfg.Nk = 24;
  return cfg;
}

}  // namespace presets

}  // namespace msf
