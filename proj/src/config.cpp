#include "nvdd/config.hpp"

#include <cmath>
#include <set>

#include <json.hpp>

#include "nvdd/constants.hpp"

namespace nvdd::config {

namespace {

using nlohmann::json;

const std::vector<std::string> kinds = {
    "spectrum",        "hh-transfer",          "ccd-coherence", "ja-sweep",
    "parallel-coupling", "effective-validation", "polarization"};

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw ConfigError(path, what);
}

void require_object(const json& j, const std::string& path) {
  if (!j.is_object()) fail(path, "expected an object");
}

void reject_unknown(const json& j, const std::string& path,
                    const std::set<std::string>& allowed) {
  for (const auto& [key, value] : j.items())
    if (!allowed.count(key)) fail(path + "." + key, "unknown field");
}

double get_number(const json& j, const std::string& path, const std::string& key,
                  bool required, double fallback = 0) {
  if (!j.contains(key)) {
    if (required) fail(path + "." + key, "missing required field");
    return fallback;
  }
  const auto& v = j.at(key);
  if (!v.is_number()) fail(path + "." + key, "expected a number");
  return v.get<double>();
}

int get_int(const json& j, const std::string& path, const std::string& key,
            bool required, int fallback = 0) {
  if (!j.contains(key)) {
    if (required) fail(path + "." + key, "missing required field");
    return fallback;
  }
  const auto& v = j.at(key);
  if (!v.is_number_integer()) fail(path + "." + key, "expected an integer");
  return v.get<int>();
}

bool get_bool(const json& j, const std::string& path, const std::string& key,
              bool fallback) {
  if (!j.contains(key)) return fallback;
  const auto& v = j.at(key);
  if (!v.is_boolean()) fail(path + "." + key, "expected a boolean");
  return v.get<bool>();
}

std::string get_string(const json& j, const std::string& path,
                       const std::string& key, bool required,
                       const std::string& fallback = "") {
  if (!j.contains(key)) {
    if (required) fail(path + "." + key, "missing required field");
    return fallback;
  }
  const auto& v = j.at(key);
  if (!v.is_string()) fail(path + "." + key, "expected a string");
  return v.get<std::string>();
}

// A grid is either an explicit array or {"start", "stop", "points"}.
std::vector<double> get_grid(const json& j, const std::string& path,
                             const std::string& key) {
  if (!j.contains(key)) fail(path + "." + key, "missing required field");
  const auto& v = j.at(key);
  const std::string p = path + "." + key;
  std::vector<double> out;
  if (v.is_array()) {
    if (v.empty()) fail(p, "grid must be nonempty");
    for (const auto& x : v) {
      if (!x.is_number()) fail(p, "grid entries must be numbers");
      out.push_back(x.get<double>());
    }
    return out;
  }
  if (!v.is_object()) fail(p, "expected an array or {start, stop, points}");
  reject_unknown(v, p, {"start", "stop", "points"});
  const double a = get_number(v, p, "start", true);
  const double b = get_number(v, p, "stop", true);
  const int n = get_int(v, p, "points", true);
  if (n < 1) fail(p + ".points", "must be >= 1");
  for (int i = 0; i < n; ++i)
    out.push_back(n == 1 ? a : a + (b - a) * (double)i / (double)(n - 1));
  return out;
}

NoiseChannelParams get_noise_channel(const json& j, const std::string& path,
                                     const std::string& key) {
  NoiseChannelParams ch;
  if (!j.contains(key)) return ch;
  const auto& v = j.at(key);
  const std::string p = path + "." + key;
  require_object(v, p);
  reject_unknown(v, p, {"rms", "tau_c_us", "grid_dt_us"});
  ch.rms = get_number(v, p, "rms", true);
  ch.tau_c = get_number(v, p, "tau_c_us", false, 0);
  ch.grid_dt = get_number(v, p, "grid_dt_us", false, 0.01);
  if (ch.rms < 0) fail(p + ".rms", "must be >= 0");
  if (ch.tau_c < 0) fail(p + ".tau_c_us", "must be >= 0");
  if (ch.grid_dt <= 0) fail(p + ".grid_dt_us", "must be > 0");
  return ch;
}

system::SpinSystem parse_system_json(const json& j, const std::string& path) {
  require_object(j, path);
  reject_unknown(j, path, {"nv", "nuclei", "include_nn"});
  if (!j.contains("nv")) fail(path + ".nv", "missing required field");

  system::SpinSystem s;
  const auto& nv = j.at("nv");
  const std::string pnv = path + ".nv";
  require_object(nv, pnv);
  reject_unknown(nv, pnv,
                 {"bz_T", "transition", "zero_field_splitting_rad_per_us",
                  "gamma_e_rad_per_us_T"});
  s.nv.bz = get_number(nv, pnv, "bz_T", true);
  s.nv.zero_field_splitting =
      get_number(nv, pnv, "zero_field_splitting_rad_per_us", false,
                 constants::nv_zero_field_splitting);
  s.nv.gamma_e = get_number(nv, pnv, "gamma_e_rad_per_us_T", false,
                            constants::gamma_electron);
  const std::string tr =
      get_string(nv, pnv, "transition", false, "zero_to_minus");
  if (tr == "zero_to_minus")
    s.nv.transition = spincore::Transition::zero_to_minus;
  else if (tr == "zero_to_plus")
    s.nv.transition = spincore::Transition::zero_to_plus;
  else
    fail(pnv + ".transition", "must be zero_to_minus or zero_to_plus");

  if (j.contains("nuclei")) {
    const auto& arr = j.at("nuclei");
    if (!arr.is_array()) fail(path + ".nuclei", "expected an array");
    int idx = 0;
    for (const auto& nj : arr) {
      const std::string pn = path + ".nuclei[" + std::to_string(idx++) + "]";
      require_object(nj, pn);
      reject_unknown(nj, pn, {"species", "gamma_rad_per_us_T", "position_nm"});
      system::Nucleus n;
      const std::string sp = get_string(nj, pn, "species", true);
      if (sp == "13C")
        n.gamma_n = constants::gamma_c13;
      else if (sp == "1H")
        n.gamma_n = constants::gamma_h1;
      else if (sp == "15N")
        n.gamma_n = constants::gamma_n15;
      else if (sp == "custom")
        n.gamma_n = 0;
      else
        fail(pn + ".species", "must be 13C, 1H, 15N, or custom");
      if (sp == "custom") {
        n.gamma_n = get_number(nj, pn, "gamma_rad_per_us_T", true);
      } else if (nj.contains("gamma_rad_per_us_T")) {
        fail(pn + ".gamma_rad_per_us_T",
             "only allowed with species = custom");
      }
      n.label = sp;
      if (!nj.contains("position_nm"))
        fail(pn + ".position_nm", "missing required field");
      const auto& pos = nj.at("position_nm");
      if (!pos.is_array() || pos.size() != 3)
        fail(pn + ".position_nm", "expected [x, y, z] in nm");
      for (int c = 0; c < 3; ++c) {
        if (!pos[c].is_number())
          fail(pn + ".position_nm", "expected [x, y, z] in nm");
        n.position_nm(c) = pos[c].get<double>();
      }
      s.nuclei.push_back(n);
    }
  }
  s.include_nn = get_bool(j, path, "include_nn", false);

  try {
    s.validate();
  } catch (const std::exception& e) {
    fail(path, e.what());
  }
  return s;
}

ExperimentParams parse_params(const std::string& kind, const json& j,
                              const std::string& path) {
  if (kind == "spectrum") {
    SpectrumParams p;
    reject_unknown(j, path,
                   {"kind", "preset", "n_blocks", "tau_grid_us", "readout",
                    "noise_floor"});
    p.preset = get_string(j, path, "preset", false, "xy8");
    if (p.preset != "xy8" && p.preset != "cpmg")
      fail(path + ".preset", "must be xy8 or cpmg");
    p.n_blocks = get_int(j, path, "n_blocks", false, 2);
    if (p.n_blocks < 1) fail(path + ".n_blocks", "must be >= 1");
    p.tau_grid = get_grid(j, path, "tau_grid_us");
    p.readout = get_string(j, path, "readout", false, "p0");
    if (p.readout != "p0" && p.readout != "sigma_x")
      fail(path + ".readout", "must be p0 or sigma_x");
    p.noise_floor = get_number(j, path, "noise_floor", false, 1e-6);
    return p;
  }
  if (kind == "hh-transfer") {
    HHTransferParams p;
    reject_unknown(j, path,
                   {"kind", "nucleus", "rabi_rad_per_us", "phi_rad",
                    "duration_us", "n_samples", "detune_rad_per_us"});
    p.nucleus = get_int(j, path, "nucleus", false, 0);
    p.rabi = get_number(j, path, "rabi_rad_per_us", false, 0);
    p.phi = get_number(j, path, "phi_rad", false, 0);
    p.duration = get_number(j, path, "duration_us", false, 0);
    p.n_samples = get_int(j, path, "n_samples", false, 201);
    p.detune = get_number(j, path, "detune_rad_per_us", false, 0);
    if (p.n_samples < 2) fail(path + ".n_samples", "must be >= 2");
    return p;
  }
  if (kind == "ccd-coherence") {
    CcdCoherenceParams p;
    reject_unknown(j, path,
                   {"kind", "omega1_rad_per_us", "omega2_rad_per_us", "phi_rad",
                    "duration_us", "n_samples", "n_realizations", "delta",
                    "xi1", "xi2", "compare_single", "stroboscopic"});
    p.omega1 = get_number(j, path, "omega1_rad_per_us", true);
    p.omega2 = get_number(j, path, "omega2_rad_per_us", true);
    if (!(p.omega1 > 0)) fail(path + ".omega1_rad_per_us", "must be > 0");
    p.phi = get_number(j, path, "phi_rad", false, p.phi);
    p.duration = get_number(j, path, "duration_us", true);
    if (!(p.duration > 0)) fail(path + ".duration_us", "must be > 0");
    p.n_samples = get_int(j, path, "n_samples", false, 201);
    if (p.n_samples < 2) fail(path + ".n_samples", "must be >= 2");
    p.n_realizations = get_int(j, path, "n_realizations", false, 200);
    if (p.n_realizations < 1) fail(path + ".n_realizations", "must be >= 1");
    p.delta = get_noise_channel(j, path, "delta");
    p.xi1 = get_noise_channel(j, path, "xi1");
    p.xi2 = get_noise_channel(j, path, "xi2");
    p.compare_single = get_bool(j, path, "compare_single", true);
    p.stroboscopic = get_bool(j, path, "stroboscopic", true);
    return p;
  }
  if (kind == "ja-sweep") {
    JaSweepParams p;
    reject_unknown(j, path,
                   {"kind", "nucleus", "nu_rad_per_us", "z_grid",
                    "duration_us", "n_samples"});
    p.nucleus = get_int(j, path, "nucleus", false, 0);
    p.nu = get_number(j, path, "nu_rad_per_us", true);
    if (!(p.nu > 0)) fail(path + ".nu_rad_per_us", "must be > 0");
    p.z_grid = get_grid(j, path, "z_grid");
    p.duration = get_number(j, path, "duration_us", false, 0);
    p.n_samples = get_int(j, path, "n_samples", false, 401);
    if (p.n_samples < 2) fail(path + ".n_samples", "must be >= 2");
    return p;
  }
  if (kind == "parallel-coupling") {
    ParallelCouplingParams p;
    reject_unknown(j, path,
                   {"kind", "nucleus", "n_blocks", "block_period_us",
                    "checkpoints"});
    p.nucleus = get_int(j, path, "nucleus", false, 0);
    p.n_blocks = get_int(j, path, "n_blocks", false, 8);
    if (p.n_blocks < 1) fail(path + ".n_blocks", "must be >= 1");
    p.block_period = get_number(j, path, "block_period_us", true);
    if (!(p.block_period > 0)) fail(path + ".block_period_us", "must be > 0");
    p.checkpoints = get_int(j, path, "checkpoints", false, 8);
    if (p.checkpoints < 1) fail(path + ".checkpoints", "must be >= 1");
    return p;
  }
  if (kind == "effective-validation") {
    EffectiveValidationParams p;
    reject_unknown(j, path,
                   {"kind", "model", "nucleus", "preset", "q", "n_blocks",
                    "rabi_rad_per_us", "phi_rad", "nu_rad_per_us", "z",
                    "omega1_rad_per_us", "omega2_rad_per_us", "duration_us",
                    "checkpoints"});
    p.model = get_string(j, path, "model", true);
    if (p.model != "pulsed" && p.model != "hh" && p.model != "ccd" &&
        p.model != "ja")
      fail(path + ".model", "must be pulsed, hh, ccd, or ja");
    p.nucleus = get_int(j, path, "nucleus", false, 0);
    p.preset = get_string(j, path, "preset", false, "xy8");
    p.q = get_int(j, path, "q", false, 1);
    p.n_blocks = get_int(j, path, "n_blocks", false, 4);
    p.rabi = get_number(j, path, "rabi_rad_per_us", false, 0);
    p.phi = get_number(j, path, "phi_rad", false, 0);
    p.nu = get_number(j, path, "nu_rad_per_us", false, 0);
    p.z = get_number(j, path, "z", false, 0);
    p.omega1 = get_number(j, path, "omega1_rad_per_us", false, 0);
    p.omega2 = get_number(j, path, "omega2_rad_per_us", false, 0);
    p.duration = get_number(j, path, "duration_us", false, 0);
    p.checkpoints = get_int(j, path, "checkpoints", false, 8);
    if (p.checkpoints < 1) fail(path + ".checkpoints", "must be >= 1");
    return p;
  }
  if (kind == "polarization") {
    PolarizationParams p;
    reject_unknown(j, path,
                   {"kind", "targets", "cycles", "repolarize",
                    "reset_fidelity"});
    if (j.contains("targets")) {
      const auto& t = j.at("targets");
      if (!t.is_array()) fail(path + ".targets", "expected an array");
      for (const auto& x : t) {
        if (!x.is_number_integer())
          fail(path + ".targets", "expected nucleus indices");
        p.targets.push_back(x.get<int>());
      }
    }
    p.cycles = get_int(j, path, "cycles", false, 5);
    if (p.cycles < 1) fail(path + ".cycles", "must be >= 1");
    p.repolarize = get_bool(j, path, "repolarize", true);
    p.reset_fidelity = get_number(j, path, "reset_fidelity", false, 1.0);
    if (p.reset_fidelity < 0 || p.reset_fidelity > 1)
      fail(path + ".reset_fidelity", "must lie in [0, 1]");
    return p;
  }
  std::string msg = "unknown kind; valid kinds:";
  for (const auto& k : kinds) msg += " " + k;
  fail(path + ".kind", msg);
}

}  // namespace

const std::vector<std::string> kExperimentKinds = kinds;

ExperimentConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const std::exception& e) {
    fail("(document)", std::string("not valid JSON: ") + e.what());
  }
  require_object(j, "(document)");
  reject_unknown(j, "(document)", {"system", "experiment", "seed", "threads"});
  if (!j.contains("system")) fail("system", "missing required field");
  if (!j.contains("experiment")) fail("experiment", "missing required field");

  ExperimentConfig cfg;
  cfg.sys = parse_system_json(j.at("system"), "system");

  const auto& ex = j.at("experiment");
  require_object(ex, "experiment");
  cfg.kind = get_string(ex, "experiment", "kind", true);
  cfg.params = parse_params(cfg.kind, ex, "experiment");

  if (j.contains("seed")) {
    const auto& s = j.at("seed");
    if (!s.is_number_unsigned() && !s.is_number_integer())
      fail("seed", "expected an unsigned integer");
    if (s.is_number_integer() && s.get<long long>() < 0)
      fail("seed", "expected an unsigned integer");
    cfg.seed = s.get<std::uint64_t>();
  }
  if (j.contains("threads")) {
    const auto& t = j.at("threads");
    if (!t.is_number_integer()) fail("threads", "expected an integer");
    cfg.threads = t.get<int>();
  }

  // Kind-specific cross-checks against the system document.
  const int n = cfg.sys.n_nuclei();
  auto check_nucleus = [&](int u, const std::string& field) {
    if (u < 0 || u >= n)
      fail("experiment." + field,
           "nucleus index out of range (system has " + std::to_string(n) +
               " nuclei)");
  };
  if (auto* p = std::get_if<HHTransferParams>(&cfg.params))
    check_nucleus(p->nucleus, "nucleus");
  if (auto* p = std::get_if<JaSweepParams>(&cfg.params))
    check_nucleus(p->nucleus, "nucleus");
  if (auto* p = std::get_if<ParallelCouplingParams>(&cfg.params))
    check_nucleus(p->nucleus, "nucleus");
  if (auto* p = std::get_if<EffectiveValidationParams>(&cfg.params)) {
    if (p->model != "ccd") check_nucleus(p->nucleus, "nucleus");
  }
  if (auto* p = std::get_if<PolarizationParams>(&cfg.params))
    for (int t : p->targets) check_nucleus(t, "targets");
  if (std::holds_alternative<SpectrumParams>(cfg.params) ||
      std::holds_alternative<HHTransferParams>(cfg.params) ||
      std::holds_alternative<JaSweepParams>(cfg.params) ||
      std::holds_alternative<ParallelCouplingParams>(cfg.params) ||
      std::holds_alternative<PolarizationParams>(cfg.params)) {
    if (n == 0) fail("system.nuclei", "this experiment needs at least one nucleus");
  }
  return cfg;
}

system::SpinSystem parse_system(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const std::exception& e) {
    fail("(document)", std::string("not valid JSON: ") + e.what());
  }
  return parse_system_json(j, "system");
}

}  // namespace nvdd::config
