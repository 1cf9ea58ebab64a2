#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "nvdd/config.hpp"
#include "nvdd/constants.hpp"
#include "nvdd/control.hpp"
#include "nvdd/dynamics.hpp"
#include "nvdd/effective.hpp"
#include "nvdd/io.hpp"
#include "nvdd/noise.hpp"
#include "nvdd/scan.hpp"
#include "nvdd/spincore.hpp"
#include "nvdd/system.hpp"

namespace {

using namespace nvdd;
using spincore::cx;
using spincore::Mat;
using spincore::Vec;

constexpr double kTwoPi = constants::two_pi;

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << v;
  return os.str();
}

std::string fmt(double v) { return io::format_double(v); }

// Tabular result of one experiment plus human-readable summary lines.
struct RunOutput {
  std::string swept = "t_us";
  std::vector<double> grid;
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;  // rows[i] matches columns
  std::vector<std::string> summary;
  std::map<std::string, std::string> metadata;
};

RunOutput from_trajectory(const dynamics::Trajectory& tr) {
  RunOutput out;
  out.grid = tr.times;
  for (const auto& [name, series] : tr.observables) out.columns.push_back(name);
  out.rows.assign(tr.times.size(), {});
  for (std::size_t i = 0; i < tr.times.size(); ++i)
    for (const auto& [name, series] : tr.observables)
      out.rows[i].push_back(series[i]);
  out.metadata = tr.metadata;
  return out;
}

std::string to_csv(const RunOutput& o) {
  std::ostringstream os;
  os << o.swept;
  for (const auto& c : o.columns) os << ',' << c;
  os << '\n';
  for (std::size_t i = 0; i < o.grid.size(); ++i) {
    os << fmt(o.grid[i]);
    for (double v : o.rows[i]) os << ',' << fmt(v);
    os << '\n';
  }
  return os.str();
}

nlohmann::json to_json_doc(const RunOutput& o, const std::string& kind,
                           std::uint64_t seed, const std::string& digest) {
  nlohmann::json j;
  j["kind"] = kind;
  j["seed"] = seed;
  j["config_digest"] = digest;
  j["swept"] = o.swept;
  j["columns"] = o.columns;
  j["grid"] = o.grid;
  j["rows"] = o.rows;
  j["summary"] = o.summary;
  j["metadata"] = o.metadata;
  return j;
}

// Deterministically phased spin-1/2 eigenstate of (axis . S) with the lower
// eigenvalue ("down" along axis).
Vec down_spinor(const system::Vector3& axis) {
  const auto ops = spincore::spin_operators(0.5);
  Mat h = axis.x() * ops.sx + axis.y() * ops.sy + axis.z() * ops.sz;
  Eigen::SelfAdjointEigenSolver<Mat> es(h);
  Vec v = es.eigenvectors().col(0);
  int imax = 0;
  for (int i = 1; i < v.size(); ++i)
    if (std::abs(v(i)) > std::abs(v(imax))) imax = i;
  if (std::abs(v(imax)) > 0) v *= std::conj(v(imax)) / std::abs(v(imax));
  return v;
}

// NV spinor (in the qubit basis (|m_s>, |0>)) tensored with per-nucleus
// down-states along each quantization axis z_j.
spincore::StateVector product_state(const system::SpinSystem& s,
                                    const Vec& nv_spinor) {
  Vec psi = nv_spinor;
  for (int j = 0; j < s.n_nuclei(); ++j) {
    const auto nf = system::nuclear_frame(s, j);
    Vec next(psi.size() * 2);
    const Vec nuc = down_spinor(nf.z_axis);
    for (int a = 0; a < psi.size(); ++a)
      for (int b = 0; b < 2; ++b) next(a * 2 + b) = psi(a) * nuc(b);
    psi = next;
  }
  return spincore::StateVector::on(psi, s.dims(2));
}

// The flip-flop pairing exchanges |+,down> <-> |-,up> when a_eff.omega_hat < 0
// and |-,down> <-> |+,up> otherwise; pick the dressed state that couples to a
// z_j-down nucleus.
Vec bright_dressed(const system::NuclearFrame& nf, double phi) {
  return nf.a_eff.dot(nf.omega_hat) < 0 ? spincore::dressed_plus(phi)
                                        : spincore::dressed_minus(phi);
}

void append_margins(RunOutput& out, const effective::EffectiveModel& model) {
  for (const auto& m : model.validity)
    out.summary.push_back("margin " + m.name + " = " + fmt(m.margin));
}

// ---------------------------------------------------------------- spectrum

RunOutput run_spectrum(const config::ExperimentConfig& cfg,
                       const config::SpectrumParams& p) {
  const auto readout = p.readout == "p0" ? dynamics::Readout::p0
                                         : dynamics::Readout::sigma_x;
  const auto spec = dynamics::nmr_spectrum(cfg.sys, p.preset, p.tau_grid,
                                           p.n_blocks, readout, {},
                                           p.noise_floor);
  RunOutput out;
  out.swept = "tau_us";
  out.grid = spec.grid;
  out.columns = {"signal"};
  for (double v : spec.signal) out.rows.push_back({v});
  out.summary.push_back("dips found: " + std::to_string(spec.dips.size()));
  for (const auto& d : spec.dips)
    out.summary.push_back("dip center=" + fmt(d.center) + " us depth=" +
                          fmt(d.depth) + " width=" + fmt(d.width) + " us");
  for (const auto& row : system::resonance_table(cfg.sys))
    out.summary.push_back(
        "nucleus " + std::to_string(row.index) + " (" + row.label +
        "): omega=" + fmt(row.omega) + " rad/us, predicted tau(q=1)=" +
        fmt(constants::pi / row.omega) + " us, a_perp=" + fmt(row.a_perp));
  return out;
}

// ------------------------------------------------------------- hh-transfer

RunOutput run_hh_transfer(const config::ExperimentConfig& cfg,
                          const config::HHTransferParams& p) {
  const auto nf = system::nuclear_frame(cfg.sys, p.nucleus);
  const double omega = (p.rabi > 0 ? p.rabi : nf.omega) + p.detune;
  const double t_full = kTwoPi / nf.a_perp;
  const double duration = p.duration > 0 ? p.duration : 2.0 * t_full;
  const auto sched = control::make_continuous_drive(omega, p.phi, duration);
  const auto initial = product_state(cfg.sys, bright_dressed(nf, p.phi));
  const auto tr = dynamics::evolve(cfg.sys, sched, initial,
                                   system::Frame::nv_rotating, true, {},
                                   p.n_samples);
  RunOutput out = from_trajectory(tr);
  out.summary.push_back("nucleus " + std::to_string(p.nucleus) +
                        ": omega_u=" + fmt(nf.omega) + " rad/us, a_perp=" +
                        fmt(nf.a_perp) + " rad/us");
  out.summary.push_back("drive rabi=" + fmt(omega) +
                        " rad/us, full transfer at t=" + fmt(t_full) + " us");
  const auto& iz = tr.series("iz_" + std::to_string(p.nucleus));
  const auto [mn, mx] = std::minmax_element(iz.begin(), iz.end());
  out.summary.push_back("iz_" + std::to_string(p.nucleus) + " swing " +
                        fmt(*mn) + " .. " + fmt(*mx));
  try {
    const auto model = effective::effective_hh(cfg.sys, omega, p.nucleus, p.phi);
    out.summary.push_back("flip-flop rate a_perp/2 = " +
                          fmt(model.coupling_scale) + " rad/us");
    append_margins(out, model);
  } catch (const std::exception& e) {
    out.summary.push_back(std::string("no resonant model: ") + e.what());
  }
  return out;
}

// ----------------------------------------------------------- ccd-coherence

noise::NoiseModel channel_model(const config::NoiseChannelParams& ch,
                                std::uint64_t seed) {
  noise::NoiseModel m;
  m.kind = ch.tau_c > 0 ? noise::Kind::ornstein_uhlenbeck
                        : noise::Kind::quasi_static_gaussian;
  m.sigma = ch.rms;
  m.tau_c = ch.tau_c;
  m.grid_dt = ch.grid_dt;
  m.seed = seed;
  return m;
}

RunOutput run_ccd_coherence(const config::ExperimentConfig& cfg,
                            const config::CcdCoherenceParams& p,
                            std::uint64_t seed) {
  dynamics::NoiseBinding binding;
  binding.delta = channel_model(p.delta, noise::derive_seed(seed, 11));
  binding.xi1 = channel_model(p.xi1, noise::derive_seed(seed, 12));
  binding.xi2 = channel_model(p.xi2, noise::derive_seed(seed, 13));

  std::vector<double> times;
  if (p.stroboscopic) {
    const double period = kTwoPi / p.omega1;
    for (double t = 0; t <= p.duration + 1e-9 * p.duration; t += period) {
      times.push_back(std::min(t, p.duration));
      if (times.size() > 20000) break;
    }
  }

  Vec nv0(2);
  nv0 << 0, 1;
  Vec psi = nv0;
  for (int j = 0; j < cfg.sys.n_nuclei(); ++j) {
    Vec down(2);
    down << 0, 1;
    Vec next(psi.size() * 2);
    for (int a = 0; a < psi.size(); ++a)
      for (int b = 0; b < 2; ++b) next(a * 2 + b) = psi(a) * down(b);
    psi = next;
  }
  const auto initial = spincore::StateVector::on(psi, cfg.sys.dims(2));

  dynamics::CoherenceReadout readout;
  readout.kind = dynamics::CoherenceReadout::Kind::bloch_norm;

  const auto ccd_sched =
      control::make_ccd(0, p.omega1, p.omega2, p.phi, p.duration);
  const auto ccd = dynamics::coherence_decay(cfg.sys, ccd_sched, binding,
                                             p.n_realizations, readout,
                                             initial, times, {});

  RunOutput out;
  out.grid = ccd.times;
  out.columns = {"coherence_ccd", "coherence_ccd_stderr"};
  const auto& c1 = ccd.series("coherence");
  const auto& e1 = ccd.series("coherence_stderr");
  out.rows.assign(ccd.times.size(), {});
  for (std::size_t i = 0; i < ccd.times.size(); ++i)
    out.rows[i] = {c1[i], e1[i]};
  out.metadata["ccd_t2_1e"] = ccd.metadata.at("t2_1e");
  out.metadata["ccd_t2_infinite"] = ccd.metadata.at("t2_infinite");
  out.summary.push_back("ccd 1/e time: " + ccd.metadata.at("t2_1e") + " us");

  if (p.compare_single) {
    const auto single_sched =
        control::make_continuous_drive(p.omega1, 0, p.duration);
    const auto single = dynamics::coherence_decay(cfg.sys, single_sched,
                                                  binding, p.n_realizations,
                                                  readout, initial, times, {});
    const auto& c2 = single.series("coherence");
    const auto& e2 = single.series("coherence_stderr");
    out.columns.push_back("coherence_single");
    out.columns.push_back("coherence_single_stderr");
    for (std::size_t i = 0; i < out.rows.size(); ++i) {
      out.rows[i].push_back(c2[i]);
      out.rows[i].push_back(e2[i]);
    }
    out.metadata["single_t2_1e"] = single.metadata.at("t2_1e");
    out.summary.push_back("single-drive 1/e time: " +
                          single.metadata.at("t2_1e") + " us");
    const double t_ccd = io::parse_double(ccd.metadata.at("t2_1e")).value_or(NAN);
    const double t_single =
        io::parse_double(single.metadata.at("t2_1e")).value_or(NAN);
    if (std::isfinite(t_ccd) && std::isfinite(t_single) && t_single > 0)
      out.summary.push_back("improvement ratio: " + fmt(t_ccd / t_single));
  }

  const auto model =
      effective::effective_ccd(p.omega1, p.omega2, p.phi, 0, p.delta.rms,
                               p.xi1.rms);
  out.summary.push_back("second-layer rate omega2/4 = " +
                        fmt(model.coupling_scale) + " rad/us");
  append_margins(out, model);
  out.metadata["n_realizations"] = std::to_string(p.n_realizations);
  return out;
}

// ---------------------------------------------------------------- ja-sweep

RunOutput run_ja_sweep(const config::ExperimentConfig& cfg,
                       const config::JaSweepParams& p, std::uint64_t seed,
                       int threads) {
  const auto nf = system::nuclear_frame(cfg.sys, p.nucleus);
  const double g_peak = 0.25 * nf.a_perp * 0.5819;  // J1 maximum
  const double duration =
      p.duration > 0 ? p.duration : 0.9 * constants::pi / g_peak;
  const double strobe = kTwoPi / p.nu;

  std::vector<double> times;
  for (double t = 0; t <= duration + 1e-12; t += strobe) times.push_back(t);
  if ((int)times.size() > p.n_samples) {
    std::vector<double> thin;
    const std::size_t stride =
        (times.size() + p.n_samples - 1) / (std::size_t)p.n_samples;
    for (std::size_t i = 0; i < times.size(); i += stride)
      thin.push_back(times[i]);
    times = thin;
  }

  const auto initial = product_state(cfg.sys, bright_dressed(nf, 0));
  const std::string iz_name = "iz_" + std::to_string(p.nucleus);

  auto point = [&](double z, std::uint64_t) -> std::vector<double> {
    const double omega1 = z * p.nu;
    const double omega0 = nf.omega - p.nu;
    if (omega0 <= 0)
      throw std::runtime_error("omega0 = omega_u - nu must be positive");
    const double g_pred =
        std::abs(0.25 * nf.a_perp * effective::bessel_j(1, z));
    const auto sched =
        control::make_modulated_rabi(omega0, omega1, p.nu, 0, duration);
    const auto tr = dynamics::evolve_at(cfg.sys, sched, initial,
                                        system::Frame::nv_rotating, true,
                                        times, {});
    const auto& iz = tr.series(iz_name);
    const double y0 = iz.front();

    // Least-squares fit iz(t) = y0 + A sin^2(g t) over a coarse g grid with
    // parabolic refinement; A solved in closed form per g.
    auto amp_at = [&](double g) {
      double num = 0, den = 0;
      for (std::size_t k = 0; k < times.size(); ++k) {
        const double s = std::sin(g * times[k]);
        const double sk = s * s;
        num += sk * (iz[k] - y0);
        den += sk * sk;
      }
      return den > 1e-12 ? std::clamp(num / den, 0.0, 1.2) : 0.0;
    };
    auto misfit = [&](double g) {
      const double amp = amp_at(g);
      double ss = 0;
      for (std::size_t k = 0; k < times.size(); ++k) {
        const double s = std::sin(g * times[k]);
        const double e = iz[k] - (y0 + amp * s * s);
        ss += e * e;
      }
      return ss;
    };
    const int n_grid = 800;
    const double g_hi = 1.3 * g_peak;
    double best_g = 0, best_s = misfit(0);
    for (int i = 1; i <= n_grid; ++i) {
      const double g = g_hi * (double)i / n_grid;
      const double s = misfit(g);
      if (s < best_s) {
        best_s = s;
        best_g = g;
      }
    }
    const double h = g_hi / n_grid;
    if (best_g > h && best_g < g_hi - h) {
      const double sm = misfit(best_g - h), sp = misfit(best_g + h);
      const double denom = sp - 2 * best_s + sm;
      if (denom > 0) best_g += 0.5 * h * (sm - sp) / denom;
    }
    if (amp_at(best_g) < 0.02) best_g = 0;  // no resolvable oscillation
    return {best_g, g_pred, std::abs(best_g - g_pred)};
  };

  const auto res = scan::scan(
      "z", p.z_grid, {"fitted_coupling", "predicted_coupling", "abs_error"},
      point, seed, threads);

  RunOutput out;
  out.swept = "z";
  out.grid = res.grid;
  out.columns = res.columns;
  out.rows = res.rows;
  double max_err = 0;
  bool all_ok = true;
  for (std::size_t i = 0; i < res.rows.size(); ++i) {
    if (!res.errors[i].empty()) {
      all_ok = false;
      out.summary.push_back("point z=" + fmt(res.grid[i]) +
                            " failed: " + res.errors[i]);
      continue;
    }
    max_err = std::max(max_err, res.rows[i][2]);
  }
  out.summary.push_back("peak sin^2 rate (a_perp/4) J1max = " + fmt(g_peak) +
                        " rad/us");
  out.summary.push_back("max |fit - J1 prediction| = " + fmt(max_err) +
                        " rad/us (" + fmt(100 * max_err / g_peak) +
                        "% of peak)");
  out.metadata["max_abs_error"] = fmt(max_err);
  out.metadata["all_points_ok"] = all_ok ? "1" : "0";
  return out;
}

// ------------------------------------------------------- parallel-coupling

RunOutput run_parallel(const config::ExperimentConfig& cfg,
                       const config::ParallelCouplingParams& p) {
  const auto nf = system::nuclear_frame(cfg.sys, p.nucleus);
  const auto sched = control::make_sync_mw_rf(p.nucleus, nf.omega, p.n_blocks,
                                              p.block_period);
  const auto model = effective::effective_parallel(cfg.sys, p.nucleus, sched);
  const auto vr = dynamics::validate_effective(cfg.sys, sched, model,
                                               sched.duration, p.checkpoints);
  RunOutput out;
  out.grid = vr.times;
  out.columns = {"fidelity", "leakage"};
  out.rows.assign(vr.times.size(), {});
  double fmin = 1;
  for (std::size_t i = 0; i < vr.times.size(); ++i) {
    out.rows[i] = {vr.fidelity[i], vr.leakage[i]};
    fmin = std::min(fmin, vr.fidelity[i]);
  }
  out.summary.push_back("sigma_z coupling a_par/2 = " +
                        fmt(model.coupling_scale) + " rad/us");
  out.summary.push_back("conditional nuclear phase per block = " +
                        fmt(0.5 * nf.a_par * p.block_period) + " rad");
  out.summary.push_back("min model fidelity = " + fmt(fmin));
  out.metadata["min_fidelity"] = fmt(fmin);
  append_margins(out, model);
  return out;
}

// ---------------------------------------------------- effective-validation

RunOutput run_validation(const config::ExperimentConfig& cfg,
                         const config::EffectiveValidationParams& p) {
  control::ControlSchedule sched;
  effective::EffectiveModel model;
  double duration = p.duration;

  if (p.model == "pulsed") {
    const auto nf = system::nuclear_frame(cfg.sys, p.nucleus);
    const double tau = control::resonant_spacing(nf.omega, p.q) / 2.0;
    sched = p.preset == "cpmg" ? control::make_cpmg(8 * p.n_blocks, tau)
                               : control::make_xy8(p.n_blocks, tau);
    model = effective::effective_pulsed(cfg.sys, sched, p.q, p.nucleus,
                                        control::Parity::cosine);
    if (duration <= 0) duration = sched.duration;
  } else if (p.model == "hh") {
    const auto nf = system::nuclear_frame(cfg.sys, p.nucleus);
    const double omega = p.rabi > 0 ? p.rabi : nf.omega;
    if (duration <= 0) duration = kTwoPi / nf.a_perp;
    sched = control::make_continuous_drive(omega, p.phi, duration);
    model = effective::effective_hh(cfg.sys, omega, p.nucleus, p.phi);
  } else if (p.model == "ccd") {
    if (duration <= 0) duration = 8.0 * kTwoPi / p.omega1;
    sched = control::make_ccd(0, p.omega1, p.omega2, p.phi, duration);
    model = effective::effective_ccd(p.omega1, p.omega2, p.phi, 0);
  } else {  // ja
    const auto nf = system::nuclear_frame(cfg.sys, p.nucleus);
    const double omega1 = p.z * p.nu;
    const double omega0 = nf.omega - p.nu;
    const double g =
        std::abs(0.5 * nf.a_perp * effective::bessel_j(1, p.z));
    if (duration <= 0)
      duration = std::max(g > 0 ? 0.35 * constants::pi / g : 0.0,
                          3.0 * kTwoPi / p.nu);
    sched = control::make_modulated_rabi(omega0, omega1, p.nu, 0, duration);
    model = effective::effective_jacobi_anger(cfg.sys, omega0, omega1, p.nu,
                                              p.nucleus);
  }

  const auto vr = dynamics::validate_effective(cfg.sys, sched, model, duration,
                                               p.checkpoints);
  RunOutput out;
  out.grid = vr.times;
  out.columns = {"fidelity", "leakage"};
  out.rows.assign(vr.times.size(), {});
  double fmin = 1, lmax = 0;
  for (std::size_t i = 0; i < vr.times.size(); ++i) {
    out.rows[i] = {vr.fidelity[i], vr.leakage[i]};
    fmin = std::min(fmin, vr.fidelity[i]);
    lmax = std::max(lmax, vr.leakage[i]);
  }
  out.summary.push_back("model " + p.model + ": coupling scale = " +
                        fmt(model.coupling_scale) + " rad/us");
  out.summary.push_back("min fidelity = " + fmt(fmin) +
                        ", max leakage = " + fmt(lmax));
  out.metadata["min_fidelity"] = fmt(fmin);
  out.metadata["max_leakage"] = fmt(lmax);
  append_margins(out, model);
  return out;
}

// ------------------------------------------------------------ polarization

RunOutput run_polarization(const config::ExperimentConfig& cfg,
                           const config::PolarizationParams& p) {
  std::vector<int> targets = p.targets;
  if (targets.empty()) {
    targets.resize(cfg.sys.n_nuclei());
    std::iota(targets.begin(), targets.end(), 0);
  }
  std::vector<control::ControlSchedule> cycles;
  RunOutput out;
  for (int u : targets) {
    const auto nf = system::nuclear_frame(cfg.sys, u);
    auto sched =
        control::make_continuous_drive(nf.omega, 0, kTwoPi / nf.a_perp);
    control::PulseEvent prep;  // pi/2 from |0> onto the exchanging dressed state
    prep.t_center = 0;
    prep.angle = constants::pi / 2;
    prep.phase = nf.a_eff.dot(nf.omega_hat) < 0 ? constants::pi / 2
                                                : 3 * constants::pi / 2;
    sched.events.insert(sched.events.begin(), prep);
    cycles.push_back(sched);
    out.summary.push_back("target " + std::to_string(u) + ": rabi=" +
                          fmt(nf.omega) + " rad/us, cycle=" +
                          fmt(kTwoPi / nf.a_perp) + " us");
  }
  const auto tr = dynamics::polarization_transfer(
      cfg.sys, cycles, p.cycles, p.repolarize, p.reset_fidelity);
  RunOutput traj = from_trajectory(tr);
  traj.summary.insert(traj.summary.begin(), out.summary.begin(),
                      out.summary.end());
  const auto& bath = tr.series("bath_polarization");
  traj.summary.push_back("bath polarization " + fmt(bath.front()) + " -> " +
                         fmt(bath.back()) + " (max " +
                         fmt(0.5 * cfg.sys.n_nuclei()) + ")");
  traj.metadata["final_bath_polarization"] = fmt(bath.back());
  return traj;
}

RunOutput run_experiment(const config::ExperimentConfig& cfg,
                         std::uint64_t seed, int threads) {
  if (const auto* p = std::get_if<config::SpectrumParams>(&cfg.params))
    return run_spectrum(cfg, *p);
  if (const auto* p = std::get_if<config::HHTransferParams>(&cfg.params))
    return run_hh_transfer(cfg, *p);
  if (const auto* p = std::get_if<config::CcdCoherenceParams>(&cfg.params))
    return run_ccd_coherence(cfg, *p, seed);
  if (const auto* p = std::get_if<config::JaSweepParams>(&cfg.params))
    return run_ja_sweep(cfg, *p, seed, threads);
  if (const auto* p = std::get_if<config::ParallelCouplingParams>(&cfg.params))
    return run_parallel(cfg, *p);
  if (const auto* p =
          std::get_if<config::EffectiveValidationParams>(&cfg.params))
    return run_validation(cfg, *p);
  if (const auto* p = std::get_if<config::PolarizationParams>(&cfg.params))
    return run_polarization(cfg, *p);
  throw std::runtime_error("unhandled experiment kind");
}

// ----------------------------------------------------------------- explain

const std::map<std::string, std::string>& explain_texts() {
  static const std::map<std::string, std::string> texts = {
      {"spectrum",
       "Sweeps the interpulse spacing tau of an XY8/CPMG train and records the\n"
       "NV readout. A nucleus with precession frequency omega_u produces a dip\n"
       "when a harmonic of the pulse modulation is resonant: q*2pi/T = omega_u\n"
       "with T = 2*tau the modulation period, i.e. tau = q*pi/omega_u. The\n"
       "odd-harmonic filter weight of the square modulation is f_q = 4/(q*pi),\n"
       "so the effective dip coupling is f_q*a_perp/4.\n"
       "Parameters: preset (xy8|cpmg), n_blocks, tau_grid_us, readout\n"
       "(p0|sigma_x), noise_floor."},
      {"hh-transfer",
       "Continuous drive at the Hartmann-Hahn match Omega = omega_l: the\n"
       "dressed NV splitting equals the nuclear precession frequency, turning\n"
       "on a resonant flip-flop (a_perp/2)(S+ I- + S- I+) in the dressed\n"
       "basis. Starting from the locked dressed state, <I_z> swings from -1/2\n"
       "to +1/2 with full transfer at t = 2pi/a_perp.\n"
       "Parameters: nucleus, rabi_rad_per_us (0 = resonance),\n"
       "detune_rad_per_us, phi_rad, duration_us, n_samples."},
      {"ccd-coherence",
       "Concatenated continuous drive: tone1 (omega1/2) sigma_x dresses the\n"
       "qubit against detuning noise delta(t); tone2, amplitude-modulated at\n"
       "omega1, adds a second layer -sin(phi)*(omega2(1+xi2)/4) sigma_y (at\n"
       "phi = -pi/2: +omega2/4 sigma_y) protecting against Rabi noise xi1(t),\n"
       "whose residual enters as (omega1 xi1/2) sigma_x. Compares the\n"
       "ensemble-averaged coherence against the single-tone drive under\n"
       "common noise realizations and reports 1/e times.\n"
       "Parameters: omega1/omega2_rad_per_us, phi_rad, duration_us,\n"
       "n_realizations, delta/xi1/xi2 {rms, tau_c_us (0 = quasi-static),\n"
       "grid_dt_us}, compare_single, stroboscopic."},
      {"ja-sweep",
       "Amplitude-modulated drive Omega(t) = Omega_0 - Omega_1 sin(nu t) at\n"
       "the sideband resonance Omega_0 + nu = omega_l. The first-sideband\n"
       "coupling is scaled by the Bessel factor J_1(z), z = Omega_1/nu\n"
       "(maximum 0.5819 at z = 1.8412), giving an effective rate\n"
       "(a_perp/2) J_1(z). The sweep fits the observed flip-flop rate per z\n"
       "and compares it against the J_1 curve.\n"
       "Parameters: nucleus, nu_rad_per_us, z_grid, duration_us, n_samples."},
      {"parallel-coupling",
       "Synchronized MW + rf pi pairs, one pair per block period T at its\n"
       "center, refocus every transverse hyperfine term and keep only the\n"
       "parallel coupling (a_par/2) sigma_z I_z^u of the addressed nucleus:\n"
       "a conditional nuclear phase of (a_par/2)*T per block, sign set by the\n"
       "NV state. Off-target transverse couplings average out at rate\n"
       "omega_k T/2pi. Validates the model propagator against the exact one.\n"
       "Parameters: nucleus, n_blocks, block_period_us, checkpoints."},
      {"effective-validation",
       "Carries the exact propagator into the co-moving frame of a chosen\n"
       "closed-form model (pulsed | hh | ccd | ja), restricts it to the model\n"
       "subspace, and reports fidelity and leakage at stroboscopic\n"
       "checkpoints. pulsed: XY8/CPMG at q*2pi/T = omega_u; hh: Omega =\n"
       "omega_l; ccd: two-tone dressed model; ja: Omega_0 + nu = omega_l with\n"
       "J_1(z) scaling.\n"
       "Parameters: model, nucleus, preset, q, n_blocks, rabi_rad_per_us,\n"
       "phi_rad, nu_rad_per_us, z, omega1/omega2_rad_per_us, duration_us,\n"
       "checkpoints."},
      {"polarization",
       "Staggered Hartmann-Hahn cycles: cycle k prepares the locked dressed\n"
       "state with a pi/2 pulse, drives at Omega = omega_k for a full transfer\n"
       "2pi/a_perp_k, then optically resets the NV to |0>. Each resonant cycle\n"
       "pumps its target nucleus toward +1/2 along its quantization axis;\n"
       "bath polarization accumulates across cycles.\n"
       "Parameters: targets (empty = all), cycles, repolarize,\n"
       "reset_fidelity."},
  };
  return texts;
}

int cmd_explain(const std::string& kind) {
  const auto& texts = explain_texts();
  const auto it = texts.find(kind);
  if (it == texts.end()) {
    std::cerr << "unknown experiment kind '" << kind << "'; valid kinds:";
    for (const auto& k : config::kExperimentKinds) std::cerr << ' ' << k;
    std::cerr << '\n';
    return 2;
  }
  std::cout << it->second << '\n';
  return 0;
}

// --------------------------------------------------------- validate-config

int cmd_validate(const std::string& path) {
  std::string text;
  try {
    text = io::read_text_file(path);
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  }
  config::ExperimentConfig cfg;
  try {
    cfg = config::parse_config(text);
  } catch (const config::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  }

  std::cout << "OK: kind=" << cfg.kind << ", " << cfg.sys.n_nuclei()
            << " nuclei, Bz=" << fmt(cfg.sys.nv.bz) << " T\n";
  const auto table = system::resonance_table(cfg.sys);
  if (!table.empty()) {
    std::cout << "index  label  omega[rad/us]  a_perp[rad/us]  a_par[rad/us]  "
                 "omega/a_perp\n";
    for (const auto& r : table) {
      std::cout << r.index << "  " << r.label << "  " << fmt(r.omega) << "  "
                << fmt(r.a_perp) << "  " << fmt(r.a_par) << "  "
                << fmt(r.a_perp > 0 ? r.omega / r.a_perp : INFINITY) << '\n';
      if (r.omega < 10 * r.a_perp)
        std::cout << "warning: nucleus " << r.index
                  << " has omega < 10*a_perp; effective models degrade in "
                     "this regime\n";
    }
  }
  if (const auto* p =
          std::get_if<config::HHTransferParams>(&cfg.params);
      p && p->rabi > 0) {
    double best = INFINITY;
    int best_j = -1;
    for (const auto& r : table)
      if (std::abs(r.omega - p->rabi) < best) {
        best = std::abs(r.omega - p->rabi);
        best_j = r.index;
      }
    if (best_j >= 0 && best > 0.1 * p->rabi)
      std::cout << "warning: no nucleus within 10% of the drive; nearest is "
                << best_j << " at omega=" << fmt(table[best_j].omega)
                << " rad/us\n";
  }
  if (const auto* p =
          std::get_if<config::ParallelCouplingParams>(&cfg.params)) {
    const auto nfu = system::nuclear_frame(cfg.sys, p->nucleus);
    for (const auto& r : table) {
      if (r.index == p->nucleus) continue;
      if (std::abs(r.omega - nfu.omega) * p->block_period < kTwoPi)
        std::cout << "warning: rf selectivity low for nucleus " << r.index
                  << " (|omega_k - omega_u| T < 2pi)\n";
    }
  }
  return 0;
}

// --------------------------------------------------------------------- run

int cmd_run(const std::string& path, const std::string& out_dir,
            const std::string& format, std::uint64_t* seed_override,
            int* threads_override) {
  std::string text;
  try {
    text = io::read_text_file(path);
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  }
  config::ExperimentConfig cfg;
  try {
    cfg = config::parse_config(text);
  } catch (const config::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  }
  if (seed_override) cfg.seed = *seed_override;
  if (threads_override) cfg.threads = *threads_override;

  try {
    const auto out = run_experiment(cfg, cfg.seed, cfg.threads);
    const std::string digest =
        hex64(fnv1a(text + "#seed=" + std::to_string(cfg.seed)));

    std::filesystem::create_directories(out_dir);
    const auto base = std::filesystem::path(out_dir) / cfg.kind;
    const std::string csv_path = base.string() + ".csv";
    io::write_text_file(csv_path, to_csv(out));
    std::cout << "wrote " << csv_path << '\n';
    if (format == "jsonlike") {
      const std::string json_path = base.string() + ".json";
      io::write_text_file(
          json_path, to_json_doc(out, cfg.kind, cfg.seed, digest).dump(2) + "\n");
      std::cout << "wrote " << json_path << '\n';
    }
    std::cout << "config digest: " << digest << ", seed: " << cfg.seed << '\n';
    for (const auto& line : out.summary) std::cout << line << '\n';
    return 0;
  } catch (const config::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"NV-center dynamical-decoupling simulator"};
  app.require_subcommand(1);

  std::string config_path, out_dir = ".", format = "csv", kind;
  std::uint64_t seed = 0;
  int threads = 0;
  bool seed_given = false, threads_given = false;

  auto* run = app.add_subcommand("run", "run an experiment config");
  run->add_option("--config", config_path, "config file (JSON)")
      ->required();
  run->add_option("--out", out_dir, "output directory (default .)");
  run->add_option("--seed", seed, "master seed override")
      ->each([&](const std::string&) { seed_given = true; });
  run->add_option("--threads", threads, "scan parallelism (default cores)")
      ->each([&](const std::string&) { threads_given = true; });
  run->add_option("--format", format, "csv | jsonlike")
      ->check(CLI::IsMember({"csv", "jsonlike"}));

  auto* explain = app.add_subcommand("explain", "describe an experiment kind");
  explain->add_option("kind", kind, "experiment kind")->required();

  auto* validate =
      app.add_subcommand("validate-config", "schema + physics sanity report");
  validate->add_option("--config", config_path, "config file (JSON)")
      ->required();

  CLI11_PARSE(app, argc, argv);

  if (run->parsed())
    return cmd_run(config_path, out_dir, format,
                   seed_given ? &seed : nullptr,
                   threads_given ? &threads : nullptr);
  if (explain->parsed()) return cmd_explain(kind);
  if (validate->parsed()) return cmd_validate(config_path);
  return 2;
}
