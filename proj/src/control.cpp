#include "nvdd/control.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include "nvdd/constants.hpp"
#include "nvdd/io.hpp"

namespace nvdd::control {

using constants::pi;
using constants::two_pi;

namespace {

constexpr double kAngleTol = 1e-9;

bool is_pi_pulse(const PulseEvent& e) {
  return e.target == PulseEvent::nv_target && std::abs(e.angle - pi) <= kAngleTol;
}

std::string fd(double x) { return io::format_double(x); }

}  // namespace

double DriveSegment::rabi_at(double t) const {
  return amp + amp_mod_depth * std::cos(amp_mod_freq * t + amp_mod_phase);
}

double DriveSegment::envelope_at(double t) const {
  if (envelope_freq == 0 && envelope_phase == 0) return 1.0;
  return std::cos(envelope_freq * t + envelope_phase);
}

void ControlSchedule::validate() const {
  if (!(duration >= 0) || !std::isfinite(duration))
    throw std::invalid_argument("schedule duration must be finite and >= 0");
  const double slack = 1e-9 * std::max(duration, 1.0);
  double prev = -1e300;
  for (const auto& e : events) {
    if (e.width < 0) throw std::invalid_argument("pulse width must be >= 0");
    if (e.t_center < prev)
      throw std::invalid_argument("pulse events must be time-ordered");
    prev = e.t_center;
    if (e.t_center - e.width / 2 < -slack ||
        e.t_center + e.width / 2 > duration + slack)
      throw std::invalid_argument("pulse outside schedule window");
    if (e.width > 0 && std::abs(e.rabi * e.width - e.angle) > 1e-12)
      throw std::invalid_argument("rectangular pulse needs rabi*width == angle");
  }
  for (size_t i = 0; i < events.size(); ++i)
    for (size_t j = i + 1; j < events.size(); ++j) {
      const auto &a = events[i], &b = events[j];
      if (a.width == 0 || b.width == 0) continue;
      if (a.t_center + a.width / 2 > b.t_center - b.width / 2 + 1e-15)
        throw std::invalid_argument("finite-width pulses overlap");
    }
  for (const auto& seg : continuous)
    if (!(seg.t_start <= seg.t_end) || seg.t_start < -slack ||
        seg.t_end > duration + slack)
      throw std::invalid_argument("drive segment outside schedule window");
}

ControlSchedule make_xy8(int n_blocks, double tau) {
  if (n_blocks < 1) throw std::invalid_argument("xy8 needs n_blocks >= 1");
  if (!(tau > 0)) throw std::invalid_argument("xy8 needs tau > 0");
  static constexpr double phases[8] = {0,      pi / 2, 0,      pi / 2,
                                       pi / 2, 0,      pi / 2, 0};
  ControlSchedule s;
  s.duration = 8.0 * n_blocks * tau;
  for (int b = 0; b < n_blocks; ++b)
    for (int k = 0; k < 8; ++k) {
      PulseEvent e;
      e.t_center = (b * 8 + k + 0.5) * tau;
      e.phase = phases[k];
      e.angle = pi;
      e.block = b;
      s.events.push_back(e);
    }
  s.provenance = "xy8 n=" + std::to_string(n_blocks) + " tau=" + fd(tau);
  return s;
}

ControlSchedule make_cpmg(int n_pulses, double tau) {
  if (n_pulses < 1) throw std::invalid_argument("cpmg needs n_pulses >= 1");
  if (!(tau > 0)) throw std::invalid_argument("cpmg needs tau > 0");
  ControlSchedule s;
  s.duration = n_pulses * tau;
  for (int k = 0; k < n_pulses; ++k) {
    PulseEvent e;
    e.t_center = (k + 0.5) * tau;
    e.angle = pi;
    s.events.push_back(e);
  }
  s.provenance = "cpmg n=" + std::to_string(n_pulses) + " tau=" + fd(tau);
  return s;
}

ControlSchedule make_axy8(int n_blocks, double d1, double d2, double t_block) {
  if (n_blocks < 1) throw std::invalid_argument("axy8 needs n_blocks >= 1");
  if (!(t_block > 0)) throw std::invalid_argument("axy8 needs T > 0");
  if (!(d1 > 0)) throw std::invalid_argument("axy8 needs d1 > 0");
  if (!(d2 > 0)) throw std::invalid_argument("axy8 needs d2 > 0");
  if (!(d1 + d2 < t_block / 2))
    throw std::invalid_argument(
        "axy8 composite does not fit: need d1 + d2 < T/2, got d1 + d2 = " +
        fd(d1 + d2) + " with T/2 = " + fd(t_block / 2));
  // One composite: five pi pulses symmetric about the composite center, the
  // first-to-central distance (d1 + d2) equal to the central-to-last one.
  static constexpr double base_phase[5] = {pi / 6, 0, pi / 2, 0, pi / 6};
  static constexpr bool y_type[8] = {false, true, false, true,
                                     true,  false, true, false};
  const double offsets[5] = {-(d1 + d2), -d2, 0, d2, d1 + d2};
  ControlSchedule s;
  s.duration = 8.0 * n_blocks * t_block;
  for (int c = 0; c < 8 * n_blocks; ++c) {
    const double center = (c + 0.5) * t_block;
    for (int k = 0; k < 5; ++k) {
      PulseEvent e;
      e.t_center = center + offsets[k];
      e.phase = base_phase[k] + (y_type[c % 8] ? pi / 2 : 0.0);
      e.angle = pi;
      e.block = c;
      s.events.push_back(e);
    }
  }
  s.provenance = "axy8 n=" + std::to_string(n_blocks) + " d1=" + fd(d1) +
                 " d2=" + fd(d2) + " T=" + fd(t_block);
  return s;
}

ControlSchedule make_continuous_drive(double rabi, double phi, double duration,
                                      double carrier) {
  if (!(duration > 0)) throw std::invalid_argument("drive needs duration > 0");
  ControlSchedule s;
  s.duration = duration;
  DriveSegment seg;
  seg.t_start = 0;
  seg.t_end = duration;
  seg.amp = rabi;
  seg.phase = phi;
  seg.carrier = carrier;
  seg.tag = "tone1";
  s.continuous.push_back(seg);
  s.provenance = "hh W=" + fd(rabi) + " phi=" + fd(phi) + " T=" + fd(duration) +
                 (carrier != 0 ? " w=" + fd(carrier) : "");
  return s;
}

ControlSchedule make_ccd(double carrier, double omega1, double omega2,
                         double phi, double duration) {
  if (!(duration > 0)) throw std::invalid_argument("ccd needs duration > 0");
  ControlSchedule s;
  s.duration = duration;
  DriveSegment t1;
  t1.t_start = 0;
  t1.t_end = duration;
  t1.amp = omega1;
  t1.phase = 0;
  t1.carrier = carrier;
  t1.tag = "tone1";
  DriveSegment t2 = t1;
  t2.amp = omega2;
  t2.phase = phi;
  t2.envelope_freq = omega1;
  t2.tag = "tone2";
  s.continuous.push_back(t1);
  if (omega2 != 0) s.continuous.push_back(t2);
  if (std::abs(omega1) <= std::abs(omega2))
    s.warnings.push_back("ccd expects |Omega1| >> |Omega2|");
  s.provenance = "ccd w0=" + fd(carrier) + " W1=" + fd(omega1) +
                 " W2=" + fd(omega2) + " phi=" + fd(phi) + " T=" + fd(duration);
  return s;
}

ControlSchedule make_modulated_rabi(double omega0, double omega1, double nu,
                                    double carrier, double duration) {
  if (!(nu > 0)) throw std::invalid_argument("modulated drive needs nu > 0");
  if (!(duration > 0)) throw std::invalid_argument("drive needs duration > 0");
  ControlSchedule s;
  s.duration = duration;
  DriveSegment seg;
  seg.t_start = 0;
  seg.t_end = duration;
  seg.amp = omega0;
  // Omega(t) = omega0 - omega1 sin(nu t).
  seg.amp_mod_depth = omega1;
  seg.amp_mod_freq = nu;
  seg.amp_mod_phase = pi / 2;
  seg.carrier = carrier;
  seg.tag = "tone1";
  s.continuous.push_back(seg);
  s.provenance = "mod w0=" + fd(omega0) + " W1=" + fd(omega1) +
                 " nu=" + fd(nu) + " T=" + fd(duration) +
                 (carrier != 0 ? " w=" + fd(carrier) : "");
  return s;
}

ControlSchedule make_sync_mw_rf(int nucleus_u, double omega_u, int n_blocks,
                                double block_period) {
  if (nucleus_u < 0) throw std::invalid_argument("sync needs a nucleus index");
  if (n_blocks < 1) throw std::invalid_argument("sync needs n_blocks >= 1");
  if (!(block_period > 0)) throw std::invalid_argument("sync needs T > 0");
  ControlSchedule s;
  s.duration = n_blocks * block_period;
  for (int b = 0; b < n_blocks; ++b) {
    const double t = (b + 0.5) * block_period;
    PulseEvent mw;
    mw.t_center = t;
    mw.angle = pi;
    mw.block = b;
    PulseEvent rf = mw;
    rf.target = nucleus_u;
    s.events.push_back(mw);
    s.events.push_back(rf);
  }
  s.provenance = "sync u=" + std::to_string(nucleus_u) +
                 " n=" + std::to_string(n_blocks) + " T=" + fd(block_period) +
                 (omega_u != 0 ? " w=" + fd(omega_u) : "");
  return s;
}

ControlSchedule shifted(const ControlSchedule& s, double dt) {
  ControlSchedule out = s;
  out.duration += dt;
  for (auto& e : out.events) e.t_center += dt;
  for (auto& seg : out.continuous) {
    seg.t_start += dt;
    seg.t_end += dt;
  }
  out.provenance.clear();
  return out;
}

ControlSchedule concat(const ControlSchedule& a, const ControlSchedule& b) {
  ControlSchedule out = a;
  ControlSchedule tail = shifted(b, a.duration);
  out.duration = a.duration + b.duration;
  out.events.insert(out.events.end(), tail.events.begin(), tail.events.end());
  out.continuous.insert(out.continuous.end(), tail.continuous.begin(),
                        tail.continuous.end());
  out.warnings.insert(out.warnings.end(), b.warnings.begin(), b.warnings.end());
  if (!a.provenance.empty() && !b.provenance.empty())
    out.provenance = a.provenance + "; " + b.provenance;
  else
    out.provenance.clear();
  return out;
}

ControlSchedule make_polarization_block(const ControlSchedule& base,
                                        double gap) {
  if (gap < 0) throw std::invalid_argument("polarization gap must be >= 0");
  base.validate();
  const double d = base.duration;
  auto rot = [](double t, double phase) {
    PulseEvent e;
    e.t_center = t;
    e.phase = phase;
    e.angle = pi / 2;
    e.block = -1;
    return e;
  };
  ControlSchedule out;
  out.duration = 2 * d + gap;
  out.events.push_back(rot(0.0, pi / 2));
  for (auto e : base.events) out.events.push_back(e);
  out.events.push_back(rot(d, pi / 2 + pi));
  out.events.push_back(rot(d + gap, 0.0));
  for (auto e : base.events) {
    e.t_center += d + gap;
    out.events.push_back(e);
  }
  out.events.push_back(rot(2 * d + gap, pi));
  for (auto seg : base.continuous) {
    out.continuous.push_back(seg);
    seg.t_start += d + gap;
    seg.t_end += d + gap;
    out.continuous.push_back(seg);
  }
  std::stable_sort(out.events.begin(), out.events.end(),
                   [](const PulseEvent& x, const PulseEvent& y) {
                     return x.t_center < y.t_center;
                   });
  return out;
}

ControlSchedule randomize_phases(const ControlSchedule& s, std::uint64_t seed) {
  if (std::none_of(s.events.begin(), s.events.end(), is_pi_pulse))
    throw std::invalid_argument("phase randomization needs pi pulses");
  ControlSchedule out = s;
  std::mt19937_64 rng(seed);
  auto uniform_angle = [&rng]() {
    return two_pi * ((rng() >> 11) * 0x1.0p-53);
  };
  std::vector<std::pair<int, double>> offsets;  // block -> offset
  for (auto& e : out.events) {
    if (!is_pi_pulse(e)) continue;
    auto it = std::find_if(offsets.begin(), offsets.end(),
                           [&](const auto& p) { return p.first == e.block; });
    if (it == offsets.end()) {
      offsets.emplace_back(e.block, uniform_angle());
      it = std::prev(offsets.end());
    }
    e.phase += it->second;
  }
  if (!out.provenance.empty() &&
      out.provenance.find(';') == std::string::npos &&
      out.provenance.find("rand=") == std::string::npos)
    out.provenance += " rand=" + std::to_string(seed);
  else
    out.provenance.clear();
  return out;
}

ControlSchedule with_finite_width(const ControlSchedule& s, double width) {
  if (!(width > 0)) throw std::invalid_argument("pulse width must be > 0");
  ControlSchedule out = s;
  for (auto& e : out.events)
    if (is_pi_pulse(e)) {
      e.width = width;
      e.rabi = e.angle / width;
    }
  out.provenance.clear();
  out.validate();
  return out;
}

double ModulationFunction::operator()(double t) const {
  double r = std::fmod(t, period);
  if (r < 0) r += period;
  const auto n = std::upper_bound(switch_times.begin(), switch_times.end(), r) -
                 switch_times.begin();
  return (n % 2 == 0) ? initial_sign : -initial_sign;
}

double ModulationFunction::mean() const {
  double acc = 0, prev = 0, sign = initial_sign;
  for (double t : switch_times) {
    acc += sign * (t - prev);
    prev = t;
    sign = -sign;
  }
  acc += sign * (period - prev);
  return acc / period;
}

ModulationFunction modulation_function(const ControlSchedule& s) {
  if (!(s.duration > 0))
    throw std::invalid_argument("modulation function needs a finite window");
  std::vector<double> flips;
  for (const auto& e : s.events) {
    if (e.target != PulseEvent::nv_target) continue;
    if (!is_pi_pulse(e))
      throw std::invalid_argument(
          "modulation function undefined: non-pi NV pulse at t=" +
          fd(e.t_center));
    flips.push_back(e.t_center);
  }
  std::sort(flips.begin(), flips.end());

  ModulationFunction f;
  f.initial_sign = 1.0;
  if (flips.empty()) {
    f.period = s.duration;
    return f;
  }

  // Odd flip count: the sign only closes over a doubled window.
  double window = s.duration;
  if (flips.size() % 2 == 1) {
    const size_t m = flips.size();
    for (size_t i = 0; i < m; ++i) flips.push_back(flips[i] + window);
    window *= 2;
  }

  // Minimal period: smallest T = window*p/M (p an even divisor of M) such
  // that every flip maps onto another flip under a shift by T.
  const size_t m = flips.size();
  const double eps = 1e-9 * std::max(window, 1.0);
  double best = window;
  for (size_t p = 2; p <= m; p += 2) {
    if (m % p != 0) continue;
    const double cand = window * static_cast<double>(p) / static_cast<double>(m);
    bool ok = true;
    for (size_t i = 0; i < m && ok; ++i) {
      const size_t j = i + p;
      const double shifted_flip =
          flips[j % m] + window * static_cast<double>(j / m);
      ok = std::abs(shifted_flip - flips[i] - cand) <= eps;
    }
    if (ok) {
      best = cand;
      break;
    }
  }
  f.period = best;
  for (double t : flips) {
    if (t >= best - eps) break;
    f.switch_times.push_back(t);
  }
  return f;
}

double fourier_coefficient(const ModulationFunction& f, int k, Parity parity) {
  if (k < 0) throw std::invalid_argument("harmonic index must be >= 0");
  const double T = f.period;
  if (k == 0) return parity == Parity::cosine ? 2.0 * f.mean() : 0.0;
  const double w = two_pi * k / T;
  double acc = 0, prev = 0, sign = f.initial_sign;
  auto add = [&](double a, double b, double s) {
    if (parity == Parity::cosine)
      acc += s * (std::sin(w * b) - std::sin(w * a)) / w;
    else
      acc += s * (std::cos(w * a) - std::cos(w * b)) / w;
  };
  for (double t : f.switch_times) {
    add(prev, t, sign);
    prev = t;
    sign = -sign;
  }
  add(prev, T, sign);
  return 2.0 * acc / T;
}

double harmonic_weight(const ModulationFunction& f, int k) {
  return std::hypot(fourier_coefficient(f, k, Parity::cosine),
                    fourier_coefficient(f, k, Parity::sine));
}

double resonant_spacing(double omega_u, int q) {
  if (!(omega_u > 0)) throw std::invalid_argument("resonance needs omega > 0");
  if (q < 1) throw std::invalid_argument("harmonic must be >= 1");
  return two_pi * q / omega_u;
}

}  // namespace nvdd::control
