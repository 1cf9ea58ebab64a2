#pragma once

#include <cstdint>
#include <string>
#include <vector>

// Control fields on the NV and on individual nuclei: pulse sequences (CPMG,
// XY8, AXY8, synchronized MW+rf, polarization blocks), continuous drives
// (plain, CCD two-tone, amplitude-modulated), the induced modulation function
// F(t), and its exact Fourier analysis.

namespace nvdd::control {

struct PulseEvent {
  static constexpr int nv_target = -1;

  double t_center = 0;  // us
  double width = 0;     // 0 = instantaneous
  double rabi = 0;      // rad/us during a finite-width pulse
  double phase = 0;     // rotation axis sigma_phi (NV) / driven-frame axis (nucleus)
  int target = nv_target;
  double angle = 0;     // nominal rotation, pi or pi/2
  int block = 0;        // grouping unit for phase randomization
};

// One continuous tone in the qubit rotating frame:
//   H(t) = (amp(t)/2) * envelope(t) * sigma_phase,
//   amp(t) = amp + amp_mod_depth * cos(amp_mod_freq * t + amp_mod_phase),
//   envelope(t) = cos(envelope_freq * t + envelope_phase)   (== 1 when both 0).
struct DriveSegment {
  double t_start = 0, t_end = 0;
  double amp = 0;
  double amp_mod_depth = 0, amp_mod_freq = 0, amp_mod_phase = 0;
  double envelope_freq = 0, envelope_phase = 0;
  double phase = 0;
  double carrier = 0;  // lab carrier frequency, bookkeeping only
  std::string tag;     // noise-injection handle ("tone1", "tone2")

  double rabi_at(double t) const;      // amp(t), without the envelope
  double envelope_at(double t) const;  // cos factor
};

struct ControlSchedule {
  double duration = 0;
  std::vector<PulseEvent> events;       // time-ordered; ties keep list order
  std::vector<DriveSegment> continuous;
  std::vector<std::string> warnings;
  std::string provenance;  // canonical DSL statement(s) when preset-built

  void validate() const;  // throws std::invalid_argument
};

// Piecewise +-1 periodic sign F(t) induced by a pi-pulse train; period is the
// detected minimal one. switch_times live in [0, period), in schedule time.
struct ModulationFunction {
  double period = 0;
  std::vector<double> switch_times;
  double initial_sign = 1.0;  // value just after t = 0, before any switch

  double operator()(double t) const;
  double mean() const;  // (1/T) integral of F over one period
};

enum class Parity { cosine, sine };

// Presets. All pulses are instantaneous NV pi pulses unless stated.
ControlSchedule make_xy8(int n_blocks, double tau);
ControlSchedule make_cpmg(int n_pulses, double tau);
// Eight five-pulse composites (XYXYYXYX pattern) per block; composite i is
// centered at (i - 1/2)*t_block with pulses at offsets
// {-(d1+d2), -d2, 0, +d2, +(d1+d2)}; admissible iff d1 > 0, d2 > 0 and
// d1 + d2 < t_block/2 (five pulses fit strictly inside the composite window,
// symmetric about its center).
ControlSchedule make_axy8(int n_blocks, double d1, double d2, double t_block);
ControlSchedule make_continuous_drive(double rabi, double phi, double duration,
                                      double carrier = 0);
// Two-tone concatenated drive: tone1 = (omega1/2) sigma_x, tone2 =
// (omega2/2) sigma_phi cos(omega1 t); tags "tone1"/"tone2" for noise binding.
ControlSchedule make_ccd(double carrier, double omega1, double omega2,
                         double phi, double duration);
// Amplitude-modulated drive Omega(t) = omega0 - omega1 sin(nu t).
ControlSchedule make_modulated_rabi(double omega0, double omega1, double nu,
                                    double carrier, double duration);
// Paired simultaneous pi pulses (MW on the NV, selective rf on nucleus u) at
// the center of each of n_blocks windows of length block_period.
ControlSchedule make_sync_mw_rf(int nucleus_u, double omega_u, int n_blocks,
                                double block_period);
// Two copies of `base` separated by `gap`, each sandwiched in NV pi/2
// rotations (first about y, second about x), turning a sigma_z-type coupling
// into sigma_x I^x + sigma_y I^y (flip-flop).
ControlSchedule make_polarization_block(const ControlSchedule& base, double gap);

ControlSchedule shifted(const ControlSchedule& s, double dt);
ControlSchedule concat(const ControlSchedule& a, const ControlSchedule& b);
// Per-block uniform global phase offset on NV pi pulses, deterministic in seed.
ControlSchedule randomize_phases(const ControlSchedule& s, std::uint64_t seed);
// Replace instantaneous NV pi pulses by rectangular pulses of given width
// (rabi = angle/width, area preserved).
ControlSchedule with_finite_width(const ControlSchedule& s, double width);

ModulationFunction modulation_function(const ControlSchedule& s);
// Exact (2/T) integral of F * cos/sin(k 2pi t/T) over one period.
double fourier_coefficient(const ModulationFunction& f, int k, Parity parity);
// Registration-free amplitude of the k-th harmonic, hypot(f_k, f~_k).
double harmonic_weight(const ModulationFunction& f, int k);
// Period T with the q-th harmonic resonant: q * 2pi/T = omega_u.
double resonant_spacing(double omega_u, int q);

}  // namespace nvdd::control
