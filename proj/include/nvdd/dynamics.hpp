#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "nvdd/control.hpp"
#include "nvdd/effective.hpp"
#include "nvdd/noise.hpp"
#include "nvdd/spincore.hpp"
#include "nvdd/system.hpp"

// Exact propagation of control schedules over the system Hamiltonians, with
// observables, noise injection, spectra, polarization cycling, and the
// effective-vs-exact comparison instrument.
//
// Stepping: static stretches use cached eigendecompositions; time-dependent
// stretches use midpoint-sampled piecewise-constant exponentials whose slice
// count doubles until the end state moves by less than the step tolerance.
// Instantaneous pulses apply as exact unitaries at their event times (ties in
// list order, before any sample at the same instant). Pulse phases are
// referenced to the NV rotating frame; lab propagation conjugates the pulse
// unitary with the frame transform at the pulse time. Nuclear pulse axes are
// cos(phase) x_j + sin(phase) y_j in the static per-nucleus triad. In the
// toggled_interaction frame the pi-train is already folded into the
// modulation sign, so pulse events are not applied again.

namespace nvdd::dynamics {

using spincore::Mat;
using spincore::Vec;

struct StepControl {
  // Whole-run error budget: each integration cell converges to a share
  // proportional to its span, so reported observables move by less than the
  // coarser tolerance when tol is halved.
  double tol = 1e-9;
  int max_refinements = 16;
};

// Bound noise paths for one Monte Carlo shot. delta adds (delta/2) sigma_z;
// xi1 scales drive amplitudes tagged "tone1" (or untagged) by (1 + xi1); xi2
// scales "tone2" amplitudes. Supported in two-level rotating frames only.
struct NoiseSet {
  noise::Realization delta, xi1, xi2;
};

struct NoiseBinding {
  noise::NoiseModel delta, xi1, xi2;
};

struct Trajectory {
  std::vector<double> times;
  std::vector<std::pair<std::string, std::vector<double>>> observables;
  std::map<std::string, std::string> metadata;

  const std::vector<double>& series(const std::string& name) const;  // throws
  bool has_series(const std::string& name) const;
};

struct Dip {
  double center = 0, depth = 0, width = 0;
};

struct Spectrum {
  std::string swept_name;
  std::vector<double> grid;
  std::vector<double> signal;
  std::vector<Dip> dips;
};

enum class Readout { p0, sigma_x };

// Observables: p0 always; p_plus1/p_minus1 in three-level frames; sigma_x/y/z
// in two-level frames; iz_<j> along each nucleus's quantization axis z_j.
// Samples at n_samples uniform times spanning [0, duration].
Trajectory evolve(const system::SpinSystem& s,
                  const control::ControlSchedule& schedule,
                  const spincore::StateVector& initial, system::Frame frame,
                  bool rwa, StepControl sc = {}, int n_samples = 201,
                  const NoiseSet* noise = nullptr);

// Same, sampling at explicit (ascending, within [0, duration]) times.
Trajectory evolve_at(const system::SpinSystem& s,
                     const control::ControlSchedule& schedule,
                     const spincore::StateVector& initial, system::Frame frame,
                     bool rwa, const std::vector<double>& sample_times,
                     StepControl sc = {}, const NoiseSet* noise = nullptr);

// Propagator of the schedule window [0, t].
Mat schedule_propagator(const system::SpinSystem& s,
                        const control::ControlSchedule& schedule,
                        system::Frame frame, bool rwa, double t,
                        StepControl sc = {}, const NoiseSet* noise = nullptr);

// (pi/2)-prepare -> preset train -> inverse (pi/2) -> NV readout, swept over
// the interpulse spacing grid; preset is "xy8" or "cpmg"; the bath starts
// maximally mixed. Runs in the NV rotating frame (rwa).
Spectrum nmr_spectrum(const system::SpinSystem& s, const std::string& preset,
                      const std::vector<double>& tau_grid, int n_blocks,
                      Readout readout, StepControl sc = {},
                      double noise_floor = 1e-6);

// Local minima below baseline - 3 * noise_floor (baseline = signal median);
// centers refined parabolically, widths at half depth.
std::vector<Dip> find_dips(const std::vector<double>& grid,
                           const std::vector<double>& signal,
                           double noise_floor = 1e-6);

// Density-matrix cycling; cycle k runs cycle_schedules[k % size]. With
// repolarize, the NV is reset to |0><0| (bath untouched) with the given
// fidelity after each cycle. Records iz_<j>, their sum "bath_polarization",
// and p0 at cycle boundaries. initial_density defaults to |0><0| x
// maximally-mixed bath. Runs in the NV rotating frame (rwa).
Trajectory polarization_transfer(
    const system::SpinSystem& s,
    const std::vector<control::ControlSchedule>& cycle_schedules, int cycles,
    bool repolarize, double reset_fidelity = 1.0,
    const Mat* initial_density = nullptr, StepControl sc = {});

struct CoherenceReadout {
  enum class Kind { sigma_phi, bloch_norm };
  Kind kind = Kind::bloch_norm;
  double phi = 0;  // sigma_phi axis when kind == sigma_phi
};

// Ensemble average over n_realizations noise shots (realization i binds path
// index i of every channel, so protocols compared under the same binding see
// common random numbers). Returns mean sigma_x/y/z and p0, the scalar
// "coherence" series per readout, its "coherence_stderr", and metadata
// t2_1e / t2_fit / t2_fit_exponent / t2_fit_residual; t2_infinite=1 flags an
// unresolvable decay. Runs in the NV rotating frame (rwa).
Trajectory coherence_decay(const system::SpinSystem& s,
                           const control::ControlSchedule& schedule,
                           const NoiseBinding& binding, int n_realizations,
                           CoherenceReadout readout,
                           const spincore::StateVector& initial,
                           const std::vector<double>& sample_times,
                           StepControl sc = {});

struct ValidationResult {
  std::vector<double> times;
  std::vector<double> fidelity;  // cosine similarity, restricted exact vs model
  std::vector<double> leakage;   // 1 - |restriction|_F^2 / d_sub
};

// Exact-vs-effective comparison in the NV rotating frame (rwa): at each of
// n_checkpoints times in (0, duration], snapped to multiples of
// model.checkpoint_period, the exact propagator U(t) is carried to the model
// frame as (exp(-i h0 t) w0)^dag P(t)^dag U(t) w0, with P(t) the ordered
// product of pulse unitaries so far, then restricted to model.keep by partial
// trace and compared against exp(-i model.hamiltonian t).
ValidationResult validate_effective(const system::SpinSystem& s,
                                    const control::ControlSchedule& schedule,
                                    const effective::EffectiveModel& model,
                                    double duration, int n_checkpoints,
                                    StepControl sc = {});

}  // namespace nvdd::dynamics
