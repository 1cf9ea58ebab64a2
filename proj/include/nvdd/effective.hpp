#pragma once

#include <string>
#include <vector>

#include "nvdd/control.hpp"
#include "nvdd/system.hpp"

// Leading-order effective Hamiltonians of the pulsed and continuous schemes,
// each carrying quantitative validity margins and the frame data needed to
// compare it against exact propagation.

namespace nvdd::effective {

using spincore::Mat;

// Inequality condition with the ratio by which it currently holds; margin >> 1
// means comfortably satisfied, ~1 means marginal. +inf when the suppressed
// quantity is exactly zero.
struct ValidityMargin {
  std::string name;
  double margin = 0;
};

// `hamiltonian` acts on the kept subsystems (keep[i] indexes the full system
// space, 0 = NV qubit) in the plain product basis; triad structure enters
// through axis contractions, not basis changes. The transform from the qubit
// rotating frame to the model frame is W(t) = exp(-i h0 t) w0 on the full
// space, with pulse toggling P(t) factored out separately by the validator.
// Comparisons are exact-to-leading-order at multiples of checkpoint_period
// (0 = any time).
struct EffectiveModel {
  Mat hamiltonian;
  std::vector<int> dims;
  std::vector<int> keep;
  std::string subspace;
  std::string frame;
  Mat h0;
  Mat w0;
  double checkpoint_period = 0;
  std::vector<ValidityMargin> validity;
  double coupling_scale = 0;  // headline rate, rad/us

  double margin(const std::string& name) const;  // throws if absent
  double min_margin() const;                     // +inf when list is empty
};

// Resonant pulse-train model (sigma_z/2) [f_q a_perp/2 x_u - f~_q a_perp/2 y_u
// + 2 mean(F) a_par/2 z_u] . I_u for a train whose q-th harmonic matches
// omega_u within coupling_scale * tolerance_factor; `parity` selects the
// quadrature reported as coupling_scale = |f_q| a_perp/4 (or the f~ variant).
// The check is skipped when coupling_scale is exactly zero.
EffectiveModel effective_pulsed(const system::SpinSystem& s,
                                const control::ControlSchedule& sequence,
                                int q, int u, control::Parity parity,
                                double tolerance_factor = 0.1);

// Hartmann-Hahn flip-flop (a_perp/2)(S+ I- + S- I+) between the dressed NV
// states |+-phi> and nucleus l, valid when the drive Rabi rate matches
// omega_l. S+- are dressed-state ladder operators; I+- = (Ix +- i Iy)/2 on
// the nuclear triad, so the matrix element <+,down|H|-,up> equals a_perp/4
// and populations exchange at angular rate a_perp/2.
EffectiveModel effective_hh(const system::SpinSystem& s, double omega, int l,
                            double phi = 0, double tolerance_factor = 0.1);

// Double-drive dressed-frame model
//   H = (omega1 xi1 / 2) sigma_x - sin(phi) (omega2 (1 + xi2) / 4) sigma_y;
// phi = -pi/2 gives the plain (omega2/4) sigma_y second dressing. delta and
// xi1 are reference error magnitudes used only for the validity margins.
EffectiveModel effective_ccd(double omega1, double omega2, double phi,
                             double xi2, double delta = 0, double xi1 = 0);

// Amplitude-modulated drive Omega(t) = Omega0 - Omega1 sin(nu t) at the
// sideband condition Omega0 + nu = omega_j:
//   H = (a_perp/2) J1(Omega1/nu) (i S+ I- - i S- I+)
// with S+- the phi = 0 dressed ladder operators; the J1 sideband carries an
// extra pi/2 phase relative to the carrier, hence the i factors and the
// exp(-i z sigma_x / 2) frame kick in w0.
EffectiveModel effective_jacobi_anger(const system::SpinSystem& s,
                                      double omega0, double omega1, double nu,
                                      int j, double tolerance_factor = 0.1);

// Synchronized MW pi + rf pi pairing that preserves sigma_z I_u^z while the
// sign flips decouple every other nucleus:  H = (a_par_u/2) sigma_z I_u^z.
// `schedule` must be a make_sync_mw_rf pairing for nucleus u.
EffectiveModel effective_parallel(const system::SpinSystem& s, int u,
                                  const control::ControlSchedule& schedule);

// Bessel function of the first kind, n >= 0, |z| < 50, accurate to 1e-12.
double bessel_j(int n, double z);

}  // namespace nvdd::effective
