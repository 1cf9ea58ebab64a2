#pragma once

#include <Eigen/Dense>

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "nvdd/spincore.hpp"

// NV-center + nuclear-bath description: dipolar couplings from geometry,
// per-nucleus precession frames, and Hamiltonian generators in the lab frame
// and the standard rotating frames. Units: rad/us, us, nm, T.

namespace nvdd::system {

using spincore::Mat;
using spincore::Transition;
using Vector3 = Eigen::Vector3d;

struct NVCenter {
  double zero_field_splitting;  // D, rad/us
  double gamma_e;               // rad/(us*T), signed (negative for electron)
  double bz;                    // T, field along NV axis z
  Transition transition = Transition::zero_to_plus;

  // Lab-frame energies of |+1>, |-1> (|0> at zero), and the driven transition.
  double level_energy(int ms) const;
  double transition_frequency() const;
};

struct Nucleus {
  Vector3 position_nm;  // relative to the NV, NV axis along z
  double gamma_n;       // rad/(us*T), signed
  std::string label;    // species tag, e.g. "13C"
};

struct SpinSystem {
  NVCenter nv;
  std::vector<Nucleus> nuclei;
  bool include_nn = false;

  int n_nuclei() const { return static_cast<int>(nuclei.size()); }
  // Subsystem dims: [nv_dim, 2, 2, ...]. nv_dim is 3 (lab) or 2 (qubit frames).
  std::vector<int> dims(int nv_dim) const;
  void validate() const;  // throws std::invalid_argument on bad geometry
};

// Hyperfine field of the NV on nucleus j in the S_z-secular form:
//   A = k [z_hat - 3 (z_hat . r_hat) r_hat],  k = C_dd * gamma_e * gamma_n / r^3.
// This is the vector coupling to S_z; the sign relevant for the driven qubit
// subspace is handled by transition_sign below.
Vector3 hyperfine_vector(const Nucleus& n, const NVCenter& nv);

// +1 for the 0<->+1 qubit (S_z -> (sigma_z+1)/2), -1 for 0<->-1.
double transition_sign(Transition t);

// Secular nuclear-nuclear coupling coefficient
//   b = C_dd * gamma_j * gamma_k / r^3 * (1 - 3 n_z^2)
// multiplying [Iz Iz - (I+ I- + I- I+)] with I+- = (Ix +- i Iy)/2.
double nuclear_dipolar_coefficient(const Vector3& r_jk, double gamma_j,
                                   double gamma_k);

// Per-nucleus precession frame in the driven qubit subspace:
//   omega_vec = gamma_n Bz z_hat - a_eff/2,  a_eff = transition_sign * A.
struct NuclearFrame {
  Vector3 a_eff;      // transition-effective hyperfine vector
  double omega;       // |omega_vec|
  Vector3 omega_hat;  // precession axis (z_hat fallback when omega ~ 0)
  double a_perp;      // |a_eff - (a_eff.omega_hat) omega_hat| >= 0
  double a_par;       // |a_eff . omega_hat| >= 0
  Vector3 x_axis, y_axis, z_axis;  // driven-frame triad (orthonormal)
};

// Resonance only: (omega, omega_hat).
std::pair<double, Vector3> nuclear_resonance(const Nucleus& n, const NVCenter& nv);

// Full decomposition; Gram-Schmidt fallback axis when a_perp ~ 0 (degenerate
// on-axis geometry) keeps the triad orthonormal and deterministic.
NuclearFrame nuclear_frame(const SpinSystem& s, int j);

enum class Frame {
  lab,                  // full three-level model, nothing rotated away
  nv_rotating,          // frame of the NV level energies
  nv_nuclear_rotating,  // additionally the bare nuclear Zeeman terms
  toggled_interaction,  // nuclear interaction picture with the pulse toggling
                        // folded into a modulation sign F(t)
};

// Field-free Hamiltonian generator in a given frame. Drive terms are added by
// the dynamics layer in the same frame.
struct FrameHamiltonian {
  Frame frame;
  bool rwa;
  std::vector<int> dims;
  bool time_dependent;
  Mat h_static;                        // meaningful when !time_dependent
  std::function<Mat(double)> h_of_t;   // always callable
};

// Full lab-frame Hamiltonian (three-level NV x nuclei): NV level energies,
// nuclear Zeeman, point-dipole NV-nucleus coupling, optionally the full
// nuclear-nuclear dipolar coupling.
spincore::Operator lab_hamiltonian(const SpinSystem& s);

// Rotating-frame generators. With rwa=true the standard secular forms:
//   nv_rotating:          -sum_j omega_j (omega_hat_j . I_j)
//                         + (sigma_z/2) sum_j (a_eff_j . I_j) + H_nn(secular)
//   nv_nuclear_rotating:  sum_j a_par-type S_z I_j^z pure-dephasing form
//   toggled_interaction:  F(t) (sigma_z/2) sum_j I_j . [a_perp x_j cos(w_j t)
//                         - a_perp y_j sin(w_j t) + a_par z_j] + H_nn(frame)
// With rwa=false the exact interaction picture of the lab model (time
// dependent, three-level for nv_rotating). `modulation` is required for
// toggled_interaction and ignored elsewhere.
FrameHamiltonian rotating_frame_hamiltonian(
    const SpinSystem& s, Frame frame, bool rwa,
    std::function<double(double)> modulation = nullptr);

// Secular nuclear-nuclear Hamiltonian on the qubit-frame space (dims [2,2..]):
// Iz Iz - flip-flop for same-species pairs, Iz Iz only for heteronuclear
// pairs (flip-flop suppressed by the Zeeman mismatch).
Mat secular_nn_hamiltonian(const SpinSystem& s);

// Human-readable per-nucleus resonance/coupling table (CLI validate-config).
struct ResonanceRow {
  int index;
  std::string label;
  double omega, a_perp, a_par;
};
std::vector<ResonanceRow> resonance_table(const SpinSystem& s);

}  // namespace nvdd::system
