#pragma once

#include <cmath>

// Internal unit system used everywhere in this library:
//   angular frequency  rad/us
//   time               us
//   distance           nm
//   magnetic field     T
// All 2*pi factors are resolved when values enter the library; nothing
// downstream multiplies by 2*pi again.

namespace nvdd::constants {

inline constexpr double pi = 3.14159265358979323846;
inline constexpr double two_pi = 2.0 * pi;

// Convert a plain frequency in MHz (or GHz, kHz) to angular rad/us.
inline constexpr double mhz(double f) { return two_pi * f; }
inline constexpr double ghz(double f) { return two_pi * 1.0e3 * f; }
inline constexpr double khz(double f) { return two_pi * 1.0e-3 * f; }

// NV ground-state zero-field splitting, 2*pi x 2.87 GHz.
inline constexpr double nv_zero_field_splitting = two_pi * 2870.0;

// Gyromagnetic ratios, rad/(us*T), signs included.
inline constexpr double gamma_electron = -two_pi * 28024.0;  // 2*pi x 28.024 GHz/T
inline constexpr double gamma_c13 = two_pi * 10.705;         // 2*pi x 10.705 MHz/T
inline constexpr double gamma_h1 = two_pi * 42.577;          // 2*pi x 42.577 MHz/T
inline constexpr double gamma_n15 = -two_pi * 4.316;         // 2*pi x -4.316 MHz/T

// mu0*hbar/(4*pi) in units such that
//   coupling [rad/us] = dipolar_constant * gamma1 * gamma2 / r^3
// with gammas in rad/(us*T) and r in nm. Numerically equal to hbar [J*s]
// times 1e26 (unit bookkeeping: 1e-7 H/m * 1e12 (us^-2) * 1e27 (nm^3) * 1e-6).
// Sanity value: NV to 13C at 1 nm gives |k| = 0.1249 rad/us ~ 2*pi x 19.9 kHz.
inline constexpr double dipolar_constant = 1.054571817e-8;

}  // namespace nvdd::constants
