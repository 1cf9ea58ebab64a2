#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "nvdd/system.hpp"

// JSON experiment configs: one format, explicit units in field names,
// unknown fields rejected with full field paths.

namespace nvdd::config {

struct ConfigError : std::runtime_error {
  ConfigError(const std::string& path, const std::string& what)
      : std::runtime_error(path + ": " + what), path(path) {}
  std::string path;
};

struct NoiseChannelParams {
  double rms = 0;      // rad/us for delta, dimensionless for xi
  double tau_c = 0;    // us; 0 selects the quasi-static model
  double grid_dt = 0.01;
};

struct SpectrumParams {
  std::string preset = "xy8";
  int n_blocks = 2;
  std::vector<double> tau_grid;  // us
  std::string readout = "p0";
  double noise_floor = 1e-6;
};

struct HHTransferParams {
  int nucleus = 0;
  double rabi = 0;      // rad/us; 0 selects the nuclear resonance omega_u
  double phi = 0;
  double duration = 0;  // us; 0 selects one full transfer 2 pi / a_perp
  int n_samples = 201;
  double detune = 0;    // rad/us added to the resonant rabi
};

struct CcdCoherenceParams {
  double omega1 = 0;  // rad/us
  double omega2 = 0;  // rad/us
  double phi = -1.5707963267948966;
  double duration = 0;  // us
  int n_samples = 201;
  int n_realizations = 200;
  NoiseChannelParams delta, xi1, xi2;
  bool compare_single = true;
  bool stroboscopic = true;  // sample at multiples of 2 pi / omega1
};

struct JaSweepParams {
  int nucleus = 0;
  double nu = 0;  // rad/us modulation frequency
  std::vector<double> z_grid;  // omega1 / nu values
  double duration = 0;  // us; 0 selects half a transfer period at peak coupling
  int n_samples = 401;
};

struct ParallelCouplingParams {
  int nucleus = 0;
  int n_blocks = 8;
  double block_period = 0;  // us; required > 0
  int checkpoints = 8;
};

struct EffectiveValidationParams {
  std::string model;  // pulsed | hh | ccd | ja
  int nucleus = 0;
  std::string preset = "xy8";
  int q = 1;
  int n_blocks = 4;
  double rabi = 0;    // hh: 0 selects resonance
  double phi = 0;
  double nu = 0;      // ja
  double z = 0;       // ja: omega1 / nu
  double omega1 = 0;  // ccd
  double omega2 = 0;  // ccd
  double duration = 0;
  int checkpoints = 8;
};

struct PolarizationParams {
  std::vector<int> targets;  // staggered resonance targets; empty = all nuclei
  int cycles = 5;
  bool repolarize = true;
  double reset_fidelity = 1.0;
};

using ExperimentParams =
    std::variant<SpectrumParams, HHTransferParams, CcdCoherenceParams,
                 JaSweepParams, ParallelCouplingParams,
                 EffectiveValidationParams, PolarizationParams>;

struct ExperimentConfig {
  system::SpinSystem sys;
  std::string kind;
  ExperimentParams params;
  std::uint64_t seed = 0;
  int threads = 0;
};

extern const std::vector<std::string> kExperimentKinds;

// Parses and validates a whole config document; throws ConfigError with the
// offending field path.
ExperimentConfig parse_config(const std::string& text);

// Parses just a system document (the "system" object of a config).
system::SpinSystem parse_system(const std::string& text);

}  // namespace nvdd::config
