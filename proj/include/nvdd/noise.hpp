#pragma once

#include <cstdint>
#include <vector>

// Classical noise channels for Monte Carlo dephasing studies: quasi-static
// Gaussian offsets and Ornstein-Uhlenbeck paths generated by the exact
// Gauss-Markov recursion on a fixed sample-and-hold grid.

namespace nvdd::noise {

enum class Kind { quasi_static_gaussian, ornstein_uhlenbeck };

struct NoiseModel {
  Kind kind = Kind::quasi_static_gaussian;
  double sigma = 0;       // rms amplitude (rad/us for detuning channels,
                          // dimensionless for relative Rabi errors)
  double tau_c = 0;       // correlation time, us (OU only)
  std::uint64_t seed = 0;
  double grid_dt = 0.01;  // OU sample-and-hold grid, us

  void validate() const;  // throws std::invalid_argument
};

// Stable per-point stream derivation from (master seed, point index).
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index);

// One deterministic sample path; identical (model, index, duration) inputs
// reproduce the path bitwise. Default-constructed paths are identically zero.
class Realization {
 public:
  Realization() = default;
  Realization(const NoiseModel& m, std::uint64_t index, double duration);

  double operator()(double t) const;
  bool is_static() const { return static_; }
  double value() const { return constant_; }  // meaningful when is_static()
  double grid_dt() const { return dt_; }      // 0 when static

 private:
  bool static_ = true;
  double constant_ = 0;
  double dt_ = 0;
  std::vector<double> samples_;
};

}  // namespace nvdd::noise
