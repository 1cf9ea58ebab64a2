#include "nvdd/noise.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace nvdd::noise {

namespace {

// Portable uniform in [0,1) from the top 53 bits of an mt19937_64 draw.
double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

double gaussian(std::mt19937_64& rng) {
  const double u1 = uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(1.0 - u1)) *
         std::cos(6.283185307179586476925286766559 * u2);
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

void NoiseModel::validate() const {
  if (!(sigma >= 0) || !std::isfinite(sigma))
    throw std::invalid_argument("noise sigma must be finite and >= 0");
  if (kind == Kind::ornstein_uhlenbeck) {
    if (!(tau_c > 0) || !std::isfinite(tau_c))
      throw std::invalid_argument("OU noise requires tau_c > 0");
    if (!(grid_dt > 0) || !std::isfinite(grid_dt))
      throw std::invalid_argument("OU noise requires grid_dt > 0");
  }
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  return splitmix64(splitmix64(master) + 0x9e3779b97f4a7c15ULL * (index + 1));
}

Realization::Realization(const NoiseModel& m, std::uint64_t index,
                         double duration) {
  m.validate();
  if (m.sigma == 0) return;  // identically zero, stays static

  std::mt19937_64 rng(derive_seed(m.seed, index));
  if (m.kind == Kind::quasi_static_gaussian) {
    constant_ = m.sigma * gaussian(rng);
    return;
  }

  static_ = false;
  dt_ = m.grid_dt;
  const auto n = static_cast<std::size_t>(std::ceil(duration / dt_)) + 1;
  samples_.resize(std::max<std::size_t>(n, 1));
  const double decay = std::exp(-dt_ / m.tau_c);
  const double kick = m.sigma * std::sqrt(1.0 - decay * decay);
  samples_[0] = m.sigma * gaussian(rng);  // stationary start
  for (std::size_t k = 1; k < samples_.size(); ++k)
    samples_[k] = decay * samples_[k - 1] + kick * gaussian(rng);
}

double Realization::operator()(double t) const {
  if (static_) return constant_;
  if (t <= 0) return samples_.front();
  const auto k = static_cast<std::size_t>(t / dt_);
  return samples_[std::min(k, samples_.size() - 1)];
}

}  // namespace nvdd::noise
