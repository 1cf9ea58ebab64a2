#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "nvdd/constants.hpp"
#include "nvdd/control.hpp"
#include "nvdd/dynamics.hpp"
#include "nvdd/io.hpp"
#include "nvdd/noise.hpp"
#include "nvdd/scan.hpp"
#include "nvdd/spincore.hpp"
#include "nvdd/system.hpp"

using namespace nvdd;
using constants::pi;
using spincore::Vec;

namespace {

system::SpinSystem bare_nv() {
  system::SpinSystem s;
  s.nv.zero_field_splitting = constants::nv_zero_field_splitting;
  s.nv.gamma_e = constants::gamma_electron;
  s.nv.bz = 0.1;
  return s;
}

spincore::StateVector plus_x() {
  Vec v(2);
  v << 1 / std::sqrt(2.0), 1 / std::sqrt(2.0);
  return spincore::StateVector::on(v, {2});
}

}  // namespace

TEST_CASE("derived seeds are deterministic and spread") {
  CHECK(noise::derive_seed(42, 7) == noise::derive_seed(42, 7));
  std::set<std::uint64_t> seen;
  for (std::uint64_t m : {0ULL, 1ULL, 42ULL})
    for (std::uint64_t i = 0; i < 16; ++i)
      seen.insert(noise::derive_seed(m, i));
  CHECK(seen.size() == 48);
}

TEST_CASE("realizations replay bitwise and report their shape") {
  noise::NoiseModel ou;
  ou.kind = noise::Kind::ornstein_uhlenbeck;
  ou.sigma = 0.7;
  ou.tau_c = 0.5;
  ou.seed = 9;
  const noise::Realization a(ou, 3, 2.0), b(ou, 3, 2.0);
  CHECK_FALSE(a.is_static());
  CHECK(a.grid_dt() == ou.grid_dt);
  bool moved = false;
  for (double t = 0; t <= 2.0; t += 0.003) {
    CHECK(a(t) == b(t));
    if (a(t) != a(0.0)) moved = true;
  }
  CHECK(moved);
  const noise::Realization c(ou, 4, 2.0);
  CHECK(a(1.0) != c(1.0));

  noise::NoiseModel qs;
  qs.kind = noise::Kind::quasi_static_gaussian;
  qs.sigma = 0.3;
  qs.seed = 9;
  const noise::Realization q(qs, 5, 2.0);
  CHECK(q.is_static());
  CHECK(q(0.0) == q.value());
  CHECK(q(1.7) == q.value());

  noise::NoiseModel off;  // sigma = 0: identically zero
  const noise::Realization z(off, 0, 1.0);
  CHECK(z.is_static());
  CHECK(z.value() == 0.0);

  noise::NoiseModel bad = ou;
  bad.tau_c = 0;
  CHECK_THROWS_AS(noise::Realization(bad, 0, 1.0), std::invalid_argument);
  bad = ou;
  bad.sigma = -1;
  CHECK_THROWS_AS(noise::Realization(bad, 0, 1.0), std::invalid_argument);
}

TEST_CASE("quasi-static draws match the requested gaussian") {
  noise::NoiseModel qs;
  qs.kind = noise::Kind::quasi_static_gaussian;
  qs.sigma = 0.8;
  qs.seed = 31;
  const int n = 4000;
  double sum = 0, sq = 0;
  for (int i = 0; i < n; ++i) {
    const double v = noise::Realization(qs, i, 1.0).value();
    sum += v;
    sq += v * v;
  }
  const double mean = sum / n;
  const double rms = std::sqrt(sq / n);
  CHECK(std::abs(mean) < 4 * qs.sigma / std::sqrt((double)n));
  CHECK(rms == doctest::Approx(qs.sigma).epsilon(0.06));
}

TEST_CASE("OU paths are stationary with exponential memory") {
  noise::NoiseModel ou;
  ou.kind = noise::Kind::ornstein_uhlenbeck;
  ou.sigma = 0.6;
  ou.tau_c = 0.4;
  ou.seed = 17;
  const int n = 4000;
  const double t1 = 1.0, t2 = 1.5;  // lag larger than the grid, ~tau_c scale
  double s1 = 0, s11 = 0, s12 = 0;
  for (int i = 0; i < n; ++i) {
    const noise::Realization r(ou, i, 2.0);
    const double a = r(t1), b = r(t2);
    s1 += a;
    s11 += a * a;
    s12 += a * b;
  }
  const double var = s11 / n;
  const double corr = (s12 / n) / (ou.sigma * ou.sigma);
  CHECK(std::abs(s1 / n) < 4 * ou.sigma / std::sqrt((double)n));
  CHECK(var == doctest::Approx(ou.sigma * ou.sigma).epsilon(0.1));
  CHECK(corr ==
        doctest::Approx(std::exp(-(t2 - t1) / ou.tau_c)).epsilon(0.15));
}

TEST_CASE("free induction decays as the quasi-static gaussian predicts") {
  auto s = bare_nv();
  control::ControlSchedule fid;
  fid.duration = 3.0;
  dynamics::NoiseBinding binding;
  binding.delta.kind = noise::Kind::quasi_static_gaussian;
  binding.delta.sigma = 1.0;
  binding.delta.seed = 2;

  std::vector<double> ts;
  for (int k = 0; k <= 30; ++k) ts.push_back(3.0 * k / 30.0);
  dynamics::CoherenceReadout ro;
  ro.kind = dynamics::CoherenceReadout::Kind::sigma_phi;
  ro.phi = 0;
  const int n = 2000;
  const auto tr =
      dynamics::coherence_decay(s, fid, binding, n, ro, plus_x(), ts);

  const double stat = 4.0 / std::sqrt((double)n);
  for (std::size_t k = 0; k < ts.size(); ++k) {
    const double want =
        std::exp(-0.5 * binding.delta.sigma * binding.delta.sigma * ts[k] *
                 ts[k]);
    CHECK(std::abs(tr.series("coherence")[k] - want) < stat);
    CHECK(tr.series("coherence_stderr")[k] >= 0);
    CHECK(std::abs(tr.series("sigma_z")[k]) < stat);
  }
  CHECK(tr.series("coherence_stderr")[10] > 1e-4);

  const double t2 = std::sqrt(2.0) / binding.delta.sigma;
  CHECK(std::stod(tr.metadata.at("t2_1e")) == doctest::Approx(t2).epsilon(0.1));
  CHECK(std::stod(tr.metadata.at("t2_fit")) == doctest::Approx(t2).epsilon(0.1));
  CHECK(std::stod(tr.metadata.at("t2_fit_exponent")) ==
        doctest::Approx(2.0).epsilon(0.15));
  CHECK(tr.metadata.at("t2_infinite") == "0");
  CHECK(tr.metadata.at("n_realizations") == "2000");
}

TEST_CASE("a spin echo refocuses static detuning exactly") {
  auto s = bare_nv();
  control::ControlSchedule echo;
  echo.duration = 3.0;
  control::PulseEvent e;
  e.t_center = 1.5;
  e.angle = pi;
  echo.events.push_back(e);

  dynamics::NoiseBinding binding;
  binding.delta.kind = noise::Kind::quasi_static_gaussian;
  binding.delta.sigma = 1.0;
  binding.delta.seed = 2;
  const auto tr = dynamics::coherence_decay(s, echo, binding, 200, {},
                                            plus_x(), {0.0, 3.0});
  CHECK(tr.series("coherence")[0] == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(tr.series("coherence")[1] == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("zero noise is flagged as unresolvable decay") {
  auto s = bare_nv();
  control::ControlSchedule fid;
  fid.duration = 5.0;
  const dynamics::NoiseBinding binding;  // all sigmas zero
  std::vector<double> ts{0.0, 1.0, 2.0, 3.0, 4.0, 5.0};
  const auto tr =
      dynamics::coherence_decay(s, fid, binding, 3, {}, plus_x(), ts);
  for (double c : tr.series("coherence"))
    CHECK(c == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(tr.metadata.at("t2_infinite") == "1");
  CHECK(tr.metadata.at("t2_1e") == "inf");

  CHECK_THROWS_AS(
      (void)dynamics::coherence_decay(s, fid, binding, 0, {}, plus_x(), ts),
      std::invalid_argument);
}

TEST_CASE("scans hand each point its derived seed and keep row order") {
  const std::vector<double> grid{0.5, 1.5, 2.5, 3.5, 4.5, 5.5, 6.5};
  const std::uint64_t master = 77;
  auto fn = [](double v, std::uint64_t seed) {
    return std::vector<double>{v * 2, (double)(seed % 1024)};
  };
  const auto r =
      scan::scan("x", grid, {"twice", "seedmod"}, fn, master, 4);
  REQUIRE(r.rows.size() == grid.size());
  CHECK(r.ok());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    CHECK(r.rows[i][0] == 2 * grid[i]);
    CHECK(r.rows[i][1] == (double)(noise::derive_seed(master, i) % 1024));
  }
}

TEST_CASE("scan output is bitwise independent of thread count") {
  std::vector<double> grid;
  for (int i = 0; i < 24; ++i) grid.push_back(0.1 * i);
  auto fn = [](double v, std::uint64_t seed) {
    // order-sensitive if the pool leaked state between points
    noise::NoiseModel qs;
    qs.kind = noise::Kind::quasi_static_gaussian;
    qs.sigma = 1.0;
    qs.seed = seed;
    return std::vector<double>{v + noise::Realization(qs, 0, 1.0).value()};
  };
  const auto a = scan::scan("p", grid, {"y"}, fn, 5, 1);
  const auto b = scan::scan("p", grid, {"y"}, fn, 5, 6);
  const auto c = scan::scan("p", grid, {"y"}, fn, 5, 3);
  REQUIRE(a.rows.size() == b.rows.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    CHECK(a.rows[i][0] == b.rows[i][0]);
    CHECK(a.rows[i][0] == c.rows[i][0]);
  }
  CHECK(scan::to_csv(a) == scan::to_csv(b));
}

TEST_CASE("a throwing point yields a NaN row and the scan continues") {
  const std::vector<double> grid{1.0, 2.0, 3.0};
  auto fn = [](double v, std::uint64_t) -> std::vector<double> {
    if (v == 2.0) throw std::runtime_error("diverged at two");
    return {v * v};
  };
  const auto r = scan::scan("q", grid, {"sq"}, fn, 0, 2);
  CHECK_FALSE(r.ok());
  CHECK(r.rows[0][0] == 1.0);
  CHECK(std::isnan(r.rows[1][0]));
  CHECK(r.rows[2][0] == 9.0);
  CHECK(r.errors[0].empty());
  CHECK(r.errors[1] == "diverged at two");
  CHECK(r.errors[2].empty());

  const auto csv = scan::to_csv(r);
  CHECK(csv.find("# point 1 (2): diverged at two") != std::string::npos);
  CHECK(csv.find("nan") != std::string::npos);

  // row-shape mismatches are reported per point, not fatal
  auto bad = [](double v, std::uint64_t) -> std::vector<double> {
    if (v == 1.0) return {1.0, 2.0};
    return {v};
  };
  const auto rb = scan::scan("q", grid, {"one"}, bad, 0, 1);
  CHECK_FALSE(rb.errors[0].empty());
  CHECK(rb.errors[1].empty());
}

TEST_CASE("csv rows round-trip through shortest decimals") {
  scan::ScanResult r;
  r.param = "tau";
  r.grid = {0.1, 0.2};
  r.columns = {"a", "b"};
  r.rows = {{1.0 / 3, 2e-17}, {5.0, -0.125}};
  r.errors = {"", ""};
  const auto csv = scan::to_csv(r);

  std::istringstream is(csv);
  std::string line;
  std::getline(is, line);
  CHECK(line == "tau,a,b");
  for (std::size_t i = 0; i < r.grid.size(); ++i) {
    std::getline(is, line);
    std::istringstream row(line);
    std::string cell;
    std::getline(row, cell, ',');
    CHECK(io::parse_double(cell).value() == r.grid[i]);
    for (double want : r.rows[i]) {
      std::getline(row, cell, ',');
      CHECK(io::parse_double(cell).value() == want);
    }
  }

  CHECK_THROWS_AS((void)scan::scan("x", {}, {"y"},
                                   [](double, std::uint64_t) {
                                     return std::vector<double>{0.0};
                                   }),
                  std::invalid_argument);
  CHECK_THROWS_AS((void)scan::scan("x", {1.0}, {"y"}, nullptr),
                  std::invalid_argument);
}
