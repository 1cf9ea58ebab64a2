#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "nvdd/constants.hpp"
#include "nvdd/control.hpp"
#include "nvdd/dynamics.hpp"
#include "nvdd/effective.hpp"
#include "nvdd/spincore.hpp"
#include "nvdd/system.hpp"

using namespace nvdd;
using constants::pi;
using constants::two_pi;
using spincore::cx;
using spincore::Mat;
using spincore::Vec;
using system::Vector3;

namespace {

system::SpinSystem bare_nv(double bz = 0.1) {
  system::SpinSystem s;
  s.nv.zero_field_splitting = constants::nv_zero_field_splitting;
  s.nv.gamma_e = constants::gamma_electron;
  s.nv.bz = bz;
  return s;
}

system::SpinSystem one_c13(const Vector3& pos, double bz) {
  auto s = bare_nv(bz);
  system::Nucleus n;
  n.position_nm = pos;
  n.gamma_n = constants::gamma_c13;
  n.label = "13C";
  s.nuclei.push_back(n);
  return s;
}

Mat spin_along(const Vector3& a) {
  const auto ops = spincore::spin_operators(0.5);
  return a.x() * ops.sx + a.y() * ops.sy + a.z() * ops.sz;
}

// (down, up) eigenvectors of the triad z spin component
std::pair<Vec, Vec> triad_states(const system::NuclearFrame& nf) {
  Eigen::SelfAdjointEigenSolver<Mat> es(spin_along(nf.z_axis));
  return {es.eigenvectors().col(0), es.eigenvectors().col(1)};
}

Vec kv(const Vec& a, const Vec& b) {
  Vec out(a.size() * b.size());
  for (int i = 0; i < a.size(); ++i)
    for (int j = 0; j < b.size(); ++j) out(i * b.size() + j) = a(i) * b(j);
  return out;
}

double max_series_diff(const dynamics::Trajectory& a,
                       const dynamics::Trajectory& b, const char* name) {
  const auto& x = a.series(name);
  const auto& y = b.series(name);
  REQUIRE(x.size() == y.size());
  double m = 0;
  for (std::size_t k = 0; k < x.size(); ++k)
    m = std::max(m, std::abs(x[k] - y[k]));
  return m;
}

control::PulseEvent nv_pulse(double t, double angle, double phase = 0) {
  control::PulseEvent e;
  e.t_center = t;
  e.angle = angle;
  e.phase = phase;
  return e;
}

}  // namespace

TEST_CASE("instantaneous pulses rotate the NV exactly") {
  auto s = bare_nv();
  control::ControlSchedule sched;
  sched.duration = 1.0;
  sched.events.push_back(nv_pulse(0.5, pi));
  Vec v(2);
  v << 0, 1;  // |0>
  const auto st = spincore::StateVector::on(v, {2});

  const auto tr = dynamics::evolve(s, sched, st, system::Frame::nv_rotating,
                                   true, {}, 11);
  const auto& p0 = tr.series("p0");
  const auto& sz = tr.series("sigma_z");
  for (std::size_t k = 0; k < tr.times.size(); ++k) {
    const bool before = tr.times[k] < 0.5;
    CHECK(std::abs(p0[k] - (before ? 1.0 : 0.0)) < 1e-12);
    CHECK(sz[k] == doctest::Approx(before ? -1.0 : 1.0));
  }
  CHECK(std::stod(tr.metadata.at("norm_drift")) < 1e-9);
  CHECK(tr.metadata.at("rwa") == "1");
  CHECK(tr.metadata.at("schedule") == "custom");

  // pi/2 at phase pi/2 prepares +x (the spectrum prep convention)
  control::ControlSchedule prep;
  prep.duration = 0.1;
  prep.events.push_back(nv_pulse(0, pi / 2, pi / 2));
  const auto tp = dynamics::evolve(s, prep, st, system::Frame::nv_rotating,
                                   true, {}, 2);
  CHECK(tp.series("sigma_x").back() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(tp.series("p0").back() == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("pure dephasing never moves populations") {
  auto s = one_c13({0.8, 0.1, 0.9}, 0.2);
  control::ControlSchedule sched;
  sched.duration = 40.0;
  Vec nuc(2);
  nuc << cx(0.6, 0), cx(0, 0.8);
  Vec plus(2);
  plus << 1 / std::sqrt(2.0), 1 / std::sqrt(2.0);
  const auto st = spincore::StateVector::on(kv(plus, nuc), {2, 2});

  const auto tr = dynamics::evolve(
      s, sched, st, system::Frame::nv_nuclear_rotating, true, {}, 81);
  const auto& sz = tr.series("sigma_z");
  const auto& p0 = tr.series("p0");
  const auto& iz = tr.series("iz_0");
  double sx_min = 1, sx_max = -1;
  for (std::size_t k = 0; k < tr.times.size(); ++k) {
    CHECK(std::abs(sz[k] - sz[0]) < 1e-12);
    CHECK(std::abs(p0[k] - p0[0]) < 1e-12);
    // iz reads along the hyperfine triad axis, which is tilted from the
    // conserved lab z by a_perp/omega: a small wobble, not a drift
    CHECK(std::abs(iz[k] - iz[0]) < 0.01);
    sx_min = std::min(sx_min, tr.series("sigma_x")[k]);
    sx_max = std::max(sx_max, tr.series("sigma_x")[k]);
  }
  CHECK(sx_max - sx_min > 0.1);  // coherence does evolve
  CHECK(std::stod(tr.metadata.at("norm_drift")) < 1e-9);
}

TEST_CASE("driven evolution matches an independently assembled two-spin matrix") {
  auto s = one_c13({0.9, 0, 0.9}, 0.5);
  const auto nf = system::nuclear_frame(s, 0);
  const double dur = 12.0;
  const auto sched = control::make_continuous_drive(nf.omega, 0, dur);

  Vec v(4);
  v << cx(0.36, 0.1), cx(0.48, -0.2), cx(0.6, 0), cx(0.5, 0.1);
  v.normalize();
  const auto st = spincore::StateVector::on(v, {2, 2});
  const auto tr = dynamics::evolve(s, sched, st, system::Frame::nv_rotating,
                                   true, {}, 61);

  // hand-built generator: -omega (omega_hat.I) + (sigma_z/2)(a_eff.I) + drive
  const std::vector<int> dims{2, 2};
  auto embed_nuc = [&](const Vector3& a) {
    return spincore::embed(spin_along(a), 1, dims);
  };
  const Mat h = -nf.omega * embed_nuc(nf.omega_hat) +
                0.5 * spincore::embed(spincore::pauli_z(), 0, dims) *
                    embed_nuc(nf.a_eff) / 1.0 * 1.0 +
                0.5 * nf.omega * spincore::embed(spincore::pauli_x(), 0, dims);
  const Mat hz = -nf.omega * embed_nuc(nf.omega_hat) +
                 spincore::embed(spincore::pauli_z(), 0, dims) *
                     embed_nuc(nf.a_eff) * 0.5 +
                 0.5 * nf.omega * spincore::embed(spincore::pauli_x(), 0, dims);
  CHECK((h - hz).norm() < 1e-14);

  const spincore::Propagator prop(hz);
  const Mat p0_op = [&] {
    Mat p = Mat::Zero(2, 2);
    p(1, 1) = 1;
    return spincore::embed(p, 0, dims);
  }();
  const Mat iz_op = embed_nuc(nf.z_axis);
  for (std::size_t k = 0; k < tr.times.size(); ++k) {
    const Vec psi = prop.at(tr.times[k]) * v;
    CHECK(std::abs(tr.series("p0")[k] - std::real(psi.dot(p0_op * psi))) < 1e-9);
    CHECK(std::abs(tr.series("iz_0")[k] - std::real(psi.dot(iz_op * psi))) < 1e-9);
    CHECK(tr.series("p0")[k] >= -1e-9);
    CHECK(tr.series("p0")[k] <= 1 + 1e-9);
    CHECK(std::abs(tr.series("iz_0")[k]) <= 0.5 + 1e-9);
  }
  CHECK(std::stod(tr.metadata.at("norm_drift")) < 1e-9);
}

TEST_CASE("resonant drive exchanges populations at half the perpendicular coupling") {
  auto s = one_c13({0.9, 0, 0.9}, 0.5);
  const auto nf = system::nuclear_frame(s, 0);
  const double t_full = two_pi / nf.a_perp;  // full flip-flop swap
  const auto sched = control::make_continuous_drive(nf.omega, 0, t_full);

  const auto [dn, up] = triad_states(nf);
  const bool flip = nf.a_eff.dot(nf.omega_hat) > 0;
  const Vec nuc0 = flip ? up : dn;        // bright partner of |+_0>
  const double x0 = flip ? 0.5 : -0.5;
  const auto st =
      spincore::StateVector::on(kv(spincore::dressed_plus(0), nuc0), {2, 2});

  const auto tr = dynamics::evolve(s, sched, st, system::Frame::nv_rotating,
                                   true, {}, 81);
  for (std::size_t k = 0; k < tr.times.size(); ++k) {
    const double want = x0 * std::cos(nf.a_perp * tr.times[k] / 2);
    CHECK(std::abs(tr.series("iz_0")[k] - want) < 0.02);
    CHECK(std::abs(tr.series("p0")[k] - 0.5) < 0.02);
  }
  CHECK(std::abs(tr.series("iz_0").back() + x0) < 0.02);  // full swap
}

TEST_CASE("lab and rotating frames agree on populations") {
  auto s = one_c13({0.8, 0.2, 0.7}, 0.004);
  s.nv.zero_field_splitting = two_pi * 40;  // desk-scale splitting
  control::ControlSchedule sched;
  sched.duration = 0.3;
  sched.events.push_back(nv_pulse(0.15, pi));

  Vec v(6);
  v.setZero();
  v(4) = 0.6;  // NV |0> is index 2 in the (|+1>,|-1>,|0>) basis
  v(5) = 0.8;
  const auto st = spincore::StateVector::on(v, {3, 2});
  dynamics::StepControl sc;
  sc.tol = 1e-8;

  const auto lab =
      dynamics::evolve(s, sched, st, system::Frame::lab, false, sc, 31);
  const auto rot =
      dynamics::evolve(s, sched, st, system::Frame::nv_rotating, false, sc, 31);
  for (const char* name : {"p0", "p_plus1", "p_minus1", "iz_0"})
    CHECK(max_series_diff(lab, rot, name) < 1e-6);
  CHECK(lab.has_series("p_plus1"));
  CHECK_FALSE(lab.has_series("sigma_x"));
}

TEST_CASE("secular drive corrections shrink as the level splittings grow") {
  auto audit = [](double scale) {
    auto s = one_c13({0.8, 0.2, 0.7}, 0.002 * scale);
    s.nv.zero_field_splitting = two_pi * 100 * scale;
    const auto sched = control::make_continuous_drive(
        two_pi * 8, 0, 0.25, s.nv.transition_frequency());
    Vec v2(4);
    v2.setZero();
    v2(2) = 0.6;
    v2(3) = 0.8;
    Vec v3(6);
    v3.setZero();
    v3(4) = 0.6;
    v3(5) = 0.8;
    dynamics::StepControl sc;
    sc.tol = 1e-7;
    const auto a =
        dynamics::evolve(s, sched, spincore::StateVector::on(v2, {2, 2}),
                         system::Frame::nv_rotating, true, sc, 81);
    const auto b =
        dynamics::evolve(s, sched, spincore::StateVector::on(v3, {3, 2}),
                         system::Frame::nv_rotating, false, sc, 81);
    return max_series_diff(a, b, "p0");
  };
  const double d1 = audit(1.0);
  const double d2 = audit(2.5);
  CHECK(d1 > 1e-3);   // corrections are resolvable...
  CHECK(d1 < 0.1);    // ...but perturbative
  CHECK(d2 < 0.55 * d1);
}

TEST_CASE("halving the step tolerance moves observables less than the coarser tolerance") {
  auto s = one_c13({0.9, 0, 0.9}, 0.15);
  const auto nf = system::nuclear_frame(s, 0);
  const double tau = 0.81 * control::resonant_spacing(nf.omega, 1) / 2;
  const auto seq = control::make_xy8(1, tau);
  Vec v(4);
  v << 0.5, 0.5, 0.5, 0.5;
  const auto st = spincore::StateVector::on(v, {2, 2});

  dynamics::StepControl coarse, fine;
  coarse.tol = 1e-6;
  fine.tol = 5e-7;
  const auto a = dynamics::evolve(s, seq, st, system::Frame::toggled_interaction,
                                  true, coarse, 41);
  const auto b = dynamics::evolve(s, seq, st, system::Frame::toggled_interaction,
                                  true, fine, 41);
  for (const char* name : {"sigma_x", "sigma_y", "sigma_z", "p0", "iz_0"})
    CHECK(max_series_diff(a, b, name) < coarse.tol);
  CHECK(a.metadata.at("step_tol") == "1e-06");
}

TEST_CASE("toggled frame reproduces the pulsed frame at block boundaries") {
  auto s = one_c13({0.9, 0, 0.9}, 0.15);
  const auto nf = system::nuclear_frame(s, 0);
  for (double detune : {1.0, 0.77}) {
    const double tau = detune * control::resonant_spacing(nf.omega, 1) / 2;
    const auto seq = control::make_xy8(2, tau);
    Vec v(4);
    v << cx(0.42, 0), cx(0.56, 0), cx(0.3, 0.3), cx(0.4, 0.4);
    v.normalize();
    const auto st = spincore::StateVector::on(v, {2, 2});

    const std::vector<double> at{0.0, 8 * tau, 16 * tau};
    const auto tog = dynamics::evolve_at(
        s, seq, st, system::Frame::toggled_interaction, true, at);
    const auto rot =
        dynamics::evolve_at(s, seq, st, system::Frame::nv_rotating, true, at);
    CHECK(max_series_diff(tog, rot, "iz_0") < 1e-8);
    CHECK(max_series_diff(tog, rot, "p0") < 1e-8);
  }
}

TEST_CASE("finite-width pulses and bound noise shift the drive exactly") {
  auto s = bare_nv();
  Vec v(2);
  v << 0, 1;
  const auto st = spincore::StateVector::on(v, {2});

  // rectangular pi pulse: exact inversion
  control::ControlSchedule sched;
  sched.duration = 1.0;
  control::PulseEvent e;
  e.t_center = 0.5;
  e.width = 0.2;
  e.rabi = pi / 0.2;
  e.angle = pi;
  sched.events.push_back(e);
  const auto tr =
      dynamics::evolve(s, sched, st, system::Frame::nv_rotating, true, {}, 5);
  CHECK(tr.series("p0").back() < 1e-12);

  // static detuning noise: free precession of +x at the sampled offset
  noise::NoiseModel dm;
  dm.kind = noise::Kind::quasi_static_gaussian;
  dm.sigma = 0.8;
  dm.seed = 11;
  dynamics::NoiseSet ns;
  ns.delta = noise::Realization(dm, 3, 2.0);
  const double delta = ns.delta.value();
  CHECK(delta != 0.0);
  Vec px(2);
  px << 1 / std::sqrt(2.0), 1 / std::sqrt(2.0);
  control::ControlSchedule freep;
  freep.duration = 2.0;
  const auto trd = dynamics::evolve(s, freep, spincore::StateVector::on(px, {2}),
                                    system::Frame::nv_rotating, true, {}, 41,
                                    &ns);
  for (std::size_t k = 0; k < trd.times.size(); ++k)
    CHECK(std::abs(trd.series("sigma_x")[k] - std::cos(delta * trd.times[k])) <
          1e-9);

  // static Rabi-scale noise on tone1: sigma_z = -cos((1+xi) Omega t)
  noise::NoiseModel xm;
  xm.kind = noise::Kind::quasi_static_gaussian;
  xm.sigma = 0.1;
  xm.seed = 5;
  dynamics::NoiseSet nx;
  nx.xi1 = noise::Realization(xm, 2, 1.0);
  const double xi = nx.xi1.value();
  CHECK(xi != 0.0);
  const double rabi = two_pi * 1.5;
  const auto drv = control::make_continuous_drive(rabi, 0, 1.0);
  const auto trx = dynamics::evolve(s, drv, st, system::Frame::nv_rotating,
                                    true, {}, 41, &nx);
  for (std::size_t k = 0; k < trx.times.size(); ++k)
    CHECK(std::abs(trx.series("sigma_z")[k] +
                   std::cos((1 + xi) * rabi * trx.times[k])) < 1e-9);
}

TEST_CASE("polarization transfer swaps, reverses, and accounts for resets") {
  auto s = one_c13({0.9, 0, 0.9}, 0.5);
  const auto nf = system::nuclear_frame(s, 0);
  const double t_full = two_pi / nf.a_perp;
  const auto [dn, up] = triad_states(nf);
  const bool flip = nf.a_eff.dot(nf.omega_hat) > 0;
  const Vec nuc0 = flip ? up : dn;
  const double x0 = flip ? 0.5 : -0.5;
  const Vec start = kv(spincore::dressed_plus(0), nuc0);
  const Mat rho0 = start * start.adjoint();

  // two half-period cycles: through zero to the swapped value
  const auto half =
      control::make_continuous_drive(nf.omega, 0, t_full / 2);
  const auto trh = dynamics::polarization_transfer(s, {half}, 2, false, 1.0,
                                                   &rho0);
  REQUIRE(trh.times.size() == 3);
  CHECK(std::abs(trh.series("iz_0")[0] - x0) < 1e-12);
  CHECK(std::abs(trh.series("iz_0")[1]) < 0.02);
  CHECK(std::abs(trh.series("iz_0")[2] + x0) < 0.02);
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(trh.series("bath_polarization")[k] ==
          doctest::Approx(trh.series("iz_0")[k]));
    CHECK(std::abs(trh.series("p0")[k] - 0.5) < 0.02);
  }
  CHECK(trh.times[1] == doctest::Approx(t_full / 2));

  // two full-period cycles: coherent back-transfer to the start
  const auto full = control::make_continuous_drive(nf.omega, 0, t_full);
  const auto trf =
      dynamics::polarization_transfer(s, {full}, 2, false, 1.0, &rho0);
  CHECK(std::abs(trf.series("iz_0")[1] + x0) < 0.02);
  CHECK(std::abs(trf.series("iz_0")[2] - x0) < 0.04);

  // zero-duration cycles change nothing
  control::ControlSchedule idle;
  idle.duration = 0;
  const auto tri =
      dynamics::polarization_transfer(s, {idle}, 3, false, 1.0, &rho0);
  for (std::size_t k = 0; k < tri.times.size(); ++k) {
    CHECK(tri.series("iz_0")[k] == doctest::Approx(x0).epsilon(1e-12));
    CHECK(tri.times[k] == 0.0);
  }

  // partial reset bookkeeping: pi-pulse cycles with fidelity 0.9
  control::ControlSchedule flip_nv;
  flip_nv.duration = 0.1;
  flip_nv.events.push_back(nv_pulse(0.05, pi));
  const auto trr =
      dynamics::polarization_transfer(s, {flip_nv}, 2, true, 0.9, &rho0);
  CHECK(trr.series("p0")[0] == doctest::Approx(0.5));
  CHECK(trr.series("p0")[1] == doctest::Approx(0.9 + 0.1 * 0.5));
  CHECK(trr.series("p0")[2] ==
        doctest::Approx(0.9 + 0.1 * (1 - (0.9 + 0.1 * 0.5))));
  CHECK(trr.series("iz_0")[2] == doctest::Approx(x0).epsilon(1e-4));

  CHECK_THROWS_AS((void)dynamics::polarization_transfer(s, {}, 1, false),
                  std::invalid_argument);
  CHECK_THROWS_AS((void)dynamics::polarization_transfer(s, {half}, 0, false),
                  std::invalid_argument);
  CHECK_THROWS_AS(
      (void)dynamics::polarization_transfer(s, {half}, 1, true, 1.5),
      std::invalid_argument);
  const Mat bad = Mat::Identity(2, 2);
  CHECK_THROWS_AS(
      (void)dynamics::polarization_transfer(s, {half}, 1, false, 1.0, &bad),
      std::invalid_argument);
}

TEST_CASE("a prep pulse plus resonant drive polarizes a mixed bath in one cycle") {
  auto s = one_c13({0.9, 0, 0.9}, 0.5);
  const auto nf = system::nuclear_frame(s, 0);
  const double t_full = two_pi / nf.a_perp;
  const bool flip = nf.a_eff.dot(nf.omega_hat) > 0;

  auto cycle = control::make_continuous_drive(nf.omega, 0, t_full);
  cycle.events.insert(cycle.events.begin(), nv_pulse(0, pi / 2, pi / 2));
  const auto tr = dynamics::polarization_transfer(s, {cycle}, 1, false);
  CHECK(std::abs(tr.series("bath_polarization")[0]) < 1e-12);
  CHECK(std::abs(tr.series("bath_polarization")[1] - (flip ? -0.5 : 0.5)) <
        0.02);
  CHECK(std::abs(tr.series("p0")[1] - 0.5) < 0.02);
}

TEST_CASE("nmr spectrum dips at the resonant spacing and stays flat off it") {
  auto s = one_c13({0.9, 0, 0.9}, 0.15);
  const auto nf = system::nuclear_frame(s, 0);
  const double tau_res = control::resonant_spacing(nf.omega, 1) / 2;
  std::vector<double> grid;
  for (int i = 0; i <= 40; ++i)
    grid.push_back(tau_res * (0.85 + 0.3 * i / 40.0));
  const double step = grid[1] - grid[0];

  const auto spec =
      dynamics::nmr_spectrum(s, "xy8", grid, 4, dynamics::Readout::p0);
  CHECK(spec.swept_name == "tau");
  REQUIRE(!spec.dips.empty());
  const auto deepest = *std::max_element(
      spec.dips.begin(), spec.dips.end(),
      [](const auto& a, const auto& b) { return a.depth < b.depth; });
  CHECK(std::abs(deepest.center - tau_res) < step);
  CHECK(deepest.depth > 0.015);
  CHECK(deepest.width > 0);

  // a_perp = 0 nucleus: no contrast anywhere above the noise floor
  auto ax = one_c13({0, 0, 1.2}, 0.15);
  const auto flat =
      dynamics::nmr_spectrum(ax, "xy8", grid, 4, dynamics::Readout::p0);
  CHECK(flat.dips.empty());
  for (double v : flat.signal) CHECK(std::abs(v - 1.0) < 1e-9);

  // cpmg shares the resonance location
  const auto spec_c =
      dynamics::nmr_spectrum(s, "cpmg", grid, 4, dynamics::Readout::p0);
  REQUIRE(!spec_c.dips.empty());
  const auto deep_c = *std::max_element(
      spec_c.dips.begin(), spec_c.dips.end(),
      [](const auto& a, const auto& b) { return a.depth < b.depth; });
  CHECK(std::abs(deep_c.center - tau_res) < step);

  CHECK_THROWS_WITH_AS(
      (void)dynamics::nmr_spectrum(s, "udd", grid, 4, dynamics::Readout::p0),
      doctest::Contains("xy8 or cpmg"), std::invalid_argument);
  CHECK_THROWS_AS(
      (void)dynamics::nmr_spectrum(s, "xy8", grid, 0, dynamics::Readout::p0),
      std::invalid_argument);
  CHECK_THROWS_AS((void)dynamics::nmr_spectrum(s, "xy8", {0.2, 0.2}, 1,
                                               dynamics::Readout::p0),
                  std::invalid_argument);
  CHECK_THROWS_AS((void)dynamics::nmr_spectrum(s, "xy8", {-0.1, 0.2}, 1,
                                               dynamics::Readout::p0),
                  std::invalid_argument);
}

TEST_CASE("dip depth follows the effective-model rate") {
  auto s = one_c13({0.9, 0, 0.9}, 0.15);
  const auto nf = system::nuclear_frame(s, 0);
  const double tau_res = control::resonant_spacing(nf.omega, 1) / 2;
  const auto m = effective::effective_pulsed(
      s, control::make_xy8(1, tau_res), 1, 0, control::Parity::cosine);
  for (int n : {4, 8, 12}) {
    const auto sp =
        dynamics::nmr_spectrum(s, "xy8", {tau_res}, n, dynamics::Readout::p0);
    const double t = n * 8.0 * tau_res;
    const double want = 1.0 - std::pow(std::sin(m.coupling_scale * t / 2), 2);
    CHECK(std::abs(sp.signal[0] - want) < 0.02);
  }
}

TEST_CASE("find_dips locates synthetic minima") {
  std::vector<double> grid, one, two, flat;
  const double c1 = 3.0, c2 = 7.2, w = 0.35;
  for (int i = 0; i <= 200; ++i) {
    const double x = 10.0 * i / 200.0;
    grid.push_back(x);
    const double g1 = 0.4 * std::exp(-(x - c1) * (x - c1) / (w * w));
    const double g2 = 0.25 * std::exp(-(x - c2) * (x - c2) / (w * w));
    one.push_back(1.0 - g1);
    two.push_back(1.0 - g1 - g2);
    flat.push_back(1.0 + 3e-7 * std::sin(x));
  }
  const auto d1 = dynamics::find_dips(grid, one);
  REQUIRE(d1.size() == 1);
  CHECK(std::abs(d1[0].center - c1) < 0.01);
  CHECK(d1[0].depth == doctest::Approx(0.4).epsilon(0.01));
  // gaussian full width at half depth
  CHECK(d1[0].width ==
        doctest::Approx(2 * w * std::sqrt(std::log(2.0))).epsilon(0.05));

  const auto d2 = dynamics::find_dips(grid, two);
  REQUIRE(d2.size() == 2);
  CHECK(d2[0].center < d2[1].center);
  CHECK(std::abs(d2[1].center - c2) < 0.01);

  CHECK(dynamics::find_dips(grid, flat).empty());
  CHECK(dynamics::find_dips({1.0, 2.0}, {0.5, 0.4}).empty());
  CHECK_THROWS_AS((void)dynamics::find_dips(grid, {1.0}), std::invalid_argument);
}

TEST_CASE("validation scores unity for a synthetically exact model") {
  auto s = one_c13({0.8, 0.3, 0.9}, 0.2);
  control::ControlSchedule sched;
  sched.duration = 25.0;
  const auto fh =
      system::rotating_frame_hamiltonian(s, system::Frame::nv_rotating, true);

  effective::EffectiveModel m;
  m.hamiltonian = fh.h_static;
  m.dims = {2, 2};
  m.keep = {0, 1};
  m.h0 = Mat::Zero(4, 4);
  m.w0 = spincore::identity(4);
  m.checkpoint_period = 0;

  const auto res = dynamics::validate_effective(s, sched, m, 25.0, 6);
  REQUIRE(res.times.size() == 6);
  for (std::size_t k = 0; k < res.times.size(); ++k) {
    CHECK(res.fidelity[k] == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(res.leakage[k] < 1e-12);
  }

  CHECK_THROWS_AS((void)dynamics::validate_effective(s, sched, m, 25.0, 0),
                  std::invalid_argument);
  CHECK_THROWS_AS((void)dynamics::validate_effective(s, sched, m, 30.0, 2),
                  std::invalid_argument);
  effective::EffectiveModel slow = m;
  slow.checkpoint_period = 80.0;
  CHECK_THROWS_WITH_AS(
      (void)dynamics::validate_effective(s, sched, slow, 25.0, 2),
      doctest::Contains("checkpoint period"), std::invalid_argument);
  effective::EffectiveModel wrong = m;
  wrong.h0 = Mat::Zero(2, 2);
  CHECK_THROWS_AS((void)dynamics::validate_effective(s, sched, wrong, 25.0, 2),
                  std::invalid_argument);
}

TEST_CASE("resonant pulsed model validates; a detuned train kills the transfer") {
  auto s = one_c13({1.4, 0, 1.4}, 0.05);
  const auto nf = system::nuclear_frame(s, 0);
  CHECK(nf.omega / nf.a_perp > 100);  // hierarchy for the leading-order model
  const double T = control::resonant_spacing(nf.omega, 1);
  const double tau = T / 2;
  const auto m = effective::effective_pulsed(s, control::make_xy8(4, tau), 1, 0,
                                             control::Parity::cosine);
  // coupling_scale rotates the nuclear Bloch vector at that angular rate,
  // so the conditional flip completes at pi / coupling_scale
  const double t_flip = pi / m.coupling_scale;

  const int nb = (int)std::ceil((t_flip + 2 * T) / (8 * tau));
  const auto seq = control::make_xy8(nb, tau);
  const auto res = dynamics::validate_effective(s, seq, m, t_flip, 5);
  REQUIRE(res.times.size() == 5);
  for (std::size_t k = 0; k < res.times.size(); ++k) {
    CHECK(res.fidelity[k] >= 0.99);
    CHECK(res.leakage[k] < 0.05);
  }

  // transfer figure: iz swing against the model's full swap
  const auto [dn, up] = triad_states(nf);
  Vec nv0(2);
  nv0 << 0, 1;
  const auto st = spincore::StateVector::on(kv(nv0, dn), {2, 2});
  auto transfer = [&](const control::ControlSchedule& sched) {
    const double t_end = std::min(t_flip, sched.duration);
    const auto tr = dynamics::evolve_at(s, sched, st,
                                        system::Frame::nv_rotating, true,
                                        {0.0, t_end});
    return std::abs(tr.series("iz_0").back() - tr.series("iz_0").front());
  };
  CHECK(transfer(seq) > 0.9);  // resonant: full conditional swap of iz

  const double detune = 20 * m.coupling_scale;  // ten linewidths
  const double tau_d = pi / (nf.omega + detune);
  const int nbd = (int)std::ceil((t_flip + 2 * T) / (8 * tau_d));
  CHECK(transfer(control::make_xy8(nbd, tau_d)) < 0.2);
}

TEST_CASE("evolution rejects malformed inputs") {
  auto s = one_c13({0.8, 0.2, 0.7}, 0.2);
  control::ControlSchedule sched;
  sched.duration = 1.0;
  Vec v4(4);
  v4 << 0, 0, 0.6, 0.8;
  const auto st4 = spincore::StateVector::on(v4, {2, 2});
  Vec v2(2);
  v2 << 0, 1;
  const auto st2 = spincore::StateVector::on(v2, {2});

  CHECK_THROWS_WITH_AS(
      (void)dynamics::evolve(s, sched, st2, system::Frame::nv_rotating, true),
      doctest::Contains("dimension"), std::invalid_argument);
  CHECK_THROWS_AS((void)dynamics::evolve_at(s, sched, st4,
                                            system::Frame::nv_rotating, true,
                                            {0.0, 1.5}),
                  std::invalid_argument);
  CHECK_THROWS_AS((void)dynamics::evolve_at(s, sched, st4,
                                            system::Frame::nv_rotating, true,
                                            {0.5, 0.2}),
                  std::invalid_argument);
  CHECK_THROWS_AS(
      (void)dynamics::evolve(s, sched, st4, system::Frame::nv_rotating, true,
                             {}, 1),
      std::invalid_argument);
  dynamics::StepControl bad;
  bad.tol = 0;
  CHECK_THROWS_AS((void)dynamics::evolve(s, sched, st4,
                                         system::Frame::nv_rotating, true, bad),
                  std::invalid_argument);

  // noise channels only exist for two-level frames
  noise::NoiseModel nm;
  nm.sigma = 0.5;
  dynamics::NoiseSet ns;
  ns.delta = noise::Realization(nm, 0, 1.0);
  Vec v6(6);
  v6.setZero();
  v6(4) = 1;
  const auto st6 = spincore::StateVector::on(v6, {3, 2});
  CHECK_THROWS_WITH_AS(
      (void)dynamics::evolve(s, sched, st6, system::Frame::lab, false, {}, 11,
                             &ns),
      doctest::Contains("two-level"), std::invalid_argument);

  // the toggled frame owns its pulse train: no drives, no nuclear pulses
  auto seq = control::make_xy8(1, 0.4);
  seq.continuous.push_back(control::DriveSegment{});
  seq.continuous.back().t_end = 0.1;
  CHECK_THROWS_WITH_AS(
      (void)dynamics::evolve(s, seq, st4, system::Frame::toggled_interaction,
                             true),
      doctest::Contains("continuous"), std::invalid_argument);
  auto seqn = control::make_xy8(1, 0.4);
  control::PulseEvent rf;
  rf.t_center = 0.2;
  rf.angle = pi;
  rf.target = 0;
  seqn.events.insert(seqn.events.begin(), rf);
  std::sort(seqn.events.begin(), seqn.events.end(),
            [](const auto& a, const auto& b) { return a.t_center < b.t_center; });
  CHECK_THROWS_WITH_AS(
      (void)dynamics::evolve(s, seqn, st4, system::Frame::toggled_interaction,
                             true),
      doctest::Contains("nuclear"), std::invalid_argument);

  const auto tr =
      dynamics::evolve(s, sched, st4, system::Frame::nv_rotating, true, {}, 3);
  CHECK_THROWS_AS((void)tr.series("sigma_q"), std::out_of_range);
  CHECK(tr.has_series("sigma_x"));
  CHECK_FALSE(tr.has_series("p_plus1"));

  // a nuclear pi pulse in a pulse-capable frame flips the target spin
  const auto nf = system::nuclear_frame(s, 0);
  const auto [dn, up] = triad_states(nf);
  control::ControlSchedule rfs;
  rfs.duration = 0.2;
  control::PulseEvent rf2;
  rf2.t_center = 0.1;
  rf2.angle = pi;
  rf2.target = 0;
  rfs.events.push_back(rf2);
  Vec nv0(2);
  nv0 << 0, 1;
  const auto st_up = spincore::StateVector::on(kv(nv0, up), {2, 2});
  const auto trn = dynamics::evolve_at(
      s, rfs, st_up, system::Frame::nv_nuclear_rotating, true, {0.0, 0.2});
  CHECK(trn.series("iz_0").front() == doctest::Approx(0.5));
  CHECK(trn.series("iz_0").back() == doctest::Approx(-0.5).epsilon(1e-10));
}
