#include "nvdd/effective.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "nvdd/io.hpp"

namespace nvdd::effective {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;
constexpr double kInf = std::numeric_limits<double>::infinity();

using spincore::cx;
using system::Vector3;

Mat spin_axis(const Vector3& a) {
  const auto ops = spincore::spin_operators(0.5);
  return a.x() * ops.sx + a.y() * ops.sy + a.z() * ops.sz;
}

// -sum_j omega_j (omega_hat_j . I_j) on the qubit-frame product space.
Mat nuclear_derotation(const system::SpinSystem& s) {
  const auto dims = s.dims(2);
  int dim = 2;
  for (int j = 0; j < s.n_nuclei(); ++j) dim *= 2;
  Mat h = Mat::Zero(dim, dim);
  for (int j = 0; j < s.n_nuclei(); ++j) {
    const auto nf = system::nuclear_frame(s, j);
    h -= nf.omega * spincore::embed(spin_axis(nf.omega_hat), j + 1, dims);
  }
  return h;
}

double operator_norm(const Mat& h) {
  if (h.rows() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Mat> es(h, Eigen::EigenvaluesOnly);
  return std::max(std::abs(es.eigenvalues().minCoeff()),
                  std::abs(es.eigenvalues().maxCoeff()));
}

double ratio_margin(double numer, double denom) {
  if (denom == 0.0) return kInf;
  return std::abs(numer) / std::abs(denom);
}

void check_nucleus_index(const system::SpinSystem& s, int j, const char* what) {
  if (j < 0 || j >= s.n_nuclei()) {
    std::ostringstream os;
    os << what << " index " << j << " out of range (system has "
       << s.n_nuclei() << " nuclei)";
    throw std::invalid_argument(os.str());
  }
}

void append_nn_margin(const system::SpinSystem& s, double coupling,
                      std::vector<ValidityMargin>& margins) {
  if (!s.include_nn || s.n_nuclei() < 2) return;
  const double nn = operator_norm(system::secular_nn_hamiltonian(s));
  margins.push_back({"nn_norm", ratio_margin(coupling, nn)});
}

std::string fmt(double v) { return io::format_double(v); }

}  // namespace

double EffectiveModel::margin(const std::string& name) const {
  for (const auto& m : validity)
    if (m.name == name) return m.margin;
  throw std::out_of_range("no validity margin named " + name);
}

double EffectiveModel::min_margin() const {
  double lo = kInf;
  for (const auto& m : validity) lo = std::min(lo, m.margin);
  return lo;
}

EffectiveModel effective_pulsed(const system::SpinSystem& s,
                                const control::ControlSchedule& sequence,
                                int q, int u, control::Parity parity,
                                double tolerance_factor) {
  s.validate();
  check_nucleus_index(s, u, "nucleus");
  if (q < 1) throw std::invalid_argument("harmonic index q must be >= 1");
  if (tolerance_factor <= 0)
    throw std::invalid_argument("tolerance_factor must be positive");

  const auto f = control::modulation_function(sequence);
  const double T = f.period;
  const auto nf = system::nuclear_frame(s, u);

  const double omega_q = q * kTwoPi / T;
  const double detuning = omega_q - nf.omega;
  const double f_cos = control::fourier_coefficient(f, q, control::Parity::cosine);
  const double f_sin = control::fourier_coefficient(f, q, control::Parity::sine);
  const double selected =
      parity == control::Parity::cosine ? f_cos : f_sin;
  const double coupling = std::abs(selected) * nf.a_perp / 4.0;

  if (coupling > 0 && std::abs(detuning) > coupling * tolerance_factor) {
    const int nearest = std::max(1, (int)std::lround(nf.omega * T / kTwoPi));
    const double nearest_det = nearest * kTwoPi / T - nf.omega;
    std::ostringstream os;
    os << "harmonic q=" << q << " detuned from nucleus " << u << " by "
       << fmt(detuning) << " rad/us (tolerance "
       << fmt(coupling * tolerance_factor) << "); nearest harmonic q="
       << nearest << " with detuning " << fmt(nearest_det);
    throw std::invalid_argument(os.str());
  }

  EffectiveModel m;
  m.dims = {2, 2};
  m.keep = {0, u + 1};
  const Mat sz = spincore::pauli_z();
  const Mat nuc = (nf.a_perp / 4.0) *
                      (f_cos * spin_axis(nf.x_axis) - f_sin * spin_axis(nf.y_axis)) +
                  f.mean() * (nf.a_par / 2.0) * spin_axis(nf.z_axis);
  m.hamiltonian = spincore::kron(sz, nuc);
  m.coupling_scale = coupling;
  m.subspace = "NV qubit x nucleus " + std::to_string(u);
  m.frame = "toggled nuclear interaction picture";
  m.h0 = nuclear_derotation(s);
  m.w0 = spincore::identity((int)m.h0.rows());
  m.checkpoint_period = T;

  m.validity.push_back({"resonance", coupling > 0 ? ratio_margin(coupling, detuning) : kInf});
  m.validity.push_back({"larmor_ratio", ratio_margin(nf.omega, nf.a_perp)});
  for (int j = 0; j < s.n_nuclei(); ++j) {
    if (j == u) continue;
    const auto oj = system::nuclear_frame(s, j);
    const int kj = std::max(1, (int)std::lround(oj.omega * T / kTwoPi));
    const double det_j = oj.omega - kj * kTwoPi / T;
    const double coup_j = control::harmonic_weight(f, kj) * oj.a_perp / 4.0;
    m.validity.push_back(
        {"offres_nucleus_" + std::to_string(j), ratio_margin(det_j, coup_j)});
  }
  append_nn_margin(s, coupling, m.validity);
  return m;
}

EffectiveModel effective_hh(const system::SpinSystem& s, double omega, int l,
                            double phi, double tolerance_factor) {
  s.validate();
  check_nucleus_index(s, l, "nucleus");
  if (tolerance_factor <= 0)
    throw std::invalid_argument("tolerance_factor must be positive");

  const auto nf = system::nuclear_frame(s, l);
  const double coupling = nf.a_perp / 2.0;
  const double detuning = omega - nf.omega;

  if (coupling > 0 && std::abs(detuning) > coupling * tolerance_factor) {
    int best = l;
    double best_det = std::abs(detuning);
    double best_omega = nf.omega;
    for (int j = 0; j < s.n_nuclei(); ++j) {
      const double oj = system::nuclear_frame(s, j).omega;
      if (std::abs(omega - oj) < best_det) {
        best = j;
        best_det = std::abs(omega - oj);
        best_omega = oj;
      }
    }
    std::ostringstream os;
    os << "drive Rabi rate " << fmt(omega) << " rad/us not resonant with nucleus "
       << l << " (omega_l=" << fmt(nf.omega) << ", detuning " << fmt(detuning)
       << " exceeds tolerance " << fmt(coupling * tolerance_factor) << ")";
    if (best != l)
      os << "; nearest nucleus " << best << " at omega=" << fmt(best_omega);
    throw std::invalid_argument(os.str());
  }

  EffectiveModel m;
  m.dims = {2, 2};
  m.keep = {0, l + 1};
  const spincore::Vec plus = spincore::dressed_plus(phi);
  const spincore::Vec minus = spincore::dressed_minus(phi);
  const Mat sp = plus * minus.adjoint();
  const Mat ip = 0.5 * (spin_axis(nf.x_axis) + cx(0, 1) * spin_axis(nf.y_axis));
  m.hamiltonian = coupling * (spincore::kron(sp, ip.adjoint()) +
                              spincore::kron(sp.adjoint(), ip));
  m.coupling_scale = coupling;
  m.subspace = "NV dressed qubit x nucleus " + std::to_string(l);
  m.frame = "dressed rotating frame, drive phase " + fmt(phi);
  const auto dims = s.dims(2);
  m.h0 = nuclear_derotation(s) +
         spincore::embed((omega / 2.0) * spincore::sigma_phi(phi), 0, dims);
  m.w0 = spincore::identity((int)m.h0.rows());
  m.checkpoint_period = 0;

  m.validity.push_back({"resonance", coupling > 0 ? ratio_margin(coupling, detuning) : kInf});
  m.validity.push_back({"larmor_ratio", ratio_margin(nf.omega, nf.a_perp)});
  m.validity.push_back({"parallel_residual", ratio_margin(omega, nf.a_par / 2.0)});
  for (int j = 0; j < s.n_nuclei(); ++j) {
    if (j == l) continue;
    const auto oj = system::nuclear_frame(s, j);
    m.validity.push_back({"offres_nucleus_" + std::to_string(j),
                          ratio_margin(omega - oj.omega, oj.a_perp / 2.0)});
  }
  append_nn_margin(s, coupling, m.validity);
  return m;
}

EffectiveModel effective_ccd(double omega1, double omega2, double phi,
                             double xi2, double delta, double xi1) {
  EffectiveModel m;
  m.dims = {2};
  m.keep = {0};
  m.hamiltonian = (omega1 * xi1 / 2.0) * spincore::pauli_x() -
                  std::sin(phi) * (omega2 * (1.0 + xi2) / 4.0) * spincore::pauli_y();
  m.coupling_scale = std::abs(std::sin(phi) * omega2 * (1.0 + xi2) / 4.0);
  m.subspace = "NV qubit";
  m.frame = "double-dressed frame";
  m.h0 = (omega1 / 2.0) * spincore::pauli_x();
  m.w0 = spincore::identity(2);
  m.checkpoint_period = omega1 != 0 ? kTwoPi / std::abs(omega1) : 0;

  m.validity.push_back({"omega1_vs_delta", ratio_margin(omega1, delta)});
  m.validity.push_back({"omega2_vs_omega1_xi1", ratio_margin(omega2, omega1 * xi1)});
  m.validity.push_back({"omega1_vs_omega2", ratio_margin(omega1, omega2)});
  return m;
}

EffectiveModel effective_jacobi_anger(const system::SpinSystem& s,
                                      double omega0, double omega1, double nu,
                                      int j, double tolerance_factor) {
  s.validate();
  check_nucleus_index(s, j, "nucleus");
  if (nu == 0)
    throw std::invalid_argument("modulation frequency nu must be nonzero");
  if (tolerance_factor <= 0)
    throw std::invalid_argument("tolerance_factor must be positive");

  const double z = omega1 / nu;
  const double j1 = bessel_j(1, z);
  const auto nf = system::nuclear_frame(s, j);
  const double coupling = std::abs(j1) * nf.a_perp / 2.0;
  const double detuning = omega0 + nu - nf.omega;

  if (coupling > 0 && std::abs(detuning) > coupling * tolerance_factor) {
    int best_n = 1;
    double best = std::abs(detuning);
    for (int n = -8; n <= 8; ++n) {
      const double d = std::abs(omega0 + n * nu - nf.omega);
      if (d < best) { best = d; best_n = n; }
    }
    std::ostringstream os;
    os << "sideband Omega0+nu detuned from nucleus " << j << " by "
       << fmt(detuning) << " rad/us (tolerance "
       << fmt(coupling * tolerance_factor) << "); nearest sideband Omega0+"
       << best_n << "*nu with detuning " << fmt(best);
    throw std::invalid_argument(os.str());
  }

  EffectiveModel m;
  m.dims = {2, 2};
  m.keep = {0, j + 1};
  const spincore::Vec plus = spincore::dressed_plus(0);
  const spincore::Vec minus = spincore::dressed_minus(0);
  const Mat sp = plus * minus.adjoint();
  const Mat ip = 0.5 * (spin_axis(nf.x_axis) + cx(0, 1) * spin_axis(nf.y_axis));
  m.hamiltonian = (nf.a_perp / 2.0) * j1 *
                  (cx(0, 1) * spincore::kron(sp, ip.adjoint()) -
                   cx(0, 1) * spincore::kron(sp.adjoint(), ip));
  m.coupling_scale = coupling;
  m.subspace = "NV dressed qubit x nucleus " + std::to_string(j);
  m.frame = "amplitude-modulated dressed frame";
  const auto dims = s.dims(2);
  m.h0 = nuclear_derotation(s) +
         spincore::embed((omega0 / 2.0) * spincore::pauli_x(), 0, dims);
  m.w0 = spincore::embed(spincore::propagator(0.5 * spincore::pauli_x(), z), 0, dims);
  m.checkpoint_period = kTwoPi / std::abs(nu);

  m.validity.push_back({"resonance", coupling > 0 ? ratio_margin(coupling, detuning) : kInf});
  m.validity.push_back({"larmor_ratio", ratio_margin(nf.omega, nf.a_perp)});
  m.validity.push_back(
      {"j0_sideband", ratio_margin(nu, bessel_j(0, z) * nf.a_perp / 2.0)});
  m.validity.push_back(
      {"j2_sideband", ratio_margin(nu, bessel_j(2, z) * nf.a_perp / 2.0)});
  for (int k = 0; k < s.n_nuclei(); ++k) {
    if (k == j) continue;
    const auto ok = system::nuclear_frame(s, k);
    m.validity.push_back({"offres_nucleus_" + std::to_string(k),
                          ratio_margin(omega0 + nu - ok.omega,
                                       std::abs(j1) * ok.a_perp / 2.0)});
  }
  append_nn_margin(s, coupling, m.validity);
  return m;
}

EffectiveModel effective_parallel(const system::SpinSystem& s, int u,
                                  const control::ControlSchedule& schedule) {
  s.validate();
  check_nucleus_index(s, u, "nucleus");

  const char* bad = "schedule is not a synchronized MW+rf pi pairing for nucleus ";
  std::vector<double> mw_centers, rf_centers;
  for (const auto& e : schedule.events) {
    if (e.width != 0 || std::abs(e.angle - M_PI) > 1e-9)
      throw std::invalid_argument(bad + std::to_string(u));
    if (e.target == control::PulseEvent::nv_target)
      mw_centers.push_back(e.t_center);
    else if (e.target == u)
      rf_centers.push_back(e.t_center);
    else
      throw std::invalid_argument(bad + std::to_string(u));
  }
  if (mw_centers.empty() || mw_centers.size() != rf_centers.size())
    throw std::invalid_argument(bad + std::to_string(u));
  const double slack = 1e-9 * std::max(1.0, schedule.duration);
  const double T = 2.0 * mw_centers.front();
  for (std::size_t b = 0; b < mw_centers.size(); ++b) {
    if (std::abs(mw_centers[b] - rf_centers[b]) > slack ||
        std::abs(mw_centers[b] - (b + 0.5) * T) > slack)
      throw std::invalid_argument(bad + std::to_string(u));
  }
  if (std::abs(schedule.duration - mw_centers.size() * T) > slack)
    throw std::invalid_argument(bad + std::to_string(u));

  const auto nf = system::nuclear_frame(s, u);
  EffectiveModel m;
  m.dims = {2, 2};
  m.keep = {0, u + 1};
  m.hamiltonian = (nf.a_par / 2.0) *
                  spincore::kron(spincore::pauli_z(), spin_axis(nf.z_axis));
  m.coupling_scale = nf.a_par / 2.0;
  m.subspace = "NV qubit x nucleus " + std::to_string(u);
  m.frame = "nuclear interaction picture with synchronized sign flips";
  m.h0 = nuclear_derotation(s);
  m.w0 = spincore::identity((int)m.h0.rows());
  m.checkpoint_period = T;

  for (int k = 0; k < s.n_nuclei(); ++k) {
    const auto ok = system::nuclear_frame(s, k);
    m.validity.push_back({"perp_suppression_" + std::to_string(k),
                          ratio_margin(ok.omega * T, kTwoPi)});
    if (k == u) continue;
    m.validity.push_back({"nontarget_phase_" + std::to_string(k),
                          ratio_margin(kTwoPi, ok.a_par * T)});
    m.validity.push_back({"rf_selectivity_" + std::to_string(k),
                          ratio_margin((ok.omega - nf.omega) * T, kTwoPi)});
  }
  return m;
}

double bessel_j(int n, double z) {
  if (n < 0) throw std::invalid_argument("Bessel order must be >= 0");
  if (!(std::abs(z) < 50.0))
    throw std::invalid_argument("Bessel argument out of range: require |z| < 50");
  double v = std::cyl_bessel_j(static_cast<double>(n), std::abs(z));
  if (z < 0 && n % 2 == 1) v = -v;
  return v;
}

}  // namespace nvdd::effective
