#include "nvdd/system.hpp"

#include <cmath>
#include <stdexcept>

#include "nvdd/constants.hpp"

namespace nvdd::system {

namespace {

constexpr double kMinDistanceNm = 0.1;

Mat spin_half_along(const Vector3& axis) {
  auto ops = spincore::spin_operators(0.5);
  return axis.x() * ops.sx + axis.y() * ops.sy + axis.z() * ops.sz;
}

// I . axis for nucleus j embedded in [head_dim, 2, 2, ...].
Mat embed_nuclear(const Vector3& axis, int j, const std::vector<int>& dims) {
  return spincore::embed(spin_half_along(axis), j + 1, dims);
}

double dipolar_k(const Vector3& r, double gamma_1, double gamma_2) {
  const double d = r.norm();
  return constants::dipolar_constant * gamma_1 * gamma_2 / (d * d * d);
}

}  // namespace

double NVCenter::level_energy(int ms) const {
  return zero_field_splitting * ms * ms - gamma_e * bz * ms;
}

double NVCenter::transition_frequency() const {
  return level_energy(transition == Transition::zero_to_plus ? 1 : -1);
}

std::vector<int> SpinSystem::dims(int nv_dim) const {
  std::vector<int> d(nuclei.size() + 1, 2);
  d[0] = nv_dim;
  return d;
}

void SpinSystem::validate() const {
  if (!std::isfinite(nv.zero_field_splitting) || !std::isfinite(nv.gamma_e) ||
      !std::isfinite(nv.bz))
    throw std::invalid_argument("nv parameters must be finite");
  if (nuclei.size() > 16)
    throw std::invalid_argument("too many nuclei for dense simulation");
  for (size_t j = 0; j < nuclei.size(); ++j) {
    const auto& n = nuclei[j];
    if (!n.position_nm.allFinite() || !std::isfinite(n.gamma_n))
      throw std::invalid_argument("nucleus parameters must be finite");
    if (n.position_nm.norm() < kMinDistanceNm)
      throw std::invalid_argument("nucleus too close to the NV");
    for (size_t k = 0; k < j; ++k)
      if ((n.position_nm - nuclei[k].position_nm).norm() < kMinDistanceNm)
        throw std::invalid_argument("coincident nuclei");
  }
}

Vector3 hyperfine_vector(const Nucleus& n, const NVCenter& nv) {
  const Vector3 r_hat = n.position_nm.normalized();
  const double k = dipolar_k(n.position_nm, nv.gamma_e, n.gamma_n);
  return k * (Vector3::UnitZ() - 3.0 * r_hat.z() * r_hat);
}

double transition_sign(Transition t) {
  return t == Transition::zero_to_plus ? 1.0 : -1.0;
}

double nuclear_dipolar_coefficient(const Vector3& r_jk, double gamma_j,
                                   double gamma_k) {
  const double nz = r_jk.normalized().z();
  return dipolar_k(r_jk, gamma_j, gamma_k) * (1.0 - 3.0 * nz * nz);
}

std::pair<double, Vector3> nuclear_resonance(const Nucleus& n,
                                             const NVCenter& nv) {
  const Vector3 a_eff = transition_sign(nv.transition) * hyperfine_vector(n, nv);
  const Vector3 w = n.gamma_n * nv.bz * Vector3::UnitZ() - 0.5 * a_eff;
  const double omega = w.norm();
  return {omega, omega > 1e-300 ? Vector3(w / omega) : Vector3::UnitZ()};
}

NuclearFrame nuclear_frame(const SpinSystem& s, int j) {
  const auto& n = s.nuclei.at(j);
  NuclearFrame f;
  f.a_eff = transition_sign(s.nv.transition) * hyperfine_vector(n, s.nv);
  std::tie(f.omega, f.omega_hat) = nuclear_resonance(n, s.nv);

  const double a_along = f.a_eff.dot(f.omega_hat);
  const Vector3 a_perp_vec = f.a_eff - a_along * f.omega_hat;
  f.a_par = std::abs(a_along);
  f.a_perp = a_perp_vec.norm();

  const double scale = std::max(f.a_eff.norm(), 1.0);
  if (f.a_perp > 1e-12 * scale) {
    f.x_axis = a_perp_vec / f.a_perp;
  } else {
    // Degenerate on-axis case: any unit vector orthogonal to omega_hat.
    const Vector3 seed = std::abs(f.omega_hat.x()) < 0.9 ? Vector3::UnitX()
                                                         : Vector3::UnitY();
    f.x_axis = (seed - seed.dot(f.omega_hat) * f.omega_hat).normalized();
  }
  f.y_axis = -f.omega_hat.cross(f.x_axis);
  f.z_axis = (a_along < 0 ? -1.0 : 1.0) * f.omega_hat;
  return f;
}

spincore::Operator lab_hamiltonian(const SpinSystem& s) {
  s.validate();
  const auto dims = s.dims(3);
  const auto nv_ops = spincore::spin_operators(1.0);

  Mat nv_diag = Mat::Zero(3, 3);
  nv_diag(0, 0) = s.nv.level_energy(1);
  nv_diag(1, 1) = s.nv.level_energy(-1);
  Mat h = spincore::embed(nv_diag, 0, dims);
  const Mat sx = spincore::embed(nv_ops.sx, 0, dims);
  const Mat sy = spincore::embed(nv_ops.sy, 0, dims);
  const Mat sz = spincore::embed(nv_ops.sz, 0, dims);
  auto nv_dot = [&](const Vector3& v) -> Mat {
    return v.x() * sx + v.y() * sy + v.z() * sz;
  };

  for (int j = 0; j < s.n_nuclei(); ++j) {
    const auto& n = s.nuclei[j];
    h -= n.gamma_n * s.nv.bz * embed_nuclear(Vector3::UnitZ(), j, dims);
    // full point-dipole tensor k [S.I - 3 (S.r_hat)(I.r_hat)]
    const double k = dipolar_k(n.position_nm, s.nv.gamma_e, n.gamma_n);
    const Vector3 rh = n.position_nm.normalized();
    Mat si = sx * embed_nuclear(Vector3::UnitX(), j, dims) +
             sy * embed_nuclear(Vector3::UnitY(), j, dims) +
             sz * embed_nuclear(Vector3::UnitZ(), j, dims);
    h += k * (si - 3.0 * nv_dot(rh) * embed_nuclear(rh, j, dims));
  }

  if (s.include_nn) {
    for (int j = 0; j < s.n_nuclei(); ++j)
      for (int k = j + 1; k < s.n_nuclei(); ++k) {
        const Vector3 r = s.nuclei[k].position_nm - s.nuclei[j].position_nm;
        const double b0 = dipolar_k(r, s.nuclei[j].gamma_n, s.nuclei[k].gamma_n);
        const Vector3 n_hat = r.normalized();
        Mat dd = Mat::Zero(h.rows(), h.cols());
        const Vector3 ex = Vector3::UnitX(), ey = Vector3::UnitY(),
                      ez = Vector3::UnitZ();
        for (const auto& e : {ex, ey, ez})
          dd += embed_nuclear(e, j, dims) * embed_nuclear(e, k, dims);
        dd -= 3.0 * embed_nuclear(n_hat, j, dims) * embed_nuclear(n_hat, k, dims);
        h += b0 * dd;
      }
  }
  return spincore::Operator::on(h, dims);
}

Mat secular_nn_hamiltonian(const SpinSystem& s) {
  const auto dims = s.dims(2);
  const int dim = 2 * (1 << s.n_nuclei());
  Mat h = Mat::Zero(dim, dim);
  if (!s.include_nn) return h;
  for (int j = 0; j < s.n_nuclei(); ++j)
    for (int k = j + 1; k < s.n_nuclei(); ++k) {
      const Vector3 r = s.nuclei[k].position_nm - s.nuclei[j].position_nm;
      const double b =
          nuclear_dipolar_coefficient(r, s.nuclei[j].gamma_n, s.nuclei[k].gamma_n);
      Mat zz = embed_nuclear(Vector3::UnitZ(), j, dims) *
               embed_nuclear(Vector3::UnitZ(), k, dims);
      h += b * zz;
      if (s.nuclei[j].gamma_n == s.nuclei[k].gamma_n) {
        Mat ff = embed_nuclear(Vector3::UnitX(), j, dims) *
                     embed_nuclear(Vector3::UnitX(), k, dims) +
                 embed_nuclear(Vector3::UnitY(), j, dims) *
                     embed_nuclear(Vector3::UnitY(), k, dims);
        h -= b * 0.5 * ff;
      }
    }
  return h;
}

namespace {

// Qubit-frame static Hamiltonian (NV level energies rotated away, RWA):
// -sum_j omega_j (omega_hat_j . I_j) + (sigma_z/2) sum_j (a_eff_j . I_j) + nn.
Mat qubit_frame_static(const SpinSystem& s) {
  const auto dims = s.dims(2);
  const Mat sz_half = 0.5 * spincore::embed(spincore::pauli_z(), 0, dims);
  Mat h = secular_nn_hamiltonian(s);
  for (int j = 0; j < s.n_nuclei(); ++j) {
    const auto f = nuclear_frame(s, j);
    h -= f.omega * embed_nuclear(f.omega_hat, j, dims);
    h += sz_half * embed_nuclear(f.a_eff, j, dims);
  }
  return h;
}

// Exact interaction picture of `base` w.r.t. a diagonal h0 with basis-state
// energies `phases`: H(t)_ab = base_ab * exp(i (phases_a - phases_b) t).
FrameHamiltonian interaction_picture(Frame frame, bool rwa,
                                     std::vector<int> dims, Mat base,
                                     Eigen::VectorXd phases) {
  FrameHamiltonian fh;
  fh.frame = frame;
  fh.rwa = rwa;
  fh.dims = std::move(dims);
  fh.time_dependent = true;
  fh.h_of_t = [base = std::move(base), phases = std::move(phases)](double t) {
    Mat h = base;
    const int d = static_cast<int>(h.rows());
    Eigen::VectorXcd ph(d);
    for (int i = 0; i < d; ++i)
      ph(i) = std::exp(spincore::cx(0.0, phases(i) * t));
    for (int a = 0; a < d; ++a)
      for (int b = 0; b < d; ++b) h(a, b) *= ph(a) * std::conj(ph(b));
    return h;
  };
  return fh;
}

Eigen::VectorXd diagonal_energies(const Mat& h0) {
  Eigen::VectorXd e(h0.rows());
  for (int i = 0; i < h0.rows(); ++i) e(i) = h0(i, i).real();
  return e;
}

}  // namespace

std::vector<ResonanceRow> resonance_table(const SpinSystem& s) {
  std::vector<ResonanceRow> rows;
  for (int j = 0; j < s.n_nuclei(); ++j) {
    const auto f = nuclear_frame(s, j);
    rows.push_back({j, s.nuclei[j].label, f.omega, f.a_perp, f.a_par});
  }
  return rows;
}

FrameHamiltonian rotating_frame_hamiltonian(
    const SpinSystem& s, Frame frame, bool rwa,
    std::function<double(double)> modulation) {
  s.validate();

  if (frame == Frame::lab) {
    FrameHamiltonian fh;
    fh.frame = frame;
    fh.rwa = false;
    fh.dims = s.dims(3);
    fh.time_dependent = false;
    fh.h_static = lab_hamiltonian(s).mat;
    fh.h_of_t = [h = fh.h_static](double) { return h; };
    return fh;
  }

  if (frame == Frame::nv_rotating) {
    if (rwa) {
      FrameHamiltonian fh;
      fh.frame = frame;
      fh.rwa = true;
      fh.dims = s.dims(2);
      fh.time_dependent = false;
      fh.h_static = qubit_frame_static(s);
      fh.h_of_t = [h = fh.h_static](double) { return h; };
      return fh;
    }
    // Exact three-level interaction picture of the NV level energies.
    const auto dims = s.dims(3);
    Mat nv_diag = Mat::Zero(3, 3);
    nv_diag(0, 0) = s.nv.level_energy(1);
    nv_diag(1, 1) = s.nv.level_energy(-1);
    const Mat h0 = spincore::embed(nv_diag, 0, dims);
    const Mat base = lab_hamiltonian(s).mat - h0;
    return interaction_picture(frame, false, dims, base, diagonal_energies(h0));
  }

  if (frame == Frame::nv_nuclear_rotating) {
    const auto dims = s.dims(2);
    Mat h0 = Mat::Zero(2 << s.n_nuclei(), 2 << s.n_nuclei());
    for (int j = 0; j < s.n_nuclei(); ++j)
      h0 -= s.nuclei[j].gamma_n * s.nv.bz * embed_nuclear(Vector3::UnitZ(), j, dims);
    if (rwa) {
      // Bare nuclear Zeeman rotated away; transverse hyperfine averages out,
      // leaving the pure-dephasing coupling to the z hyperfine components.
      FrameHamiltonian fh;
      fh.frame = frame;
      fh.rwa = true;
      fh.dims = dims;
      fh.time_dependent = false;
      const Mat sz = spincore::embed(spincore::pauli_z(), 0, dims);
      const Mat id = spincore::identity(sz.rows());
      Mat h = secular_nn_hamiltonian(s);
      for (int j = 0; j < s.n_nuclei(); ++j) {
        const auto f = nuclear_frame(s, j);
        h += 0.5 * (sz + id) * f.a_eff.z() * embed_nuclear(Vector3::UnitZ(), j, dims);
      }
      fh.h_static = h;
      fh.h_of_t = [hm = fh.h_static](double) { return hm; };
      return fh;
    }
    const Mat base = qubit_frame_static(s) - h0;
    return interaction_picture(frame, false, dims, base, diagonal_energies(h0));
  }

  // toggled_interaction: nuclear interaction picture with the instantaneous
  // pi-pulse toggling absorbed into the modulation sign F(t).
  if (!modulation)
    throw std::invalid_argument("toggled_interaction frame needs a modulation function");
  if (s.include_nn)
    throw std::invalid_argument("nuclear-nuclear coupling is not supported in the toggled frame");

  const auto dims = s.dims(2);
  const Mat sz_half = 0.5 * spincore::embed(spincore::pauli_z(), 0, dims);
  struct Term {
    double omega, a_perp, a_par;
    Mat ix, iy, iz;  // sigma_z/2 (x) I.axis, premultiplied
  };
  std::vector<Term> terms;
  for (int j = 0; j < s.n_nuclei(); ++j) {
    const auto f = nuclear_frame(s, j);
    terms.push_back({f.omega, f.a_perp, f.a_par,
                     Mat(sz_half * embed_nuclear(f.x_axis, j, dims)),
                     Mat(sz_half * embed_nuclear(f.y_axis, j, dims)),
                     Mat(sz_half * embed_nuclear(f.z_axis, j, dims))});
  }
  FrameHamiltonian fh;
  fh.frame = frame;
  fh.rwa = rwa;
  fh.dims = dims;
  fh.time_dependent = true;
  const int dim = 2 << s.n_nuclei();
  fh.h_of_t = [terms = std::move(terms), modulation = std::move(modulation),
               dim](double t) {
    Mat h = Mat::Zero(dim, dim);
    const double f = modulation(t);
    for (const auto& term : terms) {
      h += f * term.a_perp * std::cos(term.omega * t) * term.ix;
      h -= f * term.a_perp * std::sin(term.omega * t) * term.iy;
      h += f * term.a_par * term.iz;
    }
    return h;
  };
  return fh;
}

}  // namespace nvdd::system
