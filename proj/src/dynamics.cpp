#include "nvdd/dynamics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "nvdd/io.hpp"

namespace nvdd::dynamics {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;
constexpr double kRoot2 = 1.4142135623730950488;

using control::ControlSchedule;
using control::DriveSegment;
using control::PulseEvent;
using spincore::cx;
using system::Frame;
using system::Vector3;

Mat spin_axis_half(const Vector3& a) {
  const auto ops = spincore::spin_operators(0.5);
  return a.x() * ops.sx + a.y() * ops.sy + a.z() * ops.sz;
}

// Closed-form exp(-i h t) for a 2x2 Hermitian h; general case by
// eigendecomposition.
Mat expmi(const Mat& h, double t) {
  if (h.rows() != 2) return spincore::propagator(h, t);
  const double c = 0.5 * (h(0, 0).real() + h(1, 1).real());
  const double vz = 0.5 * (h(0, 0).real() - h(1, 1).real());
  const double vx = h(0, 1).real();
  const double vy = -h(0, 1).imag();
  const double r = std::sqrt(vx * vx + vy * vy + vz * vz);
  Mat u(2, 2);
  const cx g = std::exp(cx(0, -c * t));
  if (r * std::abs(t) < 1e-300) {
    u << g, 0, 0, g;
    return u;
  }
  const double co = std::cos(r * t);
  const cx si = cx(0, -std::sin(r * t) / r);
  u(0, 0) = g * (co + si * vz);
  u(0, 1) = g * si * cx(vx, -vy);
  u(1, 0) = g * si * cx(vx, vy);
  u(1, 1) = g * (co - si * vz);
  return u;
}

bool realization_active(const noise::Realization& r) {
  return !(r.is_static() && r.value() == 0);
}

// Continuous drive source: a schedule segment or a finite-width pulse.
struct DrivePiece {
  double t0 = 0, t1 = 0;
  const DriveSegment* seg = nullptr;
  const PulseEvent* pulse = nullptr;
  int xi_channel = 0;  // 0 none, 1 xi1, 2 xi2

  double phase() const { return seg ? seg->phase : pulse->phase; }
  double carrier(double fallback) const {
    return seg ? seg->carrier : fallback;
  }
  bool modulated() const {
    return seg && (seg->amp_mod_freq != 0 || seg->envelope_freq != 0);
  }
  double amp_at(double t, const NoiseSet* noise) const {
    double a = seg ? seg->rabi_at(t) * seg->envelope_at(t) : pulse->rabi;
    if (noise && xi_channel == 1) a *= 1.0 + noise->xi1(t);
    if (noise && xi_channel == 2) a *= 1.0 + noise->xi2(t);
    return a;
  }
};

struct Instant {
  double t = 0;
  const PulseEvent* e = nullptr;
};

class Engine {
 public:
  Engine(const system::SpinSystem& s, const ControlSchedule& sched,
         Frame frame, bool rwa, StepControl sc, const NoiseSet* noise)
      : s_(s), frame_(frame), rwa_(rwa), sc_(sc), noise_(noise) {
    sched.validate();
    duration_ = sched.duration;

    if (frame == Frame::toggled_interaction) {
      auto f = control::modulation_function(sched);
      fh_ = system::rotating_frame_hamiltonian(
          s, frame, rwa, [f](double t) { return f(t); });
      if (!sched.continuous.empty())
        throw std::invalid_argument(
            "continuous drive is not supported in the toggled_interaction frame");
    } else {
      fh_ = system::rotating_frame_hamiltonian(s, frame, rwa);
    }
    dims_ = fh_.dims;
    dim_ = 1;
    for (int d : dims_) dim_ *= d;
    qubit_ = dims_[0] == 2;

    if (noise_ && !qubit_ &&
        (realization_active(noise_->delta) || realization_active(noise_->xi1) ||
         realization_active(noise_->xi2)))
      throw std::invalid_argument(
          "noise channels are supported in two-level rotating frames only");

    for (const auto& e : sched.events) {
      if (frame == Frame::toggled_interaction) {
        if (e.target != PulseEvent::nv_target)
          throw std::invalid_argument(
              "nuclear pulses are not supported in the toggled_interaction frame");
        continue;  // the pi train is already folded into the modulation sign
      }
      if (e.width == 0) {
        instants_.push_back({e.t_center, &e});
      } else {
        DrivePiece p;
        p.t0 = e.t_center - 0.5 * e.width;
        p.t1 = e.t_center + 0.5 * e.width;
        p.pulse = &e;
        p.xi_channel = 0;
        pieces_.push_back(p);
      }
    }
    for (const auto& seg : sched.continuous) {
      DrivePiece p;
      p.t0 = seg.t_start;
      p.t1 = seg.t_end;
      p.seg = &seg;
      p.xi_channel = seg.tag == "tone2" ? 2 : (seg.tag == "tone1" || seg.tag.empty() ? 1 : 0);
      pieces_.push_back(p);
    }

    breaks_ = {0.0, duration_};
    for (const auto& p : pieces_) {
      breaks_.push_back(std::clamp(p.t0, 0.0, duration_));
      breaks_.push_back(std::clamp(p.t1, 0.0, duration_));
    }
    std::sort(breaks_.begin(), breaks_.end());
    breaks_.erase(std::unique(breaks_.begin(), breaks_.end()), breaks_.end());

    if (qubit_) {
      sx_ = spincore::embed(spincore::pauli_x(), 0, dims_);
      sy_ = spincore::embed(spincore::pauli_y(), 0, dims_);
      sz_ = spincore::embed(spincore::pauli_z(), 0, dims_);
    } else {
      const auto s1 = spincore::spin_operators(1.0);
      sx3_ = spincore::embed(s1.sx, 0, dims_);
      nv_energies_ = {s_.nv.level_energy(1), s_.nv.level_energy(-1), 0.0};
    }
    for (int j = 0; j < s.n_nuclei(); ++j)
      frames_.push_back(system::nuclear_frame(s, j));

    freq_guess_ = fh_.time_dependent
                      ? fh_.h_of_t(0.0).norm() +
                            fh_.h_of_t(0.37 * duration_ + 1e-6).norm()
                      : fh_.h_static.norm();
    for (const auto& nf : frames_) freq_guess_ += nf.omega;
    if (!qubit_)
      freq_guess_ += std::max(std::abs(nv_energies_[0]), std::abs(nv_energies_[1]));
    for (const auto& p : pieces_) {
      if (p.seg) {
        freq_guess_ += std::abs(p.seg->amp) + std::abs(p.seg->amp_mod_depth) +
                       std::abs(p.seg->amp_mod_freq) + std::abs(p.seg->envelope_freq);
        if (frame_ == Frame::lab) freq_guess_ += std::abs(p.seg->carrier);
      } else {
        freq_guess_ += std::abs(p.pulse->rabi);
        if (frame_ == Frame::lab) freq_guess_ += std::abs(s_.nv.transition_frequency());
      }
    }

    noise_dt_ = 0;
    if (noise_) {
      for (const auto* r : {&noise_->delta, &noise_->xi1, &noise_->xi2})
        if (!r->is_static())
          noise_dt_ = noise_dt_ == 0 ? r->grid_dt()
                                     : std::min(noise_dt_, r->grid_dt());
    }
  }

  int dim() const { return dim_; }
  const std::vector<int>& dims() const { return dims_; }
  bool qubit() const { return qubit_; }
  const std::vector<Instant>& instants() const { return instants_; }

  Mat pulse_unitary(const PulseEvent& e, double t) const {
    const double half = 0.5 * e.angle;
    if (e.target == PulseEvent::nv_target) {
      if (qubit_) {
        Mat u2 = std::cos(half) * spincore::identity(2) -
                 cx(0, 1) * std::sin(half) * spincore::sigma_phi(e.phase);
        return spincore::embed(u2, 0, dims_);
      }
      const int m = s_.nv.transition == spincore::Transition::zero_to_plus ? 0 : 1;
      Mat u3 = spincore::identity(3);
      u3(m, m) = std::cos(half);
      u3(2, 2) = std::cos(half);
      u3(m, 2) = cx(0, -1) * std::exp(cx(0, e.phase)) * std::sin(half);
      u3(2, m) = cx(0, -1) * std::exp(cx(0, -e.phase)) * std::sin(half);
      if (frame_ == Frame::lab) {
        // Pulse phases are referenced to the rotating frame; conjugate with
        // the frame transform at the pulse time.
        Eigen::Vector3cd c;
        for (int i = 0; i < 3; ++i) c(i) = std::exp(cx(0, -nv_energies_[i] * t));
        for (int a = 0; a < 3; ++a)
          for (int b = 0; b < 3; ++b) u3(a, b) *= c(a) * std::conj(c(b));
      }
      return spincore::embed(u3, 0, dims_);
    }
    const auto& nf = frames_.at(e.target);
    const Vector3 axis = std::cos(e.phase) * nf.x_axis + std::sin(e.phase) * nf.y_axis;
    const Mat u2 = std::cos(half) * spincore::identity(2) -
                   cx(0, 2) * std::sin(half) * spin_axis_half(axis);
    return spincore::embed(u2, e.target + 1, dims_);
  }

  // Evolve the column block across [a, b]; no pulses are applied here.
  void advance(Mat& block, double a, double b) {
    if (b <= a) return;
    auto lo = std::upper_bound(breaks_.begin(), breaks_.end(), a);
    double t = a;
    for (; lo != breaks_.end() && *lo < b; ++lo) {
      advance_uniform(block, t, *lo);
      t = *lo;
    }
    advance_uniform(block, t, b);
  }

 private:
  // [a, b] contains no piece boundaries; split further at noise grid lines.
  void advance_uniform(Mat& block, double a, double b) {
    if (b <= a) return;
    if (noise_dt_ > 0) {
      double t = a;
      auto k = static_cast<long long>(std::floor(a / noise_dt_)) + 1;
      for (; k * noise_dt_ < b; ++k) {
        advance_cell(block, t, k * noise_dt_);
        t = k * noise_dt_;
      }
      advance_cell(block, t, b);
    } else {
      advance_cell(block, a, b);
    }
  }

  std::vector<const DrivePiece*> active_pieces(double a, double b) const {
    std::vector<const DrivePiece*> act;
    const double mid = 0.5 * (a + b);
    for (const auto& p : pieces_)
      if (p.t0 <= mid && mid < p.t1) act.push_back(&p);
    return act;
  }

  Mat drive_matrix(const std::vector<const DrivePiece*>& act, double t) const {
    Mat h = Mat::Zero(dim_, dim_);
    for (const auto* p : act) {
      const double amp = p->amp_at(t, noise_);
      if (amp == 0) continue;
      if (qubit_) {
        const double ph = p->phase();
        h += (amp / 2.0) * (std::cos(ph) * sx_ - std::sin(ph) * sy_);
        continue;
      }
      // Three-level drive sqrt(2) amp Sx cos(carrier t - phase); in the NV
      // rotating frame the same term conjugated with the level phases.
      const double carrier = p->carrier(s_.nv.transition_frequency());
      double factor = kRoot2 * amp * std::cos(carrier * t - p->phase());
      if (frame_ == Frame::lab) {
        h += factor * sx3_;
      } else {
        const auto s1 = spincore::spin_operators(1.0);
        Mat m3 = factor * s1.sx;
        for (int aa = 0; aa < 3; ++aa)
          for (int bb = 0; bb < 3; ++bb)
            m3(aa, bb) *= std::exp(cx(0, (nv_energies_[aa] - nv_energies_[bb]) * t));
        h += spincore::embed(m3, 0, dims_);
      }
    }
    return h;
  }

  Mat hamiltonian_at(const std::vector<const DrivePiece*>& act, double t) const {
    Mat h = fh_.time_dependent ? fh_.h_of_t(t) : fh_.h_static;
    if (!act.empty()) h += drive_matrix(act, t);
    if (noise_ && qubit_ && realization_active(noise_->delta))
      h += 0.5 * noise_->delta(t) * sz_;
    return h;
  }

  // [a, b] has constant active pieces and constant noise values.
  void advance_cell(Mat& block, double a, double b) {
    if (b <= a) return;
    const auto act = active_pieces(a, b);

    bool td = fh_.time_dependent;
    for (const auto* p : act)
      if (p->modulated()) td = true;
    if (!qubit_ && !act.empty()) td = true;  // three-level drives carry carriers

    if (!td) {
      std::string key = "s";
      for (const auto* p : act) {
        key += ':';
        key += std::to_string(p - pieces_.data());
      }
      if (noise_dt_ > 0) {
        // OU cells change value every grid step; skip the cache.
        block = expmi(hamiltonian_at(act, 0.5 * (a + b)), b - a) * block;
        return;
      }
      auto it = cache_.find(key);
      if (it == cache_.end())
        it = cache_.emplace(key, spincore::Propagator(hamiltonian_at(act, a)))
                 .first;
      block = it->second.at(b - a) * block;
      return;
    }

    // Midpoint-sampled piecewise-constant exponentials, slice count doubled
    // until the end state moves less than the cell's share of the budget.
    const double span = b - a;
    const double tol =
        duration_ > 0 ? sc_.tol * std::min(1.0, span / duration_) : sc_.tol;
    long long n = std::max(
        1LL, (long long)std::ceil(span * freq_guess_ * (16.0 / kTwoPi)));
    n = std::min(n, 1LL << 21);
    Mat prev = slice_evolve(block, a, b, n);
    double err = std::numeric_limits<double>::infinity();
    for (int r = 0; r < sc_.max_refinements && n < (1LL << 23); ++r) {
      n *= 2;
      Mat fine = slice_evolve(block, a, b, n);
      err = (fine - prev).norm() / std::sqrt((double)block.cols());
      prev = std::move(fine);
      if (err < tol) {
        block = std::move(prev);
        return;
      }
    }
    std::ostringstream os;
    os << "time stepping did not converge on [" << io::format_double(a) << ", "
       << io::format_double(b) << "]: achieved " << io::format_double(err)
       << " with " << n << " slices (tolerance " << io::format_double(tol)
       << ")";
    throw std::runtime_error(os.str());
  }

  Mat slice_evolve(const Mat& block, double a, double b, long long n) const {
    const auto act = active_pieces(a, b);
    const double dt = (b - a) / (double)n;
    Mat out = block;
    for (long long k = 0; k < n; ++k) {
      const double mid = a + (k + 0.5) * dt;
      out = expmi(hamiltonian_at(act, mid), dt) * out;
    }
    return out;
  }

  const system::SpinSystem& s_;
  Frame frame_;
  bool rwa_;
  StepControl sc_;
  const NoiseSet* noise_;
  double duration_ = 0;
  system::FrameHamiltonian fh_;
  std::vector<int> dims_;
  int dim_ = 0;
  bool qubit_ = true;
  std::vector<Instant> instants_;
  std::vector<DrivePiece> pieces_;
  std::vector<double> breaks_;
  std::vector<system::NuclearFrame> frames_;
  Mat sx_, sy_, sz_, sx3_;
  std::array<double, 3> nv_energies_{0, 0, 0};
  double freq_guess_ = 0;
  double noise_dt_ = 0;
  std::map<std::string, spincore::Propagator> cache_;
};

struct ObservableSet {
  std::vector<std::string> names;
  std::vector<Mat> ops;  // empty entries computed from populations

  static ObservableSet make(const Engine& eng, const system::SpinSystem& s) {
    ObservableSet o;
    const auto& dims = eng.dims();
    if (eng.qubit()) {
      o.names = {"sigma_x", "sigma_y", "sigma_z", "p0"};
      o.ops.push_back(spincore::embed(spincore::pauli_x(), 0, dims));
      o.ops.push_back(spincore::embed(spincore::pauli_y(), 0, dims));
      o.ops.push_back(spincore::embed(spincore::pauli_z(), 0, dims));
      Mat p0 = Mat::Zero(2, 2);
      p0(1, 1) = 1;
      o.ops.push_back(spincore::embed(p0, 0, dims));
    } else {
      o.names = {"p_plus1", "p_minus1", "p0"};
      for (int idx : {0, 1, 2}) {
        Mat p = Mat::Zero(3, 3);
        p(idx, idx) = 1;
        o.ops.push_back(spincore::embed(p, 0, dims));
      }
    }
    for (int j = 0; j < s.n_nuclei(); ++j) {
      const auto nf = system::nuclear_frame(s, j);
      o.names.push_back("iz_" + std::to_string(j));
      o.ops.push_back(spincore::embed(spin_axis_half(nf.z_axis), j + 1, dims));
    }
    return o;
  }

  void record(const Vec& psi, std::vector<std::vector<double>>& out) const {
    for (std::size_t i = 0; i < ops.size(); ++i)
      out[i].push_back(std::real(psi.dot(ops[i] * psi)));
  }
};

std::vector<double> uniform_times(double duration, int n_samples) {
  if (n_samples < 2) throw std::invalid_argument("need at least two samples");
  std::vector<double> t(n_samples);
  for (int i = 0; i < n_samples; ++i)
    t[i] = duration * (double)i / (double)(n_samples - 1);
  return t;
}

double median(std::vector<double> v) {
  if (v.empty()) return 0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

const std::vector<double>& Trajectory::series(const std::string& name) const {
  for (const auto& [n, v] : observables)
    if (n == name) return v;
  throw std::out_of_range("no observable series named " + name);
}

bool Trajectory::has_series(const std::string& name) const {
  for (const auto& [n, v] : observables)
    if (n == name) return true;
  return false;
}

Trajectory evolve_at(const system::SpinSystem& s, const ControlSchedule& schedule,
                     const spincore::StateVector& initial, Frame frame, bool rwa,
                     const std::vector<double>& sample_times, StepControl sc,
                     const NoiseSet* noise) {
  if (!(sc.tol > 0)) throw std::invalid_argument("step_control must be positive");
  Engine eng(s, schedule, frame, rwa, sc, noise);
  if (initial.dim() != eng.dim())
    throw std::invalid_argument("initial state dimension does not match frame");
  const double slack = 1e-9 * std::max(1.0, schedule.duration);
  for (std::size_t i = 0; i < sample_times.size(); ++i) {
    if (sample_times[i] < -slack || sample_times[i] > schedule.duration + slack)
      throw std::invalid_argument("sample time outside the schedule window");
    if (i && sample_times[i] < sample_times[i - 1])
      throw std::invalid_argument("sample times must be ascending");
  }

  const auto obs = ObservableSet::make(eng, s);
  std::vector<std::vector<double>> series(obs.ops.size());

  Mat psi = initial.amps;
  double t = 0;
  std::size_t ip = 0;  // next instantaneous pulse
  const auto& pulses = eng.instants();
  for (double ts : sample_times) {
    while (ip < pulses.size() && pulses[ip].t <= ts + slack) {
      eng.advance(psi, t, pulses[ip].t);
      t = std::max(t, pulses[ip].t);
      psi = eng.pulse_unitary(*pulses[ip].e, pulses[ip].t) * psi;
      ++ip;
    }
    eng.advance(psi, t, ts);
    t = std::max(t, ts);
    Vec col = psi.col(0);
    obs.record(col, series);
  }

  Trajectory tr;
  tr.times = sample_times;
  for (std::size_t i = 0; i < obs.names.size(); ++i)
    tr.observables.emplace_back(obs.names[i], std::move(series[i]));
  tr.metadata["frame"] = std::to_string(static_cast<int>(frame));
  tr.metadata["rwa"] = rwa ? "1" : "0";
  tr.metadata["step_tol"] = io::format_double(sc.tol);
  tr.metadata["duration"] = io::format_double(schedule.duration);
  tr.metadata["schedule"] =
      schedule.provenance.empty() ? "custom" : schedule.provenance;
  tr.metadata["norm_drift"] =
      io::format_double(std::abs(psi.col(0).norm() - initial.norm()));
  return tr;
}

Trajectory evolve(const system::SpinSystem& s, const ControlSchedule& schedule,
                  const spincore::StateVector& initial, Frame frame, bool rwa,
                  StepControl sc, int n_samples, const NoiseSet* noise) {
  return evolve_at(s, schedule, initial, frame, rwa,
                   uniform_times(schedule.duration, n_samples), sc, noise);
}

Mat schedule_propagator(const system::SpinSystem& s, const ControlSchedule& schedule,
                        Frame frame, bool rwa, double t, StepControl sc,
                        const NoiseSet* noise) {
  Engine eng(s, schedule, frame, rwa, sc, noise);
  const double slack = 1e-9 * std::max(1.0, schedule.duration);
  if (t < -slack || t > schedule.duration + slack)
    throw std::invalid_argument("propagator time outside the schedule window");
  Mat u = spincore::identity(eng.dim());
  double cur = 0;
  for (const auto& p : eng.instants()) {
    if (p.t > t + slack) break;
    eng.advance(u, cur, p.t);
    cur = std::max(cur, p.t);
    u = eng.pulse_unitary(*p.e, p.t) * u;
  }
  eng.advance(u, cur, t);
  return u;
}

std::vector<Dip> find_dips(const std::vector<double>& grid,
                           const std::vector<double>& signal,
                           double noise_floor) {
  if (grid.size() != signal.size())
    throw std::invalid_argument("grid/signal size mismatch");
  std::vector<Dip> dips;
  if (grid.size() < 3) return dips;
  const double base = median(signal);
  const double thresh = base - 3.0 * noise_floor;

  for (std::size_t i = 1; i + 1 < grid.size(); ++i) {
    const double s0 = signal[i];
    if (!(s0 < thresh)) continue;
    if (!(s0 <= signal[i - 1] && s0 < signal[i + 1])) continue;

    // Parabolic vertex through the three bracketing points.
    const double x0 = grid[i - 1], x1 = grid[i], x2 = grid[i + 1];
    const double y0 = signal[i - 1], y1 = s0, y2 = signal[i + 1];
    const double d0 = (y1 - y0) / (x1 - x0);
    const double d1 = (y2 - y1) / (x2 - x1);
    const double curv = (d1 - d0) / (x2 - x0);
    Dip dip;
    dip.center = curv > 0 ? 0.5 * (x0 + x1) - 0.5 * d0 / curv : x1;
    // Keep the vertex inside the bracket.
    if (!(dip.center >= x0 && dip.center <= x2)) dip.center = x1;
    dip.depth = base - y1;

    const double half = base - 0.5 * dip.depth;
    double left = grid.front(), right = grid.back();
    for (std::size_t k = i; k-- > 0;) {
      if (signal[k] >= half) {
        const double f = (half - signal[k + 1]) / (signal[k] - signal[k + 1]);
        left = grid[k + 1] + f * (grid[k] - grid[k + 1]);
        break;
      }
    }
    for (std::size_t k = i + 1; k < grid.size(); ++k) {
      if (signal[k] >= half) {
        const double f = (half - signal[k - 1]) / (signal[k] - signal[k - 1]);
        right = grid[k - 1] + f * (grid[k] - grid[k - 1]);
        break;
      }
    }
    dip.width = right - left;
    dips.push_back(dip);
  }
  return dips;
}

Spectrum nmr_spectrum(const system::SpinSystem& s, const std::string& preset,
                      const std::vector<double>& tau_grid, int n_blocks,
                      Readout readout, StepControl sc, double noise_floor) {
  if (preset != "xy8" && preset != "cpmg")
    throw std::invalid_argument("spectrum preset must be xy8 or cpmg");
  if (n_blocks < 1) throw std::invalid_argument("n_blocks must be >= 1");
  for (std::size_t i = 0; i < tau_grid.size(); ++i) {
    if (!(tau_grid[i] > 0))
      throw std::invalid_argument("tau grid must be positive");
    if (i && !(tau_grid[i] > tau_grid[i - 1]))
      throw std::invalid_argument("tau grid must be ascending");
  }

  const int n_nuc = s.n_nuclei();
  const int bath_dim = 1 << n_nuc;
  Spectrum spec;
  spec.swept_name = "tau";
  spec.grid = tau_grid;

  for (double tau : tau_grid) {
    ControlSchedule sched = preset == "xy8" ? control::make_xy8(n_blocks, tau)
                                            : control::make_cpmg(8 * n_blocks, tau);
    PulseEvent prep;
    prep.t_center = 0;
    prep.angle = M_PI / 2;
    prep.phase = M_PI / 2;
    sched.events.insert(sched.events.begin(), prep);
    if (readout == Readout::p0) {
      PulseEvent close;
      close.t_center = sched.duration;
      close.angle = M_PI / 2;
      close.phase = 3 * M_PI / 2;
      sched.events.push_back(close);
    }

    const Mat u = schedule_propagator(s, sched, Frame::nv_rotating, true,
                                      sched.duration, sc);
    double signal = 0;
    for (int k = 0; k < bath_dim; ++k) {
      const int idx0 = bath_dim + k;  // NV |0> is qubit index 1
      if (readout == Readout::p0) {
        double p0 = 0;
        for (int kk = 0; kk < bath_dim; ++kk)
          p0 += std::norm(u(bath_dim + kk, idx0));
        signal += p0;
      } else {
        const Vec psi = u.col(idx0);
        double sx = 0;
        for (int kk = 0; kk < bath_dim; ++kk)
          sx += 2.0 * std::real(std::conj(psi(kk)) * psi(bath_dim + kk));
        signal += sx;
      }
    }
    spec.signal.push_back(signal / bath_dim);
  }
  spec.dips = find_dips(spec.grid, spec.signal, noise_floor);
  return spec;
}

Trajectory polarization_transfer(
    const system::SpinSystem& s,
    const std::vector<ControlSchedule>& cycle_schedules, int cycles,
    bool repolarize, double reset_fidelity, const Mat* initial_density,
    StepControl sc) {
  if (cycle_schedules.empty())
    throw std::invalid_argument("need at least one cycle schedule");
  if (cycles < 1) throw std::invalid_argument("cycles must be >= 1");
  if (!(reset_fidelity >= 0 && reset_fidelity <= 1))
    throw std::invalid_argument("reset_fidelity must lie in [0, 1]");

  const auto dims = s.dims(2);
  const int n_nuc = s.n_nuclei();
  const int bath_dim = 1 << n_nuc;
  const int dim = 2 * bath_dim;

  Mat nv0 = Mat::Zero(2, 2);
  nv0(1, 1) = 1;  // |0><0| in the (|m_s>, |0>) basis
  Mat rho;
  if (initial_density) {
    if (initial_density->rows() != dim)
      throw std::invalid_argument("initial density dimension mismatch");
    rho = *initial_density;
  } else {
    rho = spincore::kron(nv0, spincore::identity(bath_dim) / (double)bath_dim);
  }

  std::vector<Mat> iz_ops;
  for (int j = 0; j < n_nuc; ++j) {
    const auto nf = system::nuclear_frame(s, j);
    iz_ops.push_back(spincore::embed(spin_axis_half(nf.z_axis), j + 1, dims));
  }
  const Mat p0_op = spincore::embed(nv0, 0, dims);

  Trajectory tr;
  std::vector<std::vector<double>> iz_series(n_nuc);
  std::vector<double> bath_series, p0_series;
  auto record = [&](double t) {
    tr.times.push_back(t);
    double total = 0;
    for (int j = 0; j < n_nuc; ++j) {
      const double v = std::real((iz_ops[j] * rho).trace());
      iz_series[j].push_back(v);
      total += v;
    }
    bath_series.push_back(total);
    p0_series.push_back(std::real((p0_op * rho).trace()));
  };

  double t_acc = 0;
  record(0);
  std::vector<int> keep_nuclei(n_nuc);
  std::iota(keep_nuclei.begin(), keep_nuclei.end(), 1);
  for (int c = 0; c < cycles; ++c) {
    const auto& sched = cycle_schedules[c % cycle_schedules.size()];
    const Mat u = schedule_propagator(s, sched, Frame::nv_rotating, true,
                                      sched.duration, sc);
    rho = u * rho * u.adjoint();
    if (repolarize && n_nuc > 0) {
      const Mat bath = spincore::partial_trace(rho, keep_nuclei, dims);
      rho = reset_fidelity * spincore::kron(nv0, bath) +
            (1.0 - reset_fidelity) * rho;
    } else if (repolarize) {
      rho = reset_fidelity * nv0 + (1.0 - reset_fidelity) * rho;
    }
    t_acc += sched.duration;
    record(t_acc);
  }

  for (int j = 0; j < n_nuc; ++j)
    tr.observables.emplace_back("iz_" + std::to_string(j), std::move(iz_series[j]));
  tr.observables.emplace_back("bath_polarization", std::move(bath_series));
  tr.observables.emplace_back("p0", std::move(p0_series));
  tr.metadata["cycles"] = std::to_string(cycles);
  tr.metadata["repolarize"] = repolarize ? "1" : "0";
  tr.metadata["reset_fidelity"] = io::format_double(reset_fidelity);
  return tr;
}

Trajectory coherence_decay(const system::SpinSystem& s,
                           const ControlSchedule& schedule,
                           const NoiseBinding& binding, int n_realizations,
                           CoherenceReadout readout,
                           const spincore::StateVector& initial,
                           const std::vector<double>& sample_times,
                           StepControl sc) {
  if (n_realizations < 1)
    throw std::invalid_argument("n_realizations must be >= 1");
  binding.delta.validate();
  binding.xi1.validate();
  binding.xi2.validate();
  const std::vector<double> times =
      sample_times.empty() ? uniform_times(schedule.duration, 201) : sample_times;
  const std::size_t nt = times.size();

  std::vector<double> sum_x(nt, 0), sum_y(nt, 0), sum_z(nt, 0), sum_p0(nt, 0);
  std::vector<double> sq_x(nt, 0), sq_y(nt, 0), sq_z(nt, 0);
  for (int i = 0; i < n_realizations; ++i) {
    NoiseSet set;
    set.delta = noise::Realization(binding.delta, (std::uint64_t)i, schedule.duration);
    set.xi1 = noise::Realization(binding.xi1, (std::uint64_t)i, schedule.duration);
    set.xi2 = noise::Realization(binding.xi2, (std::uint64_t)i, schedule.duration);
    const auto tr = evolve_at(s, schedule, initial, Frame::nv_rotating, true,
                              times, sc, &set);
    const auto& x = tr.series("sigma_x");
    const auto& y = tr.series("sigma_y");
    const auto& z = tr.series("sigma_z");
    const auto& p0 = tr.series("p0");
    for (std::size_t k = 0; k < nt; ++k) {
      sum_x[k] += x[k]; sq_x[k] += x[k] * x[k];
      sum_y[k] += y[k]; sq_y[k] += y[k] * y[k];
      sum_z[k] += z[k]; sq_z[k] += z[k] * z[k];
      sum_p0[k] += p0[k];
    }
  }

  const double n = n_realizations;
  std::vector<double> mx(nt), my(nt), mz(nt), mp0(nt), coh(nt), coh_se(nt);
  for (std::size_t k = 0; k < nt; ++k) {
    mx[k] = sum_x[k] / n;
    my[k] = sum_y[k] / n;
    mz[k] = sum_z[k] / n;
    mp0[k] = sum_p0[k] / n;
    const double vx = std::max(0.0, sq_x[k] / n - mx[k] * mx[k]);
    const double vy = std::max(0.0, sq_y[k] / n - my[k] * my[k]);
    const double vz = std::max(0.0, sq_z[k] / n - mz[k] * mz[k]);
    if (readout.kind == CoherenceReadout::Kind::sigma_phi) {
      const double c = std::cos(readout.phi), si = -std::sin(readout.phi);
      coh[k] = c * mx[k] + si * my[k];
      coh_se[k] = std::sqrt((c * c * vx + si * si * vy) / n);
    } else {
      coh[k] = std::sqrt(mx[k] * mx[k] + my[k] * my[k] + mz[k] * mz[k]);
      coh_se[k] = std::sqrt((vx + vy + vz) / n);
    }
  }

  // 1/e time by first crossing; stretched-exponential fit in log-log space.
  const double c0 = std::abs(coh.front());
  double t2_1e = std::numeric_limits<double>::infinity();
  for (std::size_t k = 1; k < nt; ++k) {
    if (c0 > 0 && coh[k] < c0 / M_E) {
      const double f = (c0 / M_E - coh[k - 1]) / (coh[k] - coh[k - 1]);
      t2_1e = times[k - 1] + f * (times[k] - times[k - 1]);
      break;
    }
  }

  double t2_fit = std::numeric_limits<double>::infinity();
  double fit_p = 0, fit_res = 0;
  bool fit_ok = false;
  {
    std::vector<double> xs, ys;
    for (std::size_t k = 1; k < nt; ++k) {
      if (times[k] <= 0 || c0 <= 0) continue;
      const double r = coh[k] / c0;
      if (r < 0.98 && r > 1e-3) {
        xs.push_back(std::log(times[k]));
        ys.push_back(std::log(-std::log(r)));
      }
    }
    if (xs.size() >= 3) {
      const double n_pts = (double)xs.size();
      const double sx = std::accumulate(xs.begin(), xs.end(), 0.0);
      const double sy = std::accumulate(ys.begin(), ys.end(), 0.0);
      double sxx = 0, sxy = 0;
      for (std::size_t k = 0; k < xs.size(); ++k) {
        sxx += xs[k] * xs[k];
        sxy += xs[k] * ys[k];
      }
      const double det = n_pts * sxx - sx * sx;
      if (std::abs(det) > 1e-12) {
        const double slope = (n_pts * sxy - sx * sy) / det;
        const double icept = (sy - slope * sx) / n_pts;
        if (slope > 0.05) {
          t2_fit = std::exp(-icept / slope);
          fit_p = slope;
          double ss = 0;
          for (std::size_t k = 0; k < xs.size(); ++k) {
            const double e = ys[k] - (slope * xs[k] + icept);
            ss += e * e;
          }
          fit_res = std::sqrt(ss / n_pts);
          fit_ok = true;
        }
      }
    }
  }

  const bool infinite =
      !std::isfinite(t2_1e) && (!fit_ok || coh.back() > 0.9 * c0);

  Trajectory tr;
  tr.times = times;
  tr.observables.emplace_back("sigma_x", std::move(mx));
  tr.observables.emplace_back("sigma_y", std::move(my));
  tr.observables.emplace_back("sigma_z", std::move(mz));
  tr.observables.emplace_back("p0", std::move(mp0));
  tr.observables.emplace_back("coherence", std::move(coh));
  tr.observables.emplace_back("coherence_stderr", std::move(coh_se));
  tr.metadata["n_realizations"] = std::to_string(n_realizations);
  tr.metadata["t2_1e"] = io::format_double(t2_1e);
  tr.metadata["t2_fit"] = fit_ok ? io::format_double(t2_fit) : "nan";
  tr.metadata["t2_fit_exponent"] = fit_ok ? io::format_double(fit_p) : "nan";
  tr.metadata["t2_fit_residual"] = fit_ok ? io::format_double(fit_res) : "nan";
  tr.metadata["t2_infinite"] = infinite ? "1" : "0";
  return tr;
}

ValidationResult validate_effective(const system::SpinSystem& s,
                                    const ControlSchedule& schedule,
                                    const effective::EffectiveModel& model,
                                    double duration, int n_checkpoints,
                                    StepControl sc) {
  if (n_checkpoints < 1)
    throw std::invalid_argument("n_checkpoints must be >= 1");
  const double slack = 1e-9 * std::max(1.0, schedule.duration);
  if (duration <= 0 || duration > schedule.duration + slack)
    throw std::invalid_argument("validation window must lie inside the schedule");

  Engine eng(s, schedule, Frame::nv_rotating, true, sc, nullptr);
  if (model.h0.rows() != eng.dim())
    throw std::invalid_argument(
        "model frame dimension does not match the system");

  // Checkpoint times, snapped to the model's stroboscopic period.
  std::vector<double> times;
  const double period = model.checkpoint_period;
  for (int k = 1; k <= n_checkpoints; ++k) {
    double t = duration * (double)k / (double)n_checkpoints;
    if (period > 0) {
      t = std::round(t / period) * period;
      t = std::min(t, std::floor(duration / period + 1e-9) * period);
      if (t <= 0) t = period;
    }
    if (t > duration + slack) continue;
    if (times.empty() || t > times.back() + slack) times.push_back(t);
  }
  if (times.empty())
    throw std::invalid_argument(
        "validation window shorter than one model checkpoint period");

  int d_sub = 1;
  for (int d : model.dims) d_sub *= d;
  const int d_rest = eng.dim() / d_sub;

  const spincore::Propagator frame_prop(model.h0);
  const spincore::Propagator model_prop(model.hamiltonian);

  ValidationResult res;
  Mat u = spincore::identity(eng.dim());
  Mat p = spincore::identity(eng.dim());
  double cur = 0;
  std::size_t ip = 0;
  const auto& pulses = eng.instants();
  for (double t : times) {
    while (ip < pulses.size() && pulses[ip].t <= t + slack) {
      eng.advance(u, cur, pulses[ip].t);
      cur = std::max(cur, pulses[ip].t);
      const Mat pu = eng.pulse_unitary(*pulses[ip].e, pulses[ip].t);
      u = pu * u;
      p = pu * p;
      ++ip;
    }
    eng.advance(u, cur, t);
    cur = std::max(cur, t);

    const Mat w = frame_prop.at(t) * model.w0;
    const Mat carried = w.adjoint() * p.adjoint() * u * model.w0;
    const Mat restricted =
        spincore::partial_trace(carried, model.keep, eng.dims()) / (double)d_rest;
    const Mat v = model_prop.at(t);
    res.times.push_back(t);
    res.fidelity.push_back(spincore::cosine_similarity(restricted, v));
    res.leakage.push_back(std::clamp(
        1.0 - restricted.squaredNorm() / (double)d_sub, 0.0, 1.0));
  }
  return res;
}

}  // namespace nvdd::dynamics
