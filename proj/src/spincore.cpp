#include "nvdd/spincore.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace nvdd::spincore {

namespace {

const cx I(0.0, 1.0);

int dims_product(const std::vector<int>& dims) {
  int p = 1;
  for (int d : dims) {
    if (d < 1) throw std::invalid_argument("subsystem dimension must be >= 1");
    p *= d;
  }
  return p;
}

// Largest entry magnitude, with a floor of 1 so tolerances stay meaningful
// for near-zero operators.
double scale_of(const Mat& m) {
  double s = m.cwiseAbs().maxCoeff();
  return std::max(s, 1.0);
}

SpinOps spin_ops_from_levels(const std::vector<double>& ms, double s) {
  const int d = static_cast<int>(ms.size());
  Mat sz = Mat::Zero(d, d), sp = Mat::Zero(d, d);
  for (int a = 0; a < d; ++a) {
    sz(a, a) = ms[a];
    for (int b = 0; b < d; ++b) {
      if (std::abs(ms[a] - (ms[b] + 1.0)) < 1e-12) {
        sp(a, b) = std::sqrt(s * (s + 1.0) - ms[b] * (ms[b] + 1.0));
      }
    }
  }
  Mat sm = sp.adjoint();
  SpinOps ops;
  ops.sx = 0.5 * (sp + sm);
  ops.sy = -0.5 * I * (sp - sm);
  ops.sz = sz;
  ops.sp = sp;
  ops.sm = sm;
  return ops;
}

}  // namespace

Operator Operator::on(Mat m, std::vector<int> dims) {
  if (m.rows() != m.cols()) throw std::invalid_argument("operator must be square");
  if (dims_product(dims) != m.rows())
    throw std::invalid_argument("operator dims product " +
                                std::to_string(dims_product(dims)) +
                                " != matrix dimension " + std::to_string(m.rows()));
  return Operator{std::move(m), std::move(dims)};
}

StateVector StateVector::on(Vec v, std::vector<int> dims) {
  if (dims_product(dims) != v.size())
    throw std::invalid_argument("state dims product != vector dimension");
  return StateVector{std::move(v), std::move(dims)};
}

SpinOps spin_operators(double spin) {
  if (spin == 0.5) return spin_ops_from_levels({0.5, -0.5}, 0.5);
  if (spin == 1.0) return spin_ops_from_levels({1.0, -1.0, 0.0}, 1.0);
  throw std::invalid_argument("spin_operators: only spin 1/2 and spin 1 supported");
}

Mat qubit_project(const Mat& nv_op, Transition t) {
  if (nv_op.rows() != 3 || nv_op.cols() != 3)
    throw std::invalid_argument("qubit_project expects a 3x3 NV operator");
  // Spin-1 basis order (|+1>,|-1>,|0>): indices 0, 1, 2.
  const int m_idx = (t == Transition::zero_to_plus) ? 0 : 1;
  Mat out(2, 2);
  out(0, 0) = nv_op(m_idx, m_idx);
  out(0, 1) = nv_op(m_idx, 2);
  out(1, 0) = nv_op(2, m_idx);
  out(1, 1) = nv_op(2, 2);
  return out;
}

Mat pauli_x() {
  Mat m(2, 2);
  m << 0, 1, 1, 0;
  return m;
}

Mat pauli_y() {
  Mat m(2, 2);
  m << 0, -I, I, 0;
  return m;
}

Mat pauli_z() {
  Mat m(2, 2);
  m << 1, 0, 0, -1;
  return m;
}

Mat sigma_phi(double phi) {
  Mat m = Mat::Zero(2, 2);
  m(0, 1) = std::exp(I * phi);
  m(1, 0) = std::exp(-I * phi);
  return m;
}

Vec dressed_plus(double phi) {
  Vec v(2);
  v << 1.0, std::exp(-I * phi);
  return v / std::sqrt(2.0);
}

Vec dressed_minus(double phi) {
  Vec v(2);
  v << 1.0, -std::exp(-I * phi);
  return v / std::sqrt(2.0);
}

Mat identity(int dim) { return Mat::Identity(dim, dim); }

Mat kron(const Mat& a, const Mat& b) {
  Mat out(a.rows() * b.rows(), a.cols() * b.cols());
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

Mat embed(const Mat& op, int site, const std::vector<int>& dims) {
  if (site < 0 || site >= static_cast<int>(dims.size()))
    throw std::invalid_argument("embed: site index out of range");
  if (op.rows() != dims[site])
    throw std::invalid_argument("embed: operator dimension does not match site");
  Mat out = Mat::Identity(1, 1);
  for (int k = 0; k < static_cast<int>(dims.size()); ++k)
    out = kron(out, k == site ? op : identity(dims[k]));
  return out;
}

Mat partial_trace(const Mat& op, const std::vector<int>& keep,
                  const std::vector<int>& dims) {
  const int n = static_cast<int>(dims.size());
  const int full = dims_product(dims);
  if (op.rows() != full)
    throw std::invalid_argument("partial_trace: matrix does not match dims");
  for (size_t i = 0; i + 1 < keep.size(); ++i)
    if (keep[i] >= keep[i + 1])
      throw std::invalid_argument("partial_trace: keep must be strictly increasing");
  std::vector<bool> kept(n, false);
  for (int k : keep) {
    if (k < 0 || k >= n) throw std::invalid_argument("partial_trace: bad site index");
    kept[k] = true;
  }

  int dk = 1, dt = 1;
  for (int k = 0; k < n; ++k) (kept[k] ? dk : dt) *= dims[k];

  // Strides of each site in the flattened row index.
  std::vector<int> stride(n, 1);
  for (int k = n - 2; k >= 0; --k) stride[k] = stride[k + 1] * dims[k + 1];

  // Map (kept multi-index, traced multi-index) -> full index.
  std::vector<int> kept_sites, traced_sites;
  for (int k = 0; k < n; ++k) (kept[k] ? kept_sites : traced_sites).push_back(k);

  auto unrank = [&](int rank, const std::vector<int>& sites) {
    int idx = 0;
    for (int s = static_cast<int>(sites.size()) - 1; s >= 0; --s) {
      const int d = dims[sites[s]];
      idx += (rank % d) * stride[sites[s]];
      rank /= d;
    }
    return idx;
  };

  Mat out = Mat::Zero(dk, dk);
  for (int a = 0; a < dk; ++a) {
    const int ia = unrank(a, kept_sites);
    for (int b = 0; b < dk; ++b) {
      const int ib = unrank(b, kept_sites);
      cx sum = 0.0;
      for (int t = 0; t < dt; ++t) {
        const int it = unrank(t, traced_sites);
        sum += op(ia + it, ib + it);
      }
      out(a, b) = sum;
    }
  }
  return out;
}

bool is_hermitian(const Mat& m, double tol) {
  if (m.rows() != m.cols()) return false;
  return (m - m.adjoint()).cwiseAbs().maxCoeff() <= tol * scale_of(m);
}

bool is_unitary(const Mat& m, double tol) {
  if (m.rows() != m.cols()) return false;
  Mat d = m.adjoint() * m - Mat::Identity(m.rows(), m.cols());
  return d.cwiseAbs().maxCoeff() <= tol;
}

Propagator::Propagator(const Mat& h, double hermiticity_tol) {
  if (!is_hermitian(h, hermiticity_tol))
    throw std::invalid_argument("propagator: generator is not Hermitian");
  Eigen::SelfAdjointEigenSolver<Mat> es(h);
  if (es.info() != Eigen::Success)
    throw std::runtime_error("propagator: eigendecomposition failed");
  evals_ = es.eigenvalues();
  evecs_ = es.eigenvectors();
}

Mat Propagator::at(double t) const {
  Vec phases(evals_.size());
  for (int k = 0; k < evals_.size(); ++k)
    phases(k) = std::exp(cx(0.0, -evals_(k) * t));
  return evecs_ * phases.asDiagonal() * evecs_.adjoint();
}

Mat propagator(const Mat& h, double t, double hermiticity_tol) {
  return Propagator(h, hermiticity_tol).at(t);
}

double fidelity(const Mat& u, const Mat& v) {
  if (u.rows() != v.rows() || u.cols() != v.cols())
    throw std::invalid_argument("fidelity: dimension mismatch");
  return std::abs((u.adjoint() * v).trace()) / static_cast<double>(u.rows());
}

double cosine_similarity(const Mat& a, const Mat& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument("cosine_similarity: dimension mismatch");
  const double na = a.norm(), nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::abs((a.adjoint() * b).trace()) / (na * nb);
}

}  // namespace nvdd::spincore
