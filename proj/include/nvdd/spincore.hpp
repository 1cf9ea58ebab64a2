#pragma once

#include <Eigen/Dense>

#include <complex>
#include <vector>

// Dense multi-spin linear algebra: operators and states on ordered tensor
// products of small spins, matrix exponentials of Hermitian generators via
// eigendecomposition, and propagator fidelities. Site 0 is the leftmost
// Kronecker factor throughout.

namespace nvdd::spincore {

using Mat = Eigen::MatrixXcd;
using Vec = Eigen::VectorXcd;
using cx = std::complex<double>;

struct Tolerances {
  double hermiticity = 1e-12;  // relative to the operator's own scale
  double unitarity = 1e-10;
  double norm_drift = 1e-9;
};

// Operator together with the subsystem dimensions it acts on.
struct Operator {
  Mat mat;
  std::vector<int> dims;

  int dim() const { return static_cast<int>(mat.rows()); }
  static Operator on(Mat m, std::vector<int> dims);
};

struct StateVector {
  Vec amps;
  std::vector<int> dims;

  int dim() const { return static_cast<int>(amps.size()); }
  double norm() const { return amps.norm(); }
  static StateVector on(Vec v, std::vector<int> dims);
};

struct SpinOps {
  Mat sx, sy, sz;
  Mat sp, sm;  // full ladder operators Sx +- i Sy
};

// spin must be 1/2 or 1. Spin-1 basis order (|+1>,|-1>,|0>), so
// sz = diag(1,-1,0); spin-1/2 basis (|up>,|down>), sz = diag(1/2,-1/2).
SpinOps spin_operators(double spin);

enum class Transition { zero_to_plus, zero_to_minus };

// Restrict a 3x3 NV operator to the driven two-level subspace. Resulting
// basis is (|+1>,|0>) for zero_to_plus, (|-1>,|0>) for zero_to_minus.
Mat qubit_project(const Mat& nv_op, Transition t);

// Qubit Paulis in the (|m_s>,|0>) basis and the drive axis
// sigma_phi = sigma_+ e^{i phi} + sigma_- e^{-i phi} = cos(phi) sx - sin(phi) sy,
// so phi = 0 is an X pulse and phi = pi/2 a Y pulse (up to rotation sign).
Mat pauli_x();
Mat pauli_y();
Mat pauli_z();
Mat sigma_phi(double phi);

// Dressed states (|1> +- e^{-i phi}|0>)/sqrt(2): eigenvectors of sigma_phi
// with eigenvalue +-1.
Vec dressed_plus(double phi);
Vec dressed_minus(double phi);

Mat identity(int dim);
Mat kron(const Mat& a, const Mat& b);

// Place op (acting on subsystem `site`) into the full product space.
Mat embed(const Mat& op, int site, const std::vector<int>& dims);

// Trace out every site not listed in `keep` (strictly increasing indices);
// the result acts on the kept sites in their original order.
Mat partial_trace(const Mat& op, const std::vector<int>& keep,
                  const std::vector<int>& dims);

bool is_hermitian(const Mat& m, double tol = Tolerances{}.hermiticity);
bool is_unitary(const Mat& m, double tol = Tolerances{}.unitarity);

// exp(-i h t) through the Hermitian eigendecomposition of h. Rejects
// non-Hermitian input (tolerance relative to the operator's scale).
Mat propagator(const Mat& h, double t,
               double hermiticity_tol = Tolerances{}.hermiticity);

// Eigendecomposition cached once, reused for arbitrarily many durations.
class Propagator {
 public:
  explicit Propagator(const Mat& h,
                      double hermiticity_tol = Tolerances{}.hermiticity);
  Mat at(double t) const;
  const Eigen::VectorXd& eigenvalues() const { return evals_; }

 private:
  Eigen::VectorXd evals_;
  Mat evecs_;
};

// |tr(U^dag V)| / dim; global-phase-insensitive propagator agreement.
double fidelity(const Mat& u, const Mat& v);

// |<A,B>_F| / (||A||_F ||B||_F); fidelity generalized to sub-normalized
// restrictions of a propagator onto a subspace.
double cosine_similarity(const Mat& a, const Mat& b);

}  // namespace nvdd::spincore
