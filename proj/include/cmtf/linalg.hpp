#pragma once

#include <vector>

#include "cmtf/dense.hpp"

namespace cmtf {

// ---- elementwise / norms ----

double fro_norm_sq(const DenseMatrix& a);
double fro_norm(const DenseMatrix& a);
double fro_norm_sq(const DenseTensor3& a);
double fro_norm(const DenseTensor3& a);
double fro_norm_sq(const RaggedTensor& a);
double fro_norm(const RaggedTensor& a);
double fro_norm_diff(const DenseMatrix& a, const DenseMatrix& b);

// y += alpha * x (shapes must match)
void add_scaled_inplace(DenseMatrix& y, const DenseMatrix& x, double alpha);
void scale_inplace(DenseMatrix& x, double alpha);

// ---- products ----

// C = A * B
DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b);
// C = A^T * B
DenseMatrix matmul_at_b(const DenseMatrix& a, const DenseMatrix& b);
// C = A * B^T
DenseMatrix matmul_a_bt(const DenseMatrix& a, const DenseMatrix& b);
// A^T A (symmetric)
DenseMatrix gram(const DenseMatrix& a);

// Khatri-Rao product: column r is kron(b_r, a_r); result is (J*I) x R with
// row index j*I + i for B of J rows and A of I rows.
DenseMatrix khatri_rao(const DenseMatrix& b, const DenseMatrix& a);

// (A^T A) .* (B^T B) without forming the Khatri-Rao product.
DenseMatrix gram_hadamard(const DenseMatrix& a, const DenseMatrix& b);

// Matricized tensor times Khatri-Rao product for the given target mode
// (0, 1 or 2). f2 and f3 are the factors of the two non-target modes in
// ascending mode order. Result is dim(mode) x R.
DenseMatrix mttkrp(const DenseTensor3& y, const DenseMatrix& f2, const DenseMatrix& f3,
                   int mode);

// Full reconstruction sum_r a_r o b_r o c_r.
DenseTensor3 cp_reconstruct(const DenseMatrix& a, const DenseMatrix& b, const DenseMatrix& c);

// ---- factorizations ----

// Cholesky factorization of a symmetric positive definite matrix. The
// original matrix is retained so solves can run one fixed-precision
// refinement pass, which keeps relative residuals ~1e-12 even for
// condition numbers around 1e8.
class CholeskyFactor {
 public:
  static CholeskyFactor compute(const DenseMatrix& s);  // throws std::domain_error if not PD

  std::size_t dim() const { return l_.rows(); }
  const DenseMatrix& lower() const { return l_; }

  // Solves (L L^T) X = rhs (multi-column rhs).
  DenseMatrix solve(const DenseMatrix& rhs) const;
  // Solves X S = rhs row-wise, i.e. every row x of X satisfies x S = r.
  DenseMatrix solve_rows(const DenseMatrix& rhs) const;
  // In-place row solve for a single row vector of length dim().
  void solve_row_inplace(double* x) const;

 private:
  void subst_inplace(double* x) const;  // forward+back substitution, single column
  DenseMatrix l_;
  DenseMatrix s_;
};

struct ThinSvd {
  DenseMatrix u;               // J x R, orthonormal columns
  DenseMatrix v;               // R x R, orthogonal
  std::vector<double> sigma;   // R singular values (not sorted)
};

// Thin SVD of an J x R matrix (J >= R) via one-sided Jacobi. Rank-deficient
// input is handled by completing U with an orthonormal basis; the completed
// columns (and hence U V^T) are then one valid choice among many.
ThinSvd thin_svd(const DenseMatrix& m);

// Orthogonal Procrustes projection: P = U V^T maximizing trace(P^T M) over
// P^T P = I.
DenseMatrix procrustes_orthogonal(const DenseMatrix& m);

struct SymEig {
  DenseMatrix q;               // orthogonal, columns are eigenvectors
  std::vector<double> lambda;  // matching eigenvalues
};

// Eigendecomposition of a symmetric matrix via cyclic Jacobi rotations.
SymEig sym_eig(const DenseMatrix& s);

}  // namespace cmtf
