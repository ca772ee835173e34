#include "cmtf/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "cmtf/kernels.hpp"

namespace cmtf {

namespace ker = cmtf::kernels;

double fro_norm_sq(const DenseMatrix& a) { return ker::sumsq(a.data(), a.size()); }
double fro_norm(const DenseMatrix& a) { return std::sqrt(fro_norm_sq(a)); }
double fro_norm_sq(const DenseTensor3& a) { return ker::sumsq(a.data(), a.size()); }
double fro_norm(const DenseTensor3& a) { return std::sqrt(fro_norm_sq(a)); }

double fro_norm_sq(const RaggedTensor& a) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.n_slices(); ++k) s += fro_norm_sq(a.slice(k));
  return s;
}
double fro_norm(const RaggedTensor& a) { return std::sqrt(fro_norm_sq(a)); }

double fro_norm_diff(const DenseMatrix& a, const DenseMatrix& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("fro_norm_diff: shape mismatch");
  return std::sqrt(ker::sumsq_diff(a.data(), b.data(), a.size()));
}

void add_scaled_inplace(DenseMatrix& y, const DenseMatrix& x, double alpha) {
  if (!y.same_shape(x)) throw std::invalid_argument("add_scaled_inplace: shape mismatch");
  ker::axpy(alpha, x.data(), y.data(), y.size());
}

void scale_inplace(DenseMatrix& x, double alpha) { ker::scale(x.data(), alpha, x.size()); }

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner dimension mismatch");
  DenseMatrix c(a.rows(), b.cols());
  // Narrow right-hand sides (the factor-matrix case) run much faster as
  // contiguous dot products against the transposed operand.
  if (b.cols() <= 16 && a.cols() >= 8) {
    const DenseMatrix bt = b.transposed();
    for (std::size_t i = 0; i < a.rows(); ++i) {
      const double* arow = a.row(i);
      double* crow = c.row(i);
      for (std::size_t j = 0; j < b.cols(); ++j) crow[j] = ker::dot(arow, bt.row(j), a.cols());
    }
    return c;
  }
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double* arow = a.row(i);
    double* crow = c.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      ker::axpy(arow[k], b.row(k), crow, b.cols());
    }
  }
  return c;
}

DenseMatrix matmul_at_b(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.rows() != b.rows()) throw std::invalid_argument("matmul_at_b: row mismatch");
  DenseMatrix c(a.cols(), b.cols());
  if (a.rows() >= 32 && a.cols() * b.cols() <= 4096) {
    const DenseMatrix at = a.transposed();
    const DenseMatrix bt = b.transposed();
    for (std::size_t i = 0; i < a.cols(); ++i) {
      double* crow = c.row(i);
      for (std::size_t j = 0; j < b.cols(); ++j)
        crow[j] = ker::dot(at.row(i), bt.row(j), a.rows());
    }
    return c;
  }
  for (std::size_t k = 0; k < a.rows(); ++k) {
    const double* arow = a.row(k);
    const double* brow = b.row(k);
    for (std::size_t i = 0; i < a.cols(); ++i) {
      ker::axpy(arow[i], brow, c.row(i), b.cols());
    }
  }
  return c;
}

DenseMatrix matmul_a_bt(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols() != b.cols()) throw std::invalid_argument("matmul_a_bt: column mismatch");
  DenseMatrix c(a.rows(), b.rows());
  // Small inner dimension (rank-sized): accumulate whole output rows instead
  // of issuing rank-length dots per element.
  if (a.cols() <= 8 && b.rows() >= 16) {
    const DenseMatrix bt = b.transposed();
    for (std::size_t i = 0; i < a.rows(); ++i) {
      const double* arow = a.row(i);
      double* crow = c.row(i);
      for (std::size_t k = 0; k < a.cols(); ++k)
        if (arow[k] != 0.0) ker::axpy(arow[k], bt.row(k), crow, b.rows());
    }
    return c;
  }
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double* arow = a.row(i);
    double* crow = c.row(i);
    for (std::size_t j = 0; j < b.rows(); ++j) {
      crow[j] = ker::dot(arow, b.row(j), a.cols());
    }
  }
  return c;
}

DenseMatrix gram(const DenseMatrix& a) {
  DenseMatrix g(a.cols(), a.cols());
  for (std::size_t k = 0; k < a.rows(); ++k) {
    const double* arow = a.row(k);
    for (std::size_t i = 0; i < a.cols(); ++i) {
      if (arow[i] != 0.0) ker::axpy(arow[i], arow, g.row(i), a.cols());
    }
  }
  // symmetrize rounding differences
  for (std::size_t i = 0; i < g.rows(); ++i)
    for (std::size_t j = i + 1; j < g.cols(); ++j) {
      const double v = 0.5 * (g(i, j) + g(j, i));
      g(i, j) = v;
      g(j, i) = v;
    }
  return g;
}

DenseMatrix khatri_rao(const DenseMatrix& b, const DenseMatrix& a) {
  if (a.cols() != b.cols()) throw std::invalid_argument("khatri_rao: column count mismatch");
  const std::size_t r = a.cols();
  DenseMatrix out(a.rows() * b.rows(), r);
  for (std::size_t j = 0; j < b.rows(); ++j) {
    const double* brow = b.row(j);
    for (std::size_t i = 0; i < a.rows(); ++i) {
      ker::hadamard(brow, a.row(i), out.row(j * a.rows() + i), r);
    }
  }
  return out;
}

DenseMatrix gram_hadamard(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols() != b.cols()) throw std::invalid_argument("gram_hadamard: column count mismatch");
  DenseMatrix ga = gram(a);
  const DenseMatrix gb = gram(b);
  ker::hadamard(ga.data(), gb.data(), ga.data(), ga.size());
  return ga;
}

DenseMatrix mttkrp(const DenseTensor3& y, const DenseMatrix& f2, const DenseMatrix& f3,
                   int mode) {
  const std::size_t di = y.dim0(), dj = y.dim1(), dk = y.dim2();
  if (mode < 0 || mode > 2) throw std::invalid_argument("mttkrp: mode must be 0, 1 or 2");
  const std::size_t r = f2.cols();
  if (f3.cols() != r) throw std::invalid_argument("mttkrp: rank mismatch between factors");

  if (mode == 0) {
    if (f2.rows() != dj || f3.rows() != dk)
      throw std::invalid_argument("mttkrp: factor dimensions do not match tensor");
    DenseMatrix out(di, r);
    DenseMatrix wt(r, dj);  // transposed weights so slice rows stream as dots
    for (std::size_t k = 0; k < dk; ++k) {
      const double* crow = f3.row(k);
      for (std::size_t c = 0; c < r; ++c) {
        double* wrow = wt.row(c);
        for (std::size_t j = 0; j < dj; ++j) wrow[j] = f2(j, c) * crow[c];
      }
      for (std::size_t i = 0; i < di; ++i) {
        const double* xrow = y.slice_row(k, i);
        double* orow = out.row(i);
        for (std::size_t c = 0; c < r; ++c) orow[c] += ker::dot(xrow, wt.row(c), dj);
      }
    }
    return out;
  }
  if (mode == 1) {
    if (f2.rows() != di || f3.rows() != dk)
      throw std::invalid_argument("mttkrp: factor dimensions do not match tensor");
    DenseMatrix out(dj, r);
    DenseMatrix xt(dj, di);
    DenseMatrix wt(r, di);
    for (std::size_t k = 0; k < dk; ++k) {
      const double* crow = f3.row(k);
      for (std::size_t c = 0; c < r; ++c) {
        double* wrow = wt.row(c);
        for (std::size_t i = 0; i < di; ++i) wrow[i] = f2(i, c) * crow[c];
      }
      for (std::size_t i = 0; i < di; ++i) {
        const double* xrow = y.slice_row(k, i);
        for (std::size_t j = 0; j < dj; ++j) xt(j, i) = xrow[j];
      }
      for (std::size_t j = 0; j < dj; ++j) {
        double* orow = out.row(j);
        for (std::size_t c = 0; c < r; ++c) orow[c] += ker::dot(xt.row(j), wt.row(c), di);
      }
    }
    return out;
  }
  // mode == 2
  if (f2.rows() != di || f3.rows() != dj)
    throw std::invalid_argument("mttkrp: factor dimensions do not match tensor");
  DenseMatrix out(dk, r);
  const DenseMatrix f3t = f3.transposed();
  for (std::size_t k = 0; k < dk; ++k) {
    double* orow = out.row(k);
    for (std::size_t i = 0; i < di; ++i) {
      const double* xrow = y.slice_row(k, i);
      const double* frow = f2.row(i);
      for (std::size_t c = 0; c < r; ++c) orow[c] += frow[c] * ker::dot(xrow, f3t.row(c), dj);
    }
  }
  return out;
}

DenseTensor3 cp_reconstruct(const DenseMatrix& a, const DenseMatrix& b, const DenseMatrix& c) {
  const std::size_t r = a.cols();
  if (b.cols() != r || c.cols() != r)
    throw std::invalid_argument("cp_reconstruct: rank mismatch");
  DenseTensor3 y(a.rows(), b.rows(), c.rows());
  const DenseMatrix bt = b.transposed();
  for (std::size_t k = 0; k < c.rows(); ++k) {
    const double* crow = c.row(k);
    for (std::size_t i = 0; i < a.rows(); ++i) {
      double* yrow = y.slice_row(k, i);
      const double* arow = a.row(i);
      for (std::size_t cc = 0; cc < r; ++cc) {
        const double w = arow[cc] * crow[cc];
        if (w != 0.0) ker::axpy(w, bt.row(cc), yrow, b.rows());
      }
    }
  }
  return y;
}

// ---- Cholesky ----

CholeskyFactor CholeskyFactor::compute(const DenseMatrix& s) {
  if (s.rows() != s.cols()) throw std::invalid_argument("cholesky: matrix must be square");
  const std::size_t n = s.rows();
  CholeskyFactor f;
  f.s_ = s;
  f.l_ = DenseMatrix(n, n);
  DenseMatrix& l = f.l_;
  for (std::size_t j = 0; j < n; ++j) {
    double d = s(j, j) - ker::dot(l.row(j), l.row(j), j);
    if (!(d > 0.0) || !std::isfinite(d))
      throw std::domain_error("cholesky: matrix is not positive definite");
    d = std::sqrt(d);
    l(j, j) = d;
    const double inv = 1.0 / d;
    for (std::size_t i = j + 1; i < n; ++i) {
      l(i, j) = (s(i, j) - ker::dot(l.row(i), l.row(j), j)) * inv;
    }
  }
  return f;
}

void CholeskyFactor::subst_inplace(double* x) const {
  const std::size_t n = dim();
  const DenseMatrix& l = l_;
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = (x[i] - ker::dot(l.row(i), x, i)) / l(i, i);
  }
  for (std::size_t ii = n; ii-- > 0;) {
    double s = x[ii];
    for (std::size_t j = ii + 1; j < n; ++j) s -= l(j, ii) * x[j];
    x[ii] = s / l(ii, ii);
  }
}

void CholeskyFactor::solve_row_inplace(double* x) const { subst_inplace(x); }

DenseMatrix CholeskyFactor::solve(const DenseMatrix& rhs) const {
  if (rhs.rows() != dim()) throw std::invalid_argument("cholesky solve: shape mismatch");
  // Work column by column on a transposed copy so substitutions stay
  // contiguous, with one refinement pass per column.
  DenseMatrix xt = rhs.transposed();
  const std::size_t n = dim();
  std::vector<double> res(n);
  for (std::size_t c = 0; c < xt.rows(); ++c) {
    double* x = xt.row(c);
    std::vector<double> b(x, x + n);
    subst_inplace(x);
    for (std::size_t i = 0; i < n; ++i) res[i] = b[i] - ker::dot(s_.row(i), x, n);
    subst_inplace(res.data());
    for (std::size_t i = 0; i < n; ++i) x[i] += res[i];
  }
  return xt.transposed();
}

DenseMatrix CholeskyFactor::solve_rows(const DenseMatrix& rhs) const {
  if (rhs.cols() != dim()) throw std::invalid_argument("cholesky solve_rows: shape mismatch");
  DenseMatrix x = rhs;
  const std::size_t n = dim();
  std::vector<double> res(n);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    double* xr = x.row(r);
    std::vector<double> b(xr, xr + n);
    subst_inplace(xr);
    for (std::size_t i = 0; i < n; ++i) res[i] = b[i] - ker::dot(s_.row(i), xr, n);
    subst_inplace(res.data());
    for (std::size_t i = 0; i < n; ++i) xr[i] += res[i];
  }
  return x;
}

// ---- one-sided Jacobi SVD ----

namespace {

// Orthonormalizes any zero (or numerically dead) columns of u against the
// rest, starting from coordinate axes. Used for rank-deficient inputs.
void complete_basis(DenseMatrix& u, std::vector<bool> dead) {
  const std::size_t rows = u.rows(), cols = u.cols();
  for (std::size_t c = 0; c < cols; ++c) {
    if (!dead[c]) continue;
    bool placed = false;
    for (std::size_t attempt = 0; attempt < rows && !placed; ++attempt) {
      std::vector<double> cand(rows, 0.0);
      cand[attempt] = 1.0;
      // two rounds of Gram-Schmidt against every valid column
      for (int round = 0; round < 2; ++round) {
        for (std::size_t o = 0; o < cols; ++o) {
          if (o == c || dead[o]) continue;
          double p = 0.0;
          for (std::size_t i = 0; i < rows; ++i) p += cand[i] * u(i, o);
          for (std::size_t i = 0; i < rows; ++i) cand[i] -= p * u(i, o);
        }
      }
      double nrm = std::sqrt(ker::sumsq(cand.data(), rows));
      if (nrm > 1e-6) {
        for (std::size_t i = 0; i < rows; ++i) u(i, c) = cand[i] / nrm;
        placed = true;
      }
    }
    if (!placed) throw std::runtime_error("thin_svd: failed to complete orthonormal basis");
    dead[c] = false;
  }
}

}  // namespace

ThinSvd thin_svd(const DenseMatrix& m) {
  const std::size_t rows = m.rows(), cols = m.cols();
  if (rows < cols) throw std::invalid_argument("thin_svd: requires rows >= cols");
  // Work on columns of a transposed copy so each column is contiguous.
  DenseMatrix wt = m.transposed();  // cols x rows; row c is column c of m
  DenseMatrix vt = DenseMatrix::identity(cols);

  const int max_sweeps = 60;
  const double tol = 1e-14;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p + 1 < cols; ++p) {
      for (std::size_t q = p + 1; q < cols; ++q) {
        double* cp = wt.row(p);
        double* cq = wt.row(q);
        const double app = ker::sumsq(cp, rows);
        const double aqq = ker::sumsq(cq, rows);
        const double apq = ker::dot(cp, cq, rows);
        if (std::abs(apq) <= tol * std::sqrt(app * aqq) || app * aqq == 0.0) continue;
        off = std::max(off, std::abs(apq) / std::sqrt(app * aqq));
        const double zeta = (aqq - app) / (2.0 * apq);
        const double t = (zeta >= 0.0 ? 1.0 : -1.0) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double cs = 1.0 / std::sqrt(1.0 + t * t);
        const double sn = cs * t;
        for (std::size_t i = 0; i < rows; ++i) {
          const double a = cp[i], b = cq[i];
          cp[i] = cs * a - sn * b;
          cq[i] = sn * a + cs * b;
        }
        double* vp = vt.row(p);
        double* vq = vt.row(q);
        for (std::size_t i = 0; i < cols; ++i) {
          const double a = vp[i], b = vq[i];
          vp[i] = cs * a - sn * b;
          vq[i] = sn * a + cs * b;
        }
      }
    }
    if (off == 0.0) break;
  }

  ThinSvd out;
  out.sigma.resize(cols);
  out.u = DenseMatrix(rows, cols);
  double smax = 0.0;
  for (std::size_t c = 0; c < cols; ++c) {
    out.sigma[c] = std::sqrt(ker::sumsq(wt.row(c), rows));
    smax = std::max(smax, out.sigma[c]);
  }
  std::vector<bool> dead(cols, false);
  for (std::size_t c = 0; c < cols; ++c) {
    if (out.sigma[c] <= smax * 1e-13 || smax == 0.0) {
      dead[c] = true;
      out.sigma[c] = 0.0;
      continue;
    }
    const double inv = 1.0 / out.sigma[c];
    const double* col = wt.row(c);
    for (std::size_t i = 0; i < rows; ++i) out.u(i, c) = col[i] * inv;
  }
  complete_basis(out.u, dead);
  out.v = vt.transposed();
  return out;
}

DenseMatrix procrustes_orthogonal(const DenseMatrix& m) {
  const ThinSvd svd = thin_svd(m);
  return matmul_a_bt(svd.u, svd.v);
}

// ---- cyclic Jacobi eigendecomposition ----

SymEig sym_eig(const DenseMatrix& s) {
  if (s.rows() != s.cols()) throw std::invalid_argument("sym_eig: matrix must be square");
  const std::size_t n = s.rows();
  DenseMatrix a = s;
  DenseMatrix q = DenseMatrix::identity(n);
  const int max_sweeps = 60;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p + 1 < n; ++p)
      for (std::size_t j = p + 1; j < n; ++j) off += a(p, j) * a(p, j);
    double diag = 0.0;
    for (std::size_t p = 0; p < n; ++p) diag += a(p, p) * a(p, p);
    if (off <= 1e-30 * std::max(diag, 1e-300)) break;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t r = p + 1; r < n; ++r) {
        const double apq = a(p, r);
        if (apq == 0.0) continue;
        const double app = a(p, p), aqq = a(r, r);
        const double zeta = (aqq - app) / (2.0 * apq);
        const double t = (zeta >= 0.0 ? 1.0 : -1.0) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double cs = 1.0 / std::sqrt(1.0 + t * t);
        const double sn = cs * t;
        for (std::size_t i = 0; i < n; ++i) {
          const double aip = a(i, p), aiq = a(i, r);
          a(i, p) = cs * aip - sn * aiq;
          a(i, r) = sn * aip + cs * aiq;
        }
        for (std::size_t i = 0; i < n; ++i) {
          const double api = a(p, i), aqi = a(r, i);
          a(p, i) = cs * api - sn * aqi;
          a(r, i) = sn * api + cs * aqi;
        }
        for (std::size_t i = 0; i < n; ++i) {
          const double qip = q(i, p), qiq = q(i, r);
          q(i, p) = cs * qip - sn * qiq;
          q(i, r) = sn * qip + cs * qiq;
        }
      }
    }
  }
  SymEig out;
  out.q = std::move(q);
  out.lambda.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.lambda[i] = a(i, i);
  return out;
}

}  // namespace cmtf
