#include "cmtf/prox.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "cmtf/kernels.hpp"

namespace cmtf {

namespace ker = cmtf::kernels;

DenseMatrix path_graph_laplacian(std::size_t n) {
  DenseMatrix l(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    double deg = 0.0;
    if (i > 0) {
      l(i, i - 1) = -1.0;
      deg += 1.0;
    }
    if (i + 1 < n) {
      l(i, i + 1) = -1.0;
      deg += 1.0;
    }
    l(i, i) = deg;
  }
  return l;
}

RegularizerSpec RegularizerSpec::graph_smooth(double lambda, DenseMatrix laplacian) {
  RegularizerSpec s;
  s.kind = RegKind::graph_laplacian_smooth;
  s.lambda = lambda;
  s.laplacian = std::make_shared<const DenseMatrix>(std::move(laplacian));
  return s;
}

RegularizerSpec RegularizerSpec::graph_smooth_path(double lambda, std::size_t n) {
  return graph_smooth(lambda, path_graph_laplacian(n));
}

std::string RegularizerSpec::describe() const {
  switch (kind) {
    case RegKind::none: return "none";
    case RegKind::nonneg: return "nonneg";
    case RegKind::ridge: return "ridge(" + std::to_string(lambda) + ")";
    case RegKind::nonneg_ridge: return "nonneg_ridge(" + std::to_string(lambda) + ")";
    case RegKind::unit_l2_ball_columns: return "unit_l2_ball";
    case RegKind::nonneg_unit_l2_ball_columns: return "nonneg_unit_l2_ball";
    case RegKind::graph_laplacian_smooth:
      return "graph_laplacian(" + std::to_string(lambda) + ")";
  }
  return "?";
}

namespace {

void project_columns_to_ball(DenseMatrix& x) {
  const std::size_t rows = x.rows(), cols = x.cols();
  for (std::size_t c = 0; c < cols; ++c) {
    double nsq = 0.0;
    for (std::size_t i = 0; i < rows; ++i) nsq += x(i, c) * x(i, c);
    if (nsq > 1.0) {
      const double inv = 1.0 / std::sqrt(nsq);
      for (std::size_t i = 0; i < rows; ++i) x(i, c) *= inv;
    }
  }
}

bool is_tridiagonal(const DenseMatrix& l) {
  for (std::size_t i = 0; i < l.rows(); ++i)
    for (std::size_t j = 0; j < l.cols(); ++j)
      if (l(i, j) != 0.0 && (i > j + 1 || j > i + 1)) return false;
  return true;
}

// Columnwise solve of (step*I + 2*lambda*L) u = step*x for tridiagonal L
// via the Thomas algorithm.
DenseMatrix graph_prox_tridiag(const DenseMatrix& l, const DenseMatrix& x, double step,
                               double lambda) {
  const std::size_t n = x.rows(), r = x.cols();
  std::vector<double> diag(n), sub(n > 0 ? n - 1 : 0), cp(n);
  for (std::size_t i = 0; i < n; ++i) diag[i] = step + 2.0 * lambda * l(i, i);
  for (std::size_t i = 0; i + 1 < n; ++i) sub[i] = 2.0 * lambda * l(i + 1, i);
  DenseMatrix out(n, r);
  std::vector<double> d(n);
  for (std::size_t c = 0; c < r; ++c) {
    // forward elimination
    double beta = diag[0];
    if (beta == 0.0) throw std::domain_error("graph prox: singular tridiagonal system");
    d[0] = step * x(0, c) / beta;
    for (std::size_t i = 1; i < n; ++i) {
      cp[i - 1] = sub[i - 1] / beta;
      beta = diag[i] - sub[i - 1] * cp[i - 1];
      if (beta == 0.0) throw std::domain_error("graph prox: singular tridiagonal system");
      d[i] = (step * x(i, c) - sub[i - 1] * d[i - 1]) / beta;
    }
    out(n - 1, c) = d[n - 1];
    for (std::size_t i = n - 1; i-- > 0;) out(i, c) = d[i] - cp[i] * out(i + 1, c);
  }
  return out;
}

}  // namespace

DenseMatrix ProxWorkspace::apply(const RegularizerSpec& spec, const DenseMatrix& x,
                                 double step) {
  if (!(step > 0.0)) throw std::invalid_argument("prox: step must be positive");
  switch (spec.kind) {
    case RegKind::none:
      return x;
    case RegKind::nonneg: {
      DenseMatrix out = x;
      ker::clamp_min_zero(out.data(), out.size());
      return out;
    }
    case RegKind::ridge: {
      DenseMatrix out = x;
      scale_inplace(out, step / (step + 2.0 * spec.lambda));
      return out;
    }
    case RegKind::nonneg_ridge: {
      DenseMatrix out = x;
      scale_inplace(out, step / (step + 2.0 * spec.lambda));
      ker::clamp_min_zero(out.data(), out.size());
      return out;
    }
    case RegKind::unit_l2_ball_columns: {
      DenseMatrix out = x;
      project_columns_to_ball(out);
      return out;
    }
    case RegKind::nonneg_unit_l2_ball_columns: {
      DenseMatrix out = x;
      ker::clamp_min_zero(out.data(), out.size());
      project_columns_to_ball(out);
      return out;
    }
    case RegKind::graph_laplacian_smooth: {
      const DenseMatrix& l = *spec.laplacian;
      if (l.rows() != x.rows())
        throw std::invalid_argument("prox: Laplacian size does not match factor rows");
      if (spec.lambda == 0.0) return x;
      if (is_tridiagonal(l)) return graph_prox_tridiag(l, x, step, spec.lambda);
      if (!have_chol_ || cached_step_ != step || cached_lambda_ != spec.lambda ||
          cached_l_ != &l) {
        DenseMatrix sys = l;
        scale_inplace(sys, 2.0 * spec.lambda);
        for (std::size_t i = 0; i < sys.rows(); ++i) sys(i, i) += step;
        chol_ = CholeskyFactor::compute(sys);
        have_chol_ = true;
        cached_step_ = step;
        cached_lambda_ = spec.lambda;
        cached_l_ = &l;
      }
      DenseMatrix rhs = x;
      scale_inplace(rhs, step);
      return chol_.solve(rhs);
    }
  }
  throw std::logic_error("prox: unknown regularizer kind");
}

DenseMatrix prox(const RegularizerSpec& spec, const DenseMatrix& x, double step) {
  ProxWorkspace ws;
  return ws.apply(spec, x, step);
}

bool is_feasible(const RegularizerSpec& spec, const DenseMatrix& x, double tol) {
  switch (spec.kind) {
    case RegKind::nonneg:
    case RegKind::nonneg_ridge:
      for (std::size_t i = 0; i < x.size(); ++i)
        if (x.data()[i] < -tol) return false;
      return true;
    case RegKind::unit_l2_ball_columns:
    case RegKind::nonneg_unit_l2_ball_columns: {
      if (spec.kind == RegKind::nonneg_unit_l2_ball_columns) {
        for (std::size_t i = 0; i < x.size(); ++i)
          if (x.data()[i] < -tol) return false;
      }
      for (std::size_t c = 0; c < x.cols(); ++c) {
        double nsq = 0.0;
        for (std::size_t i = 0; i < x.rows(); ++i) nsq += x(i, c) * x(i, c);
        if (std::sqrt(nsq) > 1.0 + tol) return false;
      }
      return true;
    }
    default:
      return true;
  }
}

double penalty_value(const RegularizerSpec& spec, const DenseMatrix& x) {
  switch (spec.kind) {
    case RegKind::none:
      return 0.0;
    case RegKind::ridge:
      return spec.lambda * fro_norm_sq(x);
    case RegKind::nonneg_ridge:
      return is_feasible(spec, x) ? spec.lambda * fro_norm_sq(x)
                                  : std::numeric_limits<double>::infinity();
    case RegKind::nonneg:
    case RegKind::unit_l2_ball_columns:
    case RegKind::nonneg_unit_l2_ball_columns:
      return is_feasible(spec, x) ? 0.0 : std::numeric_limits<double>::infinity();
    case RegKind::graph_laplacian_smooth: {
      const DenseMatrix& l = *spec.laplacian;
      if (l.rows() != x.rows())
        throw std::invalid_argument("penalty_value: Laplacian size mismatch");
      // lambda * sum_r x_r^T L x_r
      const DenseMatrix lx = matmul(l, x);
      double s = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) s += x.data()[i] * lx.data()[i];
      return spec.lambda * s;
    }
  }
  throw std::logic_error("penalty_value: unknown regularizer kind");
}

}  // namespace cmtf
