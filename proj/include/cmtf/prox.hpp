#pragma once

#include <memory>
#include <string>

#include "cmtf/dense.hpp"
#include "cmtf/linalg.hpp"

namespace cmtf {

// Plug-and-play regularizers. Each kind maps to a proximal operator and a
// penalty value; new kinds can be added here without touching the solvers.
enum class RegKind {
  none,
  nonneg,
  ridge,
  nonneg_ridge,
  unit_l2_ball_columns,
  nonneg_unit_l2_ball_columns,
  graph_laplacian_smooth,
};

struct RegularizerSpec {
  RegKind kind = RegKind::none;
  double lambda = 0.0;
  // Symmetric PSD matrix for graph_laplacian_smooth; size must match the
  // row count of the regularized factor.
  std::shared_ptr<const DenseMatrix> laplacian;

  static RegularizerSpec none() { return {}; }
  static RegularizerSpec nonneg() { return {RegKind::nonneg, 0.0, nullptr}; }
  static RegularizerSpec ridge(double lambda) { return {RegKind::ridge, lambda, nullptr}; }
  static RegularizerSpec nonneg_ridge(double lambda) {
    return {RegKind::nonneg_ridge, lambda, nullptr};
  }
  static RegularizerSpec unit_ball() { return {RegKind::unit_l2_ball_columns, 0.0, nullptr}; }
  static RegularizerSpec nonneg_unit_ball() {
    return {RegKind::nonneg_unit_l2_ball_columns, 0.0, nullptr};
  }
  static RegularizerSpec graph_smooth(double lambda, DenseMatrix laplacian);
  // Second-difference Laplacian of a path graph on n nodes, the default
  // smoothness regularizer for 1-D signals.
  static RegularizerSpec graph_smooth_path(double lambda, std::size_t n);

  bool is_none() const { return kind == RegKind::none; }
  bool needs_nonneg_init() const {
    return kind == RegKind::nonneg || kind == RegKind::nonneg_ridge ||
           kind == RegKind::nonneg_unit_l2_ball_columns;
  }
  bool is_projection() const {
    return kind == RegKind::nonneg || kind == RegKind::unit_l2_ball_columns ||
           kind == RegKind::nonneg_unit_l2_ball_columns;
  }
  std::string describe() const;
};

DenseMatrix path_graph_laplacian(std::size_t n);

// argmin_U g(U) + (step/2) ||X - U||_F^2
DenseMatrix prox(const RegularizerSpec& spec, const DenseMatrix& x, double step);

// Reusable state for repeated graph-Laplacian proxes with varying step; the
// solve is O(n) for tridiagonal Laplacians and caches the dense Cholesky
// factor per (step, lambda) otherwise.
class ProxWorkspace {
 public:
  DenseMatrix apply(const RegularizerSpec& spec, const DenseMatrix& x, double step);

 private:
  double cached_step_ = -1.0;
  double cached_lambda_ = -1.0;
  const DenseMatrix* cached_l_ = nullptr;
  CholeskyFactor chol_;
  bool have_chol_ = false;
};

// g evaluated at X. Hard constraints return 0 when satisfied within tol and
// +infinity otherwise; callers that need plottable traces should use
// is_feasible() and report the flag separately.
double penalty_value(const RegularizerSpec& spec, const DenseMatrix& x);

bool is_feasible(const RegularizerSpec& spec, const DenseMatrix& x, double tol = 1e-9);

}  // namespace cmtf
