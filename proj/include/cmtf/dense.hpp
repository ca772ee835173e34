#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace cmtf {

// Dense double-precision matrix, row-major.
class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), v_(rows * cols, fill) {}

  static DenseMatrix identity(std::size_t n) {
    DenseMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return v_.size(); }
  bool empty() const { return v_.empty(); }

  double& operator()(std::size_t i, std::size_t j) { return v_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return v_[i * cols_ + j]; }

  double* row(std::size_t i) { return v_.data() + i * cols_; }
  const double* row(std::size_t i) const { return v_.data() + i * cols_; }

  double* data() { return v_.data(); }
  const double* data() const { return v_.data(); }

  void fill(double x) { v_.assign(v_.size(), x); }

  bool all_finite() const {
    for (double x : v_)
      if (!std::isfinite(x)) return false;
    return true;
  }

  DenseMatrix transposed() const {
    DenseMatrix t(cols_, rows_);
    for (std::size_t i = 0; i < rows_; ++i)
      for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
    return t;
  }

  bool same_shape(const DenseMatrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

 private:
  std::size_t rows_ = 0, cols_ = 0;
  std::vector<double> v_;
};

// Dense 3-way tensor. Stored as K frontal slices, each an I x J row-major
// block, so slice(k) is contiguous. Mode-n unfoldings follow the standard
// ordering where earlier modes vary fastest in the combined column index.
class DenseTensor3 {
 public:
  DenseTensor3() = default;
  DenseTensor3(std::size_t i, std::size_t j, std::size_t k)
      : i_(i), j_(j), k_(k), v_(i * j * k, 0.0) {}

  std::size_t dim0() const { return i_; }
  std::size_t dim1() const { return j_; }
  std::size_t dim2() const { return k_; }
  std::size_t size() const { return v_.size(); }

  double& operator()(std::size_t i, std::size_t j, std::size_t k) {
    return v_[(k * i_ + i) * j_ + j];
  }
  double operator()(std::size_t i, std::size_t j, std::size_t k) const {
    return v_[(k * i_ + i) * j_ + j];
  }

  // Pointer to row i of frontal slice k (length dim1).
  double* slice_row(std::size_t k, std::size_t i) { return v_.data() + (k * i_ + i) * j_; }
  const double* slice_row(std::size_t k, std::size_t i) const {
    return v_.data() + (k * i_ + i) * j_;
  }

  double* data() { return v_.data(); }
  const double* data() const { return v_.data(); }

  bool all_finite() const {
    for (double x : v_)
      if (!std::isfinite(x)) return false;
    return true;
  }

 private:
  std::size_t i_ = 0, j_ = 0, k_ = 0;
  std::vector<double> v_;
};

// K frontal slices of size I x J_k sharing the row count I.
class RaggedTensor {
 public:
  RaggedTensor() = default;
  explicit RaggedTensor(std::vector<DenseMatrix> slices) : slices_(std::move(slices)) {
    if (slices_.empty()) throw std::invalid_argument("RaggedTensor: needs at least one slice");
    const std::size_t i = slices_[0].rows();
    for (const auto& s : slices_)
      if (s.rows() != i) throw std::invalid_argument("RaggedTensor: slices must share row count");
  }

  std::size_t n_slices() const { return slices_.size(); }
  std::size_t rows() const { return slices_.empty() ? 0 : slices_[0].rows(); }
  const DenseMatrix& slice(std::size_t k) const { return slices_[k]; }
  DenseMatrix& slice(std::size_t k) { return slices_[k]; }
  const std::vector<DenseMatrix>& slices() const { return slices_; }
  std::vector<DenseMatrix>& slices() { return slices_; }

 private:
  std::vector<DenseMatrix> slices_;
};

}  // namespace cmtf
