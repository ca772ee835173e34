#pragma once

#include <cstdint>
#include <vector>

#include "cmtf/model.hpp"
#include "cmtf/rng.hpp"

namespace cmtf {

// Additive noise X + eta * N * (||X||_F / ||N||_F) with standard-normal N,
// followed by normalization to unit Frobenius norm. eta = 0 only normalizes.
DenseMatrix add_noise(const DenseMatrix& x, double eta, Rng& rng);
DenseTensor3 add_noise(const DenseTensor3& x, double eta, Rng& rng);
RaggedTensor add_noise(const RaggedTensor& x, double eta, Rng& rng);

struct GenOut {
  ModelSpec model;    // noisy, normalized datasets with decompositions and couplings
  FactorSet truth;    // clean generating factors
  std::vector<int> labels;                 // cluster labels (benchmark family 3)
  std::vector<std::size_t> shared_components;  // shared component ids (family 4)
  DenseMatrix clean_a;                     // unperturbed A (family 3)
};

// Family 1: nonnegative PARAFAC2 tensor (shifted B_k) coupled exactly in the
// slice-weight mode with a matrix (cp_third_dim == 0) or a CP tensor.
struct Family1Spec {
  std::size_t i = 40, j = 60, k = 50;
  std::size_t partner_cols = 60;     // second dimension of the partner dataset
  std::size_t cp_third_dim = 0;      // > 0 switches the partner to a CP tensor
  std::size_t rank = 4;
  double eta_x = 0.2, eta_y = 0.2;
};
GenOut gen_family1(const Family1Spec& spec, std::uint64_t seed);

// Family 3: evolving-network tensor (B_k deliberately violating the constant
// cross-product constraint) plus a static matrix sharing the clustered
// subject mode. a_noise perturbs A before the tensor is built; the matrix
// uses the clean A.
struct Family3Spec {
  double a_noise = 0.0;
  bool coupled = true;
  bool ridge = false;
  double ridge_lambda = 1e-4;
};
GenOut gen_family3(const Family3Spec& spec, std::uint64_t seed);

// Family 4: smooth PARAFAC2 components, partial coupling (2 of 3 components
// shared) between the slice-weight mode and the first CP mode, unit-ball and
// nonnegativity constraints, smoothness regularization on the varying mode.
struct Family4Spec {
  double eta = 0.5;
  double smooth_lambda = 0.01;
};
GenOut gen_family4(const Family4Spec& spec, std::uint64_t seed);

// Small noise-free instances of every coupled-model family, used for exact
// recovery checks: an uncoupled PARAFAC2, a PARAFAC2 coupled in the first
// mode with a matrix (case 1), and PARAFAC2 coupled in the slice-weight mode
// with a CP tensor under each linear-coupling case.
enum class RecoveryFamily {
  par2_uncoupled,
  par2_matrix_mode_a,
  par2_cp_case1,
  par2_cp_case2a,
  par2_cp_case2b,
  par2_cp_case3a,
  par2_cp_case3b,
};
GenOut gen_recovery(RecoveryFamily family, std::uint64_t seed);

}  // namespace cmtf
