#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "cmtf/dense.hpp"
#include "cmtf/prox.hpp"

namespace cmtf {

enum class DecompKind { matrix, cp, parafac2 };

// Number of modes per decomposition kind: matrix 2, cp 3, parafac2 3.
// PARAFAC2 modes are ordered (A, B, C) with B the varying mode.
inline std::size_t n_modes(DecompKind k) { return k == DecompKind::matrix ? 2 : 3; }

struct DecompositionSpec {
  DecompKind kind = DecompKind::matrix;
  std::size_t rank = 1;
  double weight = 1.0;
  std::vector<RegularizerSpec> mode_regs;  // one per mode

  static DecompositionSpec make(DecompKind kind, std::size_t rank, double weight = 1.0) {
    DecompositionSpec d;
    d.kind = kind;
    d.rank = rank;
    d.weight = weight;
    d.mode_regs.assign(n_modes(kind), RegularizerSpec::none());
    return d;
  }
};

// Linear coupling between factor matrices X_i of several decompositions and
// one shared generating variable Delta:
//   case 1 :      X_i = Delta            (no transforms)
//   case 2a:  H_i X_i = Delta            (transform in mode dimension)
//   case 2b:      X_i = H_i Delta        (transform in mode dimension)
//   case 3a:  X_i H_i = Delta            (transform in component dimension)
//   case 3b:      X_i = Delta H_i        (transform in component dimension)
enum class CouplingCase { c1, c2a, c2b, c3a, c3b };

std::string to_string(CouplingCase c);

struct CouplingMemberSpec {
  std::size_t dec = 0;
  std::size_t mode = 0;
  DenseMatrix transform;  // empty for case 1
};

struct CouplingSpec {
  CouplingCase kase = CouplingCase::c1;
  std::vector<CouplingMemberSpec> members;
  std::size_t delta_rows = 0, delta_cols = 0;

  // Selector built from identity columns, used for partially shared
  // components (cases 3a/3b): column j of the result is e_{cols[j]}.
  static DenseMatrix identity_selector(std::size_t n, const std::vector<std::size_t>& cols);
};

using DataSet = std::variant<DenseMatrix, DenseTensor3, RaggedTensor>;

struct ModelSpec {
  std::vector<DataSet> datasets;  // dataset i is modeled by decompositions[i]
  std::vector<DecompositionSpec> decompositions;
  std::vector<CouplingSpec> couplings;

  std::size_t n_decompositions() const { return decompositions.size(); }
  // Row count of the factor matrix (dec, mode); for the PARAFAC2 varying
  // mode this is the slice count K (each slice k contributing J_k rows).
  std::size_t mode_dim(std::size_t dec, std::size_t mode) const;
  std::vector<std::size_t> varying_dims(std::size_t dec) const;  // J_k of a PARAFAC2 dataset
  double data_norm_sq(std::size_t dec) const;
};

// Every dimensional or structural inconsistency, human-readable. Empty means
// the model is valid.
std::vector<std::string> validate(const ModelSpec& model);

// One factor: either a single matrix or (for the PARAFAC2 varying mode) a
// list of per-slice matrices.
struct FactorBlock {
  bool varying = false;
  DenseMatrix m;
  std::vector<DenseMatrix> slices;

  double norm_sq() const;
  std::size_t n_elements() const;
};

struct DecFactors {
  DecompKind kind = DecompKind::matrix;
  std::size_t rank = 0;
  std::vector<FactorBlock> modes;
};

struct FactorSet {
  std::vector<DecFactors> dec;
};

// Seeded random initialization: factor entries standard normal (uniform
// [0,1) for modes with a nonnegativity constraint), columns normalized to
// unit l2 norm. Deterministic for a fixed seed.
FactorSet random_init(const ModelSpec& model, std::uint64_t seed);

// Reconstruction of dataset `dec` from its factors.
DataSet reconstruct(const FactorSet& f, std::size_t dec);

}  // namespace cmtf
