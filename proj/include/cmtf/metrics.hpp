#pragma once

#include <cstdint>
#include <vector>

#include "cmtf/model.hpp"

namespace cmtf {

// 100 * (1 - ||Z - Zhat||_F^2 / ||Z||_F^2); negative for very bad fits.
double fit_percent(const DenseMatrix& z, const DenseMatrix& zhat);
double fit_percent(const DenseTensor3& z, const DenseTensor3& zhat);
double fit_percent(const RaggedTensor& z, const RaggedTensor& zhat);
double fit_percent(const DataSet& z, const DataSet& zhat);

// Mean relative distance of the B_k from their closest common-profile
// representation P_k Delta_B; zero for exact PARAFAC2 structure. The best
// (P_k, Delta_B) pair is computed by alternating projection to tolerance
// 1e-10.
double parafac2_residual(const std::vector<DenseMatrix>& b);

struct FmsDec {
  double total = 0.0;
  std::vector<double> per_mode;
  std::vector<std::size_t> permutation;  // est column for each truth column
};

struct FmsResult {
  double total = 0.0;  // product over decompositions
  std::vector<FmsDec> dec;
};

// Factor match score with permutation matching (exhaustive up to rank 8,
// assignment matching above). Congruences use absolute values so that the
// sign indeterminacy of real-valued factors does not penalize the score.
FmsResult fms(const FactorSet& truth, const FactorSet& estimate);

// Maximum-score assignment for a square score matrix; returns the column
// chosen for each row. Exposed for reuse by the clustering-accuracy mapping.
std::vector<std::size_t> best_assignment(const DenseMatrix& score);

// k-means (20 restarts, seeded) on the first two columns of `a` (all columns
// behind the switch), clusters mapped to labels by best assignment; returns
// percent correctly labeled. Columns are scaled to unit norm first since
// factor columns carry an arbitrary scale.
double clustering_accuracy(const DenseMatrix& a, const std::vector<int>& labels, std::size_t k,
                           bool use_all_columns = false, std::uint64_t seed = 0);

}  // namespace cmtf
