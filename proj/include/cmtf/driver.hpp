#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "cmtf/admm.hpp"
#include "cmtf/model.hpp"

namespace cmtf {

struct OuterSettings {
  double outer_abs_tol = 1e-7;
  double outer_rel_tol = 1e-8;
  int max_outer_iters = 2000;
  int n_starts = 10;
  std::uint64_t seed = 0;
  double time_budget_seconds = 0.0;  // 0 disables the budget
  AdmmSettings inner;
  bool warm_starts = true;  // carry inner ADMM variables across outer iterations
};

struct IterRecord {
  int iter = 0;
  double f = 0.0;
  std::vector<double> fit;                // one per dataset
  std::vector<double> par2_residual;      // one per PARAFAC2 decomposition
  std::vector<double> coupling_residual;  // one per coupling
  double seconds = 0.0;  // wall clock since fit start; informational only
};

struct RunReport {
  std::vector<IterRecord> iters;
  double final_f = 0.0;
  bool diverged = false;
  bool hard_feasible = true;  // primal factors satisfy hard constraints at 1e-9
  std::uint64_t seed = 0;
  std::string mode_order;  // fixed update order, recorded for reproducibility
  int best_start = -1;                  // filled by multi_start_fit
  std::vector<double> start_final_f;    // filled by multi_start_fit
};

struct FitResult {
  RunReport report;
  FactorSet factors;
  SolverState state;
};

// Regularized sum of squared errors: sum_i w_i ||data_i - recon_i||_F^2 plus
// the penalty values of all mode regularizers evaluated at the factors. Hard
// constraints add 0 when feasible; the flag reports violations instead of an
// infinite value so traces stay plottable.
double function_value(const ModelSpec& model, const FactorSet& f, bool* hard_feasible = nullptr);

// One seeded fit: alternating optimization over modes (PARAFAC2 order B, A,
// C; CP modes in order; matrix both), coupled modes updated jointly, inner
// ADMM warm-started across outer iterations.
FitResult fit(const ModelSpec& model, const OuterSettings& settings);

// n_starts independent seeded fits; returns the one with the lowest final
// function value. Throws if every start diverged.
FitResult multi_start_fit(const ModelSpec& model, const OuterSettings& settings,
                          int n_threads = 1);

// Classic PARAFAC2-ALS (orthogonal Procrustes step + one CP-ALS sweep on the
// projected tensor per iteration), unconstrained, best of n_starts.
FactorSet parafac2_als_baseline(const RaggedTensor& x, std::size_t rank,
                                const OuterSettings& settings);

// Runs fn(i) for i in [0, n) on up to n_threads workers.
void parallel_for(std::size_t n, int n_threads, const std::function<void(std::size_t)>& fn);

}  // namespace cmtf
