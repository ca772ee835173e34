#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cmtf/linalg.hpp"
#include "cmtf/model.hpp"

namespace cmtf {

struct AdmmSettings {
  double abs_tol = 1e-5;
  double rel_tol = 1e-5;
  int max_inner_iters = 5;
};

// Scales entering the feasibility tolerances for the split-variable setting
// (identity constraint maps, zero offset).
struct StopScales {
  std::size_t len_c = 0;   // total number of constraint entries
  std::size_t len_x = 0;   // total number of primal entries
  double ax_norm = 0.0;    // norm of the stacked primal-side images
  double bz_norm = 0.0;    // norm of the stacked split-side images
  double c_norm = 0.0;     // zero in the split-variable setting
  double dual_scale = 0.0; // norm of the stacked rho-weighted adjoint duals
  double abs_tol = 1e-5;
  double rel_tol = 1e-5;
};

bool stop_check(double r_norm, double s_norm, const StopScales& sc);

struct CouplingState {
  DenseMatrix delta;
  std::vector<DenseMatrix> mu;  // one dual per member, shaped like its residual
};

// Double-split state of the PARAFAC2 varying mode: orthonormal P_k, shared
// Delta_B and one dual per slice.
struct Parafac2State {
  std::vector<DenseMatrix> p;
  DenseMatrix delta_b;
  std::vector<DenseMatrix> mu_delta;
};

struct ModeAux {
  bool active = false;  // mode carries a split (it has a regularizer)
  FactorBlock z;
  FactorBlock mu;
};

struct SolverState {
  FactorSet factors;
  std::vector<std::vector<ModeAux>> aux;        // [dec][mode]
  std::vector<CouplingState> couplings;          // parallel to model.couplings
  std::vector<Parafac2State> par2;               // [dec], unused for non-PARAFAC2
  std::vector<std::vector<DenseMatrix>> gram;    // [dec][mode] cached X^T X (static modes)
  std::vector<std::vector<DenseMatrix>> bgram;   // [dec][k] cached B_k^T B_k
  std::vector<std::string> warnings;
};

// Builds the solver state around the given factors: grams computed, split and
// dual variables drawn uniform [0,1) (splits projected to feasibility),
// PARAFAC2 (P_k, Delta_B) seeded by a few projection rounds.
SolverState init_state(const ModelSpec& model, FactorSet factors, std::uint64_t seed);

// Redraws all inner (split/dual/coupling) variables; used to run without
// warm starts.
void randomize_inner_variables(const ModelSpec& model, SolverState& st, std::uint64_t seed);

void refresh_gram(const ModelSpec& model, SolverState& st, std::size_t dec, std::size_t mode);

struct ModeRef {
  std::size_t dec = 0;
  std::size_t mode = 0;
};

struct InnerStats {
  int iterations = 0;
  double r_norm = 0.0;
  double s_norm = 0.0;
};

// ADMM update for one mode or one coupled group of modes (all non-varying).
// `cpl`/`cst` are null for uncoupled modes. The group must list the coupling
// members in member order when coupled. Unregularized, uncoupled modes take
// the plain least-squares path.
InnerStats update_mode_group(const ModelSpec& model, SolverState& st,
                             const std::vector<ModeRef>& group, const CouplingSpec* cpl,
                             CouplingState* cst, const AdmmSettings& settings);

// ADMM update of the PARAFAC2 varying mode (double split: regularizer and
// the PARAFAC2 constraint set).
InnerStats update_parafac2_b_mode(const ModelSpec& model, SolverState& st, std::size_t dec,
                                  const AdmmSettings& settings);

// Alternating approximation of the weighted projection onto the PARAFAC2
// set: argmin_{P_k, Delta_B} sum_k rho_k/2 ||T_k - P_k Delta_B||_F^2 with
// orthonormal-column P_k. p/delta_b are warm-started in place.
void parafac2_projection(const std::vector<DenseMatrix>& t, const std::vector<double>& rho,
                         std::vector<DenseMatrix>& p, DenseMatrix& delta_b, double tol,
                         int max_rounds, bool weighted = true);

// Coupling-transform helpers shared with the driver and metrics.
DenseMatrix coupling_apply(const CouplingSpec& cpl, std::size_t member, const DenseMatrix& x);
DenseMatrix coupling_target(const CouplingSpec& cpl, std::size_t member,
                            const DenseMatrix& delta);

// Relative coupling residual sqrt(sum_i ||cpl_i(X_i) - target_i||^2) /
// sqrt(sum_i ||cpl_i(X_i)||^2).
double coupling_residual(const ModelSpec& model, const SolverState& st, std::size_t coupling);

// Trace-rule step sizes trace(Gram)/R for a mode: one entry per slice row
// for the PARAFAC2 slice-weight and varying modes, a single entry otherwise.
std::vector<double> mode_step_sizes(const ModelSpec& model, const SolverState& st,
                                    std::size_t dec, std::size_t mode);

}  // namespace cmtf
