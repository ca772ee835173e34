#include "cmtf/admm.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "cmtf/kernels.hpp"
#include "cmtf/rng.hpp"

namespace cmtf {

namespace ker = cmtf::kernels;

bool stop_check(double r_norm, double s_norm, const StopScales& sc) {
  const double eps_pri = std::sqrt(static_cast<double>(sc.len_c)) * sc.abs_tol +
                         sc.rel_tol * std::max({sc.ax_norm, sc.bz_norm, sc.c_norm});
  const double eps_dual =
      std::sqrt(static_cast<double>(sc.len_x)) * sc.abs_tol + sc.rel_tol * sc.dual_scale;
  return r_norm <= eps_pri && s_norm <= eps_dual;
}

DenseMatrix coupling_apply(const CouplingSpec& cpl, std::size_t member, const DenseMatrix& x) {
  const DenseMatrix& h = cpl.members[member].transform;
  switch (cpl.kase) {
    case CouplingCase::c1:
    case CouplingCase::c2b:
    case CouplingCase::c3b:
      return x;
    case CouplingCase::c2a:
      return matmul(h, x);
    case CouplingCase::c3a:
      return matmul(x, h);
  }
  throw std::logic_error("coupling_apply");
}

DenseMatrix coupling_target(const CouplingSpec& cpl, std::size_t member,
                            const DenseMatrix& delta) {
  const DenseMatrix& h = cpl.members[member].transform;
  switch (cpl.kase) {
    case CouplingCase::c1:
    case CouplingCase::c2a:
    case CouplingCase::c3a:
      return delta;
    case CouplingCase::c2b:
      return matmul(h, delta);
    case CouplingCase::c3b:
      return matmul(delta, h);
  }
  throw std::logic_error("coupling_target");
}

namespace {

// A_i^T applied to a matrix living in the constraint-residual space.
DenseMatrix coupling_adjoint(const CouplingSpec& cpl, std::size_t member, const DenseMatrix& v) {
  const DenseMatrix& h = cpl.members[member].transform;
  switch (cpl.kase) {
    case CouplingCase::c1:
    case CouplingCase::c2b:
    case CouplingCase::c3b:
      return v;
    case CouplingCase::c2a:
      return matmul_at_b(h, v);
    case CouplingCase::c3a:
      return matmul_a_bt(v, h);
  }
  throw std::logic_error("coupling_adjoint");
}

DenseMatrix uniform_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
  DenseMatrix m(rows, cols);
  for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform();
  return m;
}

double weighted_rowsq(const DenseMatrix& m, const std::vector<double>& rho) {
  double s = 0.0;
  for (std::size_t k = 0; k < m.rows(); ++k)
    s += rho[k] * rho[k] * ker::sumsq(m.row(k), m.cols());
  return s;
}

DenseMatrix row_diff(const DenseMatrix& a, const DenseMatrix& b) {
  DenseMatrix d = a;
  add_scaled_inplace(d, b, -1.0);
  return d;
}

}  // namespace

void refresh_gram(const ModelSpec& model, SolverState& st, std::size_t dec, std::size_t mode) {
  const DecompositionSpec& spec = model.decompositions[dec];
  if (spec.kind == DecompKind::parafac2 && mode == 1) {
    const auto& slices = st.factors.dec[dec].modes[1].slices;
    st.bgram[dec].resize(slices.size());
    for (std::size_t k = 0; k < slices.size(); ++k) st.bgram[dec][k] = gram(slices[k]);
    return;
  }
  st.gram[dec][mode] = gram(st.factors.dec[dec].modes[mode].m);
}

namespace {

void seed_parafac2_split(const ModelSpec& model, SolverState& st, std::size_t dec,
                         std::uint64_t seed) {
  const auto& bs = st.factors.dec[dec].modes[1].slices;
  const std::size_t kk = bs.size();
  const std::size_t r = model.decompositions[dec].rank;
  Parafac2State& ps = st.par2[dec];
  ps.p.resize(kk);
  ps.mu_delta.resize(kk);
  for (std::size_t k = 0; k < kk; ++k) {
    ps.p[k] = procrustes_orthogonal(bs[k]);
    Rng rng = Rng::fork(seed, {0xb0de, dec, k});
    ps.mu_delta[k] = uniform_matrix(bs[k].rows(), r, rng);
  }
  ps.delta_b = DenseMatrix(r, r);
  for (std::size_t k = 0; k < kk; ++k)
    add_scaled_inplace(ps.delta_b, matmul_at_b(ps.p[k], bs[k]), 1.0 / double(kk));
  std::vector<double> w(kk, 1.0);
  parafac2_projection(bs, w, ps.p, ps.delta_b, 1e-8, 5);
}

void draw_inner_variables(const ModelSpec& model, SolverState& st, std::uint64_t seed) {
  for (std::size_t d = 0; d < model.n_decompositions(); ++d) {
    const DecompositionSpec& spec = model.decompositions[d];
    for (std::size_t m = 0; m < n_modes(spec.kind); ++m) {
      ModeAux& aux = st.aux[d][m];
      aux.active = !spec.mode_regs[m].is_none();
      if (!aux.active) continue;
      const FactorBlock& x = st.factors.dec[d].modes[m];
      const RegularizerSpec& g = spec.mode_regs[m];
      aux.z.varying = aux.mu.varying = x.varying;
      if (x.varying) {
        aux.z.slices.resize(x.slices.size());
        aux.mu.slices.resize(x.slices.size());
        for (std::size_t k = 0; k < x.slices.size(); ++k) {
          Rng rng = Rng::fork(seed, {0x5a, d, m, k});
          aux.z.slices[k] = uniform_matrix(x.slices[k].rows(), x.slices[k].cols(), rng);
          if (g.is_projection()) aux.z.slices[k] = prox(g, aux.z.slices[k], 1.0);
          aux.mu.slices[k] = uniform_matrix(x.slices[k].rows(), x.slices[k].cols(), rng);
        }
      } else {
        Rng rng = Rng::fork(seed, {0x5a, d, m, 0xfffful});
        aux.z.m = uniform_matrix(x.m.rows(), x.m.cols(), rng);
        if (g.is_projection()) aux.z.m = prox(g, aux.z.m, 1.0);
        aux.mu.m = uniform_matrix(x.m.rows(), x.m.cols(), rng);
      }
    }
  }
  for (std::size_t c = 0; c < model.couplings.size(); ++c) {
    const CouplingSpec& cpl = model.couplings[c];
    CouplingState& cs = st.couplings[c];
    Rng rng = Rng::fork(seed, {0xde17a, c});
    cs.delta = uniform_matrix(cpl.delta_rows, cpl.delta_cols, rng);
    cs.mu.resize(cpl.members.size());
    for (std::size_t i = 0; i < cpl.members.size(); ++i) {
      const DenseMatrix& x = st.factors.dec[cpl.members[i].dec].modes[cpl.members[i].mode].m;
      const DenseMatrix img = coupling_apply(cpl, i, x);
      cs.mu[i] = uniform_matrix(img.rows(), img.cols(), rng);
    }
  }
}

}  // namespace

SolverState init_state(const ModelSpec& model, FactorSet factors, std::uint64_t seed) {
  SolverState st;
  st.factors = std::move(factors);
  const std::size_t nd = model.n_decompositions();
  st.aux.resize(nd);
  st.gram.resize(nd);
  st.bgram.resize(nd);
  st.par2.resize(nd);
  st.couplings.resize(model.couplings.size());
  for (std::size_t d = 0; d < nd; ++d) {
    const DecompositionSpec& spec = model.decompositions[d];
    st.aux[d].resize(n_modes(spec.kind));
    st.gram[d].resize(n_modes(spec.kind));
    for (std::size_t m = 0; m < n_modes(spec.kind); ++m) refresh_gram(model, st, d, m);
  }
  draw_inner_variables(model, st, seed);
  for (std::size_t d = 0; d < nd; ++d)
    if (model.decompositions[d].kind == DecompKind::parafac2)
      seed_parafac2_split(model, st, d, seed);
  return st;
}

void randomize_inner_variables(const ModelSpec& model, SolverState& st, std::uint64_t seed) {
  draw_inner_variables(model, st, seed);
  for (std::size_t d = 0; d < model.n_decompositions(); ++d)
    if (model.decompositions[d].kind == DecompKind::parafac2)
      seed_parafac2_split(model, st, d, seed);
}

void parafac2_projection(const std::vector<DenseMatrix>& t, const std::vector<double>& rho,
                         std::vector<DenseMatrix>& p, DenseMatrix& delta_b, double tol,
                         int max_rounds, bool weighted) {
  const std::size_t kk = t.size();
  double rho_sum = 0.0;
  for (std::size_t k = 0; k < kk; ++k) rho_sum += weighted ? rho[k] : 1.0;
  if (rho_sum <= 0.0) rho_sum = 1.0;
  for (int round = 0; round < max_rounds; ++round) {
    for (std::size_t k = 0; k < kk; ++k) {
      p[k] = procrustes_orthogonal(matmul_a_bt(t[k], delta_b));
    }
    DenseMatrix next(delta_b.rows(), delta_b.cols());
    for (std::size_t k = 0; k < kk; ++k) {
      const double w = (weighted ? rho[k] : 1.0) / rho_sum;
      add_scaled_inplace(next, matmul_at_b(p[k], t[k]), w);
    }
    const double change = fro_norm_diff(next, delta_b);
    const double base = fro_norm(delta_b);
    delta_b = std::move(next);
    if (change <= tol * std::max(base, 1e-30)) break;
  }
}

// ---------------------------------------------------------------------------
// Coupled / uncoupled updates of non-varying modes
// ---------------------------------------------------------------------------

namespace {

struct MemberCtx {
  std::size_t dec = 0, mode = 0;
  bool rowwise = false;  // PARAFAC2 C mode
  double w = 1.0;
  std::size_t rows = 0, rank = 0;
  DenseMatrix rhs0;                    // w * data-term RHS
  DenseMatrix gram_static;             // static modes
  std::vector<DenseMatrix> gram_rows;  // rowwise
  std::vector<double> rho_rows;        // per-row steps (static: constant)
  double rho = 0.0;                    // scalar step
  const RegularizerSpec* reg = nullptr;
  bool regularized = false;

  std::vector<CholeskyFactor> row_chol;
  std::optional<CholeskyFactor> chol;
  std::optional<CholeskyFactor> big_chol;  // rowwise case 2a
  std::optional<SymEig> eig_gram;          // static case 2a
  std::optional<SymEig> eig_hth;           // static case 2a
  ProxWorkspace prox_ws;
};

double gram_trace(const DenseMatrix& g) {
  double t = 0.0;
  for (std::size_t i = 0; i < g.rows(); ++i) t += g(i, i);
  return t;
}

// PARAFAC2 A-mode data terms: Gram = sum_k D_k B_k^T B_k D_k and
// RHS = w * sum_k X_k B_k D_k.
void par2_a_terms(const ModelSpec& model, const SolverState& st, std::size_t d,
                  DenseMatrix& g, DenseMatrix& rhs0) {
  const auto& rt = std::get<RaggedTensor>(model.datasets[d]);
  const DenseMatrix& c = st.factors.dec[d].modes[2].m;
  const auto& bs = st.factors.dec[d].modes[1].slices;
  const std::size_t r = c.cols();
  g = DenseMatrix(r, r);
  rhs0 = DenseMatrix(rt.rows(), r);
  const double w = model.decompositions[d].weight;
  for (std::size_t k = 0; k < rt.n_slices(); ++k) {
    const DenseMatrix& bg = st.bgram[d][k];
    const double* ck = c.row(k);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < r; ++j) g(i, j) += bg(i, j) * ck[i] * ck[j];
    DenseMatrix t = matmul(rt.slice(k), bs[k]);  // I x R
    for (std::size_t i = 0; i < t.rows(); ++i)
      for (std::size_t j = 0; j < r; ++j) rhs0(i, j) += w * t(i, j) * ck[j];
  }
}

// PARAFAC2 C-mode data terms: per-row Grams A^T A .* B_k^T B_k and
// RHS(k,:) = w * diag(A^T X_k B_k).
void par2_c_terms(const ModelSpec& model, const SolverState& st, std::size_t d,
                  std::vector<DenseMatrix>& grams, DenseMatrix& rhs0) {
  const auto& rt = std::get<RaggedTensor>(model.datasets[d]);
  const DenseMatrix& a = st.factors.dec[d].modes[0].m;
  const auto& bs = st.factors.dec[d].modes[1].slices;
  const DenseMatrix& ata = st.gram[d][0];
  const std::size_t r = a.cols();
  const double w = model.decompositions[d].weight;
  grams.resize(rt.n_slices());
  rhs0 = DenseMatrix(rt.n_slices(), r);
  for (std::size_t k = 0; k < rt.n_slices(); ++k) {
    grams[k] = ata;
    ker::hadamard(grams[k].data(), st.bgram[d][k].data(), grams[k].data(), grams[k].size());
    const DenseMatrix t = matmul(rt.slice(k), bs[k]);  // I x R
    for (std::size_t j = 0; j < r; ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < a.rows(); ++i) s += a(i, j) * t(i, j);
      rhs0(k, j) = w * s;
    }
  }
}

void static_terms(const ModelSpec& model, const SolverState& st, std::size_t d, std::size_t m,
                  DenseMatrix& g, DenseMatrix& rhs0) {
  const DecompositionSpec& spec = model.decompositions[d];
  const double w = spec.weight;
  if (spec.kind == DecompKind::matrix) {
    const auto& y = std::get<DenseMatrix>(model.datasets[d]);
    if (m == 0) {
      g = st.gram[d][1];
      rhs0 = matmul(y, st.factors.dec[d].modes[1].m);
    } else {
      g = st.gram[d][0];
      rhs0 = matmul_at_b(y, st.factors.dec[d].modes[0].m);
    }
    scale_inplace(rhs0, w);
    return;
  }
  if (spec.kind == DecompKind::cp) {
    const auto& y = std::get<DenseTensor3>(model.datasets[d]);
    const std::size_t o1 = (m == 0) ? 1 : 0;
    const std::size_t o2 = (m == 2) ? 1 : 2;
    g = st.gram[d][o1];
    DenseMatrix g2 = st.gram[d][o2];
    ker::hadamard(g.data(), g2.data(), g.data(), g.size());
    rhs0 = mttkrp(y, st.factors.dec[d].modes[o1].m, st.factors.dec[d].modes[o2].m,
                  static_cast<int>(m));
    scale_inplace(rhs0, w);
    return;
  }
  // PARAFAC2 mode 0
  par2_a_terms(model, st, d, g, rhs0);
}

CholeskyFactor robust_cholesky(DenseMatrix s, std::vector<std::string>* warnings,
                               const char* what) {
  try {
    return CholeskyFactor::compute(s);
  } catch (const std::domain_error&) {
    const double jitter = 1e-12 * std::max(gram_trace(s), 1.0);
    for (std::size_t i = 0; i < s.rows(); ++i) s(i, i) += jitter;
    if (warnings) warnings->push_back(std::string(what) + ": added jitter to singular system");
    return CholeskyFactor::compute(s);
  }
}

}  // namespace

InnerStats update_mode_group(const ModelSpec& model, SolverState& st,
                             const std::vector<ModeRef>& group, const CouplingSpec* cpl,
                             CouplingState* cst, const AdmmSettings& settings) {
  const std::size_t n = group.size();
  if (n == 0) return {};
  if (cpl && cpl->members.size() != n)
    throw std::invalid_argument("update_mode_group: group must list all coupling members");

  std::vector<MemberCtx> ctx(n);
  for (std::size_t i = 0; i < n; ++i) {
    MemberCtx& mc = ctx[i];
    mc.dec = group[i].dec;
    mc.mode = group[i].mode;
    const DecompositionSpec& spec = model.decompositions[mc.dec];
    if (spec.kind == DecompKind::parafac2 && mc.mode == 1)
      throw std::invalid_argument("update_mode_group: varying mode has its own update");
    mc.rowwise = spec.kind == DecompKind::parafac2 && mc.mode == 2;
    mc.w = spec.weight;
    mc.rank = spec.rank;
    mc.rows = model.mode_dim(mc.dec, mc.mode);
    mc.reg = &spec.mode_regs[mc.mode];
    mc.regularized = !mc.reg->is_none();
    if (mc.rowwise) {
      par2_c_terms(model, st, mc.dec, mc.gram_rows, mc.rhs0);
      mc.rho_rows.resize(mc.rows);
      double tsum = 0.0;
      for (std::size_t k = 0; k < mc.rows; ++k) {
        const double t = gram_trace(mc.gram_rows[k]);
        tsum += t;
        mc.rho_rows[k] = t / double(mc.rank);
        if (!(mc.rho_rows[k] > 0.0)) {
          mc.rho_rows[k] = 1.0;
          st.warnings.push_back("zero Gram trace in C-mode row step size; using 1");
        }
      }
      mc.rho = tsum / double(mc.rank * mc.rows);  // scalar step for case 2a
      if (!(mc.rho > 0.0)) mc.rho = 1.0;
    } else {
      static_terms(model, st, mc.dec, mc.mode, mc.gram_static, mc.rhs0);
      mc.rho = gram_trace(mc.gram_static) / double(mc.rank);
      if (!(mc.rho > 0.0)) {
        mc.rho = 1.0;
        st.warnings.push_back("zero Gram trace in mode step size; using 1");
      }
      mc.rho_rows.assign(mc.rows, mc.rho);
    }
  }

  // Plain least squares when nothing couples and nothing regularizes.
  if (!cpl && n == 1 && !ctx[0].regularized) {
    MemberCtx& mc = ctx[0];
    if (mc.rowwise) {
      DenseMatrix& x = st.factors.dec[mc.dec].modes[mc.mode].m;
      for (std::size_t k = 0; k < mc.rows; ++k) {
        DenseMatrix s = mc.gram_rows[k];
        scale_inplace(s, mc.w);
        CholeskyFactor f = robust_cholesky(std::move(s), &st.warnings, "C-mode LS");
        std::vector<double> row(mc.rhs0.row(k), mc.rhs0.row(k) + mc.rank);
        f.solve_row_inplace(row.data());
        std::copy(row.begin(), row.end(), x.row(k));
      }
    } else {
      DenseMatrix s = mc.gram_static;
      scale_inplace(s, mc.w);
      CholeskyFactor f = robust_cholesky(std::move(s), &st.warnings, "mode LS");
      st.factors.dec[mc.dec].modes[mc.mode].m = f.solve_rows(mc.rhs0);
    }
    return {1, 0.0, 0.0};
  }

  const CouplingCase kase = cpl ? cpl->kase : CouplingCase::c1;
  const bool aug_cpl_identity =
      cpl && (kase == CouplingCase::c1 || kase == CouplingCase::c2b || kase == CouplingCase::c3b);

  // Precompute the per-member primal system factorizations (fixed during the
  // inner loop since Grams and step sizes are fixed).
  for (std::size_t i = 0; i < n; ++i) {
    MemberCtx& mc = ctx[i];
    const DenseMatrix* h = cpl ? &cpl->members[i].transform : nullptr;
    const double aug_count = (mc.regularized ? 1.0 : 0.0) + (aug_cpl_identity ? 1.0 : 0.0);
    if (!mc.rowwise) {
      if (cpl && kase == CouplingCase::c2a) {
        DenseMatrix gaug = mc.gram_static;
        scale_inplace(gaug, mc.w);
        if (mc.regularized)
          for (std::size_t r = 0; r < mc.rank; ++r) gaug(r, r) += 0.5 * mc.rho;
        mc.eig_gram = sym_eig(gaug);
        DenseMatrix hth = matmul_at_b(*h, *h);
        scale_inplace(hth, 0.5 * mc.rho);
        mc.eig_hth = sym_eig(hth);
      } else {
        DenseMatrix s = mc.gram_static;
        scale_inplace(s, mc.w);
        for (std::size_t r = 0; r < mc.rank; ++r) s(r, r) += 0.5 * mc.rho * aug_count;
        if (cpl && kase == CouplingCase::c3a) {
          const DenseMatrix hht = matmul_a_bt(*h, *h);
          for (std::size_t a = 0; a < mc.rank; ++a)
            for (std::size_t b = 0; b < mc.rank; ++b) s(a, b) += 0.5 * mc.rho * hht(a, b);
        }
        mc.chol = robust_cholesky(std::move(s), &st.warnings, "mode system");
      }
    } else {
      if (cpl && kase == CouplingCase::c2a) {
        // vec(C^T) system of size K*R with blocks
        //   delta_kl * (w G_k + (rho/2) reg I) + (rho/2) (H^T H)_kl I
        const std::size_t kr = mc.rows * mc.rank;
        DenseMatrix big(kr, kr);
        const DenseMatrix hth = matmul_at_b(*h, *h);
        for (std::size_t k = 0; k < mc.rows; ++k) {
          for (std::size_t a = 0; a < mc.rank; ++a) {
            for (std::size_t b = 0; b < mc.rank; ++b)
              big(k * mc.rank + a, k * mc.rank + b) = mc.w * mc.gram_rows[k](a, b);
            if (mc.regularized) big(k * mc.rank + a, k * mc.rank + a) += 0.5 * mc.rho;
          }
          for (std::size_t l = 0; l < mc.rows; ++l) {
            const double v = 0.5 * mc.rho * hth(k, l);
            if (v != 0.0)
              for (std::size_t a = 0; a < mc.rank; ++a) big(k * mc.rank + a, l * mc.rank + a) += v;
          }
        }
        mc.big_chol = robust_cholesky(std::move(big), &st.warnings, "C-mode 2a system");
      } else {
        mc.row_chol.reserve(mc.rows);
        DenseMatrix hht;
        if (cpl && kase == CouplingCase::c3a) hht = matmul_a_bt(*h, *h);
        for (std::size_t k = 0; k < mc.rows; ++k) {
          DenseMatrix s = mc.gram_rows[k];
          scale_inplace(s, mc.w);
          for (std::size_t r = 0; r < mc.rank; ++r) s(r, r) += 0.5 * mc.rho_rows[k] * aug_count;
          if (cpl && kase == CouplingCase::c3a)
            for (std::size_t a = 0; a < mc.rank; ++a)
              for (std::size_t b = 0; b < mc.rank; ++b)
                s(a, b) += 0.5 * mc.rho_rows[k] * hht(a, b);
          mc.row_chol.push_back(robust_cholesky(std::move(s), &st.warnings, "C-mode system"));
        }
      }
    }
  }

  // Delta-update factorizations for cases 2b / 3b (fixed during inner loop).
  std::optional<CholeskyFactor> delta_chol_2b;
  std::vector<CholeskyFactor> delta_chol_3b;
  if (cpl && kase == CouplingCase::c2b) {
    DenseMatrix s(cpl->delta_rows, cpl->delta_rows);
    for (std::size_t i = 0; i < n; ++i) {
      const DenseMatrix& h = cpl->members[i].transform;
      for (std::size_t a = 0; a < s.rows(); ++a)
        for (std::size_t b = 0; b < s.cols(); ++b) {
          double acc = 0.0;
          for (std::size_t k = 0; k < h.rows(); ++k)
            acc += ctx[i].rho_rows[k] * h(k, a) * h(k, b);
          s(a, b) += acc;
        }
    }
    delta_chol_2b = robust_cholesky(std::move(s), &st.warnings, "coupling 2b system");
  }
  if (cpl && kase == CouplingCase::c3b) {
    delta_chol_3b.reserve(cpl->delta_rows);
    for (std::size_t k = 0; k < cpl->delta_rows; ++k) {
      DenseMatrix s(cpl->delta_cols, cpl->delta_cols);
      for (std::size_t i = 0; i < n; ++i) {
        const DenseMatrix hht = matmul_a_bt(cpl->members[i].transform,
                                            cpl->members[i].transform);
        for (std::size_t a = 0; a < s.rows(); ++a)
          for (std::size_t b = 0; b < s.cols(); ++b)
            s(a, b) += ctx[i].rho_rows[k] * hht(a, b);
      }
      delta_chol_3b.push_back(robust_cholesky(std::move(s), &st.warnings, "coupling 3b system"));
    }
  }

  InnerStats stats;
  std::vector<DenseMatrix> prev_target(n);
  if (cpl)
    for (std::size_t i = 0; i < n; ++i) prev_target[i] = coupling_target(*cpl, i, cst->delta);

  for (int iter = 0; iter < settings.max_inner_iters; ++iter) {
    // 1. primal solves
    for (std::size_t i = 0; i < n; ++i) {
      MemberCtx& mc = ctx[i];
      DenseMatrix& x = st.factors.dec[mc.dec].modes[mc.mode].m;
      const ModeAux& aux = st.aux[mc.dec][mc.mode];
      DenseMatrix rhs = mc.rhs0;
      if (mc.regularized) {
        for (std::size_t k = 0; k < mc.rows; ++k) {
          const double c = 0.5 * mc.rho_rows[k];
          for (std::size_t r = 0; r < mc.rank; ++r)
            rhs(k, r) += c * (aux.z.m(k, r) - aux.mu.m(k, r));
        }
      }
      if (cpl) {
        DenseMatrix dterm = coupling_target(*cpl, i, cst->delta);
        add_scaled_inplace(dterm, cst->mu[i], -1.0);
        dterm = coupling_adjoint(*cpl, i, dterm);
        if (kase == CouplingCase::c2a) {
          // scalar rho
          add_scaled_inplace(rhs, dterm, 0.5 * mc.rho);
        } else {
          for (std::size_t k = 0; k < mc.rows; ++k)
            ker::axpy(0.5 * mc.rho_rows[k], dterm.row(k), rhs.row(k), mc.rank);
        }
      }
      if (!mc.rowwise) {
        if (mc.eig_gram) {
          // Sylvester solve via the two eigenbases (case 2a)
          const SymEig& eg = *mc.eig_gram;
          const SymEig& eh = *mc.eig_hth;
          DenseMatrix t = matmul_at_b(eh.q, matmul(rhs, eg.q));
          for (std::size_t a = 0; a < t.rows(); ++a)
            for (std::size_t b = 0; b < t.cols(); ++b) {
              const double den = eh.lambda[a] + eg.lambda[b];
              t(a, b) = den > 1e-300 ? t(a, b) / den : 0.0;
            }
          x = matmul(eh.q, matmul_a_bt(t, eg.q));
        } else {
          x = mc.chol->solve_rows(rhs);
        }
      } else {
        if (mc.big_chol) {
          // stack rows of rhs into a KR vector
          DenseMatrix v(mc.rows * mc.rank, 1);
          for (std::size_t k = 0; k < mc.rows; ++k)
            for (std::size_t r = 0; r < mc.rank; ++r) v(k * mc.rank + r, 0) = rhs(k, r);
          DenseMatrix sol = mc.big_chol->solve(v);
          for (std::size_t k = 0; k < mc.rows; ++k)
            for (std::size_t r = 0; r < mc.rank; ++r) x(k, r) = sol(k * mc.rank + r, 0);
        } else {
          for (std::size_t k = 0; k < mc.rows; ++k) {
            std::vector<double> row(rhs.row(k), rhs.row(k) + mc.rank);
            mc.row_chol[k].solve_row_inplace(row.data());
            std::copy(row.begin(), row.end(), x.row(k));
          }
        }
      }
    }

    // 2. shared-variable update
    if (cpl) {
      DenseMatrix& delta = cst->delta;
      switch (kase) {
        case CouplingCase::c1:
        case CouplingCase::c3a: {
          DenseMatrix num(delta.rows(), delta.cols());
          std::vector<double> den(delta.rows(), 0.0);
          for (std::size_t i = 0; i < n; ++i) {
            const DenseMatrix img =
                coupling_apply(*cpl, i, st.factors.dec[ctx[i].dec].modes[ctx[i].mode].m);
            for (std::size_t k = 0; k < delta.rows(); ++k) {
              const double rk = ctx[i].rho_rows[k];
              den[k] += rk;
              for (std::size_t r = 0; r < delta.cols(); ++r)
                num(k, r) += rk * (img(k, r) + cst->mu[i](k, r));
            }
          }
          for (std::size_t k = 0; k < delta.rows(); ++k)
            for (std::size_t r = 0; r < delta.cols(); ++r) delta(k, r) = num(k, r) / den[k];
          break;
        }
        case CouplingCase::c2a: {
          DenseMatrix num(delta.rows(), delta.cols());
          double den = 0.0;
          for (std::size_t i = 0; i < n; ++i) {
            DenseMatrix img =
                coupling_apply(*cpl, i, st.factors.dec[ctx[i].dec].modes[ctx[i].mode].m);
            add_scaled_inplace(img, cst->mu[i], 1.0);
            add_scaled_inplace(num, img, ctx[i].rho);
            den += ctx[i].rho;
          }
          scale_inplace(num, 1.0 / den);
          delta = std::move(num);
          break;
        }
        case CouplingCase::c2b: {
          DenseMatrix rhs(delta.rows(), delta.cols());
          for (std::size_t i = 0; i < n; ++i) {
            const DenseMatrix& h = cpl->members[i].transform;
            const DenseMatrix& x = st.factors.dec[ctx[i].dec].modes[ctx[i].mode].m;
            // H^T P (X + mu) with P = diag(rho rows)
            DenseMatrix t = x;
            add_scaled_inplace(t, cst->mu[i], 1.0);
            for (std::size_t k = 0; k < t.rows(); ++k)
              ker::scale(t.row(k), ctx[i].rho_rows[k], t.cols());
            add_scaled_inplace(rhs, matmul_at_b(h, t), 1.0);
          }
          delta = delta_chol_2b->solve(rhs);
          break;
        }
        case CouplingCase::c3b: {
          for (std::size_t k = 0; k < delta.rows(); ++k) {
            std::vector<double> rhs(delta.cols(), 0.0);
            for (std::size_t i = 0; i < n; ++i) {
              const DenseMatrix& h = cpl->members[i].transform;
              const DenseMatrix& x = st.factors.dec[ctx[i].dec].modes[ctx[i].mode].m;
              const double rk = ctx[i].rho_rows[k];
              // rho_k (x(k,:) + mu(k,:)) H^T
              for (std::size_t a = 0; a < delta.cols(); ++a) {
                double acc = 0.0;
                for (std::size_t r = 0; r < x.cols(); ++r)
                  acc += (x(k, r) + cst->mu[i](k, r)) * h(a, r);
                rhs[a] += rk * acc;
              }
            }
            delta_chol_3b[k].solve_row_inplace(rhs.data());
            std::copy(rhs.begin(), rhs.end(), delta.row(k));
          }
          break;
        }
      }
    }

    // 3. split updates, duals and residual bookkeeping
    double r_sq = 0.0, s_sq = 0.0, ax_sq = 0.0, bz_sq = 0.0, dual_sq = 0.0;
    std::size_t len_c = 0, len_x = 0;
    for (std::size_t i = 0; i < n; ++i) {
      MemberCtx& mc = ctx[i];
      DenseMatrix& x = st.factors.dec[mc.dec].modes[mc.mode].m;
      ModeAux& aux = st.aux[mc.dec][mc.mode];
      len_x += x.size();
      if (mc.regularized) {
        const double step = mc.rowwise ? *std::max_element(mc.rho_rows.begin(), mc.rho_rows.end())
                                       : mc.rho;
        DenseMatrix zin = x;
        add_scaled_inplace(zin, aux.mu.m, 1.0);
        DenseMatrix znew = mc.prox_ws.apply(*mc.reg, zin, step);
        s_sq += weighted_rowsq(row_diff(znew, aux.z.m), mc.rho_rows);
        aux.z.m = std::move(znew);
        const DenseMatrix rz = row_diff(x, aux.z.m);
        r_sq += fro_norm_sq(rz);
        add_scaled_inplace(aux.mu.m, rz, 1.0);
        len_c += x.size();
        ax_sq += fro_norm_sq(x);
        bz_sq += fro_norm_sq(aux.z.m);
        dual_sq += weighted_rowsq(aux.mu.m, mc.rho_rows);
      }
      if (cpl) {
        const DenseMatrix img = coupling_apply(*cpl, i, x);
        const DenseMatrix target = coupling_target(*cpl, i, cst->delta);
        const DenseMatrix rc = row_diff(img, target);
        r_sq += fro_norm_sq(rc);
        add_scaled_inplace(cst->mu[i], rc, 1.0);
        len_c += img.size();
        ax_sq += fro_norm_sq(img);
        bz_sq += fro_norm_sq(target);
        // dual residual: rho A^T (target change)
        DenseMatrix tchange = row_diff(target, prev_target[i]);
        tchange = coupling_adjoint(*cpl, i, tchange);
        const DenseMatrix adj_mu = coupling_adjoint(*cpl, i, cst->mu[i]);
        if (kase == CouplingCase::c2a) {
          s_sq += mc.rho * mc.rho * fro_norm_sq(tchange);
          dual_sq += mc.rho * mc.rho * fro_norm_sq(adj_mu);
        } else {
          s_sq += weighted_rowsq(tchange, mc.rho_rows);
          dual_sq += weighted_rowsq(adj_mu, mc.rho_rows);
        }
        prev_target[i] = target;
      }
    }

    stats.iterations = iter + 1;
    stats.r_norm = std::sqrt(r_sq);
    stats.s_norm = std::sqrt(s_sq);
    StopScales sc;
    sc.len_c = len_c;
    sc.len_x = len_x;
    sc.ax_norm = std::sqrt(ax_sq);
    sc.bz_norm = std::sqrt(bz_sq);
    sc.c_norm = 0.0;
    sc.dual_scale = std::sqrt(dual_sq);
    sc.abs_tol = settings.abs_tol;
    sc.rel_tol = settings.rel_tol;
    if (stop_check(stats.r_norm, stats.s_norm, sc)) break;
  }
  return stats;
}

InnerStats update_parafac2_b_mode(const ModelSpec& model, SolverState& st, std::size_t dec,
                                  const AdmmSettings& settings) {
  const DecompositionSpec& spec = model.decompositions[dec];
  if (spec.kind != DecompKind::parafac2)
    throw std::invalid_argument("update_parafac2_b_mode: not a PARAFAC2 decomposition");
  const auto& rt = std::get<RaggedTensor>(model.datasets[dec]);
  const DenseMatrix& a = st.factors.dec[dec].modes[0].m;
  const DenseMatrix& c = st.factors.dec[dec].modes[2].m;
  auto& bs = st.factors.dec[dec].modes[1].slices;
  Parafac2State& ps = st.par2[dec];
  ModeAux& aux = st.aux[dec][1];
  const RegularizerSpec& reg = spec.mode_regs[1];
  const bool regularized = !reg.is_none();
  const std::size_t kk = rt.n_slices();
  const std::size_t r = spec.rank;
  const double w = spec.weight;
  const DenseMatrix& ata = st.gram[dec][0];

  // Per-slice systems are fixed during the inner loop.
  std::vector<CholeskyFactor> chols;
  chols.reserve(kk);
  std::vector<double> rho(kk);
  std::vector<DenseMatrix> rhs0(kk);
  const double aug_count = 1.0 + (regularized ? 1.0 : 0.0);
  for (std::size_t k = 0; k < kk; ++k) {
    DenseMatrix g(r, r);
    const double* ck = c.row(k);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < r; ++j) g(i, j) = ata(i, j) * ck[i] * ck[j];
    rho[k] = gram_trace(g) / double(r);
    if (!(rho[k] > 0.0)) {
      rho[k] = 1.0;
      st.warnings.push_back("zero Gram trace in B-mode step size; using 1");
    }
    // rhs0 = w X_k^T A D_k
    DenseMatrix ad = a;
    for (std::size_t i = 0; i < ad.rows(); ++i)
      for (std::size_t j = 0; j < r; ++j) ad(i, j) *= ck[j];
    rhs0[k] = matmul_at_b(rt.slice(k), ad);
    scale_inplace(rhs0[k], w);
    scale_inplace(g, w);
    for (std::size_t i = 0; i < r; ++i) g(i, i) += 0.5 * rho[k] * aug_count;
    chols.push_back(robust_cholesky(std::move(g), &st.warnings, "B-mode system"));
  }

  InnerStats stats;
  std::vector<DenseMatrix> prev_target(kk);
  for (std::size_t k = 0; k < kk; ++k) prev_target[k] = matmul(ps.p[k], ps.delta_b);
  std::vector<DenseMatrix> tproj(kk);
  ProxWorkspace prox_ws;

  for (int iter = 0; iter < settings.max_inner_iters; ++iter) {
    // (i) primal solves per slice
    for (std::size_t k = 0; k < kk; ++k) {
      DenseMatrix rhs = rhs0[k];
      if (regularized) {
        DenseMatrix t = row_diff(aux.z.slices[k], aux.mu.slices[k]);
        add_scaled_inplace(rhs, t, 0.5 * rho[k]);
      }
      DenseMatrix t = matmul(ps.p[k], ps.delta_b);
      add_scaled_inplace(t, ps.mu_delta[k], -1.0);
      add_scaled_inplace(rhs, t, 0.5 * rho[k]);
      bs[k] = chols[k].solve_rows(rhs);
    }

    // (ii) approximate projection onto the PARAFAC2 set
    for (std::size_t k = 0; k < kk; ++k) {
      tproj[k] = bs[k];
      add_scaled_inplace(tproj[k], ps.mu_delta[k], 1.0);
    }
    parafac2_projection(tproj, rho, ps.p, ps.delta_b, 1e-8, 5);

    // (iii)+(iv) split update, duals, residuals
    double r_sq = 0.0, s_sq = 0.0, ax_sq = 0.0, bz_sq = 0.0, dual_sq = 0.0;
    std::size_t len_c = 0, len_x = 0;
    for (std::size_t k = 0; k < kk; ++k) {
      len_x += bs[k].size();
      if (regularized) {
        DenseMatrix zin = bs[k];
        add_scaled_inplace(zin, aux.mu.slices[k], 1.0);
        DenseMatrix znew = prox_ws.apply(reg, zin, rho[k]);
        s_sq += rho[k] * rho[k] * fro_norm_sq(row_diff(znew, aux.z.slices[k]));
        aux.z.slices[k] = std::move(znew);
        const DenseMatrix rz = row_diff(bs[k], aux.z.slices[k]);
        r_sq += fro_norm_sq(rz);
        add_scaled_inplace(aux.mu.slices[k], rz, 1.0);
        len_c += bs[k].size();
        ax_sq += fro_norm_sq(bs[k]);
        bz_sq += fro_norm_sq(aux.z.slices[k]);
        dual_sq += rho[k] * rho[k] * fro_norm_sq(aux.mu.slices[k]);
      }
      const DenseMatrix target = matmul(ps.p[k], ps.delta_b);
      const DenseMatrix rp = row_diff(bs[k], target);
      r_sq += fro_norm_sq(rp);
      add_scaled_inplace(ps.mu_delta[k], rp, 1.0);
      len_c += bs[k].size();
      ax_sq += fro_norm_sq(bs[k]);
      bz_sq += fro_norm_sq(target);
      s_sq += rho[k] * rho[k] * fro_norm_sq(row_diff(target, prev_target[k]));
      dual_sq += rho[k] * rho[k] * fro_norm_sq(ps.mu_delta[k]);
      prev_target[k] = target;
    }

    stats.iterations = iter + 1;
    stats.r_norm = std::sqrt(r_sq);
    stats.s_norm = std::sqrt(s_sq);
    StopScales sc;
    sc.len_c = len_c;
    sc.len_x = len_x;
    sc.ax_norm = std::sqrt(ax_sq);
    sc.bz_norm = std::sqrt(bz_sq);
    sc.dual_scale = std::sqrt(dual_sq);
    sc.abs_tol = settings.abs_tol;
    sc.rel_tol = settings.rel_tol;
    if (stop_check(stats.r_norm, stats.s_norm, sc)) break;
  }
  return stats;
}

std::vector<double> mode_step_sizes(const ModelSpec& model, const SolverState& st,
                                    std::size_t dec, std::size_t mode) {
  const DecompositionSpec& spec = model.decompositions[dec];
  const double r = double(spec.rank);
  std::vector<double> out;
  if (spec.kind == DecompKind::parafac2 && mode == 2) {
    std::vector<DenseMatrix> grams;
    DenseMatrix rhs0;
    par2_c_terms(model, st, dec, grams, rhs0);
    for (const auto& g : grams) out.push_back(gram_trace(g) / r);
  } else if (spec.kind == DecompKind::parafac2 && mode == 1) {
    const DenseMatrix& ata = st.gram[dec][0];
    const DenseMatrix& c = st.factors.dec[dec].modes[2].m;
    for (std::size_t k = 0; k < c.rows(); ++k) {
      double t = 0.0;
      for (std::size_t i = 0; i < spec.rank; ++i) t += ata(i, i) * c(k, i) * c(k, i);
      out.push_back(t / r);
    }
  } else {
    DenseMatrix g, rhs0;
    static_terms(model, st, dec, mode, g, rhs0);
    out.push_back(gram_trace(g) / r);
  }
  return out;
}

double coupling_residual(const ModelSpec& model, const SolverState& st, std::size_t coupling) {
  const CouplingSpec& cpl = model.couplings.at(coupling);
  const CouplingState& cs = st.couplings.at(coupling);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < cpl.members.size(); ++i) {
    const DenseMatrix& x = st.factors.dec[cpl.members[i].dec].modes[cpl.members[i].mode].m;
    const DenseMatrix img = coupling_apply(cpl, i, x);
    const DenseMatrix target = coupling_target(cpl, i, cs.delta);
    num += fro_norm_sq(row_diff(img, target));
    den += fro_norm_sq(img);
  }
  return den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
}

}  // namespace cmtf
