#include "doctest.h"

#include <cmath>

#include "cmtf/admm.hpp"
#include "cmtf/linalg.hpp"
#include "cmtf/metrics.hpp"
#include "cmtf/rng.hpp"

using namespace cmtf;

namespace {

DenseMatrix random_matrix(std::size_t r, std::size_t c, Rng& rng) {
  DenseMatrix m(r, c);
  for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

DenseMatrix random_uniform(std::size_t r, std::size_t c, double lo, double hi, Rng& rng) {
  DenseMatrix m(r, c);
  for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(lo, hi);
  return m;
}

RaggedTensor par2_data(const DenseMatrix& a, const std::vector<DenseMatrix>& b,
                       const DenseMatrix& c) {
  std::vector<DenseMatrix> slices;
  for (std::size_t k = 0; k < b.size(); ++k) {
    DenseMatrix ad = a;
    for (std::size_t i = 0; i < ad.rows(); ++i)
      for (std::size_t r = 0; r < ad.cols(); ++r) ad(i, r) *= c(k, r);
    slices.push_back(matmul_a_bt(ad, b[k]));
  }
  return RaggedTensor(std::move(slices));
}

std::vector<DenseMatrix> par2_b_truth(std::size_t j, std::size_t r, std::size_t kk, Rng& rng) {
  DenseMatrix delta = random_matrix(r, r, rng);
  for (std::size_t i = 0; i < r; ++i) delta(i, i) += 2.0;
  std::vector<DenseMatrix> b(kk);
  for (std::size_t k = 0; k < kk; ++k) {
    b[k] = matmul(procrustes_orthogonal(random_matrix(j, r, rng)), delta);
  }
  return b;
}

void set_factor(SolverState& st, const ModelSpec& model, std::size_t d, std::size_t m,
                DenseMatrix value) {
  st.factors.dec[d].modes[m].m = std::move(value);
  refresh_gram(model, st, d, m);
}

}  // namespace

TEST_CASE("stop_check arithmetic") {
  StopScales sc;
  sc.len_c = 4;
  sc.len_x = 4;
  sc.abs_tol = 1e-5;
  sc.rel_tol = 1e-5;
  CHECK(stop_check(0.0, 0.0, sc));

  sc.abs_tol = 1e-12;
  sc.rel_tol = 1e-12;
  sc.ax_norm = 1.0;
  CHECK_FALSE(stop_check(1.0, 0.0, sc));

  // hand-computed 2x2 case evaluated independently:
  // eps_pri = sqrt(4)*0.01 + 0.1*max(2, 3, 0) = 0.02 + 0.3 = 0.32
  // eps_dual = sqrt(4)*0.01 + 0.1*5 = 0.52
  sc.len_c = 4;
  sc.len_x = 4;
  sc.abs_tol = 0.01;
  sc.rel_tol = 0.1;
  sc.ax_norm = 2.0;
  sc.bz_norm = 3.0;
  sc.c_norm = 0.0;
  sc.dual_scale = 5.0;
  CHECK(stop_check(0.3199, 0.5199, sc));
  CHECK_FALSE(stop_check(0.3201, 0.5199, sc));
  CHECK_FALSE(stop_check(0.3199, 0.5201, sc));
}

TEST_CASE("unregularized uncoupled matrix mode solves least squares") {
  Rng rng(101);
  const std::size_t n = 12, l = 9, r = 3;
  const DenseMatrix e_true = random_matrix(n, r, rng);
  const DenseMatrix f_true = random_matrix(l, r, rng);
  ModelSpec model;
  model.datasets.push_back(matmul_a_bt(e_true, f_true));
  model.decompositions.push_back(DecompositionSpec::make(DecompKind::matrix, r, 1.0));
  REQUIRE(validate(model).empty());

  SolverState st = init_state(model, random_init(model, 0), 0);
  set_factor(st, model, 0, 1, f_true);
  update_mode_group(model, st, {{0, 0}}, nullptr, nullptr, {});
  const double rel = fro_norm_diff(st.factors.dec[0].modes[0].m, e_true) / fro_norm(e_true);
  CHECK(rel < 1e-6);
}

TEST_CASE("scalar nonneg ADMM drives the split variable to zero") {
  // min (x - a)^2 s.t. x >= 0 with a < 0: solution 0
  ModelSpec model;
  DenseMatrix y(1, 1);
  y(0, 0) = -0.8;
  model.datasets.push_back(y);
  DecompositionSpec spec = DecompositionSpec::make(DecompKind::matrix, 1, 1.0);
  spec.mode_regs[0] = RegularizerSpec::nonneg();
  model.decompositions.push_back(spec);

  SolverState st = init_state(model, random_init(model, 1), 1);
  DenseMatrix f(1, 1);
  f(0, 0) = 1.0;
  set_factor(st, model, 0, 1, f);
  AdmmSettings inner;
  inner.max_inner_iters = 500;
  inner.abs_tol = 1e-12;
  inner.rel_tol = 1e-12;
  update_mode_group(model, st, {{0, 0}}, nullptr, nullptr, inner);
  CHECK(std::abs(st.aux[0][0].z.m(0, 0)) < 1e-6);
}

TEST_CASE("case-1 coupled twin matrix modes agree with the shared variable") {
  Rng rng(7);
  const std::size_t n = 10, l = 8, r = 2;
  const DenseMatrix e_true = random_matrix(n, r, rng);
  const DenseMatrix f_true = random_matrix(l, r, rng);
  const DenseMatrix y = matmul_a_bt(e_true, f_true);

  ModelSpec model;
  model.datasets.push_back(y);
  model.datasets.push_back(y);
  model.decompositions.push_back(DecompositionSpec::make(DecompKind::matrix, r, 0.5));
  model.decompositions.push_back(DecompositionSpec::make(DecompKind::matrix, r, 0.5));
  CouplingSpec cpl;
  cpl.kase = CouplingCase::c1;
  cpl.members.push_back({0, 0, {}});
  cpl.members.push_back({1, 0, {}});
  cpl.delta_rows = n;
  cpl.delta_cols = r;
  model.couplings.push_back(cpl);
  REQUIRE(validate(model).empty());

  SolverState st = init_state(model, random_init(model, 3), 3);
  set_factor(st, model, 0, 1, f_true);
  set_factor(st, model, 1, 1, f_true);
  AdmmSettings inner;
  inner.max_inner_iters = 1000;
  inner.abs_tol = 1e-10;
  inner.rel_tol = 1e-10;
  update_mode_group(model, st, {{0, 0}, {1, 0}}, &model.couplings[0], &st.couplings[0], inner);
  const DenseMatrix& e0 = st.factors.dec[0].modes[0].m;
  const DenseMatrix& e1 = st.factors.dec[1].modes[0].m;
  CHECK(fro_norm_diff(e0, e1) / fro_norm(e0) < 1e-6);
  CHECK(coupling_residual(model, st, 0) < 1e-6);
}

TEST_CASE("slice-weight rows solve exact least squares for K=1") {
  Rng rng(11);
  const std::size_t n = 8, j = 10, r = 3;
  const DenseMatrix a = random_matrix(n, r, rng);
  const auto b = par2_b_truth(j, r, 1, rng);
  const DenseMatrix c_true = random_uniform(1, r, 0.5, 1.5, rng);

  ModelSpec model;
  model.datasets.push_back(par2_data(a, b, c_true));
  model.decompositions.push_back(DecompositionSpec::make(DecompKind::parafac2, r, 1.0));
  REQUIRE(validate(model).empty());

  SolverState st = init_state(model, random_init(model, 5), 5);
  set_factor(st, model, 0, 0, a);
  st.factors.dec[0].modes[1].slices = b;
  refresh_gram(model, st, 0, 1);
  update_mode_group(model, st, {{0, 2}}, nullptr, nullptr, {});

  // pseudoinverse oracle via the explicit Khatri-Rao system
  const DenseMatrix kr = khatri_rao(b[0], a);
  const DenseMatrix g = matmul_at_b(kr, kr);
  DenseMatrix rhs(r, 1);
  const auto& x0 = std::get<RaggedTensor>(model.datasets[0]).slice(0);
  for (std::size_t cc = 0; cc < r; ++cc) {
    double acc = 0.0;
    for (std::size_t jj = 0; jj < j; ++jj)
      for (std::size_t ii = 0; ii < n; ++ii) acc += kr(jj * n + ii, cc) * x0(ii, jj);
    rhs(cc, 0) = acc;
  }
  const DenseMatrix sol = CholeskyFactor::compute(g).solve(rhs);
  for (std::size_t cc = 0; cc < r; ++cc)
    CHECK(st.factors.dec[0].modes[2].m(0, cc) == doctest::Approx(sol(cc, 0)).epsilon(1e-8));
}

TEST_CASE("coupled slice-weight mode reaches consensus on clean data") {
  Rng rng(13);
  const std::size_t n = 8, j = 9, kk = 6, r = 2;
  const DenseMatrix a = random_matrix(n, r, rng);
  const auto b = par2_b_truth(j, r, kk, rng);
  const DenseMatrix c_true = random_uniform(kk, r, 0.5, 1.5, rng);
  const DenseMatrix f_true = random_matrix(7, r, rng);

  ModelSpec model;
  model.datasets.push_back(par2_data(a, b, c_true));
  model.datasets.push_back(matmul_a_bt(c_true, f_true));
  model.decompositions.push_back(DecompositionSpec::make(DecompKind::parafac2, r, 0.5));
  model.decompositions.push_back(DecompositionSpec::make(DecompKind::matrix, r, 0.5));
  CouplingSpec cpl;
  cpl.kase = CouplingCase::c1;
  cpl.members.push_back({0, 2, {}});
  cpl.members.push_back({1, 0, {}});
  cpl.delta_rows = kk;
  cpl.delta_cols = r;
  model.couplings.push_back(cpl);
  REQUIRE(validate(model).empty());

  SolverState st = init_state(model, random_init(model, 17), 17);
  set_factor(st, model, 0, 0, a);
  st.factors.dec[0].modes[1].slices = b;
  refresh_gram(model, st, 0, 1);
  set_factor(st, model, 1, 1, f_true);

  AdmmSettings inner;
  inner.max_inner_iters = 2000;
  inner.abs_tol = 1e-10;
  inner.rel_tol = 1e-10;
  update_mode_group(model, st, {{0, 2}, {1, 0}}, &model.couplings[0], &st.couplings[0], inner);
  const DenseMatrix& c_est = st.factors.dec[0].modes[2].m;
  CHECK(fro_norm_diff(c_est, st.couplings[0].delta) / fro_norm(c_est) < 1e-4);
  CHECK(fro_norm_diff(c_est, c_true) / fro_norm(c_true) < 1e-4);
}

TEST_CASE("case 3b partial coupling becomes feasible on clean data") {
  Rng rng(19);
  const std::size_t n = 8, j = 9, kk = 10, r = 3, m2 = 4;
  const DenseMatrix dict = random_uniform(kk, m2, 0.5, 1.5, rng);
  const DenseMatrix hc = CouplingSpec::identity_selector(m2, {0, 1, 2});
  const DenseMatrix he = CouplingSpec::identity_selector(m2, {0, 1, 3});
  const DenseMatrix c_true = matmul(dict, hc);
  const DenseMatrix e_true = matmul(dict, he);
  const DenseMatrix a = random_matrix(n, r, rng);
  const auto b = par2_b_truth(j, r, kk, rng);
  const DenseMatrix f_true = random_matrix(6, r, rng);
  const DenseMatrix g_true = random_matrix(7, r, rng);

  ModelSpec model;
  model.datasets.push_back(par2_data(a, b, c_true));
  model.datasets.push_back(cp_reconstruct(e_true, f_true, g_true));
  model.decompositions.push_back(DecompositionSpec::make(DecompKind::parafac2, r, 0.5));
  model.decompositions.push_back(DecompositionSpec::make(DecompKind::cp, r, 0.5));
  CouplingSpec cpl;
  cpl.kase = CouplingCase::c3b;
  cpl.members.push_back({0, 2, hc});
  cpl.members.push_back({1, 0, he});
  cpl.delta_rows = kk;
  cpl.delta_cols = m2;
  model.couplings.push_back(cpl);
  REQUIRE(validate(model).empty());

  SolverState st = init_state(model, random_init(model, 23), 23);
  set_factor(st, model, 0, 0, a);
  st.factors.dec[0].modes[1].slices = b;
  refresh_gram(model, st, 0, 1);
  set_factor(st, model, 1, 1, f_true);
  set_factor(st, model, 1, 2, g_true);

  AdmmSettings inner;
  inner.max_inner_iters = 2000;
  inner.abs_tol = 1e-10;
  inner.rel_tol = 1e-10;
  update_mode_group(model, st, {{0, 2}, {1, 0}}, &model.couplings[0], &st.couplings[0], inner);
  const DenseMatrix& c_est = st.factors.dec[0].modes[2].m;
  const DenseMatrix target = matmul(st.couplings[0].delta, hc);
  CHECK(fro_norm_diff(c_est, target) / fro_norm(c_est) < 1e-3);
}

TEST_CASE("case 2a with identity transforms matches case 1") {
  Rng rng(29);
  const std::size_t n = 6, j = 7, kk = 5, r = 2;
  const DenseMatrix a = random_matrix(n, r, rng);
  // identical slices so the per-row step sizes coincide with the scalar one
  DenseMatrix delta_b = random_matrix(r, r, rng);
  for (std::size_t i = 0; i < r; ++i) delta_b(i, i) += 2.0;
  const DenseMatrix b1 = matmul(procrustes_orthogonal(random_matrix(j, r, rng)), delta_b);
  std::vector<DenseMatrix> b(kk, b1);
  DenseMatrix c_true(kk, r, 1.0);
  const DenseMatrix f_true = random_matrix(6, r, rng);

  auto make_model = [&](CouplingCase kase) {
    ModelSpec model;
    model.datasets.push_back(par2_data(a, b, c_true));
    model.datasets.push_back(matmul_a_bt(c_true, f_true));
    model.decompositions.push_back(DecompositionSpec::make(DecompKind::parafac2, r, 0.5));
    model.decompositions.push_back(DecompositionSpec::make(DecompKind::matrix, r, 0.5));
    CouplingSpec cpl;
    cpl.kase = kase;
    if (kase == CouplingCase::c2a) {
      cpl.members.push_back({0, 2, DenseMatrix::identity(kk)});
      cpl.members.push_back({1, 0, DenseMatrix::identity(kk)});
    } else {
      cpl.members.push_back({0, 2, {}});
      cpl.members.push_back({1, 0, {}});
    }
    cpl.delta_rows = kk;
    cpl.delta_cols = r;
    model.couplings.push_back(cpl);
    return model;
  };

  const ModelSpec m1 = make_model(CouplingCase::c1);
  const ModelSpec m2a = make_model(CouplingCase::c2a);
  REQUIRE(validate(m1).empty());
  REQUIRE(validate(m2a).empty());

  SolverState s1 = init_state(m1, random_init(m1, 31), 31);
  SolverState s2 = init_state(m2a, random_init(m2a, 31), 31);
  for (SolverState* s : {&s1, &s2}) {
    s->factors.dec[0].modes[0].m = a;
    s->factors.dec[0].modes[1].slices = b;
    s->factors.dec[1].modes[1].m = f_true;
  }
  for (std::size_t mo : {0, 1, 2}) {
    refresh_gram(m1, s1, 0, mo);
    refresh_gram(m2a, s2, 0, mo);
    if (mo < 2) {
      refresh_gram(m1, s1, 1, mo);
      refresh_gram(m2a, s2, 1, mo);
    }
  }

  AdmmSettings inner;
  inner.max_inner_iters = 3;
  inner.abs_tol = 0.0;
  inner.rel_tol = 0.0;
  update_mode_group(m1, s1, {{0, 2}, {1, 0}}, &m1.couplings[0], &s1.couplings[0], inner);
  update_mode_group(m2a, s2, {{0, 2}, {1, 0}}, &m2a.couplings[0], &s2.couplings[0], inner);
  CHECK(fro_norm_diff(s1.factors.dec[0].modes[2].m, s2.factors.dec[0].modes[2].m) < 1e-8);
  CHECK(fro_norm_diff(s1.factors.dec[1].modes[0].m, s2.factors.dec[1].modes[0].m) < 1e-8);
  CHECK(fro_norm_diff(s1.couplings[0].delta, s2.couplings[0].delta) < 1e-8);
}

TEST_CASE("varying-mode update restores PARAFAC2 structure on clean data") {
  Rng rng(37);
  const std::size_t n = 8, j = 12, kk = 8, r = 3;
  const DenseMatrix a = random_matrix(n, r, rng);
  const auto b_true = par2_b_truth(j, r, kk, rng);
  const DenseMatrix c_true = random_uniform(kk, r, 0.5, 1.5, rng);

  ModelSpec model;
  model.datasets.push_back(par2_data(a, b_true, c_true));
  model.decompositions.push_back(DecompositionSpec::make(DecompKind::parafac2, r, 1.0));
  REQUIRE(validate(model).empty());

  SolverState st = init_state(model, random_init(model, 41), 41);
  set_factor(st, model, 0, 0, a);
  set_factor(st, model, 0, 2, c_true);

  AdmmSettings inner;
  inner.max_inner_iters = 50;
  for (int sweep = 0; sweep < 60; ++sweep) {
    update_parafac2_b_mode(model, st, 0, inner);
    refresh_gram(model, st, 0, 1);
  }
  CHECK(parafac2_residual(st.factors.dec[0].modes[1].slices) < 1e-4);

  // P_k orthogonality after the projection
  for (const auto& p : st.par2[0].p) {
    const DenseMatrix ptp = matmul_at_b(p, p);
    double err = 0.0;
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t c = 0; c < r; ++c)
        err = std::max(err, std::abs(ptp(i, c) - (i == c ? 1.0 : 0.0)));
    CHECK(err < 1e-10);
  }
}

TEST_CASE("nonnegative varying-mode splits stay nonnegative every iteration") {
  Rng rng(43);
  const std::size_t n = 6, j = 8, kk = 5, r = 2;
  const DenseMatrix a = random_uniform(n, r, 0.0, 1.0, rng);
  DenseMatrix base = random_uniform(j, r, 0.0, 1.0, rng);
  std::vector<DenseMatrix> b(kk);
  for (std::size_t k = 0; k < kk; ++k) {
    b[k] = DenseMatrix(j, r);
    for (std::size_t jj = 0; jj < j; ++jj)
      for (std::size_t cc = 0; cc < r; ++cc) b[k](jj, cc) = base((jj + k) % j, cc);
  }
  const DenseMatrix c = random_uniform(kk, r, 0.1, 1.1, rng);

  ModelSpec model;
  model.datasets.push_back(par2_data(a, b, c));
  DecompositionSpec spec = DecompositionSpec::make(DecompKind::parafac2, r, 1.0);
  spec.mode_regs[1] = RegularizerSpec::nonneg();
  model.decompositions.push_back(spec);
  REQUIRE(validate(model).empty());

  SolverState st = init_state(model, random_init(model, 47), 47);
  AdmmSettings inner;
  inner.max_inner_iters = 1;  // inspect after every single inner iteration
  for (int it = 0; it < 25; ++it) {
    update_parafac2_b_mode(model, st, 0, inner);
    for (const auto& z : st.aux[0][1].z.slices)
      for (std::size_t i = 0; i < z.size(); ++i) REQUIRE(z.data()[i] >= 0.0);
  }
}

TEST_CASE("single-slice varying mode is always representable") {
  Rng rng(53);
  const std::size_t n = 6, j = 9, r = 3;
  const DenseMatrix a = random_matrix(n, r, rng);
  std::vector<DenseMatrix> b = {random_matrix(j, r, rng)};
  const DenseMatrix c = random_uniform(1, r, 0.5, 1.5, rng);

  ModelSpec model;
  model.datasets.push_back(par2_data(a, b, c));
  model.decompositions.push_back(DecompositionSpec::make(DecompKind::parafac2, r, 1.0));
  SolverState st = init_state(model, random_init(model, 59), 59);
  set_factor(st, model, 0, 0, a);
  set_factor(st, model, 0, 2, c);
  AdmmSettings inner;
  inner.max_inner_iters = 200;
  inner.abs_tol = 1e-12;
  inner.rel_tol = 1e-12;
  update_parafac2_b_mode(model, st, 0, inner);
  CHECK(parafac2_residual(st.factors.dec[0].modes[1].slices) < 1e-10);
}

TEST_CASE("gram caches equal cold recomputation after updates") {
  Rng rng(61);
  const std::size_t n = 7, j = 8, kk = 4, r = 2;
  const DenseMatrix a = random_matrix(n, r, rng);
  const auto b = par2_b_truth(j, r, kk, rng);
  const DenseMatrix c = random_uniform(kk, r, 0.5, 1.5, rng);
  ModelSpec model;
  model.datasets.push_back(par2_data(a, b, c));
  model.decompositions.push_back(DecompositionSpec::make(DecompKind::parafac2, r, 1.0));

  SolverState st = init_state(model, random_init(model, 67), 67);
  const DenseMatrix c_gram_before = st.gram[0][2];

  update_mode_group(model, st, {{0, 0}}, nullptr, nullptr, {});
  refresh_gram(model, st, 0, 0);
  const DenseMatrix direct = matmul_at_b(st.factors.dec[0].modes[0].m,
                                         st.factors.dec[0].modes[0].m);
  CHECK(fro_norm_diff(st.gram[0][0], direct) < 1e-12);

  // untouched mode's cache is bit-identical
  CHECK(fro_norm_diff(st.gram[0][2], c_gram_before) == 0.0);

  // three sequential updates, then compare with cold recomputation
  AdmmSettings inner;
  update_parafac2_b_mode(model, st, 0, inner);
  refresh_gram(model, st, 0, 1);
  update_mode_group(model, st, {{0, 2}}, nullptr, nullptr, inner);
  refresh_gram(model, st, 0, 2);
  update_mode_group(model, st, {{0, 0}}, nullptr, nullptr, inner);
  refresh_gram(model, st, 0, 0);
  SolverState cold = init_state(model, st.factors, 0);
  CHECK(fro_norm_diff(st.gram[0][0], cold.gram[0][0]) == 0.0);
  CHECK(fro_norm_diff(st.gram[0][2], cold.gram[0][2]) == 0.0);
  for (std::size_t k = 0; k < kk; ++k)
    CHECK(fro_norm_diff(st.bgram[0][k], cold.bgram[0][k]) == 0.0);
}

TEST_CASE("scaled duals follow the mu update rule") {
  Rng rng(71);
  const std::size_t n = 9, l = 7, r = 2;
  ModelSpec model;
  model.datasets.push_back(random_matrix(n, l, rng));
  DecompositionSpec spec = DecompositionSpec::make(DecompKind::matrix, r, 1.0);
  spec.mode_regs[0] = RegularizerSpec::nonneg();
  model.decompositions.push_back(spec);

  SolverState st = init_state(model, random_init(model, 73), 73);
  const DenseMatrix mu_before = st.aux[0][0].mu.m;
  AdmmSettings inner;
  inner.max_inner_iters = 1;
  update_mode_group(model, st, {{0, 0}}, nullptr, nullptr, inner);
  // replay: mu_new = mu_old + x_new - z_new
  DenseMatrix expect = mu_before;
  add_scaled_inplace(expect, st.factors.dec[0].modes[0].m, 1.0);
  add_scaled_inplace(expect, st.aux[0][0].z.m, -1.0);
  CHECK(fro_norm_diff(st.aux[0][0].mu.m, expect) < 1e-14);
}

TEST_CASE("trace rule step sizes match an independent Khatri-Rao computation") {
  Rng rng(79);
  const std::size_t n = 7, j = 9, kk = 4, r = 3;
  const DenseMatrix a = random_matrix(n, r, rng);
  const auto b = par2_b_truth(j, r, kk, rng);
  const DenseMatrix c = random_uniform(kk, r, 0.5, 1.5, rng);
  ModelSpec model;
  model.datasets.push_back(par2_data(a, b, c));
  model.decompositions.push_back(DecompositionSpec::make(DecompKind::parafac2, r, 1.0));

  SolverState st = init_state(model, random_init(model, 83), 83);
  set_factor(st, model, 0, 0, a);
  st.factors.dec[0].modes[1].slices = b;
  refresh_gram(model, st, 0, 1);
  set_factor(st, model, 0, 2, c);

  const auto rho = mode_step_sizes(model, st, 0, 2);
  REQUIRE(rho.size() == kk);
  for (std::size_t k = 0; k < kk; ++k) {
    const DenseMatrix kr = khatri_rao(b[k], a);
    const DenseMatrix g = matmul_at_b(kr, kr);
    double tr = 0.0;
    for (std::size_t i = 0; i < r; ++i) tr += g(i, i);
    CHECK(rho[k] == doctest::Approx(tr / double(r)).epsilon(1e-10));
    CHECK(rho[k] > 0.0);
  }

  const auto rho_a = mode_step_sizes(model, st, 0, 0);
  REQUIRE(rho_a.size() == 1);
  CHECK(rho_a[0] > 0.0);
}
