#include "doctest.h"

#include <cmath>

#include "cmtf/linalg.hpp"
#include "cmtf/metrics.hpp"
#include "cmtf/rng.hpp"
#include "cmtf/synth.hpp"

using namespace cmtf;

namespace {

DenseMatrix random_matrix(std::size_t r, std::size_t c, Rng& rng) {
  DenseMatrix m(r, c);
  for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

DenseMatrix random_orthogonal(std::size_t n, Rng& rng) {
  return procrustes_orthogonal(random_matrix(n, n, rng));
}

}  // namespace

TEST_CASE("fit_percent basics and invariance") {
  Rng rng(1);
  const DenseMatrix z = random_matrix(6, 5, rng);
  CHECK(fit_percent(z, z) == doctest::Approx(100.0));
  CHECK(fit_percent(z, DenseMatrix(6, 5)) == doctest::Approx(0.0));
  DenseMatrix twice = z;
  scale_inplace(twice, 2.0);
  CHECK(fit_percent(z, twice) == doctest::Approx(0.0));

  // invariant under an orthogonal change of basis applied to both arguments
  const DenseMatrix q = random_orthogonal(6, rng);
  const DenseMatrix zh = random_matrix(6, 5, rng);
  const double direct = fit_percent(z, zh);
  CHECK(fit_percent(matmul(q, z), matmul(q, zh)) == doctest::Approx(direct).epsilon(1e-10));

  DenseMatrix zero(3, 3);
  CHECK_THROWS(fit_percent(zero, zero));
}

TEST_CASE("parafac2_residual") {
  Rng rng(3);
  const std::size_t kk = 6, j = 9, r = 3;
  DenseMatrix delta = random_matrix(r, r, rng);
  std::vector<DenseMatrix> feasible(kk);
  for (std::size_t k = 0; k < kk; ++k)
    feasible[k] = matmul(procrustes_orthogonal(random_matrix(j, r, rng)), delta);
  CHECK(parafac2_residual(feasible) < 1e-8);

  // single slice is always representable
  std::vector<DenseMatrix> one = {random_matrix(j, r, rng)};
  CHECK(parafac2_residual(one) < 1e-8);

  // cross products differ: residual strictly positive
  DenseMatrix b1 = DenseMatrix::identity(2);
  DenseMatrix b2(2, 2);
  b2(0, 0) = 1.0;
  std::vector<DenseMatrix> infeasible = {b1, b2};
  CHECK(parafac2_residual(infeasible) > 0.05);

  // invariant to one shared orthogonal right-multiplication
  const DenseMatrix q = random_orthogonal(r, rng);
  std::vector<DenseMatrix> mixed(kk);
  std::vector<DenseMatrix> rotated(kk);
  for (std::size_t k = 0; k < kk; ++k) {
    mixed[k] = random_matrix(j, r, rng);
    rotated[k] = matmul(mixed[k], q);
  }
  CHECK(parafac2_residual(mixed) == doctest::Approx(parafac2_residual(rotated)).epsilon(1e-6));

  std::vector<DenseMatrix> zero = {DenseMatrix(4, 2)};
  CHECK_THROWS(parafac2_residual(zero));
}

TEST_CASE("fms identity, permutation and scale invariance") {
  const GenOut gen = gen_recovery(RecoveryFamily::par2_cp_case1, 5);
  const FmsResult self = fms(gen.truth, gen.truth);
  CHECK(self.total == doctest::Approx(1.0).epsilon(1e-12));

  // permuted and rescaled copy (scales compensated across modes)
  FactorSet est = gen.truth;
  const std::vector<std::size_t> perm = {1, 2, 0};
  const double sa[3] = {3.0, -2.0, 0.5};
  const double sc[3] = {1.0 / 3.0, -0.5, 2.0};
  auto apply = [&](const DenseMatrix& m, const double* s) {
    DenseMatrix out(m.rows(), m.cols());
    for (std::size_t c = 0; c < m.cols(); ++c)
      for (std::size_t i = 0; i < m.rows(); ++i) out(i, c) = m(i, perm[c]) * (s ? s[c] : 1.0);
    return out;
  };
  est.dec[0].modes[0].m = apply(gen.truth.dec[0].modes[0].m, sa);
  for (std::size_t k = 0; k < est.dec[0].modes[1].slices.size(); ++k)
    est.dec[0].modes[1].slices[k] = apply(gen.truth.dec[0].modes[1].slices[k], nullptr);
  est.dec[0].modes[2].m = apply(gen.truth.dec[0].modes[2].m, sc);
  est.dec[1].modes[0].m = apply(gen.truth.dec[1].modes[0].m, nullptr);
  est.dec[1].modes[1].m = apply(gen.truth.dec[1].modes[1].m, sa);
  est.dec[1].modes[2].m = apply(gen.truth.dec[1].modes[2].m, sc);
  const FmsResult permuted = fms(gen.truth, est);
  CHECK(permuted.total == doctest::Approx(1.0).epsilon(1e-10));
  // the result maps truth columns to estimate columns: the inverse of `perm`
  std::vector<std::size_t> inverse(perm.size());
  for (std::size_t c = 0; c < perm.size(); ++c) inverse[perm[c]] = c;
  CHECK(permuted.dec[0].permutation == inverse);

  // estimate orthogonal to the truth in one mode: that mode's score collapses
  Rng rng(11);
  FactorSet ortho = gen.truth;
  const DenseMatrix& a = gen.truth.dec[0].modes[0].m;
  DenseMatrix junk = random_matrix(a.rows(), a.cols(), rng);
  // remove the truth-span component column by column
  for (std::size_t c = 0; c < junk.cols(); ++c) {
    for (std::size_t o = 0; o < a.cols(); ++o) {
      double num = 0.0, den = 0.0;
      for (std::size_t i = 0; i < a.rows(); ++i) {
        num += junk(i, c) * a(i, o);
        den += a(i, o) * a(i, o);
      }
      for (std::size_t i = 0; i < a.rows(); ++i) junk(i, c) -= (num / den) * a(i, o);
    }
  }
  ortho.dec[0].modes[0].m = junk;
  const FmsResult fo = fms(gen.truth, ortho);
  CHECK(fo.dec[0].per_mode[0] < 0.35);
}

TEST_CASE("assignment matching agrees with brute force beyond the exhaustive range") {
  Rng rng(17);
  for (int trial = 0; trial < 5; ++trial) {
    const std::size_t n = 9;  // exhaustive path stops at 8
    DenseMatrix score(n, n);
    for (std::size_t i = 0; i < score.size(); ++i) score.data()[i] = rng.uniform();
    const auto fast = best_assignment(score);
    // brute force over all 9! permutations
    std::vector<std::size_t> perm(n), best(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    double best_val = -1.0;
    do {
      double v = 0.0;
      for (std::size_t i = 0; i < n; ++i) v += score(i, perm[i]);
      if (v > best_val) {
        best_val = v;
        best = perm;
      }
    } while (std::next_permutation(perm.begin(), perm.end()));
    double fast_val = 0.0;
    for (std::size_t i = 0; i < n; ++i) fast_val += score(i, fast[i]);
    CHECK(fast_val == doctest::Approx(best_val).epsilon(1e-12));
  }
}

TEST_CASE("clustering accuracy") {
  Rng rng(23);
  // four well-separated clouds on a grid
  const std::size_t per = 10;
  DenseMatrix a(4 * per, 2);
  std::vector<int> labels(4 * per);
  const double grid[4][2] = {{0, 0}, {0, 1}, {1, 0}, {1, 1}};
  for (std::size_t i = 0; i < 4 * per; ++i) {
    const int lab = static_cast<int>(i / per);
    labels[i] = lab;
    a(i, 0) = grid[lab][0] + 0.05 * rng.normal();
    a(i, 1) = grid[lab][1] + 0.05 * rng.normal();
  }
  CHECK(clustering_accuracy(a, labels, 4) == doctest::Approx(100.0));

  // random labels against the same structure: near chance level
  std::vector<int> shuffled = labels;
  for (std::size_t i = shuffled.size(); i > 1; --i)
    std::swap(shuffled[i - 1], shuffled[static_cast<std::size_t>(rng.uniform() * double(i))]);
  const double acc = clustering_accuracy(a, shuffled, 4);
  CHECK(acc < 50.0);
  CHECK(acc >= 15.0);

  CHECK_THROWS(clustering_accuracy(a, labels, 100));
  std::vector<int> short_labels(3, 0);
  CHECK_THROWS(clustering_accuracy(a, short_labels, 4));
}
