#include "doctest.h"

#include <cmath>

#include "cmtf/linalg.hpp"
#include "cmtf/metrics.hpp"
#include "cmtf/rng.hpp"
#include "cmtf/synth.hpp"

using namespace cmtf;

namespace {

double dataset_diff(const DataSet& a, const DataSet& b) {
  if (std::holds_alternative<DenseMatrix>(a))
    return fro_norm_diff(std::get<DenseMatrix>(a), std::get<DenseMatrix>(b));
  if (std::holds_alternative<DenseTensor3>(a)) {
    const auto& x = std::get<DenseTensor3>(a);
    const auto& y = std::get<DenseTensor3>(b);
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double d = x.data()[i] - y.data()[i];
      s += d * d;
    }
    return std::sqrt(s);
  }
  const auto& x = std::get<RaggedTensor>(a);
  const auto& y = std::get<RaggedTensor>(b);
  double s = 0.0;
  for (std::size_t k = 0; k < x.n_slices(); ++k)
    s += std::pow(fro_norm_diff(x.slice(k), y.slice(k)), 2);
  return std::sqrt(s);
}

double dataset_norm(const DataSet& a) {
  if (std::holds_alternative<DenseMatrix>(a)) return fro_norm(std::get<DenseMatrix>(a));
  if (std::holds_alternative<DenseTensor3>(a)) return fro_norm(std::get<DenseTensor3>(a));
  return fro_norm(std::get<RaggedTensor>(a));
}

}  // namespace

TEST_CASE("add_noise matches its formula and normalizes") {
  Rng gen_rng(5);
  DenseMatrix x(8, 6);
  for (std::size_t i = 0; i < x.size(); ++i) x.data()[i] = gen_rng.normal() + 2.0;

  // eta = 0: exact normalization
  Rng r0(7);
  const DenseMatrix clean = add_noise(x, 0.0, r0);
  CHECK(fro_norm(clean) == doctest::Approx(1.0).epsilon(1e-12));
  DenseMatrix expect = x;
  scale_inplace(expect, 1.0 / fro_norm(x));
  CHECK(fro_norm_diff(clean, expect) < 1e-14);

  // eta = 0.2: replicate the draw and verify the noise-to-signal ratio
  Rng r1(7);
  const DenseMatrix noisy = add_noise(x, 0.2, r1);
  Rng r2(7);
  DenseMatrix n(8, 6);
  for (std::size_t i = 0; i < n.size(); ++i) n.data()[i] = r2.normal();
  DenseMatrix unnorm = x;
  add_scaled_inplace(unnorm, n, 0.2 * fro_norm(x) / fro_norm(n));
  const double ratio = fro_norm_diff(unnorm, x) / fro_norm(x);
  CHECK(ratio == doctest::Approx(0.2).epsilon(1e-12));
  scale_inplace(unnorm, 1.0 / fro_norm(unnorm));
  CHECK(fro_norm_diff(noisy, unnorm) < 1e-14);

  // two seeds: different noise
  Rng r3(8);
  const DenseMatrix other = add_noise(x, 0.2, r3);
  CHECK(fro_norm_diff(noisy, other) > 1e-6);

  CHECK_THROWS(add_noise(DenseMatrix(3, 3), 0.1, r3));
}

TEST_CASE("generators are deterministic") {
  const GenOut a = gen_family1({40, 60, 50, 60, 0, 4, 0.2, 0.2}, 99);
  const GenOut b = gen_family1({40, 60, 50, 60, 0, 4, 0.2, 0.2}, 99);
  CHECK(dataset_diff(a.model.datasets[0], b.model.datasets[0]) == 0.0);
  CHECK(dataset_diff(a.model.datasets[1], b.model.datasets[1]) == 0.0);
  const GenOut c = gen_family1({40, 60, 50, 60, 0, 4, 0.2, 0.2}, 100);
  CHECK(dataset_diff(a.model.datasets[0], c.model.datasets[0]) > 0.0);
}

TEST_CASE("family 1 layout and structure") {
  const GenOut gen = gen_family1({40, 60, 50, 60, 0, 4, 0.2, 0.2}, 3);
  CHECK(validate(gen.model).empty());
  const auto& x = std::get<RaggedTensor>(gen.model.datasets[0]);
  CHECK(x.rows() == 40);
  CHECK(x.n_slices() == 50);
  CHECK(x.slice(0).cols() == 60);
  const auto& y = std::get<DenseMatrix>(gen.model.datasets[1]);
  CHECK(y.rows() == 50);
  CHECK(y.cols() == 60);

  // C entries in [0.1, 1.1]
  const DenseMatrix& c = gen.truth.dec[0].modes[2].m;
  for (std::size_t i = 0; i < c.size(); ++i) {
    CHECK(c.data()[i] >= 0.1);
    CHECK(c.data()[i] <= 1.1);
  }
  // shifted B_k satisfy the constant cross-product constraint
  CHECK(parafac2_residual(gen.truth.dec[0].modes[1].slices) < 1e-8);
  // datasets normalized
  CHECK(dataset_norm(gen.model.datasets[0]) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(dataset_norm(gen.model.datasets[1]) == doctest::Approx(1.0).epsilon(1e-12));

  // the CP variant has matching dims
  const GenOut g2 = gen_family1({40, 60, 50, 60, 50, 4, 0.2, 0.2}, 3);
  CHECK(validate(g2.model).empty());
  const auto& y2 = std::get<DenseTensor3>(g2.model.datasets[1]);
  CHECK(y2.dim0() == 50);
  CHECK(y2.dim1() == 60);
  CHECK(y2.dim2() == 50);
}

TEST_CASE("noise-free generation reconstructs from truth") {
  const GenOut gen = gen_family1({12, 14, 10, 9, 0, 3, 0.0, 0.0}, 17);
  for (std::size_t d = 0; d < 2; ++d) {
    DataSet recon = reconstruct(gen.truth, d);
    // normalize the reconstruction like the generator does
    const double nrm = dataset_norm(recon);
    if (std::holds_alternative<RaggedTensor>(recon)) {
      auto& rt = std::get<RaggedTensor>(recon);
      for (auto& s : rt.slices()) scale_inplace(s, 1.0 / nrm);
    } else {
      scale_inplace(std::get<DenseMatrix>(recon), 1.0 / nrm);
    }
    CHECK(dataset_diff(gen.model.datasets[d], recon) < 1e-12);
  }
}

TEST_CASE("family 3 structure") {
  const GenOut gen = gen_family3({0.0, true, false, 1e-4}, 7);
  CHECK(validate(gen.model).empty());
  const auto& x = std::get<RaggedTensor>(gen.model.datasets[0]);
  CHECK(x.rows() == 40);
  CHECK(x.n_slices() == 50);
  CHECK(x.slice(0).cols() == 120);
  const auto& y = std::get<DenseMatrix>(gen.model.datasets[1]);
  CHECK(y.rows() == 40);
  CHECK(y.cols() == 60);
  CHECK(gen.model.decompositions[0].rank == 3);

  // labels: 4 balanced clusters of 10
  REQUIRE(gen.labels.size() == 40);
  int counts[4] = {0, 0, 0, 0};
  for (int l : gen.labels) counts[l]++;
  for (int c : counts) CHECK(c == 10);

  // evolving networks deliberately break the constant cross-product rule
  CHECK(parafac2_residual(gen.truth.dec[0].modes[1].slices) > 1e-3);

  // temporal patterns stay nonnegative
  const DenseMatrix& c = gen.truth.dec[0].modes[2].m;
  for (std::size_t i = 0; i < c.size(); ++i) CHECK(c.data()[i] >= 0.0);

  // uncoupled variant drops the matrix dataset
  const GenOut solo = gen_family3({0.5, false, false, 1e-4}, 7);
  CHECK(solo.model.datasets.size() == 1);
  CHECK(solo.model.couplings.empty());
  CHECK(validate(solo.model).empty());

  // noisy A differs from the clean A used for the matrix
  const GenOut noisy = gen_family3({1.0, true, false, 1e-4}, 7);
  CHECK(fro_norm_diff(noisy.truth.dec[0].modes[0].m, noisy.clean_a) > 0.1);
}

TEST_CASE("family 4 structure") {
  const GenOut gen = gen_family4({}, 11);
  CHECK(validate(gen.model).empty());
  const auto& x = std::get<RaggedTensor>(gen.model.datasets[0]);
  CHECK(x.rows() == 30);
  CHECK(x.n_slices() == 30);
  CHECK(x.slice(0).cols() == 200);
  const auto& y = std::get<DenseTensor3>(gen.model.datasets[1]);
  CHECK(y.dim0() == 30);
  CHECK(y.dim1() == 20);
  CHECK(y.dim2() == 50);

  // two shared components; shared columns of C and E are equal
  CHECK(gen.shared_components == std::vector<std::size_t>{0, 1});
  const DenseMatrix& c = gen.truth.dec[0].modes[2].m;
  const DenseMatrix& e = gen.truth.dec[1].modes[0].m;
  for (std::size_t k = 0; k < c.rows(); ++k)
    for (std::size_t s : gen.shared_components) CHECK(c(k, s) == e(k, s));

  // dictionary entries shifted away from zero
  for (std::size_t i = 0; i < c.size(); ++i) CHECK(c.data()[i] >= 0.1);
  for (std::size_t i = 0; i < e.size(); ++i) CHECK(e.data()[i] >= 0.1);

  // smooth construction keeps exact PARAFAC2 structure
  CHECK(parafac2_residual(gen.truth.dec[0].modes[1].slices) < 1e-8);

  // varying-mode columns are smooth: neighbor differences are small relative
  // to the column norm
  const DenseMatrix& b0 = gen.truth.dec[0].modes[1].slices[0];
  for (std::size_t cc = 0; cc < b0.cols(); ++cc) {
    double rough = 0.0, nsq = 0.0;
    for (std::size_t i = 0; i + 1 < b0.rows(); ++i) {
      const double d = b0(i + 1, cc) - b0(i, cc);
      rough += d * d;
      nsq += b0(i, cc) * b0(i, cc);
    }
    CHECK(rough / nsq < 0.05);
  }
}

TEST_CASE("recovery families validate and stay consistent") {
  for (int fam = 0; fam < 7; ++fam) {
    const GenOut gen = gen_recovery(static_cast<RecoveryFamily>(fam), 29);
    CHECK(validate(gen.model).empty());
    CHECK(parafac2_residual(gen.truth.dec[0].modes[1].slices) < 1e-8);
  }
}
