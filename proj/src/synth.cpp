#include "cmtf/synth.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "cmtf/linalg.hpp"

namespace cmtf {

namespace {

DenseMatrix uniform_mat(std::size_t rows, std::size_t cols, double lo, double hi, Rng& rng) {
  DenseMatrix m(rows, cols);
  for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(lo, hi);
  return m;
}

DenseMatrix normal_mat(std::size_t rows, std::size_t cols, Rng& rng) {
  DenseMatrix m(rows, cols);
  for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

// Modified Gram-Schmidt, two passes; throws on numerically dependent columns.
void orthonormalize_columns(DenseMatrix& m) {
  const std::size_t rows = m.rows(), cols = m.cols();
  for (std::size_t c = 0; c < cols; ++c) {
    for (int pass = 0; pass < 2; ++pass) {
      for (std::size_t o = 0; o < c; ++o) {
        double p = 0.0;
        for (std::size_t i = 0; i < rows; ++i) p += m(i, c) * m(i, o);
        for (std::size_t i = 0; i < rows; ++i) m(i, c) -= p * m(i, o);
      }
    }
    double nsq = 0.0;
    for (std::size_t i = 0; i < rows; ++i) nsq += m(i, c) * m(i, c);
    if (!(nsq > 1e-16)) throw std::runtime_error("orthonormalize: dependent columns");
    const double inv = 1.0 / std::sqrt(nsq);
    for (std::size_t i = 0; i < rows; ++i) m(i, c) *= inv;
  }
}

RaggedTensor par2_slices(const DenseMatrix& a, const std::vector<DenseMatrix>& b,
                         const DenseMatrix& c) {
  std::vector<DenseMatrix> slices;
  slices.reserve(b.size());
  for (std::size_t k = 0; k < b.size(); ++k) {
    DenseMatrix ad = a;
    for (std::size_t i = 0; i < ad.rows(); ++i)
      for (std::size_t r = 0; r < ad.cols(); ++r) ad(i, r) *= c(k, r);
    slices.push_back(matmul_a_bt(ad, b[k]));
  }
  return RaggedTensor(std::move(slices));
}

DecFactors par2_factors(DenseMatrix a, std::vector<DenseMatrix> b, DenseMatrix c) {
  DecFactors df;
  df.kind = DecompKind::parafac2;
  df.rank = a.cols();
  df.modes.resize(3);
  df.modes[0].m = std::move(a);
  df.modes[1].varying = true;
  df.modes[1].slices = std::move(b);
  df.modes[2].m = std::move(c);
  return df;
}

DecFactors cp_factors(DenseMatrix e, DenseMatrix f, DenseMatrix g) {
  DecFactors df;
  df.kind = DecompKind::cp;
  df.rank = e.cols();
  df.modes.resize(3);
  df.modes[0].m = std::move(e);
  df.modes[1].m = std::move(f);
  df.modes[2].m = std::move(g);
  return df;
}

DecFactors matrix_factors(DenseMatrix e, DenseMatrix f) {
  DecFactors df;
  df.kind = DecompKind::matrix;
  df.rank = e.cols();
  df.modes.resize(2);
  df.modes[0].m = std::move(e);
  df.modes[1].m = std::move(f);
  return df;
}

}  // namespace

DenseMatrix add_noise(const DenseMatrix& x, double eta, Rng& rng) {
  if (eta < 0.0) throw std::invalid_argument("add_noise: eta must be >= 0");
  const double xn = fro_norm(x);
  if (!(xn > 0.0)) throw std::invalid_argument("add_noise: zero-norm data");
  DenseMatrix out = x;
  if (eta > 0.0) {
    DenseMatrix n = normal_mat(x.rows(), x.cols(), rng);
    add_scaled_inplace(out, n, eta * xn / fro_norm(n));
  }
  scale_inplace(out, 1.0 / fro_norm(out));
  return out;
}

DenseTensor3 add_noise(const DenseTensor3& x, double eta, Rng& rng) {
  if (eta < 0.0) throw std::invalid_argument("add_noise: eta must be >= 0");
  const double xn = fro_norm(x);
  if (!(xn > 0.0)) throw std::invalid_argument("add_noise: zero-norm data");
  DenseTensor3 out = x;
  if (eta > 0.0) {
    DenseTensor3 n(x.dim0(), x.dim1(), x.dim2());
    for (std::size_t i = 0; i < n.size(); ++i) n.data()[i] = rng.normal();
    const double s = eta * xn / fro_norm(n);
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] += s * n.data()[i];
  }
  const double inv = 1.0 / fro_norm(out);
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] *= inv;
  return out;
}

RaggedTensor add_noise(const RaggedTensor& x, double eta, Rng& rng) {
  if (eta < 0.0) throw std::invalid_argument("add_noise: eta must be >= 0");
  const double xn = fro_norm(x);
  if (!(xn > 0.0)) throw std::invalid_argument("add_noise: zero-norm data");
  std::vector<DenseMatrix> noise;
  double nn_sq = 0.0;
  if (eta > 0.0) {
    noise.reserve(x.n_slices());
    for (std::size_t k = 0; k < x.n_slices(); ++k) {
      noise.push_back(normal_mat(x.slice(k).rows(), x.slice(k).cols(), rng));
      nn_sq += fro_norm_sq(noise.back());
    }
  }
  std::vector<DenseMatrix> out;
  out.reserve(x.n_slices());
  const double s = eta > 0.0 ? eta * xn / std::sqrt(nn_sq) : 0.0;
  double total_sq = 0.0;
  for (std::size_t k = 0; k < x.n_slices(); ++k) {
    DenseMatrix slice = x.slice(k);
    if (eta > 0.0) add_scaled_inplace(slice, noise[k], s);
    total_sq += fro_norm_sq(slice);
    out.push_back(std::move(slice));
  }
  const double inv = 1.0 / std::sqrt(total_sq);
  for (auto& slice : out) scale_inplace(slice, inv);
  return RaggedTensor(std::move(out));
}

GenOut gen_family1(const Family1Spec& spec, std::uint64_t seed) {
  Rng rng = Rng::fork(seed, {0xf1});
  const std::size_t r = spec.rank;

  DenseMatrix a = uniform_mat(spec.i, r, 0.0, 1.0, rng);
  const DenseMatrix bbase = uniform_mat(spec.j, r, 0.0, 1.0, rng);
  std::vector<DenseMatrix> b(spec.k);
  // circular row-shifts of one base pattern keep B_k^T B_k invariant
  for (std::size_t k = 0; k < spec.k; ++k) {
    b[k] = DenseMatrix(spec.j, r);
    for (std::size_t j = 0; j < spec.j; ++j) {
      const std::size_t src = (j + k) % spec.j;
      for (std::size_t c = 0; c < r; ++c) b[k](j, c) = bbase(src, c);
    }
  }
  DenseMatrix c = uniform_mat(spec.k, r, 0.1, 1.1, rng);
  DenseMatrix f = uniform_mat(spec.partner_cols, r, 0.0, 1.0, rng);

  GenOut out;
  out.model.datasets.push_back(add_noise(par2_slices(a, b, c), spec.eta_x, rng));
  DecompositionSpec d0 = DecompositionSpec::make(DecompKind::parafac2, r, 0.5);
  for (auto& g : d0.mode_regs) g = RegularizerSpec::nonneg();
  out.model.decompositions.push_back(d0);
  out.truth.dec.push_back(par2_factors(a, b, c));

  if (spec.cp_third_dim == 0) {
    const DenseMatrix y = matmul_a_bt(c, f);
    out.model.datasets.push_back(add_noise(y, spec.eta_y, rng));
    DecompositionSpec d1 = DecompositionSpec::make(DecompKind::matrix, r, 0.5);
    for (auto& g : d1.mode_regs) g = RegularizerSpec::nonneg();
    out.model.decompositions.push_back(d1);
    out.truth.dec.push_back(matrix_factors(c, f));
  } else {
    DenseMatrix g = uniform_mat(spec.cp_third_dim, r, 0.0, 1.0, rng);
    const DenseTensor3 y = cp_reconstruct(c, f, g);
    out.model.datasets.push_back(add_noise(y, spec.eta_y, rng));
    DecompositionSpec d1 = DecompositionSpec::make(DecompKind::cp, r, 0.5);
    for (auto& reg : d1.mode_regs) reg = RegularizerSpec::nonneg();
    out.model.decompositions.push_back(d1);
    out.truth.dec.push_back(cp_factors(c, f, g));
  }

  CouplingSpec cpl;
  cpl.kase = CouplingCase::c1;
  cpl.members.push_back({0, 2, {}});
  cpl.members.push_back({1, 0, {}});
  cpl.delta_rows = spec.k;
  cpl.delta_cols = r;
  out.model.couplings.push_back(std::move(cpl));
  return out;
}

GenOut gen_family3(const Family3Spec& spec, std::uint64_t seed) {
  Rng rng = Rng::fork(seed, {0xf3});
  const std::size_t n_subj = 40, j = 120, kk = 50, r = 3, cols_f = 60;

  // Evolving networks: windowed patterns whose support shrinks, shifts and
  // grows linearly across k, plus background noise. Columns are normalized
  // so only the network shape evolves; the patterns still deliberately
  // violate the constant cross-product rule.
  std::vector<DenseMatrix> b(kk);
  for (std::size_t k = 0; k < kk; ++k) {
    const double t = kk > 1 ? double(k) / double(kk - 1) : 0.0;
    b[k] = DenseMatrix(j, r);
    const double centers[3] = {20.0, 40.0 + 38.0 * t, 102.0};
    const double widths[3] = {18.0 - 14.0 * t, 8.0, 4.0 + 16.0 * t};
    for (std::size_t jj = 0; jj < j; ++jj)
      for (std::size_t cc = 0; cc < 3; ++cc)
        if (std::abs(double(jj) - centers[cc]) <= widths[cc]) b[k](jj, cc) = 1.0;
    for (std::size_t i = 0; i < b[k].size(); ++i) b[k].data()[i] += 0.03 * rng.normal();
    for (std::size_t cc = 0; cc < 3; ++cc) {
      double nsq = 0.0;
      for (std::size_t jj = 0; jj < j; ++jj) nsq += b[k](jj, cc) * b[k](jj, cc);
      const double inv = 1.0 / std::sqrt(nsq);
      for (std::size_t jj = 0; jj < j; ++jj) b[k](jj, cc) *= inv;
    }
  }

  // Temporal patterns: exponential decay, sigmoid, random; all nonnegative.
  DenseMatrix c(kk, r);
  for (std::size_t k = 0; k < kk; ++k) {
    const double t = kk > 1 ? double(k) / double(kk - 1) : 0.0;
    c(k, 0) = std::exp(-3.0 * t);
    c(k, 1) = 1.0 / (1.0 + std::exp(-10.0 * (t - 0.5)));
    c(k, 2) = rng.uniform();
  }

  // Four clusters on a 2x2 grid in the first two columns of the coupled
  // subject matrices. A and E share the cluster structure but are separate
  // draws; A is additionally perturbed before the tensor is built.
  GenOut out;
  out.labels.resize(n_subj);
  DenseMatrix a_clean(n_subj, r), e_clean(n_subj, r);
  const double grid[4][2] = {{0.0, 0.0}, {0.0, 1.0}, {1.0, 0.0}, {1.0, 1.0}};
  for (std::size_t i = 0; i < n_subj; ++i) {
    const int lab = static_cast<int>(i / 10);
    out.labels[i] = lab;
    const double third = rng.uniform();
    a_clean(i, 0) = grid[lab][0] + 0.04 * rng.normal();
    a_clean(i, 1) = grid[lab][1] + 0.04 * rng.normal();
    a_clean(i, 2) = third;
    e_clean(i, 0) = grid[lab][0] + 0.04 * rng.normal();
    e_clean(i, 1) = grid[lab][1] + 0.04 * rng.normal();
    e_clean(i, 2) = third;
  }
  DenseMatrix a_noisy = a_clean;
  if (spec.a_noise > 0.0) {
    DenseMatrix n = normal_mat(n_subj, r, rng);
    add_scaled_inplace(a_noisy, n, spec.a_noise * fro_norm(a_clean) / fro_norm(n));
  }
  out.clean_a = a_clean;

  const DenseMatrix f = uniform_mat(cols_f, r, 0.0, 1.0, rng);

  const double w = spec.coupled ? 0.5 : 1.0;
  out.model.datasets.push_back(add_noise(par2_slices(a_noisy, b, c), 0.0, rng));
  DecompositionSpec d0 = DecompositionSpec::make(DecompKind::parafac2, r, w);
  d0.mode_regs[0] = spec.ridge ? RegularizerSpec::ridge(spec.ridge_lambda)
                               : RegularizerSpec::none();
  d0.mode_regs[1] = spec.ridge ? RegularizerSpec::ridge(spec.ridge_lambda)
                               : RegularizerSpec::none();
  d0.mode_regs[2] = spec.ridge ? RegularizerSpec::nonneg_ridge(spec.ridge_lambda)
                               : RegularizerSpec::nonneg();
  out.model.decompositions.push_back(d0);
  out.truth.dec.push_back(par2_factors(a_noisy, b, c));

  if (spec.coupled) {
    const DenseMatrix y = matmul_a_bt(e_clean, f);
    out.model.datasets.push_back(add_noise(y, 0.0, rng));
    DecompositionSpec d1 = DecompositionSpec::make(DecompKind::matrix, r, 0.5);
    d1.mode_regs[0] = spec.ridge ? RegularizerSpec::ridge(spec.ridge_lambda)
                                 : RegularizerSpec::none();
    d1.mode_regs[1] = spec.ridge ? RegularizerSpec::nonneg_ridge(spec.ridge_lambda)
                                 : RegularizerSpec::nonneg();
    out.model.decompositions.push_back(d1);
    out.truth.dec.push_back(matrix_factors(e_clean, f));

    CouplingSpec cpl;
    cpl.kase = CouplingCase::c1;
    cpl.members.push_back({0, 0, {}});
    cpl.members.push_back({1, 0, {}});
    cpl.delta_rows = n_subj;
    cpl.delta_cols = r;
    out.model.couplings.push_back(std::move(cpl));
  }
  return out;
}

GenOut gen_family4(const Family4Spec& spec, std::uint64_t seed) {
  Rng rng = Rng::fork(seed, {0xf4});
  const std::size_t n_i = 30, j = 200, kk = 30, r = 3;
  const std::size_t cp_j = 20, cp_k = 50, m2 = 4;

  // Dictionary with two shared components; C picks columns {0,1,2}, E picks
  // {0,1,3}.
  const DenseMatrix dict = uniform_mat(kk, m2, 0.1, 1.1, rng);
  const DenseMatrix h_c = CouplingSpec::identity_selector(m2, {0, 1, 2});
  const DenseMatrix h_e = CouplingSpec::identity_selector(m2, {0, 1, 3});
  const DenseMatrix c = matmul(dict, h_c);
  const DenseMatrix e = matmul(dict, h_e);

  // Smooth B_k with exact common cross-products: per-slice orthonormal bases
  // spanned by low-frequency sinusoids, times one shared profile matrix.
  const DenseMatrix delta_b = normal_mat(r, r, rng);
  std::vector<DenseMatrix> b(kk);
  for (std::size_t k = 0; k < kk; ++k) {
    DenseMatrix s(j, r);
    for (std::size_t cc = 0; cc < r; ++cc) {
      for (int h = 0; h < 3; ++h) {
        const double freq = rng.uniform(1.0, 4.0);
        const double amp = rng.normal();
        const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
        for (std::size_t jj = 0; jj < j; ++jj) {
          const double t = double(jj) / double(j - 1);
          s(jj, cc) += amp * std::sin(2.0 * std::numbers::pi * freq * t + phase);
        }
      }
    }
    orthonormalize_columns(s);
    b[k] = matmul(s, delta_b);
  }

  const DenseMatrix a = normal_mat(n_i, r, rng);
  const DenseMatrix f = normal_mat(cp_j, r, rng);
  const DenseMatrix g = normal_mat(cp_k, r, rng);

  GenOut out;
  out.shared_components = {0, 1};
  out.model.datasets.push_back(add_noise(par2_slices(a, b, c), spec.eta, rng));
  DecompositionSpec d0 = DecompositionSpec::make(DecompKind::parafac2, r, 0.5);
  d0.mode_regs[0] = RegularizerSpec::unit_ball();
  d0.mode_regs[1] = RegularizerSpec::graph_smooth_path(spec.smooth_lambda, j);
  d0.mode_regs[2] = RegularizerSpec::nonneg_unit_ball();
  out.model.decompositions.push_back(d0);
  out.truth.dec.push_back(par2_factors(a, b, c));

  out.model.datasets.push_back(add_noise(cp_reconstruct(e, f, g), spec.eta, rng));
  DecompositionSpec d1 = DecompositionSpec::make(DecompKind::cp, r, 0.5);
  d1.mode_regs[0] = RegularizerSpec::nonneg_unit_ball();
  out.model.decompositions.push_back(d1);
  out.truth.dec.push_back(cp_factors(e, f, g));

  CouplingSpec cpl;
  cpl.kase = CouplingCase::c3b;
  cpl.members.push_back({0, 2, h_c});
  cpl.members.push_back({1, 0, h_e});
  cpl.delta_rows = kk;
  cpl.delta_cols = m2;
  out.model.couplings.push_back(std::move(cpl));
  return out;
}

namespace {

// Well-conditioned random factor: orthonormalized columns with mild scale
// variation. Keeps the small recovery instances strongly identified.
DenseMatrix conditioned_factor(std::size_t rows, std::size_t cols, Rng& rng) {
  DenseMatrix m = normal_mat(rows, cols, rng);
  orthonormalize_columns(m);
  for (std::size_t c = 0; c < cols; ++c) {
    const double s = rng.uniform(0.8, 1.2);
    for (std::size_t i = 0; i < rows; ++i) m(i, c) *= s;
  }
  return m;
}

}  // namespace

GenOut gen_recovery(RecoveryFamily family, std::uint64_t seed) {
  Rng rng = Rng::fork(seed, {0xec});
  const std::size_t n_i = 12, kk = 12, r = 3;
  const std::size_t cp_j = 9, cp_k = 10;

  // Ragged slice lengths.
  std::vector<std::size_t> jdims(kk);
  for (std::size_t k = 0; k < kk; ++k) jdims[k] = 13 + (k % 5);

  DenseMatrix a = conditioned_factor(n_i, r, rng);
  DenseMatrix delta_b = normal_mat(r, r, rng);
  for (std::size_t i = 0; i < r; ++i) delta_b(i, i) += 2.0;  // keep well conditioned
  std::vector<DenseMatrix> b(kk);
  for (std::size_t k = 0; k < kk; ++k) {
    DenseMatrix p = normal_mat(jdims[k], r, rng);
    orthonormalize_columns(p);
    b[k] = matmul(p, delta_b);
  }
  // Slice weights bounded away from zero, with enough relative variation
  // across slices to keep the decomposition well identified.
  DenseMatrix c = uniform_mat(kk, r, 0.1, 1.1, rng);

  GenOut out;
  DecompositionSpec d0 = DecompositionSpec::make(
      DecompKind::parafac2, r, family == RecoveryFamily::par2_uncoupled ? 1.0 : 0.5);
  out.truth.dec.push_back(par2_factors(a, b, c));

  auto push_par2_data = [&]() {
    out.model.datasets.push_back(add_noise(par2_slices(a, b, c), 0.0, rng));
    out.model.decompositions.push_back(d0);
  };

  switch (family) {
    case RecoveryFamily::par2_uncoupled: {
      push_par2_data();
      return out;
    }
    case RecoveryFamily::par2_matrix_mode_a: {
      push_par2_data();
      const DenseMatrix f = conditioned_factor(14, r, rng);
      out.model.datasets.push_back(add_noise(matmul_a_bt(a, f), 0.0, rng));
      out.model.decompositions.push_back(DecompositionSpec::make(DecompKind::matrix, r, 0.5));
      out.truth.dec.push_back(matrix_factors(a, f));
      CouplingSpec cpl;
      cpl.kase = CouplingCase::c1;
      cpl.members.push_back({0, 0, {}});
      cpl.members.push_back({1, 0, {}});
      cpl.delta_rows = n_i;
      cpl.delta_cols = r;
      out.model.couplings.push_back(std::move(cpl));
      return out;
    }
    default:
      break;
  }

  // PARAFAC2 coupled in the slice-weight mode with a CP tensor.
  const DenseMatrix f = conditioned_factor(cp_j, r, rng);
  const DenseMatrix g = conditioned_factor(cp_k, r, rng);
  DenseMatrix e;
  CouplingSpec cpl;
  switch (family) {
    case RecoveryFamily::par2_cp_case1: {
      e = c;
      cpl.kase = CouplingCase::c1;
      cpl.members.push_back({0, 2, {}});
      cpl.members.push_back({1, 0, {}});
      cpl.delta_rows = kk;
      cpl.delta_cols = r;
      break;
    }
    case RecoveryFamily::par2_cp_case2a: {
      DenseMatrix h1 = normal_mat(kk, kk, rng);
      scale_inplace(h1, 0.3);
      for (std::size_t i = 0; i < kk; ++i) h1(i, i) += 1.0;
      e = matmul(h1, c);  // E = Delta = H1 C; its own transform is identity
      cpl.kase = CouplingCase::c2a;
      cpl.members.push_back({0, 2, h1});
      cpl.members.push_back({1, 0, DenseMatrix::identity(kk)});
      cpl.delta_rows = kk;
      cpl.delta_cols = r;
      break;
    }
    case RecoveryFamily::par2_cp_case2b: {
      const std::size_t m1 = 6;
      // block structure keeps the slice weights bounded away from zero
      auto make_h = [&rng](std::size_t rows, std::size_t cols) {
        DenseMatrix h(rows, cols);
        for (std::size_t i = 0; i < rows; ++i)
          for (std::size_t jj = 0; jj < cols; ++jj)
            h(i, jj) = (i % cols == jj ? 1.0 : 0.0) + 0.2 * rng.uniform();
        return h;
      };
      const DenseMatrix hc = make_h(kk, m1);
      const DenseMatrix he = make_h(kk, m1);
      const DenseMatrix delta = uniform_mat(m1, r, 0.1, 1.1, rng);
      c = matmul(hc, delta);
      e = matmul(he, delta);
      // rebuild truth with the constrained C
      out.truth.dec[0] = par2_factors(a, b, c);
      cpl.kase = CouplingCase::c2b;
      cpl.members.push_back({0, 2, hc});
      cpl.members.push_back({1, 0, he});
      cpl.delta_rows = m1;
      cpl.delta_cols = r;
      break;
    }
    case RecoveryFamily::par2_cp_case3a: {
      const std::size_t m2 = 2;
      e = uniform_mat(kk, r, 0.1, 1.1, rng);
      for (std::size_t k = 0; k < kk; ++k)
        for (std::size_t cc = 0; cc < m2; ++cc) e(k, cc) = c(k, cc);  // shared components
      cpl.kase = CouplingCase::c3a;
      cpl.members.push_back({0, 2, CouplingSpec::identity_selector(r, {0, 1})});
      cpl.members.push_back({1, 0, CouplingSpec::identity_selector(r, {0, 1})});
      cpl.delta_rows = kk;
      cpl.delta_cols = m2;
      break;
    }
    case RecoveryFamily::par2_cp_case3b: {
      const std::size_t m2 = 4;
      const DenseMatrix dict = uniform_mat(kk, m2, 0.1, 1.1, rng);
      const DenseMatrix hc = CouplingSpec::identity_selector(m2, {0, 1, 2});
      const DenseMatrix he = CouplingSpec::identity_selector(m2, {0, 1, 3});
      c = matmul(dict, hc);
      e = matmul(dict, he);
      out.truth.dec[0] = par2_factors(a, b, c);
      out.shared_components = {0, 1};
      cpl.kase = CouplingCase::c3b;
      cpl.members.push_back({0, 2, hc});
      cpl.members.push_back({1, 0, he});
      cpl.delta_rows = kk;
      cpl.delta_cols = m2;
      break;
    }
    default:
      throw std::logic_error("gen_recovery: unhandled family");
  }

  push_par2_data();
  out.model.datasets.push_back(add_noise(cp_reconstruct(e, f, g), 0.0, rng));
  out.model.decompositions.push_back(DecompositionSpec::make(DecompKind::cp, r, 0.5));
  out.truth.dec.push_back(cp_factors(e, f, g));
  out.model.couplings.push_back(std::move(cpl));
  return out;
}

}  // namespace cmtf
