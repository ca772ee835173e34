#include "cmtf/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "cmtf/admm.hpp"
#include "cmtf/linalg.hpp"
#include "cmtf/rng.hpp"

namespace cmtf {

namespace {

double fit_from_norms(double err_sq, double ref_sq) {
  if (!(ref_sq > 0.0)) throw std::invalid_argument("fit_percent: reference has zero norm");
  return 100.0 * (1.0 - err_sq / ref_sq);
}

}  // namespace

double fit_percent(const DenseMatrix& z, const DenseMatrix& zhat) {
  if (!z.same_shape(zhat)) throw std::invalid_argument("fit_percent: shape mismatch");
  double err = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double d = z.data()[i] - zhat.data()[i];
    err += d * d;
  }
  return fit_from_norms(err, fro_norm_sq(z));
}

double fit_percent(const DenseTensor3& z, const DenseTensor3& zhat) {
  if (z.dim0() != zhat.dim0() || z.dim1() != zhat.dim1() || z.dim2() != zhat.dim2())
    throw std::invalid_argument("fit_percent: shape mismatch");
  double err = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double d = z.data()[i] - zhat.data()[i];
    err += d * d;
  }
  return fit_from_norms(err, fro_norm_sq(z));
}

double fit_percent(const RaggedTensor& z, const RaggedTensor& zhat) {
  if (z.n_slices() != zhat.n_slices()) throw std::invalid_argument("fit_percent: slice mismatch");
  double err = 0.0, ref = 0.0;
  for (std::size_t k = 0; k < z.n_slices(); ++k) {
    if (!z.slice(k).same_shape(zhat.slice(k)))
      throw std::invalid_argument("fit_percent: slice shape mismatch");
    err += std::pow(fro_norm_diff(z.slice(k), zhat.slice(k)), 2);
    ref += fro_norm_sq(z.slice(k));
  }
  return fit_from_norms(err, ref);
}

double fit_percent(const DataSet& z, const DataSet& zhat) {
  if (std::holds_alternative<DenseMatrix>(z))
    return fit_percent(std::get<DenseMatrix>(z), std::get<DenseMatrix>(zhat));
  if (std::holds_alternative<DenseTensor3>(z))
    return fit_percent(std::get<DenseTensor3>(z), std::get<DenseTensor3>(zhat));
  return fit_percent(std::get<RaggedTensor>(z), std::get<RaggedTensor>(zhat));
}

double parafac2_residual(const std::vector<DenseMatrix>& b) {
  if (b.empty()) throw std::invalid_argument("parafac2_residual: needs K >= 1");
  const std::size_t kk = b.size();
  const std::size_t r = b[0].cols();
  for (const auto& bk : b)
    if (!(fro_norm_sq(bk) > 0.0))
      throw std::invalid_argument("parafac2_residual: zero-norm slice");

  std::vector<DenseMatrix> p(kk);
  for (std::size_t k = 0; k < kk; ++k) p[k] = procrustes_orthogonal(b[k]);
  DenseMatrix delta(r, r);
  for (std::size_t k = 0; k < kk; ++k)
    add_scaled_inplace(delta, matmul_at_b(p[k], b[k]), 1.0 / double(kk));
  std::vector<double> w(kk, 1.0);
  parafac2_projection(b, w, p, delta, 1e-10, 2000);

  double acc = 0.0;
  for (std::size_t k = 0; k < kk; ++k) {
    const DenseMatrix target = matmul(p[k], delta);
    acc += fro_norm_diff(b[k], target) / fro_norm(b[k]);
  }
  return acc / double(kk);
}

namespace {

// Absolute normalized inner products between matched columns; rows index the
// truth component, columns the estimate component.
DenseMatrix congruence_matrix(const std::vector<const DenseMatrix*>& truth_cols,
                              const std::vector<const DenseMatrix*>& est_cols, std::size_t r) {
  // Concatenate blocks column-wise: treat each component r as the stacked
  // column over all blocks.
  DenseMatrix cong(r, r);
  std::vector<double> tn(r, 0.0), en(r, 0.0);
  for (std::size_t b = 0; b < truth_cols.size(); ++b) {
    const DenseMatrix& t = *truth_cols[b];
    const DenseMatrix& e = *est_cols[b];
    for (std::size_t c = 0; c < r; ++c) {
      for (std::size_t i = 0; i < t.rows(); ++i) tn[c] += t(i, c) * t(i, c);
      for (std::size_t i = 0; i < e.rows(); ++i) en[c] += e(i, c) * e(i, c);
    }
    for (std::size_t a = 0; a < r; ++a)
      for (std::size_t c = 0; c < r; ++c) {
        double acc = 0.0;
        for (std::size_t i = 0; i < t.rows(); ++i) acc += t(i, a) * e(i, c);
        cong(a, c) += acc;
      }
  }
  for (std::size_t a = 0; a < r; ++a)
    for (std::size_t c = 0; c < r; ++c) {
      const double den = std::sqrt(tn[a] * en[c]);
      cong(a, c) = den > 0.0 ? std::abs(cong(a, c)) / den : 0.0;
    }
  return cong;
}

std::vector<std::size_t> exhaustive_assignment(const DenseMatrix& score) {
  const std::size_t n = score.rows();
  std::vector<std::size_t> perm(n), best(n);
  std::iota(perm.begin(), perm.end(), 0);
  best = perm;
  double best_val = -std::numeric_limits<double>::infinity();
  do {
    double v = 0.0;
    for (std::size_t i = 0; i < n; ++i) v += score(i, perm[i]);
    if (v > best_val) {
      best_val = v;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

// Hungarian algorithm (potentials + augmenting paths) minimizing cost.
std::vector<std::size_t> hungarian_min(const DenseMatrix& cost) {
  const std::size_t n = cost.rows();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, std::numeric_limits<double>::infinity());
    std::vector<bool> used(n + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = p[j0];
      double delta = std::numeric_limits<double>::infinity();
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }
  std::vector<std::size_t> out(n);
  for (std::size_t j = 1; j <= n; ++j) out[p[j] - 1] = j - 1;
  return out;
}

}  // namespace

std::vector<std::size_t> best_assignment(const DenseMatrix& score) {
  if (score.rows() != score.cols()) throw std::invalid_argument("best_assignment: square input");
  if (score.rows() <= 8) return exhaustive_assignment(score);
  DenseMatrix cost = score;
  scale_inplace(cost, -1.0);
  return hungarian_min(cost);
}

FmsResult fms(const FactorSet& truth, const FactorSet& estimate) {
  if (truth.dec.size() != estimate.dec.size())
    throw std::invalid_argument("fms: decomposition count mismatch");
  FmsResult out;
  out.total = 1.0;
  out.dec.resize(truth.dec.size());
  for (std::size_t d = 0; d < truth.dec.size(); ++d) {
    const DecFactors& t = truth.dec[d];
    const DecFactors& e = estimate.dec[d];
    if (t.kind != e.kind || t.rank != e.rank) throw std::invalid_argument("fms: shape mismatch");
    const std::size_t r = t.rank;
    const std::size_t nm = t.modes.size();

    // Per-mode congruence matrices (varying modes use concatenated columns).
    std::vector<DenseMatrix> cong(nm);
    for (std::size_t m = 0; m < nm; ++m) {
      std::vector<const DenseMatrix*> tb, eb;
      if (t.modes[m].varying) {
        if (t.modes[m].slices.size() != e.modes[m].slices.size())
          throw std::invalid_argument("fms: slice count mismatch");
        for (std::size_t k = 0; k < t.modes[m].slices.size(); ++k) {
          if (!t.modes[m].slices[k].same_shape(e.modes[m].slices[k]))
            throw std::invalid_argument("fms: slice shape mismatch");
          tb.push_back(&t.modes[m].slices[k]);
          eb.push_back(&e.modes[m].slices[k]);
        }
      } else {
        if (!t.modes[m].m.same_shape(e.modes[m].m))
          throw std::invalid_argument("fms: factor shape mismatch");
        tb.push_back(&t.modes[m].m);
        eb.push_back(&e.modes[m].m);
      }
      cong[m] = congruence_matrix(tb, eb, r);
    }

    DenseMatrix score(r, r, 1.0);
    for (std::size_t m = 0; m < nm; ++m)
      for (std::size_t i = 0; i < r * r; ++i) score.data()[i] *= cong[m].data()[i];

    FmsDec& fd = out.dec[d];
    fd.permutation = best_assignment(score);
    fd.per_mode.assign(nm, 0.0);
    fd.total = 0.0;
    for (std::size_t c = 0; c < r; ++c) {
      fd.total += score(c, fd.permutation[c]);
      for (std::size_t m = 0; m < nm; ++m) fd.per_mode[m] += cong[m](c, fd.permutation[c]);
    }
    fd.total /= double(r);
    for (std::size_t m = 0; m < nm; ++m) fd.per_mode[m] /= double(r);
    out.total *= fd.total;
  }
  return out;
}

namespace {

struct KmeansResult {
  std::vector<int> assign;
  double sse = std::numeric_limits<double>::infinity();
};

KmeansResult kmeans_once(const DenseMatrix& pts, std::size_t k, Rng& rng) {
  const std::size_t n = pts.rows(), dim = pts.cols();
  // k-means++ seeding
  DenseMatrix centers(k, dim);
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  const std::size_t first = static_cast<std::size_t>(rng.uniform() * double(n)) % n;
  for (std::size_t c = 0; c < dim; ++c) centers(0, c) = pts(first, c);
  for (std::size_t j = 1; j < k; ++j) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double dd = 0.0;
      for (std::size_t c = 0; c < dim; ++c) {
        const double diff = pts(i, c) - centers(j - 1, c);
        dd += diff * diff;
      }
      d2[i] = std::min(d2[i], dd);
      total += d2[i];
    }
    double pick = rng.uniform() * total;
    std::size_t chosen = n - 1;
    for (std::size_t i = 0; i < n; ++i) {
      pick -= d2[i];
      if (pick <= 0.0) {
        chosen = i;
        break;
      }
    }
    for (std::size_t c = 0; c < dim; ++c) centers(j, c) = pts(chosen, c);
  }

  KmeansResult res;
  res.assign.assign(n, 0);
  for (int iter = 0; iter < 100; ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      int arg = 0;
      for (std::size_t j = 0; j < k; ++j) {
        double dd = 0.0;
        for (std::size_t c = 0; c < dim; ++c) {
          const double diff = pts(i, c) - centers(j, c);
          dd += diff * diff;
        }
        if (dd < best) {
          best = dd;
          arg = static_cast<int>(j);
        }
      }
      if (res.assign[i] != arg) {
        res.assign[i] = arg;
        changed = true;
      }
    }
    centers.fill(0.0);
    std::vector<std::size_t> count(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      count[res.assign[i]]++;
      for (std::size_t c = 0; c < dim; ++c) centers(res.assign[i], c) += pts(i, c);
    }
    for (std::size_t j = 0; j < k; ++j)
      if (count[j] > 0)
        for (std::size_t c = 0; c < dim; ++c) centers(j, c) /= double(count[j]);
    if (!changed) break;
  }
  res.sse = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < dim; ++c) {
      const double diff = pts(i, c) - centers(res.assign[i], c);
      res.sse += diff * diff;
    }
  }
  return res;
}

}  // namespace

double clustering_accuracy(const DenseMatrix& a, const std::vector<int>& labels, std::size_t k,
                           bool use_all_columns, std::uint64_t seed) {
  if (k < 2) throw std::invalid_argument("clustering_accuracy: k must be >= 2");
  if (labels.size() != a.rows())
    throw std::invalid_argument("clustering_accuracy: labels length must match rows");
  if (k > a.rows()) throw std::invalid_argument("clustering_accuracy: k larger than row count");
  const std::size_t dim = use_all_columns ? a.cols() : std::min<std::size_t>(2, a.cols());
  DenseMatrix pts(a.rows(), dim);
  for (std::size_t c = 0; c < dim; ++c) {
    double nsq = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i) nsq += a(i, c) * a(i, c);
    const double inv = nsq > 0.0 ? 1.0 / std::sqrt(nsq) : 1.0;
    for (std::size_t i = 0; i < a.rows(); ++i) pts(i, c) = a(i, c) * inv;
  }

  KmeansResult best;
  for (int restart = 0; restart < 20; ++restart) {
    Rng rng = Rng::fork(seed, {0x6b6d, static_cast<std::uint64_t>(restart)});
    KmeansResult r = kmeans_once(pts, k, rng);
    if (r.sse < best.sse) best = r;
  }

  // Map clusters to labels by best assignment on the confusion matrix.
  int max_label = 0;
  for (int l : labels) max_label = std::max(max_label, l);
  const std::size_t nl = std::max<std::size_t>(k, static_cast<std::size_t>(max_label) + 1);
  DenseMatrix confusion(nl, nl);
  for (std::size_t i = 0; i < a.rows(); ++i)
    confusion(best.assign[i], labels[i]) += 1.0;
  const std::vector<std::size_t> map = best_assignment(confusion);
  double correct = 0.0;
  for (std::size_t j = 0; j < nl; ++j) correct += confusion(j, map[j]);
  return 100.0 * correct / double(a.rows());
}

}  // namespace cmtf
