#include "cmtf/driver.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <limits>
#include <mutex>
#include <stdexcept>
#include <thread>

#include "cmtf/metrics.hpp"
#include "cmtf/rng.hpp"

namespace cmtf {

namespace {

std::vector<std::size_t> canonical_mode_order(DecompKind kind) {
  switch (kind) {
    case DecompKind::parafac2: return {1, 0, 2};  // B first, then A, then C
    case DecompKind::cp: return {0, 1, 2};
    case DecompKind::matrix: return {0, 1};
  }
  return {};
}

double seconds_since(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

namespace {

double dataset_err_sq(const DataSet& data, const DataSet& recon) {
  if (std::holds_alternative<DenseMatrix>(data)) {
    return std::pow(fro_norm_diff(std::get<DenseMatrix>(data), std::get<DenseMatrix>(recon)), 2);
  }
  if (std::holds_alternative<DenseTensor3>(data)) {
    const auto& y = std::get<DenseTensor3>(data);
    const auto& r = std::get<DenseTensor3>(recon);
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
      const double dd = y.data()[i] - r.data()[i];
      s += dd * dd;
    }
    return s;
  }
  const auto& x = std::get<RaggedTensor>(data);
  const auto& r = std::get<RaggedTensor>(recon);
  double s = 0.0;
  for (std::size_t k = 0; k < x.n_slices(); ++k)
    s += std::pow(fro_norm_diff(x.slice(k), r.slice(k)), 2);
  return s;
}

double penalties_value(const ModelSpec& model, const FactorSet& f, bool* feasible_out) {
  double total = 0.0;
  bool feasible = true;
  for (std::size_t d = 0; d < model.n_decompositions(); ++d) {
    const DecompositionSpec& spec = model.decompositions[d];
    for (std::size_t m = 0; m < n_modes(spec.kind); ++m) {
      const RegularizerSpec& g = spec.mode_regs[m];
      if (g.is_none()) continue;
      const FactorBlock& fb = f.dec[d].modes[m];
      if (fb.varying) {
        for (const DenseMatrix& bk : fb.slices) {
          const double p = penalty_value(g, bk);
          if (std::isinf(p)) {
            feasible = false;
          } else {
            total += p;
          }
        }
      } else {
        const double p = penalty_value(g, fb.m);
        if (std::isinf(p)) {
          feasible = false;
        } else {
          total += p;
        }
      }
    }
  }
  if (feasible_out) *feasible_out = feasible;
  return total;
}

}  // namespace

double function_value(const ModelSpec& model, const FactorSet& f, bool* hard_feasible) {
  double total = penalties_value(model, f, hard_feasible);
  for (std::size_t d = 0; d < model.n_decompositions(); ++d)
    total += model.decompositions[d].weight * dataset_err_sq(model.datasets[d], reconstruct(f, d));
  return total;
}

namespace {

// One update unit of the outer sweep: either a single mode or a whole
// coupled group, triggered when its first member comes up.
struct UpdateUnit {
  bool is_b_mode = false;
  std::size_t dec = 0;  // b-mode owner
  int coupling = -1;    // >= 0: coupled group
  std::vector<ModeRef> group;
};

std::vector<UpdateUnit> build_schedule(const ModelSpec& model) {
  std::vector<std::vector<int>> cpl_of(model.n_decompositions());
  for (std::size_t d = 0; d < model.n_decompositions(); ++d)
    cpl_of[d].assign(n_modes(model.decompositions[d].kind), -1);
  for (std::size_t c = 0; c < model.couplings.size(); ++c)
    for (const auto& mem : model.couplings[c].members)
      cpl_of[mem.dec][mem.mode] = static_cast<int>(c);

  std::vector<UpdateUnit> units;
  std::vector<bool> coupling_done(model.couplings.size(), false);
  for (std::size_t d = 0; d < model.n_decompositions(); ++d) {
    for (std::size_t m : canonical_mode_order(model.decompositions[d].kind)) {
      if (model.decompositions[d].kind == DecompKind::parafac2 && m == 1) {
        UpdateUnit u;
        u.is_b_mode = true;
        u.dec = d;
        units.push_back(std::move(u));
        continue;
      }
      const int c = cpl_of[d][m];
      if (c < 0) {
        UpdateUnit u;
        u.group.push_back({d, m});
        units.push_back(std::move(u));
      } else if (!coupling_done[c]) {
        coupling_done[c] = true;
        UpdateUnit u;
        u.coupling = c;
        for (const auto& mem : model.couplings[c].members)
          u.group.push_back({mem.dec, mem.mode});
        units.push_back(std::move(u));
      }
    }
  }
  return units;
}

}  // namespace

FitResult fit(const ModelSpec& model, const OuterSettings& settings) {
  {
    const auto violations = validate(model);
    if (!violations.empty())
      throw std::invalid_argument("fit: invalid model: " + violations.front());
  }
  for (std::size_t d = 0; d < model.n_decompositions(); ++d)
    if (!(model.data_norm_sq(d) > 0.0))
      throw std::invalid_argument("fit: dataset " + std::to_string(d) + " is all zeros");

  const auto t0 = std::chrono::steady_clock::now();
  FitResult res;
  res.report.seed = settings.seed;
  res.report.mode_order = "parafac2:B,A,C; cp:0,1,2; matrix:0,1";

  std::vector<double> data_norms_sq(model.n_decompositions());
  for (std::size_t d = 0; d < model.n_decompositions(); ++d)
    data_norms_sq[d] = model.data_norm_sq(d);

  FactorSet factors = random_init(model, settings.seed);
  SolverState st = init_state(model, std::move(factors), settings.seed ^ 0x9e3779b97f4a7c15ULL);
  const std::vector<UpdateUnit> units = build_schedule(model);

  double f_prev = std::numeric_limits<double>::infinity();
  for (int outer = 0; outer < settings.max_outer_iters; ++outer) {
    if (!settings.warm_starts && outer > 0)
      randomize_inner_variables(model, st,
                                settings.seed ^ (0x51ed270b * static_cast<std::uint64_t>(outer)));
    for (const UpdateUnit& u : units) {
      if (u.is_b_mode) {
        update_parafac2_b_mode(model, st, u.dec, settings.inner);
        refresh_gram(model, st, u.dec, 1);
      } else {
        const CouplingSpec* cpl = u.coupling >= 0 ? &model.couplings[u.coupling] : nullptr;
        CouplingState* cst = u.coupling >= 0 ? &st.couplings[u.coupling] : nullptr;
        update_mode_group(model, st, u.group, cpl, cst, settings.inner);
        for (const ModeRef& mr : u.group) refresh_gram(model, st, mr.dec, mr.mode);
      }
    }

    IterRecord rec;
    rec.iter = outer;
    bool feasible = true;
    rec.f = penalties_value(model, st.factors, &feasible);
    res.report.hard_feasible = feasible;
    for (std::size_t d = 0; d < model.n_decompositions(); ++d) {
      // one reconstruction feeds both the function value and the fit
      const double err_sq = dataset_err_sq(model.datasets[d], reconstruct(st.factors, d));
      rec.f += model.decompositions[d].weight * err_sq;
      rec.fit.push_back(100.0 * (1.0 - err_sq / data_norms_sq[d]));
      if (model.decompositions[d].kind == DecompKind::parafac2) {
        const auto& bs = st.factors.dec[d].modes[1].slices;
        const Parafac2State& ps = st.par2[d];
        double acc = 0.0;
        for (std::size_t k = 0; k < bs.size(); ++k) {
          const DenseMatrix target = matmul(ps.p[k], ps.delta_b);
          const double nb = fro_norm(bs[k]);
          acc += nb > 0.0 ? fro_norm_diff(bs[k], target) / nb : 0.0;
        }
        rec.par2_residual.push_back(acc / double(bs.size()));
      }
    }
    for (std::size_t c = 0; c < model.couplings.size(); ++c)
      rec.coupling_residual.push_back(coupling_residual(model, st, c));
    rec.seconds = seconds_since(t0);
    res.report.iters.push_back(rec);

    if (!std::isfinite(rec.f)) {
      res.report.diverged = true;
      break;
    }
    const double df = std::abs(f_prev - rec.f);
    if (outer > 0 &&
        (df < settings.outer_abs_tol || (f_prev != 0.0 && df / std::abs(f_prev) < settings.outer_rel_tol)))
      break;
    f_prev = rec.f;
    if (settings.time_budget_seconds > 0.0 && rec.seconds > settings.time_budget_seconds) break;
  }

  res.report.final_f = res.report.iters.empty() ? function_value(model, st.factors, nullptr)
                                                : res.report.iters.back().f;
  if (res.report.iters.empty()) {
    // max_outer_iters == 0: report initialization metrics
    IterRecord rec;
    rec.iter = -1;
    bool feasible = true;
    rec.f = function_value(model, st.factors, &feasible);
    res.report.hard_feasible = feasible;
    for (std::size_t d = 0; d < model.n_decompositions(); ++d)
      rec.fit.push_back(fit_percent(model.datasets[d], reconstruct(st.factors, d)));
    for (std::size_t c = 0; c < model.couplings.size(); ++c)
      rec.coupling_residual.push_back(coupling_residual(model, st, c));
    rec.seconds = seconds_since(t0);
    res.report.final_f = rec.f;
    res.report.iters.push_back(std::move(rec));
  }
  res.factors = st.factors;
  res.state = std::move(st);
  return res;
}

void parallel_for(std::size_t n, int n_threads, const std::function<void(std::size_t)>& fn) {
  const int workers = std::max(1, std::min<int>(n_threads, static_cast<int>(n)));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  std::exception_ptr err;
  std::mutex err_mu;
  for (int t = 0; t < workers; ++t) {
    pool.emplace_back([&]() {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(err_mu);
          if (!err) err = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (err) std::rethrow_exception(err);
}

FitResult multi_start_fit(const ModelSpec& model, const OuterSettings& settings, int n_threads) {
  if (settings.n_starts < 1) throw std::invalid_argument("multi_start_fit: n_starts >= 1");
  std::vector<FitResult> results(settings.n_starts);
  std::vector<bool> failed(settings.n_starts, false);
  parallel_for(static_cast<std::size_t>(settings.n_starts), n_threads, [&](std::size_t s) {
    OuterSettings one = settings;
    one.seed = settings.seed + s;
    try {
      results[s] = fit(model, one);
      if (results[s].report.diverged) failed[s] = true;
    } catch (const std::exception&) {
      failed[s] = true;
    }
  });

  int best = -1;
  for (int s = 0; s < settings.n_starts; ++s) {
    if (failed[s]) continue;
    if (best < 0 || results[s].report.final_f < results[best].report.final_f) best = s;
  }
  if (best < 0) throw std::runtime_error("multi_start_fit: every start diverged");
  FitResult out = std::move(results[best]);
  out.report.best_start = best;
  out.report.start_final_f.resize(settings.n_starts);
  for (int s = 0; s < settings.n_starts; ++s)
    out.report.start_final_f[s] = failed[s] ? std::numeric_limits<double>::quiet_NaN()
                                            : results[s].report.final_f;
  out.report.start_final_f[best] = out.report.final_f;
  return out;
}

namespace {

DenseMatrix normal_factor(std::size_t rows, std::size_t cols, Rng& rng) {
  DenseMatrix f(rows, cols);
  for (std::size_t i = 0; i < f.size(); ++i) f.data()[i] = rng.normal();
  for (std::size_t j = 0; j < cols; ++j) {
    double nsq = 0.0;
    for (std::size_t i = 0; i < rows; ++i) nsq += f(i, j) * f(i, j);
    if (nsq > 0.0) {
      const double inv = 1.0 / std::sqrt(nsq);
      for (std::size_t i = 0; i < rows; ++i) f(i, j) *= inv;
    }
  }
  return f;
}

}  // namespace

FactorSet parafac2_als_baseline(const RaggedTensor& x, std::size_t rank,
                                const OuterSettings& settings) {
  const std::size_t kk = x.n_slices();
  const std::size_t rows = x.rows();
  if (rank > rows) throw std::invalid_argument("parafac2_als_baseline: rank exceeds row count");
  for (std::size_t k = 0; k < kk; ++k)
    if (rank > x.slice(k).cols())
      throw std::invalid_argument("parafac2_als_baseline: rank exceeds a slice length");

  const double xnorm_sq = fro_norm_sq(x);
  double best_err = std::numeric_limits<double>::infinity();
  FactorSet best;

  for (int s = 0; s < settings.n_starts; ++s) {
    Rng rng = Rng::fork(settings.seed + s, {0xa15});
    DenseMatrix a = normal_factor(rows, rank, rng);
    DenseMatrix c(kk, rank, 1.0);
    for (std::size_t i = 0; i < c.size(); ++i) c.data()[i] = std::abs(rng.normal()) + 0.1;
    DenseMatrix m = DenseMatrix::identity(rank);  // invariant profile Delta_B
    std::vector<DenseMatrix> p(kk);

    double fit_prev = -std::numeric_limits<double>::infinity();
    double err = std::numeric_limits<double>::infinity();
    for (int outer = 0; outer < settings.max_outer_iters; ++outer) {
      // (i) Procrustes step per slice
      for (std::size_t k = 0; k < kk; ++k) {
        DenseMatrix ad = a;
        for (std::size_t i = 0; i < rows; ++i)
          for (std::size_t r = 0; r < rank; ++r) ad(i, r) *= c(k, r);
        p[k] = procrustes_orthogonal(matmul_at_b(x.slice(k), matmul_a_bt(ad, m)));
      }
      // (ii) one CP-ALS sweep on the projected tensor Y_k = X_k P_k
      DenseTensor3 y(rows, rank, kk);
      for (std::size_t k = 0; k < kk; ++k) {
        const DenseMatrix yk = matmul(x.slice(k), p[k]);
        for (std::size_t i = 0; i < rows; ++i)
          for (std::size_t j = 0; j < rank; ++j) y(i, j, k) = yk(i, j);
      }
      auto solve_ls = [](const DenseMatrix& rhs, DenseMatrix g) {
        const double jitter = 1e-12 * std::max(1.0, fro_norm(g));
        for (std::size_t i = 0; i < g.rows(); ++i) g(i, i) += jitter;
        return CholeskyFactor::compute(g).solve_rows(rhs);
      };
      {
        DenseMatrix g = gram_hadamard(m, c);
        a = solve_ls(mttkrp(y, m, c, 0), std::move(g));
      }
      {
        DenseMatrix g = gram_hadamard(a, c);
        m = solve_ls(mttkrp(y, a, c, 1), std::move(g));
      }
      {
        DenseMatrix g = gram_hadamard(a, m);
        c = solve_ls(mttkrp(y, a, m, 2), std::move(g));
      }
      // fit on the original slices
      err = 0.0;
      for (std::size_t k = 0; k < kk; ++k) {
        DenseMatrix ad = a;
        for (std::size_t i = 0; i < rows; ++i)
          for (std::size_t r = 0; r < rank; ++r) ad(i, r) *= c(k, r);
        const DenseMatrix recon = matmul_a_bt(ad, matmul(p[k], m));
        err += std::pow(fro_norm_diff(x.slice(k), recon), 2);
      }
      const double fit = 100.0 * (1.0 - err / xnorm_sq);
      if (outer > 0 && std::abs(fit - fit_prev) < settings.outer_rel_tol * 100.0) break;
      fit_prev = fit;
    }

    if (err < best_err) {
      best_err = err;
      DecFactors df;
      df.kind = DecompKind::parafac2;
      df.rank = rank;
      df.modes.resize(3);
      df.modes[0].m = a;
      df.modes[1].varying = true;
      df.modes[1].slices.resize(kk);
      for (std::size_t k = 0; k < kk; ++k) df.modes[1].slices[k] = matmul(p[k], m);
      df.modes[2].m = c;
      best.dec.clear();
      best.dec.push_back(std::move(df));
    }
  }
  return best;
}

}  // namespace cmtf
