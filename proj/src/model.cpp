#include "cmtf/model.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "cmtf/linalg.hpp"
#include "cmtf/rng.hpp"

namespace cmtf {

std::string to_string(CouplingCase c) {
  switch (c) {
    case CouplingCase::c1: return "1";
    case CouplingCase::c2a: return "2a";
    case CouplingCase::c2b: return "2b";
    case CouplingCase::c3a: return "3a";
    case CouplingCase::c3b: return "3b";
  }
  return "?";
}

DenseMatrix CouplingSpec::identity_selector(std::size_t n, const std::vector<std::size_t>& cols) {
  DenseMatrix h(n, cols.size());
  for (std::size_t j = 0; j < cols.size(); ++j) {
    if (cols[j] >= n) throw std::invalid_argument("identity_selector: index out of range");
    h(cols[j], j) = 1.0;
  }
  return h;
}

std::size_t ModelSpec::mode_dim(std::size_t dec, std::size_t mode) const {
  const DecompositionSpec& d = decompositions.at(dec);
  const DataSet& ds = datasets.at(dec);
  if (d.kind == DecompKind::matrix) {
    const auto& m = std::get<DenseMatrix>(ds);
    return mode == 0 ? m.rows() : m.cols();
  }
  if (d.kind == DecompKind::cp) {
    const auto& t = std::get<DenseTensor3>(ds);
    return mode == 0 ? t.dim0() : (mode == 1 ? t.dim1() : t.dim2());
  }
  const auto& rt = std::get<RaggedTensor>(ds);
  if (mode == 0) return rt.rows();
  return rt.n_slices();  // modes 1 (varying, per-slice rows) and 2 share K
}

std::vector<std::size_t> ModelSpec::varying_dims(std::size_t dec) const {
  const auto& rt = std::get<RaggedTensor>(datasets.at(dec));
  std::vector<std::size_t> out(rt.n_slices());
  for (std::size_t k = 0; k < rt.n_slices(); ++k) out[k] = rt.slice(k).cols();
  return out;
}

double ModelSpec::data_norm_sq(std::size_t dec) const {
  const DataSet& ds = datasets.at(dec);
  if (std::holds_alternative<DenseMatrix>(ds)) return fro_norm_sq(std::get<DenseMatrix>(ds));
  if (std::holds_alternative<DenseTensor3>(ds)) return fro_norm_sq(std::get<DenseTensor3>(ds));
  return fro_norm_sq(std::get<RaggedTensor>(ds));
}

namespace {

bool matches_kind(const DataSet& ds, DecompKind kind) {
  switch (kind) {
    case DecompKind::matrix: return std::holds_alternative<DenseMatrix>(ds);
    case DecompKind::cp: return std::holds_alternative<DenseTensor3>(ds);
    case DecompKind::parafac2: return std::holds_alternative<RaggedTensor>(ds);
  }
  return false;
}

std::string loc(std::size_t dec, std::size_t mode) {
  std::ostringstream os;
  os << "decomposition " << dec << ", mode " << mode;
  return os.str();
}

}  // namespace

std::vector<std::string> validate(const ModelSpec& model) {
  std::vector<std::string> out;
  auto add = [&out](const std::string& s) { out.push_back(s); };

  if (model.datasets.size() != model.decompositions.size()) {
    add("each dataset needs exactly one decomposition (counts differ)");
    return out;
  }

  for (std::size_t d = 0; d < model.decompositions.size(); ++d) {
    const DecompositionSpec& spec = model.decompositions[d];
    if (spec.rank < 1) add("decomposition " + std::to_string(d) + ": rank must be >= 1");
    if (!(spec.weight > 0.0)) add("decomposition " + std::to_string(d) + ": weight must be > 0");
    if (!matches_kind(model.datasets[d], spec.kind))
      add("decomposition " + std::to_string(d) + ": dataset type does not match kind");
    if (spec.mode_regs.size() != n_modes(spec.kind))
      add("decomposition " + std::to_string(d) + ": needs one regularizer per mode");
    for (std::size_t m = 0; m < spec.mode_regs.size(); ++m) {
      const RegularizerSpec& g = spec.mode_regs[m];
      if (g.lambda < 0.0) add(loc(d, m) + ": regularizer penalty must be >= 0");
      if (g.kind == RegKind::graph_laplacian_smooth) {
        if (!g.laplacian) {
          add(loc(d, m) + ": graph regularizer needs a Laplacian");
          continue;
        }
        const DenseMatrix& l = *g.laplacian;
        if (l.rows() != l.cols()) add(loc(d, m) + ": Laplacian must be square");
        bool sym = l.rows() == l.cols();
        for (std::size_t i = 0; sym && i < l.rows(); ++i)
          for (std::size_t j = i + 1; j < l.cols(); ++j)
            if (std::abs(l(i, j) - l(j, i)) > 1e-12 * (1.0 + std::abs(l(i, j)))) {
              sym = false;
              break;
            }
        if (!sym) add(loc(d, m) + ": Laplacian must be symmetric");
        if (!matches_kind(model.datasets[d], spec.kind)) continue;
        std::size_t expect = model.mode_dim(d, m);
        if (spec.kind == DecompKind::parafac2 && m == 1) {
          // per-slice rows; every J_k must match the Laplacian
          for (std::size_t jk : model.varying_dims(d))
            if (jk != l.rows())
              add(loc(d, m) + ": Laplacian size must match every slice length");
        } else if (l.rows() != expect) {
          add(loc(d, m) + ": Laplacian size must match factor rows");
        }
      }
    }
    if (matches_kind(model.datasets[d], spec.kind) && spec.kind == DecompKind::parafac2) {
      const auto& rt = std::get<RaggedTensor>(model.datasets[d]);
      if (rt.n_slices() < 1) add("decomposition " + std::to_string(d) + ": needs K >= 1 slices");
    }
  }
  if (!out.empty()) return out;  // shape queries below need consistent basics

  std::vector<std::vector<int>> coupled(model.decompositions.size());
  for (std::size_t d = 0; d < model.decompositions.size(); ++d)
    coupled[d].assign(n_modes(model.decompositions[d].kind), -1);

  for (std::size_t c = 0; c < model.couplings.size(); ++c) {
    const CouplingSpec& cp = model.couplings[c];
    std::string tag = "coupling " + std::to_string(c);
    if (cp.members.size() < 2) {
      add(tag + ": needs at least two members");
      continue;
    }
    bool members_ok = true;
    for (const CouplingMemberSpec& mem : cp.members) {
      if (mem.dec >= model.decompositions.size()) {
        add(tag + ": member references unknown decomposition");
        members_ok = false;
        continue;
      }
      const DecompositionSpec& spec = model.decompositions[mem.dec];
      if (mem.mode >= n_modes(spec.kind)) {
        add(tag + ": member references unknown mode");
        members_ok = false;
        continue;
      }
      if (spec.kind == DecompKind::parafac2 && mem.mode == 1) {
        add(tag + ": coupling on the PARAFAC2 varying mode is not supported");
        members_ok = false;
        continue;
      }
      if (coupled[mem.dec][mem.mode] >= 0) {
        add(tag + ": " + loc(mem.dec, mem.mode) + " already belongs to coupling " +
            std::to_string(coupled[mem.dec][mem.mode]));
        members_ok = false;
      } else {
        coupled[mem.dec][mem.mode] = static_cast<int>(c);
      }
    }
    if (!members_ok) continue;

    // shape rules per case
    const std::size_t m1 = cp.delta_rows, m2 = cp.delta_cols;
    for (const CouplingMemberSpec& mem : cp.members) {
      const std::size_t rows = model.mode_dim(mem.dec, mem.mode);
      const std::size_t rank = model.decompositions[mem.dec].rank;
      const std::string at = tag + " member at " + loc(mem.dec, mem.mode);
      switch (cp.kase) {
        case CouplingCase::c1:
          if (!mem.transform.empty()) add(at + ": case 1 takes no transform");
          if (rows != m1) add(at + ": row mismatch with shared variable");
          if (rank != m2) add(at + ": rank mismatch with shared variable");
          break;
        case CouplingCase::c2a:
          if (mem.transform.rows() != m1 || mem.transform.cols() != rows)
            add(at + ": transform must be " + std::to_string(m1) + "x" + std::to_string(rows));
          if (rank != m2) add(at + ": rank mismatch with shared variable");
          break;
        case CouplingCase::c2b:
          if (mem.transform.rows() != rows || mem.transform.cols() != m1)
            add(at + ": transform must be " + std::to_string(rows) + "x" + std::to_string(m1));
          if (rank != m2) add(at + ": rank mismatch with shared variable");
          break;
        case CouplingCase::c3a:
          if (mem.transform.rows() != rank || mem.transform.cols() != m2)
            add(at + ": transform must be " + std::to_string(rank) + "x" + std::to_string(m2));
          if (rows != m1) add(at + ": row mismatch with shared variable");
          break;
        case CouplingCase::c3b:
          if (mem.transform.rows() != m2 || mem.transform.cols() != rank)
            add(at + ": transform must be " + std::to_string(m2) + "x" + std::to_string(rank));
          if (rows != m1) add(at + ": row mismatch with shared variable");
          break;
      }
    }
  }
  return out;
}

double FactorBlock::norm_sq() const {
  if (!varying) return fro_norm_sq(m);
  double s = 0.0;
  for (const auto& b : slices) s += fro_norm_sq(b);
  return s;
}

std::size_t FactorBlock::n_elements() const {
  if (!varying) return m.size();
  std::size_t n = 0;
  for (const auto& b : slices) n += b.size();
  return n;
}

namespace {

DenseMatrix draw_factor(std::size_t rows, std::size_t cols, bool nonneg, Rng& rng) {
  DenseMatrix f(rows, cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) f(i, j) = nonneg ? rng.uniform() : rng.normal();
  // normalize columns
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

FactorSet random_init(const ModelSpec& model, std::uint64_t seed) {
  FactorSet out;
  out.dec.resize(model.n_decompositions());
  for (std::size_t d = 0; d < model.n_decompositions(); ++d) {
    const DecompositionSpec& spec = model.decompositions[d];
    DecFactors& df = out.dec[d];
    df.kind = spec.kind;
    df.rank = spec.rank;
    df.modes.resize(n_modes(spec.kind));
    for (std::size_t m = 0; m < df.modes.size(); ++m) {
      // The PARAFAC2 slice-weight mode always starts positive: per-slice sign
      // flips are absorbed by the orthogonal P_k anyway, and sign-crossing
      // weights starve slices early in the alternating optimization.
      const bool nonneg = spec.mode_regs[m].needs_nonneg_init() ||
                          (spec.kind == DecompKind::parafac2 && m == 2);
      FactorBlock& fb = df.modes[m];
      if (spec.kind == DecompKind::parafac2 && m == 1) {
        fb.varying = true;
        const auto dims = model.varying_dims(d);
        fb.slices.reserve(dims.size());
        for (std::size_t k = 0; k < dims.size(); ++k) {
          Rng rng = Rng::fork(seed, {d, m, k});
          fb.slices.push_back(draw_factor(dims[k], spec.rank, nonneg, rng));
        }
      } else {
        Rng rng = Rng::fork(seed, {d, m, 0xfffful});
        fb.m = draw_factor(model.mode_dim(d, m), spec.rank, nonneg, rng);
      }
    }
  }
  return out;
}

DataSet reconstruct(const FactorSet& f, std::size_t dec) {
  const DecFactors& df = f.dec.at(dec);
  switch (df.kind) {
    case DecompKind::matrix:
      return matmul_a_bt(df.modes[0].m, df.modes[1].m);
    case DecompKind::cp:
      return cp_reconstruct(df.modes[0].m, df.modes[1].m, df.modes[2].m);
    case DecompKind::parafac2: {
      const DenseMatrix& a = df.modes[0].m;
      const DenseMatrix& c = df.modes[2].m;
      std::vector<DenseMatrix> slices;
      slices.reserve(df.modes[1].slices.size());
      for (std::size_t k = 0; k < df.modes[1].slices.size(); ++k) {
        const DenseMatrix& bk = df.modes[1].slices[k];
        DenseMatrix ad = a;  // A * D_k
        for (std::size_t i = 0; i < ad.rows(); ++i)
          for (std::size_t r = 0; r < ad.cols(); ++r) ad(i, r) *= c(k, r);
        slices.push_back(matmul_a_bt(ad, bk));
      }
      return RaggedTensor(std::move(slices));
    }
  }
  throw std::logic_error("reconstruct: unknown kind");
}

}  // namespace cmtf
