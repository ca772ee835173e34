#include "cmtf/io.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iostream>
#include <sstream>

#include "json.hpp"

#include "cmtf/metrics.hpp"

namespace cmtf {

static_assert(std::endian::native == std::endian::little,
              "file formats assume a little-endian host");

namespace {

using nlohmann::json;

constexpr char kDatasetMagic[8] = {'C', 'M', 'T', 'F', 'D', 'A', 'T', '1'};
constexpr char kFactorMagic[8] = {'C', 'M', 'T', 'F', 'F', 'A', 'C', '1'};

void put_u32(std::ostream& os, std::uint32_t v) { os.write(reinterpret_cast<char*>(&v), 4); }
void put_u64(std::ostream& os, std::uint64_t v) { os.write(reinterpret_cast<char*>(&v), 8); }
void put_f64s(std::ostream& os, const double* p, std::size_t n) {
  os.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(8 * n));
}

std::uint32_t get_u32(std::istream& is) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 4);
  return v;
}
std::uint64_t get_u64(std::istream& is) {
  std::uint64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 8);
  return v;
}
void get_f64s(std::istream& is, double* p, std::size_t n) {
  is.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(8 * n));
}

void put_matrix(std::ostream& os, const DenseMatrix& m) {
  put_u64(os, m.rows());
  put_u64(os, m.cols());
  put_f64s(os, m.data(), m.size());
}

DenseMatrix get_matrix(std::istream& is) {
  const std::uint64_t rows = get_u64(is);
  const std::uint64_t cols = get_u64(is);
  if (!is || rows * cols > (1ull << 32))
    throw std::runtime_error("corrupt matrix block in file");
  DenseMatrix m(rows, cols);
  get_f64s(is, m.data(), m.size());
  if (!is) throw std::runtime_error("truncated matrix block in file");
  return m;
}

}  // namespace

void write_dataset(const std::filesystem::path& path, const DataSet& data) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path.string());
  os.write(kDatasetMagic, 8);
  if (std::holds_alternative<DenseMatrix>(data)) {
    put_u32(os, 0);
    put_matrix(os, std::get<DenseMatrix>(data));
  } else if (std::holds_alternative<DenseTensor3>(data)) {
    const auto& t = std::get<DenseTensor3>(data);
    put_u32(os, 1);
    put_u64(os, t.dim0());
    put_u64(os, t.dim1());
    put_u64(os, t.dim2());
    put_f64s(os, t.data(), t.size());
  } else {
    const auto& rt = std::get<RaggedTensor>(data);
    put_u32(os, 2);
    put_u64(os, rt.rows());
    put_u64(os, rt.n_slices());
    for (std::size_t k = 0; k < rt.n_slices(); ++k) put_u64(os, rt.slice(k).cols());
    for (std::size_t k = 0; k < rt.n_slices(); ++k)
      put_f64s(os, rt.slice(k).data(), rt.slice(k).size());
  }
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

DataSet read_dataset(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open: " + path.string());
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kDatasetMagic, 8) != 0)
    throw std::runtime_error("not a dataset file: " + path.string());
  const std::uint32_t kind = get_u32(is);
  if (kind == 0) return get_matrix(is);
  if (kind == 1) {
    const std::uint64_t i = get_u64(is), j = get_u64(is), k = get_u64(is);
    DenseTensor3 t(i, j, k);
    get_f64s(is, t.data(), t.size());
    if (!is) throw std::runtime_error("truncated tensor payload: " + path.string());
    return t;
  }
  if (kind == 2) {
    const std::uint64_t i = get_u64(is), k = get_u64(is);
    std::vector<std::uint64_t> jdims(k);
    for (auto& j : jdims) j = get_u64(is);
    std::vector<DenseMatrix> slices;
    slices.reserve(k);
    for (std::uint64_t s = 0; s < k; ++s) {
      DenseMatrix m(i, jdims[s]);
      get_f64s(is, m.data(), m.size());
      slices.push_back(std::move(m));
    }
    if (!is) throw std::runtime_error("truncated ragged payload: " + path.string());
    return RaggedTensor(std::move(slices));
  }
  throw std::runtime_error("unknown dataset kind in " + path.string());
}

void write_factors(const std::filesystem::path& path, const FactorSet& f) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path.string());
  os.write(kFactorMagic, 8);
  put_u32(os, static_cast<std::uint32_t>(f.dec.size()));
  for (const DecFactors& d : f.dec) {
    put_u32(os, d.kind == DecompKind::matrix ? 0u : (d.kind == DecompKind::cp ? 1u : 2u));
    put_u64(os, d.rank);
    if (d.kind == DecompKind::parafac2) {
      put_matrix(os, d.modes[0].m);
      put_u64(os, d.modes[1].slices.size());
      for (const auto& b : d.modes[1].slices) put_matrix(os, b);
      put_matrix(os, d.modes[2].m);
    } else {
      for (const auto& fb : d.modes) put_matrix(os, fb.m);
    }
  }
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

FactorSet read_factors(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open: " + path.string());
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kFactorMagic, 8) != 0)
    throw std::runtime_error("not a factor file: " + path.string());
  FactorSet f;
  const std::uint32_t nd = get_u32(is);
  f.dec.resize(nd);
  for (std::uint32_t d = 0; d < nd; ++d) {
    const std::uint32_t kind = get_u32(is);
    DecFactors& df = f.dec[d];
    df.kind = kind == 0 ? DecompKind::matrix : (kind == 1 ? DecompKind::cp : DecompKind::parafac2);
    df.rank = get_u64(is);
    df.modes.resize(n_modes(df.kind));
    if (df.kind == DecompKind::parafac2) {
      df.modes[0].m = get_matrix(is);
      const std::uint64_t kk = get_u64(is);
      df.modes[1].varying = true;
      df.modes[1].slices.resize(kk);
      for (std::uint64_t k = 0; k < kk; ++k) df.modes[1].slices[k] = get_matrix(is);
      df.modes[2].m = get_matrix(is);
    } else {
      for (auto& fb : df.modes) fb.m = get_matrix(is);
    }
  }
  return f;
}

void write_trace_csv(const std::filesystem::path& path, const RunReport& report) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open for writing: " + path.string());
  std::size_t n_fit = 0, n_par2 = 0, n_cpl = 0;
  if (!report.iters.empty()) {
    n_fit = report.iters.front().fit.size();
    n_par2 = report.iters.front().par2_residual.size();
    n_cpl = report.iters.front().coupling_residual.size();
  }
  os << "iter,f";
  for (std::size_t i = 0; i < n_fit; ++i) os << ",fit" << i;
  for (std::size_t i = 0; i < n_par2; ++i) os << ",parafac2_residual" << i;
  for (std::size_t i = 0; i < n_cpl; ++i) os << ",coupling_residual" << i;
  os << ",seconds\n";
  os.precision(17);
  for (const IterRecord& r : report.iters) {
    os << r.iter << ',' << r.f;
    for (double v : r.fit) os << ',' << v;
    for (double v : r.par2_residual) os << ',' << v;
    for (double v : r.coupling_residual) os << ',' << v;
    os << ',' << r.seconds << '\n';
  }
}

// ---------------------------------------------------------------------------
// experiments and configuration
// ---------------------------------------------------------------------------

bool is_known_experiment(const std::string& id) {
  static const char* ids[] = {"exp1a", "exp1b", "exp1c", "exp2a", "exp2b",
                              "exp2c", "exp2d", "exp3", "exp4"};
  return std::find_if(std::begin(ids), std::end(ids),
                      [&](const char* s) { return id == s; }) != std::end(ids);
}

GenOut make_experiment(const std::string& id, std::uint64_t seed) {
  if (id == "exp1a") return gen_family1({40, 60, 50, 60, 0, 4, 0.2, 0.2}, seed);
  if (id == "exp1b") return gen_family1({200, 250, 200, 300, 0, 4, 0.2, 0.2}, seed);
  if (id == "exp1c") return gen_family1({40, 60, 50, 60, 0, 4, 0.8, 0.2}, seed);
  if (id == "exp2a") return gen_family1({40, 60, 50, 60, 50, 4, 0.2, 0.2}, seed);
  if (id == "exp2b") return gen_family1({200, 250, 200, 300, 200, 4, 0.2, 0.2}, seed);
  if (id == "exp2c") return gen_family1({40, 60, 50, 60, 50, 4, 0.8, 0.2}, seed);
  if (id == "exp2d") return gen_family1({40, 60, 50, 60, 50, 10, 0.2, 0.2}, seed);
  if (id == "exp3") return gen_family3({0.0, true, false, 1e-4}, seed);
  if (id == "exp4") return gen_family4({}, seed);
  throw std::runtime_error("unknown experiment id: " + id);
}

namespace {

RegularizerSpec parse_regularizer(const json& j) {
  if (j.is_string()) {
    const std::string s = j.get<std::string>();
    if (s == "none") return RegularizerSpec::none();
    if (s == "nonneg") return RegularizerSpec::nonneg();
    if (s == "unit_l2_ball_columns") return RegularizerSpec::unit_ball();
    if (s == "nonneg_unit_l2_ball_columns") return RegularizerSpec::nonneg_unit_ball();
    throw std::runtime_error("unknown regularizer: " + s);
  }
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "none") return RegularizerSpec::none();
  if (kind == "nonneg") return RegularizerSpec::nonneg();
  if (kind == "ridge") return RegularizerSpec::ridge(j.at("lambda").get<double>());
  if (kind == "nonneg_ridge") return RegularizerSpec::nonneg_ridge(j.at("lambda").get<double>());
  if (kind == "unit_l2_ball_columns") return RegularizerSpec::unit_ball();
  if (kind == "nonneg_unit_l2_ball_columns") return RegularizerSpec::nonneg_unit_ball();
  if (kind == "graph_laplacian_smooth") {
    const double lambda = j.at("lambda").get<double>();
    if (j.contains("path_nodes"))
      return RegularizerSpec::graph_smooth_path(lambda, j.at("path_nodes").get<std::size_t>());
    // inline dense Laplacian
    const auto& rows = j.at("laplacian");
    DenseMatrix l(rows.size(), rows.empty() ? 0 : rows[0].size());
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::size_t c = 0; c < rows[i].size(); ++c) l(i, c) = rows[i][c].get<double>();
    return RegularizerSpec::graph_smooth(lambda, std::move(l));
  }
  throw std::runtime_error("unknown regularizer kind: " + kind);
}

DenseMatrix parse_matrix(const json& j) {
  DenseMatrix m(j.size(), j.empty() ? 0 : j[0].size());
  for (std::size_t i = 0; i < j.size(); ++i)
    for (std::size_t c = 0; c < j[i].size(); ++c) m(i, c) = j[i][c].get<double>();
  return m;
}

CouplingCase parse_case(const std::string& s) {
  if (s == "1") return CouplingCase::c1;
  if (s == "2a") return CouplingCase::c2a;
  if (s == "2b") return CouplingCase::c2b;
  if (s == "3a") return CouplingCase::c3a;
  if (s == "3b") return CouplingCase::c3b;
  throw std::runtime_error("unknown coupling case: " + s);
}

ModelSpec parse_inline_model(const json& j, const std::filesystem::path& base) {
  ModelSpec model;
  for (const auto& d : j.at("datasets")) {
    std::filesystem::path p = d.get<std::string>();
    if (p.is_relative()) p = base / p;
    model.datasets.push_back(read_dataset(p));
  }
  for (const auto& d : j.at("decompositions")) {
    const std::string kind = d.at("kind").get<std::string>();
    DecompKind dk = kind == "matrix" ? DecompKind::matrix
                                     : (kind == "cp" ? DecompKind::cp : DecompKind::parafac2);
    if (kind != "matrix" && kind != "cp" && kind != "parafac2")
      throw std::runtime_error("unknown decomposition kind: " + kind);
    DecompositionSpec spec = DecompositionSpec::make(dk, d.at("rank").get<std::size_t>());
    spec.weight = d.value("weight", 1.0 / double(j.at("datasets").size()));
    if (d.contains("regularizers")) {
      const auto& regs = d.at("regularizers");
      if (regs.size() != spec.mode_regs.size())
        throw std::runtime_error("regularizers: need one entry per mode");
      for (std::size_t m = 0; m < spec.mode_regs.size(); ++m)
        spec.mode_regs[m] = parse_regularizer(regs[m]);
    }
    model.decompositions.push_back(std::move(spec));
  }
  if (j.contains("couplings")) {
    for (const auto& c : j.at("couplings")) {
      CouplingSpec cpl;
      cpl.kase = parse_case(c.at("case").get<std::string>());
      const auto& shape = c.at("delta_shape");
      cpl.delta_rows = shape[0].get<std::size_t>();
      cpl.delta_cols = shape[1].get<std::size_t>();
      for (const auto& mem : c.at("members")) {
        CouplingMemberSpec ms;
        ms.dec = mem.at("dec").get<std::size_t>();
        ms.mode = mem.at("mode").get<std::size_t>();
        if (mem.contains("transform")) ms.transform = parse_matrix(mem.at("transform"));
        cpl.members.push_back(std::move(ms));
      }
      model.couplings.push_back(std::move(cpl));
    }
  }
  return model;
}

}  // namespace

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open config: " + path.string());
  json j;
  is >> j;
  RunConfig cfg;
  const auto& jm = j.at("model");
  if (jm.contains("synth")) {
    const auto& js = jm.at("synth");
    const std::string id = js.at("experiment").get<std::string>();
    if (!is_known_experiment(id)) throw std::runtime_error("unknown experiment id: " + id);
    GenOut gen = make_experiment(id, js.value("seed", 0ull));
    cfg.model = std::move(gen.model);
    cfg.truth = std::move(gen.truth);
    cfg.labels = std::move(gen.labels);
    cfg.has_truth = true;
  } else if (jm.contains("inline")) {
    cfg.model = parse_inline_model(jm.at("inline"), path.parent_path());
  } else {
    throw std::runtime_error("config model must contain 'synth' or 'inline'");
  }
  if (j.contains("solver")) {
    const auto& s = j.at("solver");
    cfg.solver.n_starts = s.value("n_starts", cfg.solver.n_starts);
    cfg.solver.seed = s.value("seed", cfg.solver.seed);
    cfg.solver.max_outer_iters = s.value("max_outer_iters", cfg.solver.max_outer_iters);
    cfg.solver.outer_abs_tol = s.value("outer_abs_tol", cfg.solver.outer_abs_tol);
    cfg.solver.outer_rel_tol = s.value("outer_rel_tol", cfg.solver.outer_rel_tol);
    cfg.solver.time_budget_seconds = s.value("time_budget_seconds", 0.0);
    cfg.solver.warm_starts = s.value("warm_starts", true);
    cfg.solver.inner.abs_tol = s.value("inner_abs_tol", cfg.solver.inner.abs_tol);
    cfg.solver.inner.rel_tol = s.value("inner_rel_tol", cfg.solver.inner.rel_tol);
    cfg.solver.inner.max_inner_iters = s.value("max_inner_iters", cfg.solver.inner.max_inner_iters);
  }
  cfg.threads = j.value("threads", 1);
  cfg.out_dir = j.value("output", std::string("out"));
  if (cfg.out_dir.is_relative()) cfg.out_dir = path.parent_path() / cfg.out_dir;
  return cfg;
}

void CliOverrides::apply(RunConfig& cfg) const {
  if (seed) cfg.solver.seed = *seed;
  if (threads) cfg.threads = *threads;
  if (out) cfg.out_dir = *out;
  if (starts) cfg.solver.n_starts = *starts;
  if (max_outer) cfg.solver.max_outer_iters = *max_outer;
  if (inner_tol) {
    cfg.solver.inner.abs_tol = *inner_tol;
    cfg.solver.inner.rel_tol = *inner_tol;
  }
  if (outer_abs_tol) cfg.solver.outer_abs_tol = *outer_abs_tol;
  if (outer_rel_tol) cfg.solver.outer_rel_tol = *outer_rel_tol;
}

// ---------------------------------------------------------------------------
// commands
// ---------------------------------------------------------------------------

namespace {

json metrics_to_json(const ModelSpec& model, const FitResult& res) {
  json out;
  out["final_f"] = res.report.final_f;
  out["hard_feasible"] = res.report.hard_feasible;
  out["diverged"] = res.report.diverged;
  out["mode_order"] = res.report.mode_order;
  out["seed"] = res.report.seed;
  out["best_start"] = res.report.best_start;
  if (!res.report.start_final_f.empty()) {
    json arr = json::array();
    for (double v : res.report.start_final_f)
      arr.push_back(std::isfinite(v) ? json(v) : json(nullptr));
    out["start_final_f"] = arr;
  }
  if (!res.report.iters.empty()) {
    const IterRecord& last = res.report.iters.back();
    out["iterations"] = res.report.iters.size();
    out["fit"] = last.fit;
    out["coupling_residual"] = last.coupling_residual;
    out["seconds"] = last.seconds;
  }
  json par2 = json::array();
  for (std::size_t d = 0; d < model.n_decompositions(); ++d)
    if (model.decompositions[d].kind == DecompKind::parafac2)
      par2.push_back(parafac2_residual(res.factors.dec[d].modes[1].slices));
  out["parafac2_residual"] = par2;
  return out;
}

json fms_to_json(const FmsResult& f) {
  json out;
  out["total"] = f.total;
  json decs = json::array();
  for (const FmsDec& d : f.dec) {
    json jd;
    jd["total"] = d.total;
    jd["per_mode"] = d.per_mode;
    jd["permutation"] = d.permutation;
    decs.push_back(jd);
  }
  out["decompositions"] = decs;
  return out;
}

struct ReplicateMetrics {
  std::vector<std::pair<std::string, double>> values;
  void add(const std::string& k, double v) { values.emplace_back(k, v); }
};

struct Aggregate {
  std::vector<std::string> keys;
  std::vector<std::vector<double>> samples;
  void collect(const std::vector<ReplicateMetrics>& reps) {
    for (const auto& rep : reps)
      for (const auto& [k, v] : rep.values) {
        auto it = std::find(keys.begin(), keys.end(), k);
        if (it == keys.end()) {
          keys.push_back(k);
          samples.emplace_back();
          it = keys.end() - 1;
        }
        samples[static_cast<std::size_t>(it - keys.begin())].push_back(v);
      }
  }
  static double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n == 0 ? 0.0 : (n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]));
  }
};

ReplicateMetrics evaluate_replicate(const GenOut& gen, const FitResult& res,
                                    bool with_clustering) {
  ReplicateMetrics m;
  const FmsResult f = fms(gen.truth, res.factors);
  m.add("fms_total", f.total);
  for (std::size_t d = 0; d < f.dec.size(); ++d) {
    m.add("fms_dec" + std::to_string(d), f.dec[d].total);
    for (std::size_t md = 0; md < f.dec[d].per_mode.size(); ++md)
      m.add("fms_dec" + std::to_string(d) + "_mode" + std::to_string(md),
            f.dec[d].per_mode[md]);
  }
  if (!res.report.iters.empty()) {
    const IterRecord& last = res.report.iters.back();
    for (std::size_t i = 0; i < last.fit.size(); ++i)
      m.add("fit" + std::to_string(i), last.fit[i]);
    for (std::size_t i = 0; i < last.coupling_residual.size(); ++i)
      m.add("coupling_residual" + std::to_string(i), last.coupling_residual[i]);
    m.add("seconds", last.seconds);
    m.add("iterations", double(res.report.iters.size()));
  }
  for (std::size_t d = 0; d < gen.model.n_decompositions(); ++d)
    if (gen.model.decompositions[d].kind == DecompKind::parafac2)
      m.add("parafac2_residual", parafac2_residual(res.factors.dec[d].modes[1].slices));

  if (with_clustering && !gen.labels.empty()) {
    // FMS against the clean subject factor and clustering accuracy of the
    // permuted estimate.
    FactorSet clean_truth = gen.truth;
    clean_truth.dec[0].modes[0].m = gen.clean_a;
    const FmsResult fc = fms(clean_truth, res.factors);
    m.add("fms_dec0_mode0_clean", fc.dec[0].per_mode[0]);
    const auto& perm = f.dec[0].permutation;
    const DenseMatrix& a_est = res.factors.dec[0].modes[0].m;
    DenseMatrix a_perm(a_est.rows(), a_est.cols());
    for (std::size_t c = 0; c < perm.size(); ++c)
      for (std::size_t i = 0; i < a_est.rows(); ++i) a_perm(i, c) = a_est(i, perm[c]);
    m.add("clustering_acc_A", clustering_accuracy(a_perm, gen.labels, 4));
    if (gen.model.n_decompositions() > 1) {
      const auto& perm_e = f.dec[1].permutation;
      const DenseMatrix& e_est = res.factors.dec[1].modes[0].m;
      DenseMatrix e_perm(e_est.rows(), e_est.cols());
      for (std::size_t c = 0; c < perm_e.size(); ++c)
        for (std::size_t i = 0; i < e_est.rows(); ++i) e_perm(i, c) = e_est(i, perm_e[c]);
      m.add("clustering_acc_E", clustering_accuracy(e_perm, gen.labels, 4));
    }
  }
  return m;
}

}  // namespace

int cmd_run(const std::filesystem::path& config_path, const CliOverrides& ov) {
  RunConfig cfg;
  try {
    cfg = load_run_config(config_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << " (config: " << config_path.string() << ")\n";
    return 2;
  }
  ov.apply(cfg);
  const auto violations = validate(cfg.model);
  if (!violations.empty()) {
    std::cerr << "invalid model:\n";
    for (const auto& v : violations) std::cerr << "  - " << v << "\n";
    return 3;
  }
  FitResult res;
  try {
    res = multi_start_fit(cfg.model, cfg.solver, cfg.threads);
  } catch (const std::exception& e) {
    std::cerr << "fit failed: " << e.what() << "\n";
    return 4;
  }
  std::error_code ec;
  std::filesystem::create_directories(cfg.out_dir, ec);
  write_factors(cfg.out_dir / "factors.bin", res.factors);
  write_trace_csv(cfg.out_dir / "trace.csv", res.report);
  json metrics = metrics_to_json(cfg.model, res);
  if (cfg.has_truth) {
    write_factors(cfg.out_dir / "truth.bin", cfg.truth);
    const FmsResult f = fms(cfg.truth, res.factors);
    metrics["fms"] = fms_to_json(f);
    if (!cfg.labels.empty()) {
      const auto& perm = f.dec[0].permutation;
      const DenseMatrix& a_est = res.factors.dec[0].modes[0].m;
      DenseMatrix a_perm(a_est.rows(), a_est.cols());
      for (std::size_t c = 0; c < perm.size(); ++c)
        for (std::size_t i = 0; i < a_est.rows(); ++i) a_perm(i, c) = a_est(i, perm[c]);
      metrics["clustering_acc"] = clustering_accuracy(a_perm, cfg.labels, 4);
    }
  }
  std::ofstream mos(cfg.out_dir / "metrics.json");
  mos << metrics.dump(2) << "\n";
  std::cout << "final f = " << res.report.final_f << ", outputs in " << cfg.out_dir.string()
            << "\n";
  return 0;
}

int cmd_bench(const std::string& experiment, int replicates, const CliOverrides& ov) {
  if (!is_known_experiment(experiment)) {
    std::cerr << "unknown experiment id: " << experiment << "\n";
    return 2;
  }
  RunConfig base;
  base.solver.max_outer_iters = 1000;
  CliOverrides tmp = ov;
  tmp.apply(base);
  const std::uint64_t seed0 = base.solver.seed;
  const int threads = base.threads;
  std::filesystem::path out_dir =
      ov.out ? std::filesystem::path(*ov.out) : std::filesystem::path("bench_" + experiment);
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);

  struct BenchRow {
    std::string label;
    std::function<GenOut(std::uint64_t)> gen;
  };
  std::vector<BenchRow> rows;
  if (experiment == "exp3") {
    for (const bool ridge : {false, true}) {
      for (const bool coupled : {false, true}) {
        if (ridge && !coupled) continue;  // grid of the reference table
        for (const double noise : {0.0, 0.5, 1.0}) {
          std::ostringstream lab;
          lab << "ridge=" << (ridge ? "yes" : "no") << ",coupling=" << (coupled ? "yes" : "no")
              << ",noise=" << noise;
          rows.push_back({lab.str(), [=](std::uint64_t s) {
                            return gen_family3({noise, coupled, ridge, 1e-4}, s);
                          }});
        }
      }
    }
  } else {
    rows.push_back({experiment, [&experiment](std::uint64_t s) {
                      return make_experiment(experiment, s);
                    }});
  }

  std::ofstream csv(out_dir / "summary.csv");
  csv << "config,metric,median,min,max\n";
  csv.precision(10);
  for (const BenchRow& row : rows) {
    std::vector<ReplicateMetrics> reps(replicates);
    parallel_for(static_cast<std::size_t>(replicates), threads, [&](std::size_t r) {
      const GenOut gen = row.gen(seed0 + r);
      OuterSettings solver = base.solver;
      solver.seed = seed0 + 1000 * (r + 1);
      const FitResult res = multi_start_fit(gen.model, solver, 1);
      reps[r] = evaluate_replicate(gen, res, experiment == "exp3");
    });
    Aggregate agg;
    agg.collect(reps);
    std::cout << "== " << experiment << " [" << row.label << "] over " << replicates
              << " replicates ==\n";
    for (std::size_t i = 0; i < agg.keys.size(); ++i) {
      const auto& s = agg.samples[i];
      const double med = Aggregate::median(s);
      const double mn = *std::min_element(s.begin(), s.end());
      const double mx = *std::max_element(s.begin(), s.end());
      csv << '"' << row.label << '"' << ',' << agg.keys[i] << ',' << med << ',' << mn << ','
          << mx << "\n";
      std::cout << "  " << agg.keys[i] << ": median " << med << " (min " << mn << ", max " << mx
                << ")\n";
    }
  }
  std::cout << "summary written to " << (out_dir / "summary.csv").string() << "\n";
  return 0;
}

int cmd_metrics(const std::filesystem::path& factors_path,
                const std::filesystem::path& truth_path) {
  FactorSet est, truth;
  try {
    est = read_factors(factors_path);
    truth = read_factors(truth_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  FmsResult f;
  try {
    f = fms(truth, est);
  } catch (const std::exception& e) {
    std::cerr << "shape mismatch: " << e.what() << "\n";
    return 3;
  }
  json out = fms_to_json(f);
  json par2 = json::array();
  for (const DecFactors& d : est.dec)
    if (d.kind == DecompKind::parafac2) par2.push_back(parafac2_residual(d.modes[1].slices));
  out["parafac2_residual"] = par2;
  std::cout << out.dump(2) << "\n";
  return 0;
}

int cmd_gen(const std::string& experiment, const CliOverrides& ov) {
  if (!is_known_experiment(experiment)) {
    std::cerr << "unknown experiment id: " << experiment << "\n";
    return 2;
  }
  const std::uint64_t seed = ov.seed.value_or(0);
  std::filesystem::path out_dir =
      ov.out ? std::filesystem::path(*ov.out) : std::filesystem::path("data_" + experiment);
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  const GenOut gen = make_experiment(experiment, seed);
  for (std::size_t d = 0; d < gen.model.datasets.size(); ++d)
    write_dataset(out_dir / ("dataset" + std::to_string(d) + ".bin"), gen.model.datasets[d]);
  write_factors(out_dir / "truth.bin", gen.truth);
  json meta;
  meta["experiment"] = experiment;
  meta["seed"] = seed;
  if (!gen.labels.empty()) meta["labels"] = gen.labels;
  if (!gen.shared_components.empty()) meta["shared_components"] = gen.shared_components;
  std::ofstream mos(out_dir / "meta.json");
  mos << meta.dump(2) << "\n";
  std::cout << "wrote " << gen.model.datasets.size() << " datasets to " << out_dir.string()
            << "\n";
  return 0;
}

}  // namespace cmtf
