#include "doctest.h"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "cmtf/driver.hpp"
#include "cmtf/io.hpp"
#include "cmtf/linalg.hpp"
#include "cmtf/metrics.hpp"
#include "cmtf/rng.hpp"
#include "cmtf/synth.hpp"

using namespace cmtf;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("cmtf_test_" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

}  // namespace

TEST_CASE("dataset files round-trip bit-exactly") {
  TempDir tmp;
  Rng rng(1);
  DenseMatrix m(7, 5);
  for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  write_dataset(tmp.path / "m.bin", m);
  const auto m2 = std::get<DenseMatrix>(read_dataset(tmp.path / "m.bin"));
  CHECK(fro_norm_diff(m, m2) == 0.0);

  DenseTensor3 t(4, 5, 3);
  for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = rng.normal();
  write_dataset(tmp.path / "t.bin", t);
  const auto t2 = std::get<DenseTensor3>(read_dataset(tmp.path / "t.bin"));
  REQUIRE(t2.size() == t.size());
  for (std::size_t i = 0; i < t.size(); ++i) CHECK(t.data()[i] == t2.data()[i]);

  std::vector<DenseMatrix> slices;
  for (std::size_t k = 0; k < 3; ++k) {
    DenseMatrix s(4, 5 + k);
    for (std::size_t i = 0; i < s.size(); ++i) s.data()[i] = rng.normal();
    slices.push_back(std::move(s));
  }
  const RaggedTensor rt(std::move(slices));
  write_dataset(tmp.path / "r.bin", rt);
  const auto rt2 = std::get<RaggedTensor>(read_dataset(tmp.path / "r.bin"));
  REQUIRE(rt2.n_slices() == 3);
  for (std::size_t k = 0; k < 3; ++k) CHECK(fro_norm_diff(rt.slice(k), rt2.slice(k)) == 0.0);

  CHECK_THROWS(read_dataset(tmp.path / "missing.bin"));
}

TEST_CASE("factor files round-trip") {
  TempDir tmp;
  const GenOut gen = gen_recovery(RecoveryFamily::par2_cp_case3b, 3);
  write_factors(tmp.path / "f.bin", gen.truth);
  const FactorSet f = read_factors(tmp.path / "f.bin");
  REQUIRE(f.dec.size() == gen.truth.dec.size());
  for (std::size_t d = 0; d < f.dec.size(); ++d) {
    CHECK(f.dec[d].kind == gen.truth.dec[d].kind);
    CHECK(f.dec[d].rank == gen.truth.dec[d].rank);
  }
  CHECK(fms(gen.truth, f).total == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("experiment registry") {
  for (const char* id : {"exp1a", "exp1b", "exp1c", "exp2a", "exp2b", "exp2c", "exp2d",
                         "exp3", "exp4"})
    CHECK(is_known_experiment(id));
  CHECK_FALSE(is_known_experiment("exp9"));
  // small experiments are valid models (skip the 200-sized ones here)
  for (const char* id : {"exp1a", "exp2a", "exp3", "exp4"}) {
    const GenOut gen = make_experiment(id, 1);
    CHECK(validate(gen.model).empty());
  }
}

TEST_CASE("config loading with synth model and overrides") {
  TempDir tmp;
  {
    std::ofstream os(tmp.path / "run.cfg");
    os << R"({
      "model": {"synth": {"experiment": "exp1a", "seed": 5}},
      "solver": {"n_starts": 2, "seed": 9, "max_outer_iters": 3},
      "threads": 1,
      "output": "outdir"
    })";
  }
  RunConfig cfg = load_run_config(tmp.path / "run.cfg");
  CHECK(cfg.solver.n_starts == 2);
  CHECK(cfg.solver.seed == 9);
  CHECK(cfg.solver.max_outer_iters == 3);
  CHECK(cfg.has_truth);
  CHECK(validate(cfg.model).empty());
  CHECK(cfg.out_dir.filename() == "outdir");

  CliOverrides ov;
  ov.starts = 1;
  ov.seed = 123;
  ov.apply(cfg);
  CHECK(cfg.solver.n_starts == 1);
  CHECK(cfg.solver.seed == 123);

  CHECK_THROWS(load_run_config(tmp.path / "nope.cfg"));
}

TEST_CASE("inline model config round-trips through dataset files") {
  TempDir tmp;
  const GenOut gen = gen_recovery(RecoveryFamily::par2_cp_case1, 5);
  write_dataset(tmp.path / "x.bin", gen.model.datasets[0]);
  write_dataset(tmp.path / "y.bin", gen.model.datasets[1]);
  {
    std::ofstream os(tmp.path / "inline.cfg");
    os << R"({
      "model": {"inline": {
        "datasets": ["x.bin", "y.bin"],
        "decompositions": [
          {"kind": "parafac2", "rank": 3, "weight": 0.5,
           "regularizers": ["none", "none", "nonneg"]},
          {"kind": "cp", "rank": 3, "weight": 0.5}
        ],
        "couplings": [
          {"case": "1", "members": [{"dec": 0, "mode": 2}, {"dec": 1, "mode": 0}],
           "delta_shape": [12, 3]}
        ]
      }},
      "solver": {"n_starts": 1, "max_outer_iters": 2}
    })";
  }
  RunConfig cfg = load_run_config(tmp.path / "inline.cfg");
  CHECK_FALSE(cfg.has_truth);
  CHECK(validate(cfg.model).empty());
  CHECK(cfg.model.couplings.size() == 1);
  CHECK(cfg.model.decompositions[0].mode_regs[2].kind == RegKind::nonneg);
}

TEST_CASE("cmd_run writes outputs that round-trip to the trace") {
  TempDir tmp;
  {
    std::ofstream os(tmp.path / "run.cfg");
    os << R"({
      "model": {"synth": {"experiment": "exp1a", "seed": 11}},
      "solver": {"n_starts": 1, "seed": 4, "max_outer_iters": 5},
      "output": "out"
    })";
  }
  CliOverrides ov;
  REQUIRE(cmd_run(tmp.path / "run.cfg", ov) == 0);
  REQUIRE(fs::exists(tmp.path / "out/factors.bin"));
  REQUIRE(fs::exists(tmp.path / "out/trace.csv"));
  REQUIRE(fs::exists(tmp.path / "out/metrics.json"));

  // re-read factors and recompute the function value against the trace
  const FactorSet est = read_factors(tmp.path / "out/factors.bin");
  const GenOut gen = make_experiment("exp1a", 11);
  const double f = function_value(gen.model, est);

  std::ifstream is(tmp.path / "out/trace.csv");
  std::string header, line, last;
  std::getline(is, header);
  CHECK(header.rfind("iter,f", 0) == 0);
  while (std::getline(is, line))
    if (!line.empty()) last = line;
  const std::size_t c1 = last.find(',');
  const std::size_t c2 = last.find(',', c1 + 1);
  const double f_trace = std::stod(last.substr(c1 + 1, c2 - c1 - 1));
  CHECK(std::abs(f - f_trace) < 1e-10);

  // missing config: nonzero exit
  CHECK(cmd_run(tmp.path / "missing.cfg", ov) == 2);
}

TEST_CASE("cmd_gen and cmd_metrics") {
  TempDir tmp;
  CliOverrides ov;
  ov.out = (tmp.path / "data").string();
  ov.seed = 21;
  REQUIRE(cmd_gen("exp1a", ov) == 0);
  REQUIRE(fs::exists(tmp.path / "data/dataset0.bin"));
  REQUIRE(fs::exists(tmp.path / "data/dataset1.bin"));
  REQUIRE(fs::exists(tmp.path / "data/truth.bin"));
  const auto ds = read_dataset(tmp.path / "data/dataset0.bin");
  CHECK(std::get<RaggedTensor>(ds).rows() == 40);

  // identical factor files give FMS 1 and exit 0
  CHECK(cmd_metrics(tmp.path / "data/truth.bin", tmp.path / "data/truth.bin") == 0);
  CHECK(cmd_gen("nonsense", ov) == 2);
  CHECK(cmd_metrics(tmp.path / "data/missing.bin", tmp.path / "data/truth.bin") == 2);
}
