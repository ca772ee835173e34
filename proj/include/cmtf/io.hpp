#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cmtf/driver.hpp"
#include "cmtf/model.hpp"
#include "cmtf/synth.hpp"

namespace cmtf {

// ---- binary containers (little-endian 64-bit float payloads) ----
//
// dataset file ("CMTFDAT1"): u32 kind (0 matrix, 1 tensor, 2 ragged),
//   matrix: u64 rows, cols; tensor: u64 I, J, K (stored as K frontal I x J
//   slices); ragged: u64 I, K then K slice lengths; payload row-major.
// factor file ("CMTFFAC1"): u32 n_decompositions, then per decomposition
//   u32 kind, u64 rank and the factor matrices (PARAFAC2: A, K slices of B,
//   C), each as u64 rows, u64 cols, payload.

void write_dataset(const std::filesystem::path& path, const DataSet& data);
DataSet read_dataset(const std::filesystem::path& path);

void write_factors(const std::filesystem::path& path, const FactorSet& f);
FactorSet read_factors(const std::filesystem::path& path);

void write_trace_csv(const std::filesystem::path& path, const RunReport& report);

// ---- run configuration (JSON) ----

struct RunConfig {
  ModelSpec model;
  bool has_truth = false;
  FactorSet truth;                 // available for synthetic models
  std::vector<int> labels;         // family-3 cluster labels, when present
  OuterSettings solver;
  int threads = 1;
  std::filesystem::path out_dir;
};

// Builds the named experiment instance. Known ids: exp1a, exp1b, exp1c,
// exp2a, exp2b, exp2c, exp2d, exp3, exp4.
GenOut make_experiment(const std::string& id, std::uint64_t seed);
bool is_known_experiment(const std::string& id);

RunConfig load_run_config(const std::filesystem::path& path);

// ---- CLI commands (exit-code returning, used by the cmtf binary) ----

struct CliOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::optional<std::string> out;
  std::optional<int> starts;
  std::optional<int> max_outer;
  std::optional<double> inner_tol;
  std::optional<double> outer_abs_tol;
  std::optional<double> outer_rel_tol;
  void apply(RunConfig& cfg) const;
};

int cmd_run(const std::filesystem::path& config_path, const CliOverrides& ov);
int cmd_bench(const std::string& experiment, int replicates, const CliOverrides& ov);
int cmd_metrics(const std::filesystem::path& factors_path,
                const std::filesystem::path& truth_path);
int cmd_gen(const std::string& experiment, const CliOverrides& ov);

}  // namespace cmtf
