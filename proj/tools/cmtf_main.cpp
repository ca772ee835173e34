#include <string>

#include "CLI11.hpp"

#include "cmtf/io.hpp"

namespace {

void add_common_flags(CLI::App* app, cmtf::CliOverrides& ov) {
  app->add_option("--seed", [&ov](const std::vector<std::string>& v) {
        ov.seed = std::stoull(v.front());
        return true;
      }, "random seed");
  app->add_option("--threads", [&ov](const std::vector<std::string>& v) {
        ov.threads = std::stoi(v.front());
        return true;
      }, "worker threads (1 = bit-reproducible)");
  app->add_option("--out", [&ov](const std::vector<std::string>& v) {
        ov.out = v.front();
        return true;
      }, "output directory");
  app->add_option("--starts", [&ov](const std::vector<std::string>& v) {
        ov.starts = std::stoi(v.front());
        return true;
      }, "number of random initializations");
  app->add_option("--max-outer", [&ov](const std::vector<std::string>& v) {
        ov.max_outer = std::stoi(v.front());
        return true;
      }, "outer iteration cap");
  app->add_option("--inner-tol", [&ov](const std::vector<std::string>& v) {
        ov.inner_tol = std::stod(v.front());
        return true;
      }, "inner ADMM absolute and relative tolerance");
  app->add_option("--outer-abs-tol", [&ov](const std::vector<std::string>& v) {
        ov.outer_abs_tol = std::stod(v.front());
        return true;
      }, "outer absolute tolerance on the function value");
  app->add_option("--outer-rel-tol", [&ov](const std::vector<std::string>& v) {
        ov.outer_rel_tol = std::stod(v.front());
        return true;
      }, "outer relative tolerance on the function value");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"coupled matrix / CP / PARAFAC2 factorizations via AO-ADMM"};
  app.require_subcommand(1);

  cmtf::CliOverrides ov;

  std::string config_path;
  CLI::App* run = app.add_subcommand("run", "fit a model described by a config file");
  run->add_option("config", config_path, "JSON run configuration")->required();
  add_common_flags(run, ov);

  std::string bench_id;
  int replicates = 20;
  CLI::App* bench = app.add_subcommand("bench", "run a benchmark experiment family");
  bench->add_option("experiment", bench_id, "experiment id (exp1a..exp2d, exp3, exp4)")
      ->required();
  bench->add_option("--replicates", replicates, "number of seeded dataset replicates");
  add_common_flags(bench, ov);

  std::string factors_path, truth_path;
  CLI::App* metrics = app.add_subcommand("metrics", "compare two factor files");
  metrics->add_option("factors", factors_path, "estimated factors (factors.bin)")->required();
  metrics->add_option("truth", truth_path, "reference factors")->required();

  std::string gen_id;
  CLI::App* gen = app.add_subcommand("gen", "write a synthetic dataset to disk");
  gen->add_option("experiment", gen_id, "experiment id")->required();
  add_common_flags(gen, ov);

  CLI11_PARSE(app, argc, argv);

  if (run->parsed()) return cmtf::cmd_run(config_path, ov);
  if (bench->parsed()) return cmtf::cmd_bench(bench_id, replicates, ov);
  if (metrics->parsed()) return cmtf::cmd_metrics(factors_path, truth_path);
  if (gen->parsed()) return cmtf::cmd_gen(gen_id, ov);
  return 1;
}
