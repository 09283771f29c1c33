// Benchmark command line: generate | run | toy | sweep | report.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "bayeslast/bench.hpp"
#include "bayeslast/errors.hpp"

namespace bench = bayeslast::bench;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitPartial = 2;

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string methods;
};

void add_common(CLI::App* cmd, CommonFlags& f, bool with_methods) {
  cmd->add_option("--config", f.config, "JSON experiment config");
  cmd->add_option("--seed", f.seed, "Random seed");
  cmd->add_option("--out", f.out, "Output directory");
  if (with_methods) cmd->add_option("--methods", f.methods, "Comma list of bll,blr,vi");
}

bench::ExperimentConfig resolve(const CommonFlags& f) {
  bench::ExperimentConfig cfg = f.config.empty() ? bench::ExperimentConfig{} : bench::load_config(f.config);
  if (f.seed) cfg.seed = *f.seed;
  if (!f.out.empty()) cfg.out_dir = f.out;
  if (!f.methods.empty()) cfg.methods = bench::parse_methods(f.methods);
  cfg.validate();
  return cfg;
}

void print_timings(const bench::RunReport& r) {
  for (const auto& t : r.timings) std::fprintf(stderr, "%s: %.2f s\n", t.method.c_str(), t.seconds);
  for (const auto& [m, msg] : r.failures) std::fprintf(stderr, "%s failed: %s\n", m.c_str(), msg.c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian last layer benchmark"};
  app.require_subcommand(1);

  CommonFlags gen_flags, run_flags, sweep_flags, toy_flags, report_flags;
  auto* gen = app.add_subcommand("generate", "Write the synthetic dataset CSV");
  add_common(gen, gen_flags, false);
  auto* run = app.add_subcommand("run", "Train, tune and evaluate the selected methods");
  add_common(run, run_flags, true);
  auto* sweep = app.add_subcommand("sweep", "Alpha sweep of the last-layer model");
  add_common(sweep, sweep_flags, false);
  auto* toy = app.add_subcommand("toy", "Three-sample demo with two features");
  toy->add_option("--seed", toy_flags.seed, "Random seed");
  toy->add_option("--out", toy_flags.out, "Output directory");
  auto* report = app.add_subcommand("report", "Print the metrics table of a run directory");
  report->add_option("--out", report_flags.out, "Run directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*gen) {
      const bench::ExperimentConfig cfg = resolve(gen_flags);
      std::filesystem::create_directories(cfg.out_dir);
      const std::filesystem::path path = std::filesystem::path(cfg.out_dir) / "dataset.csv";
      bench::write_dataset_csv(path, bench::generate(cfg.benchmark, cfg.seed));
      std::cout << path.string() << "\n";
      return kExitOk;
    }
    if (*run) {
      const bench::RunReport r = bench::run(resolve(run_flags));
      print_timings(r);
      std::cout << bench::format_report(resolve(run_flags).out_dir);
      return r.ok() ? kExitOk : kExitPartial;
    }
    if (*sweep) {
      const bench::ExperimentConfig cfg = resolve(sweep_flags);
      const bench::RunReport r = bench::sweep(cfg);
      print_timings(r);
      std::cout << (std::filesystem::path(cfg.out_dir) / "sweep_bll.csv").string() << "\n";
      return r.ok() ? kExitOk : kExitPartial;
    }
    if (*toy) {
      bench::ToyConfig cfg;
      if (toy_flags.seed) cfg.seed = *toy_flags.seed;
      if (!toy_flags.out.empty()) cfg.out_dir = toy_flags.out;
      const bench::ToyResult r = bench::toy_feature_demo(cfg);
      std::printf("alpha* = %.6g  alpha_max = %.6g\n", std::exp(r.log_alpha_star),
                  std::exp(r.log_alpha_max));
      return kExitOk;
    }
    if (*report) {
      std::cout << bench::format_report(report_flags.out);
      const bench::ReportCheck check = bench::recompute_lpd(report_flags.out);
      std::printf("max lpd drift vs artifacts: %.3g\n", check.max_drift);
      return kExitOk;
    }
  } catch (const bayeslast::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitPartial;
  }
  return kExitOk;
}
