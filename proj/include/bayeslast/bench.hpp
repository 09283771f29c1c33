#pragma once

// Benchmark harness: synthetic data, experiment configuration, end-to-end
// runs of the last-layer model and the baselines, and plot-ready artifacts.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "bayeslast/baselines.hpp"
#include "bayeslast/calibrate.hpp"
#include "bayeslast/dataset.hpp"
#include "bayeslast/net.hpp"

namespace bayeslast::bench {

inline constexpr const char* kArtifactVersion = "1.0.0";

// Two-output regression target: f1 = sin(3x) exp(-0.2 x^2),
// f2 = 0.5 x + 0.8 cos(2x).
struct BenchmarkFunction {
  Vector noise_sd{0.05, 0.2};
  double train_lo = -2.0, train_hi = 2.0;
  double val_lo = -3.0, val_hi = 3.0;
  double test_lo = -4.0, test_hi = 4.0;
  std::size_t n_train = 60;
  std::size_t n_val = 20;
  std::size_t n_test = 200;

  static Vector evaluate(double x);
  void validate() const;
};

struct SplitData {
  Dataset train;
  Dataset val;
  Dataset test;
};

// Train and validation inputs are uniform on their ranges; test inputs are an
// evenly spaced grid. Noise is drawn per split from independent substreams.
SplitData generate(const BenchmarkFunction& f, std::uint64_t seed);

// CSV with columns x_0.., t_0.., split.
void write_dataset_csv(const std::filesystem::path& path, const SplitData& data);
SplitData read_dataset_csv(const std::filesystem::path& path);

// Shortest round-trip decimal ("%.17g").
std::string format_number(double v);

struct ExperimentConfig {
  BenchmarkFunction benchmark{};
  std::string data_path;  // when set, read instead of generating
  MlpSpec model{1, {20, 20, 20}, 2, {}};
  TrainConfig train{};
  AlphaSearchConfig alpha{};
  BlrConfig blr{};
  ViConfig vi{};
  std::size_t vi_samples = 100;
  std::vector<std::string> methods{"bll", "blr", "vi"};
  std::string out_dir = "out";
  std::uint64_t seed = 0;
  // Sweep grid in log alpha relative to the trained value.
  double sweep_lower = 0.0;
  double sweep_upper = 15.0;
  std::size_t sweep_points = 31;

  // Throws ConfigError.
  void validate() const;
  bool has_method(const std::string& name) const;
};

nlohmann::json to_json(const ExperimentConfig& cfg);
// Missing keys keep their defaults; unknown keys are rejected.
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);

// FNV-1a 64 of the canonical JSON dump, as 16 hex digits.
std::string config_hash(const ExperimentConfig& cfg);

std::vector<std::string> parse_methods(const std::string& list);

struct MethodTiming {
  std::string method;
  double seconds = 0.0;
};

struct RunReport {
  // Flat "variant.metric" entries, e.g. "bll_alpha_max.test_lpd".
  std::map<std::string, double> metrics;
  std::map<std::string, std::string> failures;
  std::vector<std::string> executed;
  std::vector<MethodTiming> timings;  // printed, never written to artifacts

  bool ok() const { return failures.empty(); }
  double at(const std::string& key) const;
};

// Trains every selected method, tunes alpha where applicable and writes:
//   dataset.csv, metrics.json, config.json,
//   predictions_<variant>_<split>.csv, sweep_<method>.csv,
//   vi_components_<split>.csv, model_<method>.json
RunReport run(const ExperimentConfig& cfg);

// Trains the last-layer model only and writes sweep_bll.csv.
RunReport sweep(const ExperimentConfig& cfg);

// Three-sample demo with a two-dimensional feature layer. With three points
// the network can interpolate and the objective has no finite minimizer, so
// training runs for a fixed number of epochs instead of early stopping.
struct ToyConfig {
  std::uint64_t seed = 0;
  std::string out_dir = "toy";
  std::size_t max_epochs = 2000;
  double larger_factor = 1e3;  // third band uses alpha_max * this
  double sweep_span = 20.0;    // sweep and search cover log alpha* + [0, span]
  std::size_t sweep_points = 81;
  std::size_t grid_points = 41;
};

struct ToyResult {
  BllModel model;
  double log_alpha_star = 0.0;
  double log_alpha_max = 0.0;
  SplitData data;
  std::vector<SweepRow> sweep;  // lpd columns: train, val, test
};

Dataset toy_train_data();
ToyResult toy_feature_demo(const ToyConfig& cfg);

// Recomputes every LPD entry of metrics.json from the emitted prediction
// files; returns the largest absolute difference.
struct ReportCheck {
  std::map<std::string, double> recomputed;
  double max_drift = 0.0;
};
ReportCheck recompute_lpd(const std::filesystem::path& out_dir);

// Human-readable table of a metrics.json.
std::string format_report(const std::filesystem::path& out_dir);

// Model (de)serialization.
nlohmann::json to_json(const MlpParams& p);
MlpParams params_from_json(const nlohmann::json& j);
nlohmann::json to_json(const BllModel& m);
nlohmann::json to_json(const ViParams& p);

}  // namespace bayeslast::bench
