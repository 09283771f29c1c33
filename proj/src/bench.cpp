#include "bayeslast/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <initializer_list>
#include <iomanip>
#include <set>
#include <sstream>
#include <stdexcept>

#include "bayeslast/errors.hpp"
#include "bayeslast/extrapolation.hpp"

namespace bayeslast::bench {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const char* const kSplits[] = {"train", "val", "test"};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw IoError("missing CSV column: " + name);
    return static_cast<std::size_t>(it - header.begin());
  }
};

Table read_csv(const fs::path& path) {
  std::istringstream in(read_text(path));
  Table t;
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty CSV: " + path.string());
  if (!line.empty() && line.back() == '\r') line.pop_back();
  t.header = split_line(line);
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = split_line(line);
    if (cells.size() != t.header.size()) throw IoError("ragged CSV row in " + path.string());
    t.rows.push_back(std::move(cells));
  }
  return t;
}

double parse_double(const std::string& s) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw IoError("not a number: '" + s + "'");
  }
  if (used != s.size()) throw IoError("not a number: '" + s + "'");
  return v;
}

class CsvWriter {
 public:
  explicit CsvWriter(const std::vector<std::string>& header) { row_strings(header); }

  void row(std::initializer_list<std::span<const double>> parts) {
    bool first = true;
    for (auto part : parts)
      for (double v : part) {
        if (!first) text_ += ',';
        text_ += format_number(v);
        first = false;
      }
    text_ += '\n';
  }

  void row_strings(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) text_ += ',';
      text_ += cells[i];
    }
    text_ += '\n';
  }

  void save(const fs::path& path) const { write_text(path, text_); }

 private:
  std::string text_;
};

std::vector<std::string> indexed(const std::string& prefix, std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(prefix + "_" + std::to_string(i));
  return out;
}

std::vector<std::string> concat_names(std::initializer_list<std::vector<std::string>> parts) {
  std::vector<std::string> out;
  for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

Dataset noisy_dataset(const Vector& xs, const Vector& noise_sd, Rng& rng) {
  const std::size_t n_y = noise_sd.size();
  Matrix x(xs.size(), 1);
  Matrix t(xs.size(), n_y);
  for (std::size_t r = 0; r < xs.size(); ++r) {
    x(r, 0) = xs[r];
    const Vector f = BenchmarkFunction::evaluate(xs[r]);
    for (std::size_t i = 0; i < n_y; ++i) t(r, i) = f[i] + noise_sd[i] * rng.normal();
  }
  return Dataset(std::move(x), std::move(t));
}

Vector uniform_inputs(std::size_t n, double lo, double hi, Rng& rng) {
  Vector xs(n);
  for (double& x : xs) x = rng.uniform(lo, hi);
  return xs;
}

// ---------------------------------------------------------------------------
// JSON helpers
// ---------------------------------------------------------------------------

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, _] : j.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
      throw ConfigError(where + ": unknown key '" + key + "'");
    }
  }
}

template <typename T>
void read_key(const json& j, const char* key, T& target, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    target = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

void read_range(const json& j, const char* key, double& lo, double& hi, const std::string& where) {
  if (!j.contains(key)) return;
  std::vector<double> r;
  read_key(j, key, r, where);
  if (r.size() != 2) throw ConfigError(where + "." + key + ": expected [lo, hi]");
  lo = r[0];
  hi = r[1];
}

json train_to_json(const TrainConfig& t) {
  return json{{"max_epochs", t.max_epochs},           {"patience", t.patience},
              {"learning_rate", t.adam.learning_rate}, {"val_fraction", t.val_fraction},
              {"standardize", t.standardize},          {"init_log_alpha", t.init_log_alpha},
              {"init_log_sigma_e", t.init_log_sigma_e}, {"log_every", t.log_every}};
}

void train_from_json(const json& j, TrainConfig& t, const std::string& where) {
  check_keys(j, {"max_epochs", "patience", "learning_rate", "val_fraction", "standardize",
                 "init_log_alpha", "init_log_sigma_e", "log_every"},
             where);
  read_key(j, "max_epochs", t.max_epochs, where);
  read_key(j, "patience", t.patience, where);
  read_key(j, "learning_rate", t.adam.learning_rate, where);
  read_key(j, "val_fraction", t.val_fraction, where);
  read_key(j, "standardize", t.standardize, where);
  read_key(j, "init_log_alpha", t.init_log_alpha, where);
  read_key(j, "init_log_sigma_e", t.init_log_sigma_e, where);
  read_key(j, "log_every", t.log_every, where);
}

json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const auto span = m.row_span(r);
    rows.push_back(std::vector<double>(span.begin(), span.end()));
  }
  return rows;
}

Matrix matrix_from_json(const json& j) {
  const auto rows = j.get<std::vector<std::vector<double>>>();
  if (rows.empty()) return Matrix();
  Matrix m(rows.size(), rows.front().size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != m.cols()) throw IoError("ragged matrix in JSON");
    for (std::size_t c = 0; c < m.cols(); ++c) m(r, c) = rows[r][c];
  }
  return m;
}

json scaling_to_json(const Standardizer& s) {
  return json{{"input_mean", s.input_mean},
              {"input_scale", s.input_scale},
              {"target_mean", s.target_mean},
              {"target_scale", s.target_scale}};
}

// ---------------------------------------------------------------------------
// Evaluation helpers
// ---------------------------------------------------------------------------

const Dataset& split_of(const SplitData& d, std::size_t i) {
  return i == 0 ? d.train : (i == 1 ? d.val : d.test);
}

double mse_of_means(const std::vector<Vector>& means, const Dataset& d) {
  double total = 0.0;
  for (std::size_t r = 0; r < d.size(); ++r)
    for (std::size_t i = 0; i < d.output_dim(); ++i) {
      const double e = d.targets(r, i) - means[r][i];
      total += e * e;
    }
  return total / static_cast<double>(d.targets.size());
}

void write_predictions(const fs::path& path, const Matrix& inputs,
                       const std::vector<PredictiveDistribution>& preds) {
  const std::size_t n_x = inputs.cols();
  const std::size_t n_y = preds.empty() ? 0 : preds.front().mean.size();
  CsvWriter csv(concat_names({indexed("x", n_x), indexed("mean", n_y), indexed("sd_y", n_y),
                              indexed("sd_t", n_y)}));
  for (std::size_t r = 0; r < preds.size(); ++r) {
    Vector sd_y(n_y), sd_t(n_y);
    for (std::size_t i = 0; i < n_y; ++i) {
      sd_y[i] = std::sqrt(preds[r].sigma_y[i]);
      sd_t[i] = std::sqrt(preds[r].sigma_t[i]);
    }
    csv.row({inputs.row_span(r), preds[r].mean, sd_y, sd_t});
  }
  csv.save(path);
}

Vector sweep_grid(double center, double lower, double upper, std::size_t points) {
  return linspace(center + lower, center + upper, points);
}

void write_sweep(const fs::path& path, const std::vector<SweepRow>& rows) {
  CsvWriter csv({"log_alpha", "alpha", "train_nlml", "train_lpd", "val_lpd", "test_lpd"});
  for (const SweepRow& r : rows) {
    const double head[] = {r.log_alpha, std::exp(r.log_alpha), r.train_nlml};
    csv.row({head, r.lpd});
  }
  csv.save(path);
}

// Metrics shared by the last-layer model and the linear-regression baseline.
void record_gaussian_variant(RunReport& report, const std::string& variant, const BllModel& model,
                             const SplitData& data, double alpha_star, double alpha_max,
                             const fs::path& out) {
  for (std::size_t s = 0; s < 3; ++s) {
    const Dataset& d = split_of(data, s);
    const std::vector<PredictiveDistribution> preds = predict(model, d.inputs);
    std::vector<Vector> means;
    for (const auto& p : preds) means.push_back(p.mean);
    report.metrics[variant + "." + kSplits[s] + "_mse"] = mse_of_means(means, d);
    report.metrics[variant + "." + kSplits[s] + "_lpd"] = lpd(model, d);
    write_predictions(out / ("predictions_" + variant + "_" + kSplits[s] + ".csv"), d.inputs, preds);
  }
  report.metrics[variant + ".train_nlml"] = train_neg_lml(model);
  report.metrics[variant + ".alpha"] = model.alpha();
  report.metrics[variant + ".alpha_star"] = alpha_star;
  report.metrics[variant + ".alpha_max"] = alpha_max;
  const Vector sd = model.noise_sd();
  for (std::size_t i = 0; i < sd.size(); ++i)
    report.metrics[variant + ".sigma_e_" + std::to_string(i)] = sd[i];
}

std::vector<SweepRow> sweep_for(const BllModel& model, const SplitData& data,
                                const ExperimentConfig& cfg) {
  const Dataset sets[] = {data.train, data.val, data.test};
  const Vector grid =
      sweep_grid(model.hyper.log_alpha, cfg.sweep_lower, cfg.sweep_upper, cfg.sweep_points);
  return alpha_sweep(model, sets, grid);
}

TrainConfig seeded(TrainConfig t, std::uint64_t seed) {
  t.seed = seed;
  return t;
}

void run_bll(const ExperimentConfig& cfg, const SplitData& data, const fs::path& out,
             RunReport& report, bool with_sweep_only) {
  const TrainResult tr = train(cfg.model, data.train, seeded(cfg.train, cfg.seed));
  write_sweep(out / "sweep_bll.csv", sweep_for(tr.model, data, cfg));
  report.metrics["bll.epochs"] = static_cast<double>(tr.history.epochs());
  if (with_sweep_only) return;

  const AlphaTuneResult tuned = tune_alpha(tr.model, data.val, cfg.alpha);
  const double a_star = tr.model.alpha();
  record_gaussian_variant(report, "bll_alpha_star", tr.model, data, a_star, tuned.alpha_max, out);
  record_gaussian_variant(report, "bll_alpha_max", tuned.model, data, a_star, tuned.alpha_max, out);
  json model = to_json(tr.model);
  model["log_alpha_max"] = tuned.log_alpha_max;
  write_text(out / "model_bll.json", model.dump(2) + "\n");
}

void run_blr(const ExperimentConfig& cfg, const SplitData& data, const fs::path& out,
             RunReport& report) {
  const MseResult mse = train_mse(cfg.model, data.train, seeded(cfg.train, cfg.seed));
  const BlrResult blr = blr_fit(mse.params, mse.scaling, mse.fit_data, cfg.blr);
  const AlphaTuneResult tuned = tune_alpha(blr.model, data.val, cfg.alpha);
  const double a_star = blr.model.alpha();
  record_gaussian_variant(report, "blr_alpha_star", blr.model, data, a_star, tuned.alpha_max, out);
  record_gaussian_variant(report, "blr_alpha_max", tuned.model, data, a_star, tuned.alpha_max, out);
  report.metrics["blr.epochs"] = static_cast<double>(mse.history.epochs());
  report.metrics["blr.iterations"] = static_cast<double>(blr.objective.size());
  write_sweep(out / "sweep_blr.csv", sweep_for(blr.model, data, cfg));
  json model = to_json(blr.model);
  model["log_alpha_max"] = tuned.log_alpha_max;
  write_text(out / "model_blr.json", model.dump(2) + "\n");
}

void run_vi(const ExperimentConfig& cfg, const SplitData& data, const fs::path& out,
            RunReport& report) {
  ViConfig vc = cfg.vi;
  vc.train.seed = cfg.seed;
  const ViTrainResult vr = vi_train(cfg.model, data.train, vc);
  const std::size_t n_y = cfg.model.output_dim;
  for (std::size_t s = 0; s < 3; ++s) {
    const Dataset& d = split_of(data, s);
    Rng rng = Rng(cfg.seed).substream(100 + s);
    const std::vector<GmmPredictive> preds = vi_predict_batch(vr.params, d.inputs, cfg.vi_samples, rng);

    CsvWriter pred_csv(concat_names({indexed("x", d.input_dim()), indexed("mean", n_y),
                                     indexed("sd_y", n_y), indexed("sd_t", n_y)}));
    CsvWriter comp_csv(
        concat_names({{"row", "component"}, indexed("mean", n_y), indexed("noise_var", n_y)}));
    std::vector<Vector> means;
    double total = 0.0;
    for (std::size_t r = 0; r < d.size(); ++r) {
      const GmmPredictive& g = preds[r];
      const Vector mu = g.mean();
      const Vector var = g.variance();
      Vector sd_y(n_y), sd_t(n_y);
      for (std::size_t i = 0; i < n_y; ++i) {
        sd_y[i] = std::sqrt(std::max(0.0, var[i] - g.noise_var[i]));
        sd_t[i] = std::sqrt(var[i]);
      }
      pred_csv.row({d.inputs.row_span(r), mu, sd_y, sd_t});
      for (std::size_t k = 0; k < g.components(); ++k) {
        const double idx[] = {static_cast<double>(r), static_cast<double>(k)};
        comp_csv.row({idx, g.means.row_span(k), g.noise_var});
      }
      means.push_back(mu);
      total += gmm_lpd(g, d.targets.row_span(r));
    }
    pred_csv.save(out / (std::string("predictions_vi_") + kSplits[s] + ".csv"));
    comp_csv.save(out / (std::string("vi_components_") + kSplits[s] + ".csv"));
    report.metrics[std::string("vi.") + kSplits[s] + "_mse"] = mse_of_means(means, d);
    report.metrics[std::string("vi.") + kSplits[s] + "_lpd"] = total / static_cast<double>(d.size());
  }
  const Vector sd = vr.params.noise_sd();
  for (std::size_t i = 0; i < sd.size(); ++i)
    report.metrics["vi.sigma_e_" + std::to_string(i)] = sd[i];
  report.metrics["vi.epochs"] = static_cast<double>(vr.history.epochs());
  write_text(out / "model_vi.json", to_json(vr.params).dump(2) + "\n");
}

SplitData load_or_generate(const ExperimentConfig& cfg) {
  if (!cfg.data_path.empty()) return read_dataset_csv(cfg.data_path);
  return generate(cfg.benchmark, cfg.seed);
}

json metrics_json(const RunReport& report, const ExperimentConfig& cfg) {
  json j = json::object();
  for (const auto& [k, v] : report.metrics) j[k] = v;
  j["provenance"] = json{{"seed", cfg.seed},
                         {"config_hash", config_hash(cfg)},
                         {"artifact_version", kArtifactVersion}};
  if (!report.failures.empty()) j["failures"] = report.failures;
  return j;
}

void time_method(RunReport& report, const std::string& name, const std::function<void()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  try {
    body();
    report.executed.push_back(name);
  } catch (const std::exception& e) {
    report.failures[name] = e.what();
  }
  const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
  report.timings.push_back({name, dt.count()});
}

}  // namespace

// ---------------------------------------------------------------------------

Vector BenchmarkFunction::evaluate(double x) {
  return {std::sin(3.0 * x) * std::exp(-0.2 * x * x), 0.5 * x + 0.8 * std::cos(2.0 * x)};
}

void BenchmarkFunction::validate() const {
  if (noise_sd.size() != 2) throw ConfigError("benchmark: noise_sd needs two entries");
  for (double s : noise_sd)
    if (!(s >= 0.0) || !std::isfinite(s)) throw ConfigError("benchmark: noise_sd must be >= 0");
  if (!(train_lo < train_hi) || !(val_lo < val_hi) || !(test_lo < test_hi)) {
    throw ConfigError("benchmark: empty input range");
  }
  if (test_lo > train_lo || test_hi < train_hi) {
    throw ConfigError("benchmark: test range must contain the training range");
  }
  if (n_train < 2 || n_val == 0 || n_test == 0) throw ConfigError("benchmark: sample counts too small");
}

SplitData generate(const BenchmarkFunction& f, std::uint64_t seed) {
  f.validate();
  const Rng root(seed);
  Rng x_train = root.substream(1), t_train = root.substream(2);
  Rng x_val = root.substream(3), t_val = root.substream(4);
  Rng t_test = root.substream(5);
  SplitData d;
  d.train = noisy_dataset(uniform_inputs(f.n_train, f.train_lo, f.train_hi, x_train), f.noise_sd, t_train);
  d.val = noisy_dataset(uniform_inputs(f.n_val, f.val_lo, f.val_hi, x_val), f.noise_sd, t_val);
  d.test = noisy_dataset(linspace(f.test_lo, f.test_hi, f.n_test), f.noise_sd, t_test);
  return d;
}

void write_dataset_csv(const fs::path& path, const SplitData& data) {
  const std::size_t n_x = data.train.input_dim();
  const std::size_t n_y = data.train.output_dim();
  CsvWriter csv(concat_names({indexed("x", n_x), indexed("t", n_y), {"split"}}));
  for (std::size_t s = 0; s < 3; ++s) {
    const Dataset& d = split_of(data, s);
    for (std::size_t r = 0; r < d.size(); ++r) {
      std::vector<std::string> cells;
      for (double v : d.inputs.row_span(r)) cells.push_back(format_number(v));
      for (double v : d.targets.row_span(r)) cells.push_back(format_number(v));
      cells.emplace_back(kSplits[s]);
      csv.row_strings(cells);
    }
  }
  csv.save(path);
}

SplitData read_dataset_csv(const fs::path& path) {
  const Table t = read_csv(path);
  if (t.header.empty() || t.header.back() != "split") throw IoError("dataset CSV: last column must be split");
  std::size_t n_x = 0, n_y = 0;
  for (std::size_t c = 0; c + 1 < t.header.size(); ++c) {
    const std::string& h = t.header[c];
    if (h == "x_" + std::to_string(n_x)) {
      if (n_y) throw IoError("dataset CSV: inputs must precede targets");
      ++n_x;
    } else if (h == "t_" + std::to_string(n_y)) {
      ++n_y;
    } else {
      throw IoError("dataset CSV: unexpected column " + h);
    }
  }
  if (n_x == 0 || n_y == 0) throw IoError("dataset CSV: need x_ and t_ columns");
  std::vector<Vector> xs[3], ts[3];
  for (const auto& row : t.rows) {
    const auto it = std::find(std::begin(kSplits), std::end(kSplits), row.back());
    if (it == std::end(kSplits)) throw IoError("dataset CSV: unknown split " + row.back());
    const auto s = static_cast<std::size_t>(it - std::begin(kSplits));
    Vector x, y;
    for (std::size_t c = 0; c < n_x; ++c) x.push_back(parse_double(row[c]));
    for (std::size_t c = 0; c < n_y; ++c) y.push_back(parse_double(row[n_x + c]));
    xs[s].push_back(std::move(x));
    ts[s].push_back(std::move(y));
  }
  auto build = [&](std::size_t s) {
    Matrix x(xs[s].size(), n_x), y(ts[s].size(), n_y);
    for (std::size_t r = 0; r < xs[s].size(); ++r) {
      for (std::size_t c = 0; c < n_x; ++c) x(r, c) = xs[s][r][c];
      for (std::size_t c = 0; c < n_y; ++c) y(r, c) = ts[s][r][c];
    }
    return Dataset(std::move(x), std::move(y));
  };
  return SplitData{build(0), build(1), build(2)};
}

std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

void ExperimentConfig::validate() const {
  if (data_path.empty()) benchmark.validate();
  try {
    model.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("model: ") + e.what());
  }
  train.validate();
  alpha.validate();
  blr.validate();
  vi.train.validate();
  if (vi.n_mc == 0) throw ConfigError("vi: n_mc must be at least 1");
  if (vi_samples == 0) throw ConfigError("vi: samples must be at least 1");
  if (methods.empty()) throw ConfigError("at least one method must be selected");
  for (const auto& m : methods)
    if (m != "bll" && m != "blr" && m != "vi") throw ConfigError("unknown method: " + m);
  if (sweep_points == 0) throw ConfigError("sweep: points must be positive");
  if (!(sweep_upper >= sweep_lower)) throw ConfigError("sweep: upper < lower");
  if (!data_path.empty() && !fs::exists(data_path)) throw ConfigError("data file not found: " + data_path);
}

bool ExperimentConfig::has_method(const std::string& name) const {
  return std::find(methods.begin(), methods.end(), name) != methods.end();
}

json to_json(const ExperimentConfig& cfg) {
  std::vector<std::string> acts;
  for (std::size_t l = 0; l < cfg.model.hidden_widths.size(); ++l)
    acts.push_back(to_string(cfg.model.activation(l)));
  const BenchmarkFunction& b = cfg.benchmark;
  return json{
      {"benchmark",
       {{"noise_sd", b.noise_sd},
        {"train_range", {b.train_lo, b.train_hi}},
        {"val_range", {b.val_lo, b.val_hi}},
        {"test_range", {b.test_lo, b.test_hi}},
        {"n_train", b.n_train},
        {"n_val", b.n_val},
        {"n_test", b.n_test}}},
      {"data_path", cfg.data_path},
      {"model",
       {{"input_dim", cfg.model.input_dim},
        {"hidden_widths", cfg.model.hidden_widths},
        {"output_dim", cfg.model.output_dim},
        {"activations", acts}}},
      {"train", train_to_json(cfg.train)},
      {"alpha",
       {{"lower_offset", cfg.alpha.lower_offset},
        {"upper_offset", cfg.alpha.upper_offset},
        {"max_evaluations", cfg.alpha.max_evaluations},
        {"tolerance", cfg.alpha.tolerance},
        {"coarse_points", cfg.alpha.coarse_points}}},
      {"blr",
       {{"max_iterations", cfg.blr.max_iterations},
        {"learning_rate", cfg.blr.adam.learning_rate},
        {"tolerance", cfg.blr.tolerance},
        {"window", cfg.blr.window}}},
      {"vi",
       {{"train", train_to_json(cfg.vi.train)},
        {"n_mc", cfg.vi.n_mc},
        {"init_spread", cfg.vi.init_spread},
        {"samples", cfg.vi_samples}}},
      {"methods", cfg.methods},
      {"seed", cfg.seed},
      {"sweep", {{"lower", cfg.sweep_lower}, {"upper", cfg.sweep_upper}, {"points", cfg.sweep_points}}}};
}

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig cfg;
  check_keys(j, {"benchmark", "data_path", "model", "train", "alpha", "blr", "vi", "methods",
                 "out_dir", "seed", "sweep"},
             "config");
  if (j.contains("benchmark")) {
    const json& b = j["benchmark"];
    const std::string w = "benchmark";
    check_keys(b, {"noise_sd", "train_range", "val_range", "test_range", "n_train", "n_val", "n_test"}, w);
    BenchmarkFunction& f = cfg.benchmark;
    read_key(b, "noise_sd", f.noise_sd, w);
    read_range(b, "train_range", f.train_lo, f.train_hi, w);
    read_range(b, "val_range", f.val_lo, f.val_hi, w);
    read_range(b, "test_range", f.test_lo, f.test_hi, w);
    read_key(b, "n_train", f.n_train, w);
    read_key(b, "n_val", f.n_val, w);
    read_key(b, "n_test", f.n_test, w);
  }
  read_key(j, "data_path", cfg.data_path, "config");
  if (j.contains("model")) {
    const json& m = j["model"];
    check_keys(m, {"input_dim", "hidden_widths", "output_dim", "activations"}, "model");
    read_key(m, "input_dim", cfg.model.input_dim, "model");
    read_key(m, "hidden_widths", cfg.model.hidden_widths, "model");
    read_key(m, "output_dim", cfg.model.output_dim, "model");
    std::vector<std::string> acts;
    read_key(m, "activations", acts, "model");
    cfg.model.activations.clear();
    try {
      for (const auto& a : acts) cfg.model.activations.push_back(activation_from_string(a));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("model.activations: ") + e.what());
    }
  }
  if (j.contains("train")) train_from_json(j["train"], cfg.train, "train");
  if (j.contains("alpha")) {
    const json& a = j["alpha"];
    check_keys(a, {"lower_offset", "upper_offset", "max_evaluations", "tolerance", "coarse_points"}, "alpha");
    read_key(a, "lower_offset", cfg.alpha.lower_offset, "alpha");
    read_key(a, "upper_offset", cfg.alpha.upper_offset, "alpha");
    read_key(a, "max_evaluations", cfg.alpha.max_evaluations, "alpha");
    read_key(a, "tolerance", cfg.alpha.tolerance, "alpha");
    read_key(a, "coarse_points", cfg.alpha.coarse_points, "alpha");
  }
  if (j.contains("blr")) {
    const json& b = j["blr"];
    check_keys(b, {"max_iterations", "learning_rate", "tolerance", "window"}, "blr");
    read_key(b, "max_iterations", cfg.blr.max_iterations, "blr");
    read_key(b, "learning_rate", cfg.blr.adam.learning_rate, "blr");
    read_key(b, "tolerance", cfg.blr.tolerance, "blr");
    read_key(b, "window", cfg.blr.window, "blr");
  }
  if (j.contains("vi")) {
    const json& v = j["vi"];
    check_keys(v, {"train", "n_mc", "init_spread", "samples"}, "vi");
    if (v.contains("train")) train_from_json(v["train"], cfg.vi.train, "vi.train");
    read_key(v, "n_mc", cfg.vi.n_mc, "vi");
    read_key(v, "init_spread", cfg.vi.init_spread, "vi");
    read_key(v, "samples", cfg.vi_samples, "vi");
  }
  read_key(j, "methods", cfg.methods, "config");
  read_key(j, "out_dir", cfg.out_dir, "config");
  read_key(j, "seed", cfg.seed, "config");
  if (j.contains("sweep")) {
    const json& s = j["sweep"];
    check_keys(s, {"lower", "upper", "points"}, "sweep");
    read_key(s, "lower", cfg.sweep_lower, "sweep");
    read_key(s, "upper", cfg.sweep_upper, "sweep");
    read_key(s, "points", cfg.sweep_points, "sweep");
  }
  return cfg;
}

ExperimentConfig load_config(const fs::path& path) {
  json j;
  try {
    j = json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    throw ConfigError("cannot parse " + path.string() + ": " + e.what());
  } catch (const IoError& e) {
    throw ConfigError(e.what());
  }
  return config_from_json(j);
}

std::string config_hash(const ExperimentConfig& cfg) {
  const std::string text = to_json(cfg).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::vector<std::string> parse_methods(const std::string& list) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (std::string m : split_line(list)) {
    m.erase(0, m.find_first_not_of(" \t"));
    m.erase(m.find_last_not_of(" \t") + 1);
    if (m.empty()) continue;
    if (m != "bll" && m != "blr" && m != "vi") throw ConfigError("unknown method: " + m);
    if (seen.insert(m).second) out.push_back(m);
  }
  if (out.empty()) throw ConfigError("no methods selected");
  return out;
}

double RunReport::at(const std::string& key) const {
  const auto it = metrics.find(key);
  if (it == metrics.end()) throw std::out_of_range("no metric " + key);
  return it->second;
}

// ---------------------------------------------------------------------------
// Runs
// ---------------------------------------------------------------------------

RunReport run(const ExperimentConfig& cfg) {
  cfg.validate();
  const fs::path out(cfg.out_dir);
  ensure_dir(out);
  const SplitData data = load_or_generate(cfg);
  write_dataset_csv(out / "dataset.csv", data);
  write_text(out / "config.json", to_json(cfg).dump(2) + "\n");

  RunReport report;
  if (cfg.has_method("bll"))
    time_method(report, "bll", [&] { run_bll(cfg, data, out, report, false); });
  if (cfg.has_method("blr")) time_method(report, "blr", [&] { run_blr(cfg, data, out, report); });
  if (cfg.has_method("vi")) time_method(report, "vi", [&] { run_vi(cfg, data, out, report); });

  write_text(out / "metrics.json", metrics_json(report, cfg).dump(2) + "\n");
  return report;
}

RunReport sweep(const ExperimentConfig& cfg) {
  cfg.validate();
  const fs::path out(cfg.out_dir);
  ensure_dir(out);
  const SplitData data = load_or_generate(cfg);
  write_dataset_csv(out / "dataset.csv", data);
  RunReport report;
  time_method(report, "bll", [&] { run_bll(cfg, data, out, report, true); });
  return report;
}

// ---------------------------------------------------------------------------
// Toy demo
// ---------------------------------------------------------------------------

namespace {

double toy_function(double x) { return std::sin(2.0 * x); }

const double kToyNoise = 0.05;
const double kToyRange = 2.5;

Dataset toy_split(const Vector& xs, Rng& rng) {
  Matrix x(xs.size(), 1), t(xs.size(), 1);
  for (std::size_t r = 0; r < xs.size(); ++r) {
    x(r, 0) = xs[r];
    t(r, 0) = toy_function(xs[r]) + kToyNoise * rng.normal();
  }
  return Dataset(std::move(x), std::move(t));
}

}  // namespace

Dataset toy_train_data() {
  Matrix x{{-1.0}, {0.0}, {1.0}};
  Matrix t(3, 1);
  for (std::size_t r = 0; r < 3; ++r) t(r, 0) = toy_function(x(r, 0));
  return Dataset(std::move(x), std::move(t));
}

ToyResult toy_feature_demo(const ToyConfig& cfg) {
  const fs::path out(cfg.out_dir);
  ensure_dir(out);
  const Rng root(cfg.seed);
  Rng val_x = root.substream(1), val_t = root.substream(2), test_t = root.substream(3);

  ToyResult res;
  res.data.train = toy_train_data();
  res.data.val = toy_split(uniform_inputs(20, -kToyRange, kToyRange, val_x), val_t);
  res.data.test = toy_split(linspace(-kToyRange, kToyRange, 61), test_t);

  const MlpSpec spec{1, {8, 2}, 1, {}};
  TrainConfig tc;
  tc.seed = cfg.seed;
  tc.max_epochs = cfg.max_epochs;
  tc.val_fraction = 0.0;
  tc.patience = cfg.max_epochs;
  const TrainResult tr = train(spec, res.data.train, tc);
  res.model = tr.model;
  res.log_alpha_star = tr.model.hyper.log_alpha;

  AlphaSearchConfig search;
  search.upper_offset = cfg.sweep_span;
  const AlphaTuneResult tuned = tune_alpha(tr.model, res.data.val, search);
  res.log_alpha_max = tuned.log_alpha_max;

  write_dataset_csv(out / "toy_dataset.csv", res.data);

  // Prediction bands on a grid for three alphas.
  const Vector grid_x = linspace(-4.0, 4.0, 161);
  const Matrix grid = Matrix::column(grid_x);
  const std::pair<const char*, double> bands[] = {
      {"alpha_star", res.log_alpha_star},
      {"alpha_max", res.log_alpha_max},
      {"alpha_larger", res.log_alpha_max + std::log(cfg.larger_factor)}};
  for (const auto& [name, la] : bands)
    write_predictions(out / (std::string("toy_predictions_") + name + ".csv"), grid,
                      predict(with_log_alpha(tr.model, la), grid));

  // Feature coordinates.
  CsvWriter feat({"x", "phi_0", "phi_1", "split"});
  double lo0 = 1e300, hi0 = -1e300, lo1 = 1e300, hi1 = -1e300;
  auto add_features = [&](const Matrix& xs, const char* split) {
    for (std::size_t r = 0; r < xs.rows(); ++r) {
      const Vector phi = feature_vector(tr.model, xs.row_span(r));
      feat.row_strings({format_number(xs(r, 0)), format_number(phi[0]), format_number(phi[1]), split});
      lo0 = std::min(lo0, phi[0]);
      hi0 = std::max(hi0, phi[0]);
      lo1 = std::min(lo1, phi[1]);
      hi1 = std::max(hi1, phi[1]);
    }
  };
  add_features(res.data.train.inputs, "train");
  add_features(grid, "grid");
  feat.save(out / "toy_features.csv");

  // Affine cost over the feature plane with gamma = alpha*.
  const Matrix train_phi = linear_part(tr.model.train_features);
  const double pad0 = 0.25 * std::max(hi0 - lo0, 1e-3), pad1 = 0.25 * std::max(hi1 - lo1, 1e-3);
  const Vector g0 = linspace(lo0 - pad0, hi0 + pad0, cfg.grid_points);
  const Vector g1 = linspace(lo1 - pad1, hi1 + pad1, cfg.grid_points);
  CsvWriter cost({"phi_0", "phi_1", "affine_cost"});
  for (double a : g0)
    for (double b : g1) {
      const double q[] = {a, b};
      const double row[] = {a, b, affine_cost_closed(train_phi, q, tr.model.alpha())};
      cost.row({row});
    }
  cost.save(out / "toy_affine_cost.csv");

  const Dataset sets[] = {res.data.train, res.data.val, res.data.test};
  res.sweep = alpha_sweep(tr.model, sets,
                          sweep_grid(res.log_alpha_star, 0.0, cfg.sweep_span, cfg.sweep_points));
  write_sweep(out / "toy_sweep.csv", res.sweep);

  json metrics{{"alpha_star", std::exp(res.log_alpha_star)},
               {"alpha_max", std::exp(res.log_alpha_max)},
               {"sigma_e", tr.model.noise_sd()},
               {"train_lpd_alpha_star", lpd(tr.model, res.data.train)},
               {"val_lpd_alpha_star", lpd(tr.model, res.data.val)},
               {"val_lpd_alpha_max", tuned.val_lpd},
               {"test_lpd_alpha_star", lpd(tr.model, res.data.test)},
               {"test_lpd_alpha_max", lpd(tuned.model, res.data.test)},
               {"provenance", {{"seed", cfg.seed}, {"artifact_version", kArtifactVersion}}}};
  write_text(out / "toy_metrics.json", metrics.dump(2) + "\n");
  return res;
}

// ---------------------------------------------------------------------------
// Report
// ---------------------------------------------------------------------------

ReportCheck recompute_lpd(const fs::path& out_dir) {
  const json metrics = json::parse(read_text(out_dir / "metrics.json"));
  const SplitData data = read_dataset_csv(out_dir / "dataset.csv");
  ReportCheck check;
  for (const auto& [key, value] : metrics.items()) {
    const auto dot_pos = key.find('.');
    if (dot_pos == std::string::npos || !value.is_number()) continue;
    const std::string variant = key.substr(0, dot_pos);
    const std::string metric = key.substr(dot_pos + 1);
    const auto split_it = std::find_if(std::begin(kSplits), std::end(kSplits),
                                       [&](const char* s) { return metric == std::string(s) + "_lpd"; });
    if (split_it == std::end(kSplits)) continue;
    const std::string split = *split_it;
    const Dataset& d = split_of(data, static_cast<std::size_t>(split_it - std::begin(kSplits)));
    const std::size_t n_y = d.output_dim();

    double total = 0.0;
    if (variant == "vi") {
      const Table t = read_csv(out_dir / ("vi_components_" + split + ".csv"));
      const std::size_t row_col = t.column("row");
      std::vector<std::vector<Vector>> comps(d.size());
      Vector noise(n_y);
      for (const auto& row : t.rows) {
        const auto r = static_cast<std::size_t>(parse_double(row[row_col]));
        if (r >= d.size()) throw IoError("vi components: row index out of range");
        Vector m(n_y);
        for (std::size_t i = 0; i < n_y; ++i) {
          m[i] = parse_double(row[t.column("mean_" + std::to_string(i))]);
          noise[i] = parse_double(row[t.column("noise_var_" + std::to_string(i))]);
        }
        comps[r].push_back(std::move(m));
      }
      for (std::size_t r = 0; r < d.size(); ++r) {
        GmmPredictive g{Matrix(comps[r].size(), n_y), noise};
        for (std::size_t k = 0; k < comps[r].size(); ++k)
          for (std::size_t i = 0; i < n_y; ++i) g.means(k, i) = comps[r][k][i];
        total += gmm_lpd(g, d.targets.row_span(r));
      }
    } else {
      const Table t = read_csv(out_dir / ("predictions_" + variant + "_" + split + ".csv"));
      if (t.rows.size() != d.size()) throw IoError("prediction file row count mismatch");
      for (std::size_t r = 0; r < d.size(); ++r) {
        Vector mean(n_y), var(n_y);
        for (std::size_t i = 0; i < n_y; ++i) {
          mean[i] = parse_double(t.rows[r][t.column("mean_" + std::to_string(i))]);
          const double sd = parse_double(t.rows[r][t.column("sd_t_" + std::to_string(i))]);
          var[i] = sd * sd;
        }
        total += gaussian_log_density(d.targets.row_span(r), mean, var);
      }
    }
    const double recomputed = total / static_cast<double>(d.size());
    check.recomputed[key] = recomputed;
    check.max_drift = std::max(check.max_drift, std::abs(recomputed - value.get<double>()));
  }
  return check;
}

std::string format_report(const fs::path& out_dir) {
  const json metrics = json::parse(read_text(out_dir / "metrics.json"));
  std::map<std::string, std::map<std::string, double>> table;
  for (const auto& [key, value] : metrics.items()) {
    const auto dot_pos = key.find('.');
    if (dot_pos == std::string::npos || !value.is_number()) continue;
    table[key.substr(0, dot_pos)][key.substr(dot_pos + 1)] = value.get<double>();
  }
  const char* const cols[] = {"train_mse", "test_mse", "train_nlml", "train_lpd",
                              "val_lpd",   "test_lpd", "alpha",      "sigma_e_0", "sigma_e_1"};
  std::ostringstream ss;
  ss << std::left << std::setw(16) << "variant";
  for (const char* c : cols) ss << std::right << std::setw(12) << c;
  ss << "\n";
  for (const auto& [variant, values] : table) {
    if (values.find("test_lpd") == values.end()) continue;
    ss << std::left << std::setw(16) << variant;
    for (const char* c : cols) {
      const auto it = values.find(c);
      ss << std::right << std::setw(12);
      if (it == values.end()) {
        ss << "-";
      } else {
        ss << std::setprecision(4) << it->second;
      }
    }
    ss << "\n";
  }
  if (metrics.contains("failures")) {
    for (const auto& [method, msg] : metrics["failures"].items())
      ss << "failed " << method << ": " << msg.get<std::string>() << "\n";
  }
  return ss.str();
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

json to_json(const MlpParams& p) {
  json weights = json::array();
  for (const Matrix& w : p.weights) weights.push_back(matrix_to_json(w));
  std::vector<std::string> acts;
  for (Activation a : p.activations) acts.push_back(to_string(a));
  return json{{"weights", weights}, {"activations", acts}};
}

MlpParams params_from_json(const json& j) {
  MlpParams p;
  try {
    for (const json& w : j.at("weights")) p.weights.push_back(matrix_from_json(w));
    for (const auto& a : j.at("activations").get<std::vector<std::string>>())
      p.activations.push_back(activation_from_string(a));
  } catch (const json::exception& e) {
    throw IoError(std::string("params_from_json: ") + e.what());
  }
  if (p.weights.size() != p.activations.size() + 1) throw IoError("params_from_json: layer count mismatch");
  return p;
}

json to_json(const BllModel& m) {
  return json{{"params", to_json(m.params)},
              {"log_alpha", m.hyper.log_alpha},
              {"log_sigma_e", m.hyper.log_sigma_e},
              {"scaling", scaling_to_json(m.scaling)}};
}

json to_json(const ViParams& p) {
  json mean = json::array(), rho = json::array();
  for (const Matrix& m : p.mean) mean.push_back(matrix_to_json(m));
  for (const Matrix& r : p.rho) rho.push_back(matrix_to_json(r));
  std::vector<std::string> acts;
  for (Activation a : p.activations) acts.push_back(to_string(a));
  return json{{"mean", mean},
              {"rho", rho},
              {"activations", acts},
              {"log_last_prior_sd", p.log_last_prior_sd},
              {"log_sigma_e", p.log_sigma_e},
              {"scaling", scaling_to_json(p.scaling)}};
}

}  // namespace bayeslast::bench
