#include "bayeslast/calibrate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

#include "bayeslast/errors.hpp"

namespace bayeslast {

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);
const double kInvPhi = (std::sqrt(5.0) - 1.0) / 2.0;

MlpParams params_from_blocks(const Blocks& blocks, const std::vector<Activation>& activations) {
  MlpParams p;
  p.weights.assign(blocks.begin(), blocks.end() - 1);
  p.activations = activations;
  return p;
}

Vector aux_from_blocks(const Blocks& blocks) {
  const Matrix& a = blocks.back();
  const auto v = a.data();
  return Vector(v.begin(), v.end());
}

void clamp_aux(Blocks& blocks) {
  Matrix& a = blocks.back();
  for (std::size_t c = 0; c < a.cols(); ++c)
    a(0, c) = std::clamp(a(0, c), -kLogHyperBound, kLogHyperBound);
}

TrainResult train_impl(const MlpSpec& spec, const Dataset& fit, const Dataset& monitor,
                       const TrainConfig& cfg) {
  spec.validate();
  cfg.validate();
  if (fit.empty()) throw std::invalid_argument("train: empty fitting set");
  if (fit.input_dim() != spec.input_dim || fit.output_dim() != spec.output_dim) {
    throw DimensionMismatch("train: dataset does not match network spec");
  }

  const Standardizer scaling =
      cfg.standardize ? Standardizer::fit(fit)
                      : Standardizer::identity(fit.input_dim(), fit.output_dim());
  const Dataset fit_s = scaling.transform(fit);

  Rng init_rng = Rng(cfg.seed).substream(0);
  MlpParams params = init_params(spec, init_rng);
  const std::vector<Activation> activations = params.activations;

  Blocks init = params.weights;
  Matrix aux(1, spec.output_dim + 1, cfg.init_log_sigma_e);
  aux(0, 0) = cfg.init_log_alpha;
  init.push_back(aux);

  const LossFn loss = neg_lml_loss(fit_s.inputs, fit_s.targets, activations);
  const BlockGradient gradient = [&](const Blocks& b) {
    const Gradient g = grad(loss, params_from_blocks(b, activations), aux_from_blocks(b));
    Blocks out = g.weights;
    out.push_back(Matrix::row(g.aux));
    return std::make_pair(g.value, std::move(out));
  };

  BlockObjective monitor_fn;
  if (!monitor.empty()) {
    // Negative held-out log-predictive density of the posterior implied by
    // the current parameters.
    monitor_fn = [&](const Blocks& b) {
      const BllModel m = fit_posterior(params_from_blocks(b, activations),
                                       BllHyper::unpack(aux_from_blocks(b)), fit, scaling);
      return -lpd(m, monitor);
    };
  }

  MinimizeResult res = minimize_early_stopping(std::move(init), gradient, monitor_fn, cfg, clamp_aux);

  const BllHyper hyper = BllHyper::unpack(aux_from_blocks(res.best));
  const MlpParams best = params_from_blocks(res.best, activations);
  TrainResult out{fit_posterior(best, hyper, fit, scaling), std::move(res.history), fit, monitor};
  return out;
}

}  // namespace

void TrainConfig::validate() const {
  if (max_epochs == 0) throw ConfigError("max_epochs must be positive");
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) {
    throw ConfigError("val_fraction must lie in [0, 1)");
  }
  if (!(adam.learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (!std::isfinite(init_log_alpha) || !std::isfinite(init_log_sigma_e)) {
    throw ConfigError("initial log hyperparameters must be finite");
  }
}

MinimizeResult minimize_early_stopping(Blocks init, const BlockGradient& gradient,
                                       const BlockObjective& monitor, const TrainConfig& cfg,
                                       const BlockProjection& project) {
  Blocks current = std::move(init);
  if (project) project(current);
  AdamState adam = make_adam_state(cfg.adam, current);
  MinimizeResult res{current, {}};
  double best = std::numeric_limits<double>::infinity();

  for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    std::pair<double, Blocks> g;
    double monitored = 0.0;
    try {
      g = gradient(current);
      monitored = monitor ? monitor(current) : g.first;
    } catch (const NonFiniteLoss& e) {
      throw NonFiniteLoss("epoch " + std::to_string(epoch) + ": " + e.what());
    } catch (const NotPositiveDefinite& e) {
      throw NonFiniteLoss("epoch " + std::to_string(epoch) + ": " + e.what());
    }
    if (!std::isfinite(monitored)) {
      throw NonFiniteLoss("epoch " + std::to_string(epoch) + ": monitored objective not finite");
    }
    res.history.train_objective.push_back(g.first);
    res.history.val_objective.push_back(monitored);
    if (monitored < best) {
      best = monitored;
      res.best = current;
      res.history.best_epoch = epoch;
    }
    if (cfg.log_every > 0 && epoch % cfg.log_every == 0) {
      std::fprintf(stderr, "epoch %zu train %.6g monitor %.6g\n", epoch, g.first, monitored);
    }
    if (epoch - res.history.best_epoch >= cfg.patience) break;

    adam_step(adam, current, g.second);
    if (project) project(current);
  }
  return res;
}

std::pair<Dataset, Dataset> holdout_split(const Dataset& d, double fraction, std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction < 1.0)) throw ConfigError("hold-out fraction must be in [0, 1)");
  const std::size_t n = d.size();
  const auto n_out = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 0.5));
  if (fraction > 0.0 && (n_out == 0 || n_out >= n)) {
    throw ConfigError("hold-out split leaves an empty part");
  }
  Rng rng = Rng(seed).substream(1);
  const std::vector<std::size_t> perm = permutation(rng, n);
  std::vector<std::size_t> fit_rows(perm.begin() + static_cast<std::ptrdiff_t>(n_out), perm.end());
  std::vector<std::size_t> out_rows(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_out));
  std::sort(fit_rows.begin(), fit_rows.end());
  std::sort(out_rows.begin(), out_rows.end());
  return {d.subset(fit_rows), d.subset(out_rows)};
}

TrainResult train(const MlpSpec& spec, const Dataset& train_data, const TrainConfig& cfg) {
  cfg.validate();
  if (cfg.val_fraction == 0.0) return train_impl(spec, train_data, Dataset(), cfg);
  auto [fit, held] = holdout_split(train_data, cfg.val_fraction, cfg.seed);
  return train_impl(spec, fit, held, cfg);
}

TrainResult train(const MlpSpec& spec, const Dataset& train_data, const Dataset& validation,
                  const TrainConfig& cfg) {
  return train_impl(spec, train_data, validation, cfg);
}

double gaussian_log_density(std::span<const double> t, std::span<const double> mean,
                            std::span<const double> var) {
  if (t.size() != mean.size() || t.size() != var.size()) {
    throw DimensionMismatch("gaussian_log_density: length mismatch");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double r = t[i] - mean[i];
    s += -0.5 * (kLog2Pi + std::log(var[i]) + r * r / var[i]);
  }
  return s;
}

double lpd(const BllModel& model, const Dataset& d) {
  if (d.empty()) throw std::invalid_argument("lpd: empty dataset");
  double total = 0.0;
  for (std::size_t r = 0; r < d.size(); ++r) {
    const PredictiveDistribution p = predict(model, d.inputs.row_span(r));
    total += gaussian_log_density(d.targets.row_span(r), p.mean, p.sigma_t);
  }
  return total / static_cast<double>(d.size());
}

void AlphaSearchConfig::validate() const {
  if (!(upper_offset >= lower_offset)) throw ConfigError("alpha search: upper < lower");
  if (coarse_points < 2) throw ConfigError("alpha search: need at least two coarse points");
  if (max_evaluations < coarse_points) {
    throw ConfigError("alpha search: evaluation budget below coarse grid size");
  }
  if (!(tolerance > 0.0)) throw ConfigError("alpha search: tolerance must be positive");
}

ScalarMaximum maximize_scalar(const std::function<double(double)>& f, double lo, double hi,
                              const AlphaSearchConfig& cfg) {
  cfg.validate();
  if (!(hi >= lo)) throw std::invalid_argument("maximize_scalar: hi < lo");
  ScalarMaximum best{lo, -std::numeric_limits<double>::infinity(), 0};
  auto eval = [&](double x) {
    const double v = f(x);
    ++best.evaluations;
    if (v > best.value || (v == best.value && x < best.x)) {
      best.x = x;
      best.value = v;
    }
    return v;
  };

  if (hi == lo) {
    eval(lo);
    return best;
  }

  const Vector grid = linspace(lo, hi, cfg.coarse_points);
  std::size_t arg = 0;
  double arg_value = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double v = eval(grid[i]);
    if (v > arg_value) {
      arg_value = v;
      arg = i;
    }
  }

  double a = grid[arg == 0 ? 0 : arg - 1];
  double b = grid[std::min(arg + 1, grid.size() - 1)];
  double c = b - kInvPhi * (b - a);
  double d = a + kInvPhi * (b - a);
  if (best.evaluations + 2 > cfg.max_evaluations) return best;
  double fc = eval(c);
  double fd = eval(d);
  while (b - a > cfg.tolerance && best.evaluations < cfg.max_evaluations) {
    if (fc >= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - kInvPhi * (b - a);
      fc = eval(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + kInvPhi * (b - a);
      fd = eval(d);
    }
  }
  return best;
}

AlphaTuneResult tune_alpha(const BllModel& model, const Dataset& validation,
                           const AlphaSearchConfig& cfg) {
  cfg.validate();
  const double lo = model.hyper.log_alpha + cfg.lower_offset;
  const double hi = model.hyper.log_alpha + cfg.upper_offset;
  const ScalarMaximum m = maximize_scalar(
      [&](double la) { return lpd(with_log_alpha(model, la), validation); }, lo, hi, cfg);
  AlphaTuneResult out;
  out.log_alpha_max = m.x;
  out.alpha_max = std::exp(m.x);
  out.val_lpd = m.value;
  out.model = with_log_alpha(model, m.x);
  return out;
}

std::vector<SweepRow> alpha_sweep(const BllModel& model, std::span<const Dataset> datasets,
                                  std::span<const double> log_alpha_grid) {
  std::vector<SweepRow> rows;
  rows.reserve(log_alpha_grid.size());
  for (double la : log_alpha_grid) {
    const BllModel m = with_log_alpha(model, la);
    SweepRow row;
    row.log_alpha = la;
    row.train_nlml = train_neg_lml(m);
    for (const Dataset& d : datasets) row.lpd.push_back(lpd(m, d));
    rows.push_back(std::move(row));
  }
  return rows;
}

Vector linspace(double lo, double hi, std::size_t n) {
  if (n == 0) return {};
  if (n == 1) return {lo};
  Vector out(n);
  const double step = (hi - lo) / static_cast<double>(n - 1);
  for (std::size_t i = 0; i < n; ++i) out[i] = lo + step * static_cast<double>(i);
  out.back() = hi;
  return out;
}

}  // namespace bayeslast
