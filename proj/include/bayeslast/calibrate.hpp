#pragma once

// Training by direct minimization of the last-layer objective, the mean
// log-predictive density, and the post-hoc search for the alpha that
// maximizes validation log-predictive density.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "bayeslast/dataset.hpp"
#include "bayeslast/last_layer.hpp"
#include "bayeslast/net.hpp"

namespace bayeslast {

struct TrainConfig {
  std::size_t max_epochs = 20000;
  std::size_t patience = 1000;
  AdamConfig adam{};
  std::uint64_t seed = 0;
  // Fraction of the training data held out for early stopping. Zero disables
  // the hold-out and monitors the training objective itself.
  double val_fraction = 0.2;
  std::size_t log_every = 0;
  bool standardize = true;
  double init_log_alpha = 0.0;
  double init_log_sigma_e = 0.0;

  void validate() const;
};

struct TrainHistory {
  Vector train_objective;
  Vector val_objective;
  std::size_t best_epoch = 0;

  std::size_t epochs() const { return train_objective.size(); }
  bool operator==(const TrainHistory&) const = default;
};

// ---------------------------------------------------------------------------
// Generic full-batch Adam with early stopping over a list of parameter blocks
// ---------------------------------------------------------------------------

using Blocks = std::vector<Matrix>;
// Objective value and gradient per block.
using BlockGradient = std::function<std::pair<double, Blocks>(const Blocks&)>;
using BlockObjective = std::function<double(const Blocks&)>;
// Applied after each step, e.g. to clamp log-parameters.
using BlockProjection = std::function<void(Blocks&)>;

struct MinimizeResult {
  Blocks best;
  TrainHistory history;
};

// Runs until max_epochs or until the monitored objective has not improved
// for `patience` epochs; returns the blocks of the best monitored epoch.
// NonFiniteLoss is rethrown with the offending epoch in the message.
MinimizeResult minimize_early_stopping(Blocks init, const BlockGradient& gradient,
                                       const BlockObjective& monitor, const TrainConfig& cfg,
                                       const BlockProjection& project = nullptr);

// Seed-deterministic split into (fit, hold-out). With fraction 0 the
// hold-out is empty.
std::pair<Dataset, Dataset> holdout_split(const Dataset& d, double fraction, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Last-layer training
// ---------------------------------------------------------------------------

struct TrainResult {
  BllModel model;
  TrainHistory history;
  Dataset fit_data;      // rows used by the objective (data units)
  Dataset monitor_data;  // rows used for early stopping (may be empty)
};

TrainResult train(const MlpSpec& spec, const Dataset& train_data, const TrainConfig& cfg);

// Uses `validation` for early stopping instead of an internal hold-out.
TrainResult train(const MlpSpec& spec, const Dataset& train_data, const Dataset& validation,
                  const TrainConfig& cfg);

// Mean over samples of sum_i log N(t_i; mean_i, sigma_t_i).
double lpd(const BllModel& model, const Dataset& d);

// log N(t; mean, var) summed over outputs.
double gaussian_log_density(std::span<const double> t, std::span<const double> mean,
                            std::span<const double> var);

// ---------------------------------------------------------------------------
// Alpha search
// ---------------------------------------------------------------------------

struct AlphaSearchConfig {
  // Search interval in log alpha relative to the trained log alpha.
  double lower_offset = 0.0;
  double upper_offset = 15.0;
  std::size_t max_evaluations = 60;
  double tolerance = 1e-3;
  // Evenly spaced evaluations that bracket the maximum before golden-section
  // refinement.
  std::size_t coarse_points = 16;

  void validate() const;
};

struct ScalarMaximum {
  double x = 0.0;
  double value = 0.0;
  std::size_t evaluations = 0;
};

// Coarse scan then golden-section refinement on the best bracket. Ties keep
// the smaller x, so a flat function returns `lo`.
ScalarMaximum maximize_scalar(const std::function<double(double)>& f, double lo, double hi,
                              const AlphaSearchConfig& cfg);

struct AlphaTuneResult {
  double log_alpha_max = 0.0;
  double alpha_max = 0.0;
  double val_lpd = 0.0;
  BllModel model;
};

// Keeps hidden layers, wbar and sigma_e; replaces alpha with the maximizer
// of lpd(model, validation) over [log alpha* + lower, log alpha* + upper].
AlphaTuneResult tune_alpha(const BllModel& model, const Dataset& validation,
                           const AlphaSearchConfig& cfg);

struct SweepRow {
  double log_alpha = 0.0;
  double train_nlml = 0.0;
  Vector lpd;  // one per dataset
};

std::vector<SweepRow> alpha_sweep(const BllModel& model, std::span<const Dataset> datasets,
                                  std::span<const double> log_alpha_grid);

// n evenly spaced values on [lo, hi].
Vector linspace(double lo, double hi, std::size_t n);

}  // namespace bayeslast
