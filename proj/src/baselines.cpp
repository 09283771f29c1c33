#include "bayeslast/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "bayeslast/errors.hpp"

namespace bayeslast {

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

Standardizer scaling_for(const Dataset& fit, bool standardize) {
  return standardize ? Standardizer::fit(fit)
                     : Standardizer::identity(fit.input_dim(), fit.output_dim());
}

void check_data(const MlpSpec& spec, const Dataset& fit) {
  spec.validate();
  if (fit.empty()) throw std::invalid_argument("empty fitting set");
  if (fit.input_dim() != spec.input_dim || fit.output_dim() != spec.output_dim) {
    throw DimensionMismatch("dataset does not match network spec");
  }
}

double mean_squared_error(const MlpParams& p, const Dataset& standardized) {
  const Matrix y = predict_outputs(p, standardized.inputs);
  const Matrix r = standardized.targets - y;
  const double f = frobenius_norm(r);
  return f * f / static_cast<double>(r.size());
}

MseResult train_mse_impl(const MlpSpec& spec, const Dataset& fit, const Dataset& monitor,
                         const TrainConfig& cfg) {
  check_data(spec, fit);
  cfg.validate();
  const Standardizer scaling = scaling_for(fit, cfg.standardize);
  const Dataset fit_s = scaling.transform(fit);

  Rng init_rng = Rng(cfg.seed).substream(0);
  const MlpParams init = init_params(spec, init_rng);
  const std::vector<Activation> activations = init.activations;

  const double denom = static_cast<double>(fit_s.targets.size());
  const LossFn loss = [&](ad::Tape&, std::span<const ad::Var> w, const ad::Var&) {
    const ad::Var y = ad::matmul(features(w, activations, fit_s.inputs), w.back());
    return ad::sum(ad::square(fit_s.targets - y)) * (1.0 / denom);
  };
  const Vector dummy{0.0};
  const BlockGradient gradient = [&](const Blocks& b) {
    Gradient g = grad(loss, MlpParams{b, activations}, dummy);
    return std::make_pair(g.value, std::move(g.weights));
  };
  BlockObjective monitor_fn;
  Dataset mon_s;
  if (!monitor.empty()) {
    mon_s = scaling.transform(monitor);
    monitor_fn = [&](const Blocks& b) { return mean_squared_error(MlpParams{b, activations}, mon_s); };
  }

  MinimizeResult res = minimize_early_stopping(init.weights, gradient, monitor_fn, cfg);
  return MseResult{MlpParams{res.best, activations}, scaling, std::move(res.history), fit, monitor};
}

double gaussian_nll_mean(const Matrix& y, const Matrix& targets, std::span<const double> log_sigma) {
  double total = 0.0;
  for (std::size_t r = 0; r < y.rows(); ++r) {
    for (std::size_t c = 0; c < y.cols(); ++c) {
      const double e = targets(r, c) - y(r, c);
      total += 0.5 * kLog2Pi + log_sigma[c] + 0.5 * e * e * std::exp(-2.0 * log_sigma[c]);
    }
  }
  return total / static_cast<double>(y.rows());
}

Matrix sample_weights(const Matrix& mean, const Matrix& spread, Rng& rng) {
  Matrix w = mean;
  for (std::size_t r = 0; r < w.rows(); ++r)
    for (std::size_t c = 0; c < w.cols(); ++c) w(r, c) += spread(r, c) * rng.normal();
  return w;
}

Matrix standard_normal_like(const Matrix& shape, Rng& rng) {
  return Matrix(shape.rows(), shape.cols(), standard_normal(rng, shape.size()));
}

ViTrainResult vi_train_impl(const MlpSpec& spec, const Dataset& fit, const Dataset& monitor,
                            const ViConfig& cfg) {
  check_data(spec, fit);
  cfg.train.validate();
  if (cfg.n_mc == 0) throw ConfigError("vi_train: n_mc must be at least 1");
  if (!(cfg.init_spread > 0.0)) throw ConfigError("vi_train: initial spread must be positive");

  ViParams p;
  p.scaling = scaling_for(fit, cfg.train.standardize);
  const Dataset fit_s = p.scaling.transform(fit);
  Rng init_rng = Rng(cfg.train.seed).substream(0);
  const MlpParams init = init_params(spec, init_rng);
  p.mean = init.weights;
  p.activations = init.activations;
  for (const Matrix& m : p.mean) p.rho.emplace_back(m.rows(), m.cols(), inverse_softplus(cfg.init_spread));
  p.log_last_prior_sd = 0.5 * std::log(kHiddenPriorVariance);
  p.log_sigma_e.assign(spec.output_dim, cfg.train.init_log_sigma_e);

  const std::size_t n_layers = p.layers();
  Rng noise_rng = Rng(cfg.train.seed).substream(2);
  const BlockGradient gradient = [&](const Blocks& b) {
    std::vector<std::vector<Matrix>> noise(cfg.n_mc);
    for (auto& sample : noise)
      for (std::size_t l = 0; l < n_layers; ++l) sample.push_back(standard_normal_like(b[l], noise_rng));
    const LossFn loss = vi_loss(fit_s.inputs, fit_s.targets, p.activations, std::move(noise));
    const auto aux = b.back().data();
    Gradient g = grad(loss, MlpParams{Blocks(b.begin(), b.end() - 1), {}}, aux);
    Blocks out = std::move(g.weights);
    out.push_back(Matrix::row(g.aux));
    return std::make_pair(g.value, std::move(out));
  };

  BlockObjective monitor_fn;
  Dataset mon_s;
  if (!monitor.empty()) {
    mon_s = p.scaling.transform(monitor);
    monitor_fn = [&](const Blocks& b) {
      const MlpParams mp{Blocks(b.begin(), b.begin() + static_cast<std::ptrdiff_t>(n_layers)),
                         p.activations};
      const auto aux = b.back().data();
      return gaussian_nll_mean(predict_outputs(mp, mon_s.inputs), mon_s.targets, aux.subspan(1));
    };
  }

  Blocks init_blocks = vi_pack(p).weights;
  init_blocks.push_back(Matrix::row(vi_aux(p)));
  const BlockProjection clamp = [](Blocks& b) {
    for (double& v : b.back().data()) v = std::clamp(v, -kLogHyperBound, kLogHyperBound);
  };
  MinimizeResult res = minimize_early_stopping(std::move(init_blocks), gradient, monitor_fn,
                                               cfg.train, clamp);

  for (std::size_t l = 0; l < n_layers; ++l) {
    p.mean[l] = res.best[l];
    p.rho[l] = res.best[n_layers + l];
  }
  const auto aux = res.best.back().data();
  p.log_last_prior_sd = aux[0];
  p.log_sigma_e.assign(aux.begin() + 1, aux.end());
  return ViTrainResult{std::move(p), std::move(res.history)};
}

}  // namespace

MseResult train_mse(const MlpSpec& spec, const Dataset& train_data, const TrainConfig& cfg) {
  cfg.validate();
  if (cfg.val_fraction == 0.0) return train_mse_impl(spec, train_data, Dataset(), cfg);
  auto [fit, held] = holdout_split(train_data, cfg.val_fraction, cfg.seed);
  return train_mse_impl(spec, fit, held, cfg);
}

MseResult train_mse(const MlpSpec& spec, const Dataset& train_data, const Dataset& validation,
                    const TrainConfig& cfg) {
  return train_mse_impl(spec, train_data, validation, cfg);
}

void BlrConfig::validate() const {
  if (max_iterations == 0) throw ConfigError("blr: max_iterations must be positive");
  if (!(adam.learning_rate > 0.0)) throw ConfigError("blr: learning rate must be positive");
  if (window == 0) throw ConfigError("blr: window must be positive");
}

BlrResult blr_fit(const MlpParams& frozen, const Standardizer& scaling, const Dataset& d,
                  const BlrConfig& cfg) {
  cfg.validate();
  if (d.empty()) throw std::invalid_argument("blr_fit: empty dataset");
  const Dataset work = scaling.transform(d);
  const Matrix phi = features(frozen, work.inputs);
  const std::size_t n_y = work.output_dim();
  const LossFn loss = neg_lml_loss_fixed_features(phi, work.targets);

  Blocks current{frozen.last_layer()};
  Vector aux(n_y + 1, cfg.init_log_sigma_e);
  aux[0] = cfg.init_log_alpha;
  current.push_back(Matrix::row(aux));

  auto value_and_grad = [&](const Blocks& b) {
    const auto a = b.back().data();
    Gradient g = grad(loss, MlpParams{{b.front()}, {}}, a);
    Blocks out{std::move(g.weights.front()), Matrix::row(g.aux)};
    return std::make_pair(g.value, std::move(out));
  };
  auto value = [&](const Blocks& b) {
    try {
      return evaluate(loss, MlpParams{{b.front()}, {}}, b.back().data());
    } catch (const NotPositiveDefinite&) {
      return std::numeric_limits<double>::infinity();
    }
  };

  AdamState adam = make_adam_state(cfg.adam, current);
  auto [j, g] = value_and_grad(current);
  BlrResult out;
  out.objective.push_back(j);
  for (std::size_t it = 0; it < cfg.max_iterations; ++it) {
    Blocks candidate = current;
    AdamState trial = adam;
    adam_step(trial, candidate, g);
    for (double& v : candidate.back().data()) v = std::clamp(v, -kLogHyperBound, kLogHyperBound);
    const double j_new = value(candidate);
    if (std::isfinite(j_new) && j_new <= j) {
      current = std::move(candidate);
      adam = std::move(trial);
      std::tie(j, g) = value_and_grad(current);
      out.objective.push_back(j);
      const std::size_t k = out.objective.size();
      if (k > cfg.window &&
          out.objective[k - 1 - cfg.window] - j < cfg.tolerance * std::max(1.0, std::abs(j))) {
        break;
      }
    } else {
      adam.config.learning_rate *= 0.5;
      if (adam.config.learning_rate < cfg.min_learning_rate) break;
    }
  }

  const BllHyper hyper = BllHyper::unpack(current.back().data());
  MlpParams params = frozen;
  params.last_layer() = closed_form_wbar(phi, work.targets, hyper.alpha());
  const double j_final = neg_lml_from_features(phi, params.last_layer(), hyper, work.targets);
  if (j_final <= out.objective.back()) out.objective.push_back(j_final);
  out.model = fit_posterior(params, hyper, d, scaling);
  return out;
}

// ---------------------------------------------------------------------------

Matrix ViParams::spread(std::size_t layer) const {
  const Matrix& r = rho.at(layer);
  Matrix s(r.rows(), r.cols());
  for (std::size_t i = 0; i < r.rows(); ++i)
    for (std::size_t j = 0; j < r.cols(); ++j) {
      const double x = r(i, j);
      s(i, j) = x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
    }
  return s;
}

MlpParams ViParams::mean_params() const { return MlpParams{mean, activations}; }

Vector ViParams::noise_sd() const {
  Vector out(log_sigma_e.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(log_sigma_e[i]) * scaling.target_scale[i];
  return out;
}

double inverse_softplus(double s) {
  if (!(s > 0.0)) throw std::invalid_argument("inverse_softplus: argument must be positive");
  return s > 30.0 ? s + std::log(-std::expm1(-s)) : std::log(std::expm1(s));
}

double kl_diag_gaussian(const Matrix& mean, const Matrix& spread, double prior_var) {
  if (!mean.same_shape(spread)) throw DimensionMismatch("kl_diag_gaussian: shape mismatch");
  if (!(prior_var > 0.0)) throw std::invalid_argument("kl_diag_gaussian: prior variance must be positive");
  double kl = 0.0;
  for (std::size_t i = 0; i < mean.rows(); ++i)
    for (std::size_t j = 0; j < mean.cols(); ++j) {
      const double s2 = spread(i, j) * spread(i, j);
      const double mu = mean(i, j);
      kl += 0.5 * (std::log(prior_var / s2) + (s2 + mu * mu) / prior_var - 1.0);
    }
  return kl;
}

LossFn vi_loss(Matrix inputs, Matrix targets, std::vector<Activation> activations,
               std::vector<std::vector<Matrix>> noise) {
  return [inputs = std::move(inputs), targets = std::move(targets),
          activations = std::move(activations),
          noise = std::move(noise)](ad::Tape&, std::span<const ad::Var> w, const ad::Var& aux) {
    const std::size_t n_layers = activations.size() + 1;
    const std::size_t n_y = targets.cols();
    const double m = static_cast<double>(targets.rows());
    if (w.size() != 2 * n_layers) throw DimensionMismatch("vi_loss: expected mean and rho blocks");
    if (aux.cols() != n_y + 1) throw DimensionMismatch("vi_loss: aux must be 1 + n_y");
    if (noise.empty()) throw std::invalid_argument("vi_loss: need at least one noise draw");

    const ad::Var log_prior_sd = ad::slice(aux, 0, 0, 1, 1);
    const ad::Var log_sigma = ad::slice(aux, 0, 1, 1, n_y);
    const ad::Var inv_var = ad::exp(log_sigma * -2.0);

    std::vector<ad::Var> spread;
    for (std::size_t l = 0; l < n_layers; ++l) spread.push_back(ad::softplus(w[n_layers + l]));

    ad::Var nll = ad::sum(log_sigma) * m + 0.5 * m * static_cast<double>(n_y) * kLog2Pi;
    ad::Var fit_term;
    for (std::size_t k = 0; k < noise.size(); ++k) {
      std::vector<ad::Var> sampled;
      for (std::size_t l = 0; l < n_layers; ++l)
        sampled.push_back(w[l] + ad::hadamard(spread[l], noise[k][l]));
      const ad::Var y = ad::matmul(features(sampled, activations, inputs), sampled.back());
      const ad::Var sq = ad::sum(inv_var * ad::column_sums(ad::square(targets - y))) * 0.5;
      fit_term = k == 0 ? sq : fit_term + sq;
    }
    nll = nll + fit_term * (1.0 / static_cast<double>(noise.size()));

    // KL to N(0, v): 1/2 [log v - log s^2 + (s^2 + mu^2)/v - 1]
    ad::Var kl;
    bool first = true;
    for (std::size_t l = 0; l < n_layers; ++l) {
      const ad::Var second = ad::sum(ad::square(spread[l]) + ad::square(w[l]));
      const ad::Var log_s = ad::sum(ad::log(spread[l]));
      const double count = static_cast<double>(w[l].rows() * w[l].cols());
      ad::Var term;
      if (l + 1 < n_layers) {
        term = second * (0.5 / kHiddenPriorVariance) - log_s +
               0.5 * count * (std::log(kHiddenPriorVariance) - 1.0);
      } else {
        term = log_prior_sd * count - log_s + second * ad::exp(log_prior_sd * -2.0) * 0.5 -
               0.5 * count;
      }
      kl = first ? term : kl + term;
      first = false;
    }
    return (nll + kl) * (1.0 / m);
  };
}

MlpParams vi_pack(const ViParams& p) {
  MlpParams out;
  out.weights = p.mean;
  out.weights.insert(out.weights.end(), p.rho.begin(), p.rho.end());
  return out;
}

Vector vi_aux(const ViParams& p) {
  Vector aux{p.log_last_prior_sd};
  aux.insert(aux.end(), p.log_sigma_e.begin(), p.log_sigma_e.end());
  return aux;
}

ViTrainResult vi_train(const MlpSpec& spec, const Dataset& train_data, const ViConfig& cfg) {
  cfg.train.validate();
  if (cfg.train.val_fraction == 0.0) return vi_train_impl(spec, train_data, Dataset(), cfg);
  auto [fit, held] = holdout_split(train_data, cfg.train.val_fraction, cfg.train.seed);
  return vi_train_impl(spec, fit, held, cfg);
}

ViTrainResult vi_train(const MlpSpec& spec, const Dataset& train_data, const Dataset& validation,
                       const ViConfig& cfg) {
  return vi_train_impl(spec, train_data, validation, cfg);
}

Vector GmmPredictive::mean() const {
  Vector out(means.cols(), 0.0);
  for (std::size_t k = 0; k < means.rows(); ++k)
    for (std::size_t i = 0; i < means.cols(); ++i) out[i] += means(k, i);
  for (double& v : out) v /= static_cast<double>(means.rows());
  return out;
}

Vector GmmPredictive::variance() const {
  const Vector mu = mean();
  Vector out = noise_var;
  for (std::size_t k = 0; k < means.rows(); ++k)
    for (std::size_t i = 0; i < means.cols(); ++i) {
      const double d = means(k, i) - mu[i];
      out[i] += d * d / static_cast<double>(means.rows());
    }
  return out;
}

double gmm_lpd(const GmmPredictive& pred, std::span<const double> t) {
  const std::size_t n = pred.components();
  if (n == 0) throw std::invalid_argument("gmm_lpd: empty mixture");
  if (t.size() != pred.means.cols() || t.size() != pred.noise_var.size()) {
    throw DimensionMismatch("gmm_lpd: target length mismatch");
  }
  Vector logs(n);
  for (std::size_t k = 0; k < n; ++k)
    logs[k] = gaussian_log_density(t, pred.means.row_span(k), pred.noise_var);
  const double top = *std::max_element(logs.begin(), logs.end());
  double s = 0.0;
  for (double v : logs) s += std::exp(v - top);
  return top + std::log(s / static_cast<double>(n));
}

std::vector<GmmPredictive> vi_predict_batch(const ViParams& p, const Matrix& inputs,
                                            std::size_t n, Rng& rng) {
  if (n == 0) throw std::invalid_argument("vi_predict: need at least one component");
  const Matrix x = p.scaling.transform_inputs(inputs);
  const std::size_t n_y = p.log_sigma_e.size();
  Vector noise_var(n_y);
  const Vector sd = p.noise_sd();
  for (std::size_t i = 0; i < n_y; ++i) noise_var[i] = sd[i] * sd[i];

  std::vector<GmmPredictive> out(inputs.rows(), GmmPredictive{Matrix(n, n_y), noise_var});
  for (std::size_t k = 0; k < n; ++k) {
    MlpParams sample{{}, p.activations};
    for (std::size_t l = 0; l < p.layers(); ++l)
      sample.weights.push_back(sample_weights(p.mean[l], p.spread(l), rng));
    const Matrix y = predict_outputs(sample, x);
    for (std::size_t r = 0; r < inputs.rows(); ++r)
      for (std::size_t i = 0; i < n_y; ++i)
        out[r].means(k, i) = p.scaling.target_mean[i] + p.scaling.target_scale[i] * y(r, i);
  }
  return out;
}

GmmPredictive vi_predict(const ViParams& p, std::span<const double> x, std::size_t n, Rng& rng) {
  return vi_predict_batch(p, Matrix::row(x), n, rng).front();
}

double vi_lpd(const ViParams& p, const Dataset& d, std::size_t n, std::uint64_t seed) {
  if (d.empty()) throw std::invalid_argument("vi_lpd: empty dataset");
  Rng rng(seed);
  const std::vector<GmmPredictive> preds = vi_predict_batch(p, d.inputs, n, rng);
  double total = 0.0;
  for (std::size_t r = 0; r < d.size(); ++r) total += gmm_lpd(preds[r], d.targets.row_span(r));
  return total / static_cast<double>(d.size());
}

}  // namespace bayeslast
