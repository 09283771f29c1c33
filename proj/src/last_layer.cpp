#include "bayeslast/last_layer.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <utility>

namespace bayeslast {

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

}  // namespace

BllHyper::BllHyper(double log_alpha_, Vector log_sigma_e_)
    : log_alpha(log_alpha_), log_sigma_e(std::move(log_sigma_e_)) {}

double BllHyper::alpha() const { return std::exp(log_alpha); }

double BllHyper::sigma_e(std::size_t i) const { return std::exp(log_sigma_e.at(i)); }

void BllHyper::clamp() {
  log_alpha = std::clamp(log_alpha, -kLogHyperBound, kLogHyperBound);
  for (double& v : log_sigma_e) v = std::clamp(v, -kLogHyperBound, kLogHyperBound);
}

Vector BllHyper::packed() const {
  Vector out{log_alpha};
  out.insert(out.end(), log_sigma_e.begin(), log_sigma_e.end());
  return out;
}

BllHyper BllHyper::unpack(std::span<const double> packed) {
  if (packed.size() < 2) throw DimensionMismatch("BllHyper::unpack: need alpha and one sigma");
  return BllHyper(packed[0], Vector(packed.begin() + 1, packed.end()));
}

Vector prior_mask(std::size_t n_phi, PriorMode mode) {
  Vector mask(n_phi, 1.0);
  if (mode == PriorMode::FlatBias && n_phi > 0) mask.back() = 0.0;
  return mask;
}

Matrix precision_bar(const Matrix& phi, double alpha, PriorMode mode) {
  if (!(alpha > 0.0)) throw std::invalid_argument("precision_bar: alpha must be positive");
  Matrix lambda = gram(phi);
  const Vector mask = prior_mask(phi.cols(), mode);
  for (std::size_t i = 0; i < mask.size(); ++i) lambda(i, i) += mask[i] / alpha;
  return lambda;
}

Matrix closed_form_wbar(const Matrix& phi, const Matrix& targets, double alpha, PriorMode mode) {
  if (phi.rows() != targets.rows()) throw DimensionMismatch("closed_form_wbar: row mismatch");
  const CholeskyFactor f = cholesky_with_fallback(precision_bar(phi, alpha, mode));
  return solve_pd(f, matmul(transpose(phi), targets));
}

ad::Var neg_lml_graph(const ad::Var& phi, const ad::Var& wbar, const ad::Var& log_alpha,
                      const ad::Var& log_sigma, const Matrix& targets, PriorMode mode) {
  const std::size_t m = targets.rows();
  const std::size_t n_y = targets.cols();
  const std::size_t n_phi = phi.cols();
  if (phi.rows() != m) throw DimensionMismatch("neg_lml: feature/target row mismatch");
  if (wbar.rows() != n_phi || wbar.cols() != n_y) throw DimensionMismatch("neg_lml: wbar shape");
  if (log_sigma.cols() != n_y) throw DimensionMismatch("neg_lml: one sigma_e per output");
  if (m == 0) throw std::invalid_argument("neg_lml: empty dataset");

  const Vector mask = prior_mask(n_phi, mode);
  Matrix row_mask(n_phi, n_y);
  for (std::size_t i = 0; i < n_phi; ++i)
    for (std::size_t j = 0; j < n_y; ++j) row_mask(i, j) = mask[i];

  const double dm = static_cast<double>(m);
  const ad::Var inv_alpha = ad::exp(-log_alpha);
  const ad::Var lambda = ad::add_scaled_diagonal(ad::gram(phi), inv_alpha, mask);

  const ad::Var shared =
      (ad::logdet(lambda) + log_alpha * static_cast<double>(n_phi) + dm * kLog2Pi) *
      (static_cast<double>(n_y) / (2.0 * dm));

  const ad::Var misfit = ad::column_sums(ad::square(targets - ad::matmul(phi, wbar)));
  const ad::Var penalty = ad::column_sums(ad::square(ad::hadamard(wbar, row_mask)));
  const ad::Var inv_var = ad::exp(log_sigma * -2.0);
  const ad::Var per_output = ad::sum(inv_var * (misfit + inv_alpha * penalty)) * (1.0 / (2.0 * dm));

  return shared + ad::sum(log_sigma) + per_output;
}

LossFn neg_lml_loss(Matrix inputs, Matrix targets, std::vector<Activation> activations,
                    PriorMode mode) {
  return [inputs = std::move(inputs), targets = std::move(targets),
          activations = std::move(activations),
          mode](ad::Tape&, std::span<const ad::Var> weights, const ad::Var& aux) {
    const std::size_t n_y = targets.cols();
    if (aux.cols() != n_y + 1) throw DimensionMismatch("neg_lml_loss: aux must be 1 + n_y");
    const ad::Var phi = features(weights, activations, inputs);
    return neg_lml_graph(phi, weights.back(), ad::slice(aux, 0, 0, 1, 1),
                         ad::slice(aux, 0, 1, 1, n_y), targets, mode);
  };
}

LossFn neg_lml_loss_fixed_features(Matrix phi, Matrix targets, PriorMode mode) {
  return [phi = std::move(phi), targets = std::move(targets), mode](
             ad::Tape& tape, std::span<const ad::Var> weights, const ad::Var& aux) {
    const std::size_t n_y = targets.cols();
    if (aux.cols() != n_y + 1) throw DimensionMismatch("neg_lml_loss: aux must be 1 + n_y");
    return neg_lml_graph(tape.variable(phi), weights.back(), ad::slice(aux, 0, 0, 1, 1),
                         ad::slice(aux, 0, 1, 1, n_y), targets, mode);
  };
}

double neg_lml_multivariate(const MlpParams& params, const BllHyper& hyper, const Dataset& d,
                            PriorMode mode) {
  if (hyper.outputs() != d.output_dim()) throw DimensionMismatch("neg_lml: hyper/output mismatch");
  const LossFn loss = neg_lml_loss(d.inputs, d.targets, params.activations, mode);
  return evaluate(loss, params, hyper.packed());
}

double neg_lml_augmented(const MlpParams& params, const BllHyper& hyper, const Dataset& d,
                         PriorMode mode) {
  if (d.output_dim() != 1) throw DimensionMismatch("neg_lml_augmented: single output expected");
  return neg_lml_multivariate(params, hyper, d, mode);
}

double neg_lml_from_features(const Matrix& phi, const Matrix& wbar, const BllHyper& hyper,
                             const Matrix& targets, PriorMode mode) {
  ad::Tape tape;
  const ad::Var j = neg_lml_graph(tape.variable(phi), tape.variable(wbar),
                                  tape.scalar(hyper.log_alpha),
                                  tape.variable(Matrix::row(hyper.log_sigma_e)), targets, mode);
  return j.scalar();
}

double neg_lml_marginalized(const Matrix& phi, const Matrix& targets, const BllHyper& hyper,
                            PriorMode mode) {
  const std::size_t m = targets.rows();
  const std::size_t n_y = targets.cols();
  const double dm = static_cast<double>(m);
  const CholeskyFactor f = cholesky_with_fallback(precision_bar(phi, hyper.alpha(), mode));
  const Matrix b = matmul(transpose(phi), targets);
  const Matrix w = solve_pd(f, b);

  double j = static_cast<double>(n_y) / (2.0 * dm) *
             (dm * kLog2Pi + static_cast<double>(phi.cols()) * hyper.log_alpha + logdet_pd(f));
  for (std::size_t i = 0; i < n_y; ++i) {
    double tt = 0.0;
    for (std::size_t r = 0; r < m; ++r) tt += targets(r, i) * targets(r, i);
    double tpw = 0.0;
    for (std::size_t k = 0; k < phi.cols(); ++k) tpw += b(k, i) * w(k, i);
    const double s2 = std::exp(2.0 * hyper.log_sigma_e[i]);
    j += hyper.log_sigma_e[i] + (tt - tpw) / (2.0 * dm * s2);
  }
  return j;
}

Matrix full_precision(const Matrix& lambda_bar, std::span<const double> sigma_e) {
  Vector inv(sigma_e.size());
  for (std::size_t i = 0; i < sigma_e.size(); ++i) inv[i] = 1.0 / (sigma_e[i] * sigma_e[i]);
  return kron(Matrix::diagonal(inv), lambda_bar);
}

Vector BllModel::noise_sd() const {
  Vector out(hyper.outputs());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = hyper.sigma_e(i) * scaling.target_scale[i];
  return out;
}

BllModel fit_posterior(const MlpParams& params, const BllHyper& hyper, const Dataset& d,
                       const Standardizer& scaling) {
  if (d.empty()) throw std::invalid_argument("fit_posterior: empty dataset");
  if (hyper.outputs() != params.output_dim()) throw DimensionMismatch("fit_posterior: n_y mismatch");
  const Dataset work = scaling.transform(d);
  BllModel model;
  model.params = params;
  model.hyper = hyper;
  model.scaling = scaling;
  model.train_features = features(params, work.inputs);
  model.train_targets = work.targets;
  model.precision_factor =
      cholesky_with_fallback(precision_bar(model.train_features, hyper.alpha()));
  const Matrix closed =
      solve_pd(model.precision_factor, matmul(transpose(model.train_features), work.targets));
  model.wbar_gap = max_abs(params.last_layer() - closed);
  return model;
}

BllModel fit_posterior(const MlpParams& params, const BllHyper& hyper, const Dataset& d) {
  return fit_posterior(params, hyper, d, Standardizer::identity(d.input_dim(), d.output_dim()));
}

double train_neg_lml(const BllModel& model) {
  double j = neg_lml_from_features(model.train_features, model.wbar(), model.hyper,
                                   model.train_targets);
  for (double s : model.scaling.target_scale) j += std::log(s);
  return j;
}

BllModel with_log_alpha(const BllModel& model, double log_alpha) {
  BllModel out = model;
  out.hyper.log_alpha = log_alpha;
  out.precision_factor =
      cholesky_with_fallback(precision_bar(out.train_features, out.hyper.alpha()));
  return out;
}

Vector feature_vector(const BllModel& model, std::span<const double> x) {
  return forward(model.params, model.scaling.transform_input(x)).features;
}

double scaled_variance(const BllModel& model, std::span<const double> x) {
  Vector phi = feature_vector(model, x);
  phi.push_back(1.0);
  return inv_quadratic(model.precision_factor, phi);
}

PredictiveDistribution predict(const BllModel& model, std::span<const double> x) {
  const ForwardResult f = forward(model.params, model.scaling.transform_input(x));
  Vector phi = f.features;
  phi.push_back(1.0);
  const double q = inv_quadratic(model.precision_factor, phi);
  const std::size_t n_y = model.params.output_dim();
  PredictiveDistribution p{Vector(n_y), Vector(n_y), Vector(n_y)};
  for (std::size_t i = 0; i < n_y; ++i) {
    const double scale = model.scaling.target_scale[i];
    const double noise_var = model.hyper.sigma_e(i) * model.hyper.sigma_e(i) * scale * scale;
    p.mean[i] = model.scaling.target_mean[i] + scale * f.output[i];
    p.sigma_y[i] = q * noise_var;
    p.sigma_t[i] = p.sigma_y[i] + noise_var;
  }
  return p;
}

std::vector<PredictiveDistribution> predict(const BllModel& model, const Matrix& inputs) {
  std::vector<PredictiveDistribution> out;
  out.reserve(inputs.rows());
  for (std::size_t r = 0; r < inputs.rows(); ++r) out.push_back(predict(model, inputs.row_span(r)));
  return out;
}

}  // namespace bayeslast
