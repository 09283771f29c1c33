#include "bayeslast/net.hpp"

#include <cmath>
#include <stdexcept>

namespace bayeslast {

std::string to_string(Activation a) {
  switch (a) {
    case Activation::Tanh:
      return "tanh";
    case Activation::Relu:
      return "relu";
  }
  return "tanh";
}

Activation activation_from_string(const std::string& name) {
  if (name == "tanh") return Activation::Tanh;
  if (name == "relu") return Activation::Relu;
  throw std::invalid_argument("unknown activation '" + name + "'");
}

void MlpSpec::validate() const {
  if (input_dim == 0) throw std::invalid_argument("MlpSpec: input_dim must be >= 1");
  if (output_dim == 0) throw std::invalid_argument("MlpSpec: output_dim must be >= 1");
  if (hidden_widths.empty()) throw std::invalid_argument("MlpSpec: need at least one hidden layer");
  for (std::size_t w : hidden_widths)
    if (w == 0) throw std::invalid_argument("MlpSpec: hidden widths must be >= 1");
  if (!activations.empty() && activations.size() != hidden_widths.size()) {
    throw std::invalid_argument("MlpSpec: one activation per hidden layer required");
  }
}

Activation MlpSpec::activation(std::size_t layer) const {
  return activations.empty() ? Activation::Tanh : activations.at(layer);
}

MlpParams init_params(const MlpSpec& spec, Rng& rng) {
  spec.validate();
  MlpParams p;
  std::size_t fan_in = spec.input_dim;
  std::vector<std::size_t> widths = spec.hidden_widths;
  widths.push_back(spec.output_dim);
  for (std::size_t l = 0; l < widths.size(); ++l) {
    const std::size_t fan_out = widths[l];
    const double sd = std::sqrt(2.0 / static_cast<double>(fan_in + fan_out));
    Matrix w(fan_in + 1, fan_out);
    for (std::size_t r = 0; r < fan_in; ++r)
      for (std::size_t c = 0; c < fan_out; ++c) w(r, c) = sd * rng.normal();
    p.weights.push_back(std::move(w));
    fan_in = fan_out;
  }
  for (std::size_t l = 0; l < spec.hidden_widths.size(); ++l) p.activations.push_back(spec.activation(l));
  return p;
}

namespace {

double activate(Activation a, double x) {
  switch (a) {
    case Activation::Tanh:
      return std::tanh(x);
    case Activation::Relu:
      return x > 0.0 ? x : 0.0;
  }
  return x;
}

// h = [a, 1] W for a single row.
Vector affine(const Matrix& w, std::span<const double> a) {
  Vector h(w.cols());
  for (std::size_t c = 0; c < w.cols(); ++c) h[c] = w(a.size(), c);
  for (std::size_t r = 0; r < a.size(); ++r) {
    const double ar = a[r];
    for (std::size_t c = 0; c < w.cols(); ++c) h[c] += ar * w(r, c);
  }
  return h;
}

}  // namespace

ForwardResult forward(const MlpParams& params, std::span<const double> x) {
  if (x.size() != params.input_dim()) throw DimensionMismatch("forward: input length mismatch");
  Vector a(x.begin(), x.end());
  for (std::size_t l = 0; l < params.hidden_layers(); ++l) {
    a = affine(params.weights[l], a);
    for (double& v : a) v = activate(params.activations[l], v);
  }
  ForwardResult out;
  out.output = affine(params.last_layer(), a);
  out.features = std::move(a);
  return out;
}

Matrix features(const MlpParams& params, const Matrix& inputs) {
  const std::size_t n = params.feature_dim();
  Matrix phi(inputs.rows(), n + 1, 1.0);
  for (std::size_t i = 0; i < inputs.rows(); ++i) {
    const ForwardResult f = forward(params, inputs.row_span(i));
    for (std::size_t j = 0; j < n; ++j) phi(i, j) = f.features[j];
  }
  return phi;
}

Matrix predict_outputs(const MlpParams& params, const Matrix& inputs) {
  Matrix y(inputs.rows(), params.output_dim());
  for (std::size_t i = 0; i < inputs.rows(); ++i) {
    const ForwardResult f = forward(params, inputs.row_span(i));
    for (std::size_t j = 0; j < f.output.size(); ++j) y(i, j) = f.output[j];
  }
  return y;
}

ad::Var features(std::span<const ad::Var> weights, std::span<const Activation> activations,
                 const Matrix& inputs) {
  if (weights.empty()) throw std::invalid_argument("features: no weights");
  ad::Tape& tape = weights.front().tape();
  ad::Var a = tape.variable(inputs);
  for (std::size_t l = 0; l < activations.size(); ++l) {
    ad::Var h = ad::matmul(ad::append_ones_column(a), weights[l]);
    a = activations[l] == Activation::Tanh ? ad::tanh(h) : ad::relu(h);
  }
  return ad::append_ones_column(a);
}

namespace {

struct Recorded {
  std::vector<ad::Var> weights;
  ad::Var aux;
  ad::Var loss;
};

Recorded record(ad::Tape& tape, const LossFn& loss, const MlpParams& params,
                std::span<const double> aux) {
  Recorded r;
  for (const Matrix& w : params.weights) r.weights.push_back(tape.variable(w));
  r.aux = tape.variable(Matrix::row(aux));
  r.loss = loss(tape, r.weights, r.aux);
  if (r.loss.value().size() != 1) throw DimensionMismatch("grad: loss must be scalar");
  if (!std::isfinite(r.loss.scalar())) {
    throw NonFiniteLoss("objective evaluated to " + std::to_string(r.loss.scalar()));
  }
  return r;
}

}  // namespace

Gradient grad(const LossFn& loss, const MlpParams& params, std::span<const double> aux) {
  ad::Tape tape;
  Recorded r = record(tape, loss, params, aux);
  tape.backward(r.loss);
  Gradient g;
  g.value = r.loss.scalar();
  for (const ad::Var& w : r.weights) g.weights.push_back(tape.grad(w));
  const Matrix& ga = tape.grad(r.aux);
  g.aux.assign(ga.data().begin(), ga.data().end());
  return g;
}

double evaluate(const LossFn& loss, const MlpParams& params, std::span<const double> aux) {
  ad::Tape tape;
  return record(tape, loss, params, aux).loss.scalar();
}

AdamState make_adam_state(const AdamConfig& config, std::span<const Matrix> params) {
  AdamState s;
  s.config = config;
  for (const Matrix& p : params) {
    s.first_moment.emplace_back(p.rows(), p.cols());
    s.second_moment.emplace_back(p.rows(), p.cols());
  }
  return s;
}

void adam_step(AdamState& state, std::span<Matrix> params, std::span<const Matrix> grads) {
  if (params.size() != grads.size() || params.size() != state.first_moment.size()) {
    throw DimensionMismatch("adam_step: parameter count mismatch");
  }
  const AdamConfig& c = state.config;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(c.beta1, t);
  const double correction2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (!params[k].same_shape(grads[k]) || !params[k].same_shape(state.first_moment[k])) {
      throw DimensionMismatch("adam_step: shape mismatch in block " + std::to_string(k));
    }
    auto p = params[k].data();
    auto g = grads[k].data();
    auto m = state.first_moment[k].data();
    auto v = state.second_moment[k].data();
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      p[i] -= c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon);
    }
  }
}

}  // namespace bayeslast
