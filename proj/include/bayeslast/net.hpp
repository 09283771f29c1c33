#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "bayeslast/autodiff.hpp"
#include "bayeslast/numerics.hpp"

namespace bayeslast {

enum class Activation { Tanh, Relu };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& name);

// Feed-forward network with L >= 1 hidden layers and a linear output layer.
// The last hidden layer's activations are the features of the Bayesian
// last layer.
struct MlpSpec {
  std::size_t input_dim = 1;
  std::vector<std::size_t> hidden_widths;
  std::size_t output_dim = 1;
  std::vector<Activation> activations;  // one per hidden layer; empty means tanh

  // Throws std::invalid_argument when the spec is malformed.
  void validate() const;
  Activation activation(std::size_t layer) const;
};

// Weight matrix l has shape (n_{l-1} + 1) x n_l; its last row is the bias.
struct MlpParams {
  std::vector<Matrix> weights;
  std::vector<Activation> activations;  // one per hidden layer

  std::size_t hidden_layers() const { return weights.size() - 1; }
  std::size_t input_dim() const { return weights.front().rows() - 1; }
  std::size_t output_dim() const { return weights.back().cols(); }
  // n_phi~, the number of linear features.
  std::size_t feature_dim() const { return weights.back().rows() - 1; }
  const Matrix& last_layer() const { return weights.back(); }
  Matrix& last_layer() { return weights.back(); }

  bool operator==(const MlpParams&) const = default;
};

// Glorot-normal weights with std sqrt(2 / (fan_in + fan_out)); bias rows zero.
MlpParams init_params(const MlpSpec& spec, Rng& rng);

struct ForwardResult {
  Vector output;    // y, length n_y
  Vector features;  // phi~, length n_phi~
};

ForwardResult forward(const MlpParams& params, std::span<const double> x);

// Rows [phi~(x_i)^T, 1]; the last column is identically one.
Matrix features(const MlpParams& params, const Matrix& inputs);

// Network output for every row of inputs (m x n_y).
Matrix predict_outputs(const MlpParams& params, const Matrix& inputs);

// ---------------------------------------------------------------------------
// Taped evaluation and gradients
// ---------------------------------------------------------------------------

// Records the hidden layers on the tape and returns the affine feature
// matrix [Phi~, 1]. `weights` holds at least the L hidden-layer matrices.
ad::Var features(std::span<const ad::Var> weights, std::span<const Activation> activations,
                 const Matrix& inputs);

// Objective built from the recorded weight matrices and a 1 x k row of
// auxiliary scalars (for the last-layer objective: log alpha, log sigma_e).
using LossFn = std::function<ad::Var(ad::Tape&, std::span<const ad::Var> weights,
                                     const ad::Var& aux)>;

struct Gradient {
  double value = 0.0;
  std::vector<Matrix> weights;
  Vector aux;
};

// Throws NonFiniteLoss when the objective value is not finite.
Gradient grad(const LossFn& loss, const MlpParams& params, std::span<const double> aux);

// Objective value only; same tape path as grad without the reverse sweep.
double evaluate(const LossFn& loss, const MlpParams& params, std::span<const double> aux);

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::size_t step = 0;
  std::vector<Matrix> first_moment;
  std::vector<Matrix> second_moment;
};

// Zero moments shaped like `params`.
AdamState make_adam_state(const AdamConfig& config, std::span<const Matrix> params);

// One bias-corrected Adam update of params in place.
void adam_step(AdamState& state, std::span<Matrix> params, std::span<const Matrix> grads);

}  // namespace bayeslast
