#include "bayeslast/dataset.hpp"

#include <cmath>
#include <utility>

namespace bayeslast {

Dataset::Dataset(Matrix x, Matrix t) : inputs(std::move(x)), targets(std::move(t)) {
  if (inputs.rows() != targets.rows()) throw DimensionMismatch("Dataset: row count mismatch");
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  Matrix x(rows.size(), input_dim());
  Matrix t(rows.size(), output_dim());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < input_dim(); ++j) x(i, j) = inputs(rows[i], j);
    for (std::size_t j = 0; j < output_dim(); ++j) t(i, j) = targets(rows[i], j);
  }
  return Dataset(std::move(x), std::move(t));
}

Dataset concat(const Dataset& a, const Dataset& b) {
  if (a.input_dim() != b.input_dim() || a.output_dim() != b.output_dim()) {
    throw DimensionMismatch("concat: column mismatch");
  }
  Vector x(a.inputs.data().begin(), a.inputs.data().end());
  x.insert(x.end(), b.inputs.data().begin(), b.inputs.data().end());
  Vector t(a.targets.data().begin(), a.targets.data().end());
  t.insert(t.end(), b.targets.data().begin(), b.targets.data().end());
  const std::size_t m = a.size() + b.size();
  return Dataset(Matrix(m, a.input_dim(), std::move(x)), Matrix(m, a.output_dim(), std::move(t)));
}

namespace {

void column_moments(const Matrix& a, Vector& mean, Vector& scale) {
  mean.assign(a.cols(), 0.0);
  scale.assign(a.cols(), 1.0);
  if (a.rows() == 0) return;
  const double m = static_cast<double>(a.rows());
  for (std::size_t c = 0; c < a.cols(); ++c) {
    double s = 0.0;
    for (std::size_t r = 0; r < a.rows(); ++r) s += a(r, c);
    mean[c] = s / m;
    double ss = 0.0;
    for (std::size_t r = 0; r < a.rows(); ++r) ss += (a(r, c) - mean[c]) * (a(r, c) - mean[c]);
    const double sd = std::sqrt(ss / m);
    scale[c] = sd > 1e-12 ? sd : 1.0;
  }
}

Matrix apply(const Matrix& a, const Vector& mean, const Vector& scale) {
  if (a.cols() != mean.size()) throw DimensionMismatch("Standardizer: column mismatch");
  Matrix out = a;
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t c = 0; c < a.cols(); ++c) out(r, c) = (a(r, c) - mean[c]) / scale[c];
  return out;
}

}  // namespace

Standardizer Standardizer::fit(const Dataset& d) {
  Standardizer s;
  column_moments(d.inputs, s.input_mean, s.input_scale);
  column_moments(d.targets, s.target_mean, s.target_scale);
  return s;
}

Standardizer Standardizer::identity(std::size_t input_dim, std::size_t output_dim) {
  return Standardizer{Vector(input_dim, 0.0), Vector(input_dim, 1.0), Vector(output_dim, 0.0),
                      Vector(output_dim, 1.0)};
}

Matrix Standardizer::transform_inputs(const Matrix& x) const {
  return apply(x, input_mean, input_scale);
}

Vector Standardizer::transform_input(std::span<const double> x) const {
  if (x.size() != input_mean.size()) throw DimensionMismatch("Standardizer: input length");
  Vector out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = (x[i] - input_mean[i]) / input_scale[i];
  return out;
}

Matrix Standardizer::transform_targets(const Matrix& t) const {
  return apply(t, target_mean, target_scale);
}

Dataset Standardizer::transform(const Dataset& d) const {
  return Dataset(transform_inputs(d.inputs), transform_targets(d.targets));
}

}  // namespace bayeslast
