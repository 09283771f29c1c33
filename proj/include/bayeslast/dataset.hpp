#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "bayeslast/numerics.hpp"

namespace bayeslast {

// Inputs (m x n_x) and targets (m x n_y) with matching row counts.
struct Dataset {
  Matrix inputs;
  Matrix targets;

  Dataset() = default;
  Dataset(Matrix x, Matrix t);

  std::size_t size() const { return inputs.rows(); }
  std::size_t input_dim() const { return inputs.cols(); }
  std::size_t output_dim() const { return targets.cols(); }
  bool empty() const { return size() == 0; }

  Dataset subset(std::span<const std::size_t> rows) const;

  bool operator==(const Dataset&) const = default;
};

Dataset concat(const Dataset& a, const Dataset& b);

// Affine map to zero mean / unit variance per column, fit on a training set.
// Columns with zero spread keep scale 1.
struct Standardizer {
  Vector input_mean;
  Vector input_scale;
  Vector target_mean;
  Vector target_scale;

  static Standardizer fit(const Dataset& d);
  static Standardizer identity(std::size_t input_dim, std::size_t output_dim);

  Matrix transform_inputs(const Matrix& x) const;
  Vector transform_input(std::span<const double> x) const;
  Matrix transform_targets(const Matrix& t) const;
  Dataset transform(const Dataset& d) const;

  bool operator==(const Standardizer&) const = default;
};

}  // namespace bayeslast
