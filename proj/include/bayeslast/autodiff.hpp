#pragma once

// Matrix-valued reverse-mode differentiation. A Tape records every
// intermediate value of one objective evaluation together with a closure
// that pushes the adjoint of that value back to its inputs. Nodes are
// appended in evaluation order, so a single reverse sweep suffices.

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "bayeslast/numerics.hpp"

namespace bayeslast::ad {

class Tape;

// Handle to a node on a tape. Cheap to copy; only valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  double scalar() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  // Receives the tape and the id of the node whose adjoint is being pushed.
  using Backprop = std::function<void(Tape&, std::size_t)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var variable(Matrix value);
  Var scalar(double value);

  // Seeds d(output)/d(output) = 1 and sweeps backwards. Output must be 1x1.
  void backward(const Var& output);

  const Matrix& grad(const Var& v) const;

  std::size_t size() const { return nodes_.size(); }

  // Used by the op implementations.
  Var push(Matrix value, Backprop backprop);
  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  const Matrix& grad(std::size_t id) const { return nodes_[id].grad; }
  Matrix& grad_mut(std::size_t id) { return nodes_[id].grad; }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    Backprop backprop;
  };
  std::vector<Node> nodes_;
  bool swept_ = false;
};

// Linear algebra.
Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
// a^T a.
Var gram(const Var& a);
// [a, 1]: appends a column of ones.
Var append_ones_column(const Var& a);
Var slice(const Var& a, std::size_t row0, std::size_t col0, std::size_t rows,
          std::size_t cols);
// a + s * diag(mask) for a square a and 1x1 s.
Var add_scaled_diagonal(const Var& a, const Var& s, std::span<const double> mask);
// log det of a symmetric positive definite matrix. The backward pass adds
// adjoint * a^{-1}, with the inverse obtained from the same Cholesky factor.
Var logdet(const Var& a);

// Elementwise arithmetic. A 1x1 operand broadcasts against any shape.
Var operator+(const Var& a, const Var& b);
Var operator-(const Var& a, const Var& b);
Var operator*(const Var& a, const Var& b);
Var operator-(const Var& a);
Var operator+(const Var& a, double c);
Var operator+(double c, const Var& a);
Var operator-(const Var& a, double c);
Var operator*(const Var& a, double c);
Var operator*(double c, const Var& a);
// Adds a constant matrix of the same shape.
Var operator+(const Var& a, const Matrix& c);
Var operator-(const Matrix& c, const Var& a);
// Multiplies elementwise by a constant matrix of the same shape.
Var hadamard(const Var& a, const Matrix& c);

Var tanh(const Var& a);
Var relu(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);
Var square(const Var& a);
// log(1 + e^a), evaluated stably.
Var softplus(const Var& a);

// Reductions.
Var sum(const Var& a);
// 1 x cols row of column sums.
Var column_sums(const Var& a);

}  // namespace bayeslast::ad
