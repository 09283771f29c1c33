#include "bayeslast/autodiff.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>

namespace bayeslast::ad {

const Matrix& Var::value() const { return tape_->value(id_); }

double Var::scalar() const {
  const Matrix& v = value();
  if (v.size() != 1) throw DimensionMismatch("Var::scalar: value is not 1x1");
  return v(0, 0);
}

Var Tape::variable(Matrix value) { return push(std::move(value), nullptr); }

Var Tape::scalar(double value) { return push(Matrix(1, 1, value), nullptr); }

Var Tape::push(Matrix value, Backprop backprop) {
  nodes_.push_back(Node{std::move(value), Matrix(), std::move(backprop)});
  return Var(this, nodes_.size() - 1);
}

void Tape::backward(const Var& output) {
  if (output.tape_ != this) throw std::invalid_argument("Tape::backward: foreign Var");
  if (nodes_[output.id_].value.size() != 1) {
    throw DimensionMismatch("Tape::backward: output must be 1x1");
  }
  if (swept_) throw std::logic_error("Tape::backward: tape already swept");
  swept_ = true;
  for (Node& n : nodes_) n.grad = Matrix(n.value.rows(), n.value.cols());
  nodes_[output.id_].grad(0, 0) = 1.0;
  for (std::size_t id = output.id_ + 1; id-- > 0;) {
    if (nodes_[id].backprop) nodes_[id].backprop(*this, id);
  }
}

const Matrix& Tape::grad(const Var& v) const {
  if (!swept_) throw std::logic_error("Tape::grad: backward() has not run");
  return nodes_[v.id_].grad;
}

namespace {

void same_tape(const Var& a, const Var& b) {
  if (&a.tape() != &b.tape()) throw std::invalid_argument("ad: operands on different tapes");
}

bool is_scalar(const Matrix& m) { return m.rows() == 1 && m.cols() == 1; }

// Elementwise unary op: value f(x), derivative df(x, f(x)).
template <class F, class DF>
Var unary(const Var& a, F f, DF df) {
  Matrix out = a.value();
  for (double& v : out.data()) v = f(v);
  const std::size_t ia = a.id();
  return a.tape().push(std::move(out), [ia, df](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    const Matrix& x = t.value(ia);
    const Matrix& y = t.value(self);
    Matrix& ga = t.grad_mut(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga.data()[i] += g.data()[i] * df(x.data()[i], y.data()[i]);
  });
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  same_tape(a, b);
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().push(bayeslast::matmul(a.value(), b.value()), [ia, ib](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    t.grad_mut(ia) += bayeslast::matmul(g, bayeslast::transpose(t.value(ib)));
    t.grad_mut(ib) += bayeslast::matmul(bayeslast::transpose(t.value(ia)), g);
  });
}

Var transpose(const Var& a) {
  const std::size_t ia = a.id();
  return a.tape().push(bayeslast::transpose(a.value()), [ia](Tape& t, std::size_t self) {
    t.grad_mut(ia) += bayeslast::transpose(t.grad(self));
  });
}

Var gram(const Var& a) {
  const std::size_t ia = a.id();
  return a.tape().push(bayeslast::gram(a.value()), [ia](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    t.grad_mut(ia) += bayeslast::matmul(t.value(ia), g + bayeslast::transpose(g));
  });
}

Var append_ones_column(const Var& a) {
  const Matrix& v = a.value();
  Matrix out(v.rows(), v.cols() + 1, 1.0);
  for (std::size_t r = 0; r < v.rows(); ++r)
    for (std::size_t c = 0; c < v.cols(); ++c) out(r, c) = v(r, c);
  const std::size_t ia = a.id();
  return a.tape().push(std::move(out), [ia](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    Matrix& ga = t.grad_mut(ia);
    for (std::size_t r = 0; r < ga.rows(); ++r)
      for (std::size_t c = 0; c < ga.cols(); ++c) ga(r, c) += g(r, c);
  });
}

Var slice(const Var& a, std::size_t row0, std::size_t col0, std::size_t rows, std::size_t cols) {
  const Matrix& v = a.value();
  if (row0 + rows > v.rows() || col0 + cols > v.cols()) {
    throw DimensionMismatch("ad::slice: block exceeds matrix bounds");
  }
  Matrix out(rows, cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out(r, c) = v(row0 + r, col0 + c);
  const std::size_t ia = a.id();
  return a.tape().push(std::move(out), [ia, row0, col0](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    Matrix& ga = t.grad_mut(ia);
    for (std::size_t r = 0; r < g.rows(); ++r)
      for (std::size_t c = 0; c < g.cols(); ++c) ga(row0 + r, col0 + c) += g(r, c);
  });
}

Var add_scaled_diagonal(const Var& a, const Var& s, std::span<const double> mask) {
  same_tape(a, s);
  const Matrix& v = a.value();
  if (v.rows() != v.cols() || v.rows() != mask.size()) {
    throw DimensionMismatch("ad::add_scaled_diagonal: shape mismatch");
  }
  const double sv = s.scalar();
  Matrix out = v;
  for (std::size_t i = 0; i < mask.size(); ++i) out(i, i) += sv * mask[i];
  const std::size_t ia = a.id(), is = s.id();
  Vector m(mask.begin(), mask.end());
  return a.tape().push(std::move(out), [ia, is, m = std::move(m)](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    t.grad_mut(ia) += g;
    double ds = 0.0;
    for (std::size_t i = 0; i < m.size(); ++i) ds += g(i, i) * m[i];
    t.grad_mut(is)(0, 0) += ds;
  });
}

Var logdet(const Var& a) {
  CholeskyFactor f = cholesky_with_fallback(a.value());
  const double value = logdet_pd(f);
  const std::size_t ia = a.id();
  return a.tape().push(Matrix(1, 1, value), [ia, f = std::move(f)](Tape& t, std::size_t self) {
    const double g = t.grad(self)(0, 0);
    if (g == 0.0) return;
    t.grad_mut(ia) += inverse_pd(f) * g;
  });
}

Var operator+(const Var& a, const Var& b) {
  same_tape(a, b);
  const Matrix& va = a.value();
  const Matrix& vb = b.value();
  const std::size_t ia = a.id(), ib = b.id();
  if (va.same_shape(vb)) {
    return a.tape().push(va + vb, [ia, ib](Tape& t, std::size_t self) {
      t.grad_mut(ia) += t.grad(self);
      t.grad_mut(ib) += t.grad(self);
    });
  }
  if (is_scalar(va) || is_scalar(vb)) {
    const bool a_small = is_scalar(va);
    const std::size_t is = a_small ? ia : ib, im = a_small ? ib : ia;
    Matrix out = a_small ? vb : va;
    const double s = a_small ? va(0, 0) : vb(0, 0);
    for (double& v : out.data()) v += s;
    return a.tape().push(std::move(out), [is, im](Tape& t, std::size_t self) {
      const Matrix& g = t.grad(self);
      t.grad_mut(im) += g;
      double total = 0.0;
      for (double v : g.data()) total += v;
      t.grad_mut(is)(0, 0) += total;
    });
  }
  throw DimensionMismatch("ad::operator+: shape mismatch");
}

Var operator-(const Var& a) { return a * -1.0; }

Var operator-(const Var& a, const Var& b) { return a + (-b); }

Var operator*(const Var& a, const Var& b) {
  same_tape(a, b);
  const Matrix& va = a.value();
  const Matrix& vb = b.value();
  const std::size_t ia = a.id(), ib = b.id();
  if (va.same_shape(vb)) {
    Matrix out = va;
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] *= vb.data()[i];
    return a.tape().push(std::move(out), [ia, ib](Tape& t, std::size_t self) {
      const Matrix& g = t.grad(self);
      const Matrix& xa = t.value(ia);
      const Matrix& xb = t.value(ib);
      Matrix& ga = t.grad_mut(ia);
      for (std::size_t i = 0; i < g.size(); ++i) ga.data()[i] += g.data()[i] * xb.data()[i];
      Matrix& gb = t.grad_mut(ib);
      for (std::size_t i = 0; i < g.size(); ++i) gb.data()[i] += g.data()[i] * xa.data()[i];
    });
  }
  if (is_scalar(va) || is_scalar(vb)) {
    const bool a_small = is_scalar(va);
    const std::size_t is = a_small ? ia : ib, im = a_small ? ib : ia;
    const double s = a_small ? va(0, 0) : vb(0, 0);
    Matrix out = (a_small ? vb : va) * s;
    return a.tape().push(std::move(out), [is, im](Tape& t, std::size_t self) {
      const Matrix& g = t.grad(self);
      const double sv = t.value(is)(0, 0);
      const Matrix& xm = t.value(im);
      Matrix& gm = t.grad_mut(im);
      double ds = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) {
        gm.data()[i] += g.data()[i] * sv;
        ds += g.data()[i] * xm.data()[i];
      }
      t.grad_mut(is)(0, 0) += ds;
    });
  }
  throw DimensionMismatch("ad::operator*: shape mismatch");
}

Var operator+(const Var& a, double c) {
  Matrix out = a.value();
  for (double& v : out.data()) v += c;
  const std::size_t ia = a.id();
  return a.tape().push(std::move(out),
                       [ia](Tape& t, std::size_t self) { t.grad_mut(ia) += t.grad(self); });
}

Var operator+(double c, const Var& a) { return a + c; }

Var operator-(const Var& a, double c) { return a + (-c); }

Var operator*(const Var& a, double c) {
  const std::size_t ia = a.id();
  return a.tape().push(a.value() * c, [ia, c](Tape& t, std::size_t self) {
    t.grad_mut(ia) += t.grad(self) * c;
  });
}

Var operator*(double c, const Var& a) { return a * c; }

Var operator+(const Var& a, const Matrix& c) {
  if (!a.value().same_shape(c)) throw DimensionMismatch("ad: constant shape mismatch");
  const std::size_t ia = a.id();
  return a.tape().push(a.value() + c,
                       [ia](Tape& t, std::size_t self) { t.grad_mut(ia) += t.grad(self); });
}

Var operator-(const Matrix& c, const Var& a) { return (-a) + c; }

Var hadamard(const Var& a, const Matrix& c) {
  if (!a.value().same_shape(c)) throw DimensionMismatch("ad::hadamard: shape mismatch");
  Matrix out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] *= c.data()[i];
  const std::size_t ia = a.id();
  return a.tape().push(std::move(out), [ia, c](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    Matrix& ga = t.grad_mut(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga.data()[i] += g.data()[i] * c.data()[i];
  });
}

Var tanh(const Var& a) {
  return unary(
      a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var relu(const Var& a) {
  return unary(
      a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var exp(const Var& a) {
  return unary(
      a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(const Var& a) {
  return unary(
      a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var square(const Var& a) {
  return unary(
      a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var softplus(const Var& a) {
  return unary(
      a, [](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); },
      [](double x, double) {
        // Logistic sigmoid.
        return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
      });
}

Var sum(const Var& a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  const std::size_t ia = a.id();
  return a.tape().push(Matrix(1, 1, s), [ia](Tape& t, std::size_t self) {
    const double g = t.grad(self)(0, 0);
    for (double& v : t.grad_mut(ia).data()) v += g;
  });
}

Var column_sums(const Var& a) {
  const Matrix& v = a.value();
  Matrix out(1, v.cols());
  for (std::size_t r = 0; r < v.rows(); ++r)
    for (std::size_t c = 0; c < v.cols(); ++c) out(0, c) += v(r, c);
  const std::size_t ia = a.id();
  return a.tape().push(std::move(out), [ia](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    Matrix& ga = t.grad_mut(ia);
    for (std::size_t r = 0; r < ga.rows(); ++r)
      for (std::size_t c = 0; c < ga.cols(); ++c) ga(r, c) += g(0, c);
  });
}

}  // namespace bayeslast::ad
