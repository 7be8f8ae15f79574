#pragma once

// Minimal reverse-mode differentiation. A Tape records every op in creation
// (hence topological) order; backward() walks it once in reverse.

#include <cmath>
#include <cstddef>
#include <deque>
#include <functional>
#include <string>
#include <vector>

#include "paon/tensor.hpp"

namespace paon {

/// A trainable tensor living outside any tape. Each forward pass binds it to
/// the current tape with Tape::param(); backward accumulates into `grad`.
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;

  Parameter() = default;
  Parameter(std::string n, Tensor<T> v)
      : name(std::move(n)), value(std::move(v)), grad(Tensor<T>::zeros_like(value)) {}

  void zero_grad() { grad.fill(T{0}); }
  [[nodiscard]] std::size_t size() const { return value.size(); }
};

template <typename T>
class Tape;

/// Handle to a node on a tape.
template <typename T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}

  [[nodiscard]] const Tensor<T>& value() const;
  [[nodiscard]] const Shape& shape() const { return value().shape(); }
  [[nodiscard]] bool requires_grad() const;
  /// Accumulated gradient of a leaf created with Tape::leaf().
  [[nodiscard]] const Tensor<T>& grad() const;
  [[nodiscard]] Tape<T>& tape() const { return *tape_; }
  [[nodiscard]] std::size_t id() const { return id_; }
  [[nodiscard]] bool valid() const { return tape_ != nullptr; }

 private:
  Tape<T>* tape_ = nullptr;
  std::size_t id_ = 0;
};

template <typename T>
class BackwardContext {
 public:
  BackwardContext(Tape<T>& tape, std::size_t node, std::vector<Tensor<T>>& grads)
      : tape_(tape), node_(node), grads_(grads) {}

  [[nodiscard]] const Tensor<T>& grad_out() const { return grads_[node_]; }
  [[nodiscard]] const Tensor<T>& output() const;
  [[nodiscard]] const Tensor<T>& input(std::size_t i) const;
  [[nodiscard]] bool needs(std::size_t i) const;
  /// Gradient buffer of input i, zero-allocated on first use. Only valid when needs(i).
  Tensor<T>& grad(std::size_t i);

 private:
  Tape<T>& tape_;
  std::size_t node_;
  std::vector<Tensor<T>>& grads_;
};

template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void(BackwardContext<T>&)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> constant(Tensor<T> value);
  Var<T> leaf(Tensor<T> value);
  Var<T> param(Parameter<T>& p);
  Var<T> record(Tensor<T> value, const std::vector<Var<T>>& inputs, BackwardFn backward);

  /// Populates leaf and parameter gradients with dLoss/dLeaf. Repeated calls
  /// accumulate.
  void backward(const Var<T>& loss);

  [[nodiscard]] std::size_t size() const { return nodes_.size(); }
  [[nodiscard]] const Tensor<T>& value(std::size_t id) const { return nodes_.at(id).value; }
  [[nodiscard]] bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
  [[nodiscard]] const Tensor<T>& leaf_grad(std::size_t id) const;

 private:
  friend class BackwardContext<T>;

  struct Node {
    Tensor<T> value;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool requires_grad = false;
    bool is_leaf = false;
    Parameter<T>* param = nullptr;
    Tensor<T> grad;  // leaves only
  };

  std::deque<Node> nodes_;
};

template <typename T>
const Tensor<T>& Var<T>::value() const {
  return tape_->value(id_);
}
template <typename T>
bool Var<T>::requires_grad() const {
  return tape_->requires_grad(id_);
}
template <typename T>
const Tensor<T>& Var<T>::grad() const {
  return tape_->leaf_grad(id_);
}

namespace ops {

template <typename T> Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> sub(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> mul(const Var<T>& a, const Var<T>& b);
/// Plain elementwise quotient with the quotient-rule backward.
template <typename T> Var<T> div(const Var<T>& a, const Var<T>& b);

/// Quotient whose denominator is clamped to |b| >= min_abs (sign kept, zero
/// treated as positive). Each clamped element increments *clamp_events.
template <typename T>
Var<T> guarded_div(const Var<T>& a, const Var<T>& b, double min_abs, std::size_t* clamp_events);

template <typename T> Var<T> scale(const Var<T>& a, double s);
template <typename T> Var<T> add_scalar(const Var<T>& a, double s);
template <typename T> Var<T> pow(const Var<T>& a, int k);
template <typename T> Var<T> sum(const Var<T>& a);
template <typename T> Var<T> mean(const Var<T>& a);
template <typename T> Var<T> reshape(const Var<T>& a, Shape shape);

template <typename T> Var<T> relu(const Var<T>& a);
template <typename T> Var<T> gelu(const Var<T>& a);
template <typename T> Var<T> tanh(const Var<T>& a);
/// m * tanh(v / m), pulled strictly inside (-m, m) where tanh rounds to +-1.
template <typename T>
T bounded_tanh(T v, T m) {
  const T y = m * std::tanh(v / m);
  const T edge = std::nextafter(m, T{0});
  return y > edge ? edge : (y < -edge ? -edge : y);
}
/// Elementwise bounded_tanh(a, m).
template <typename T> Var<T> soft_limit(const Var<T>& a, double m);

}  // namespace ops

template <typename T> Var<T> operator+(const Var<T>& a, const Var<T>& b) { return ops::add(a, b); }
template <typename T> Var<T> operator-(const Var<T>& a, const Var<T>& b) { return ops::sub(a, b); }
template <typename T> Var<T> operator*(const Var<T>& a, const Var<T>& b) { return ops::mul(a, b); }

}  // namespace paon
