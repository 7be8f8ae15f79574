#include "paon/autograd.hpp"
#include "paon/kernels.hpp"

#include <cmath>

namespace paon {

template <typename T>
const Tensor<T>& BackwardContext<T>::output() const {
  return tape_.nodes_[node_].value;
}

template <typename T>
const Tensor<T>& BackwardContext<T>::input(std::size_t i) const {
  return tape_.nodes_[tape_.nodes_[node_].inputs.at(i)].value;
}

template <typename T>
bool BackwardContext<T>::needs(std::size_t i) const {
  return tape_.nodes_[tape_.nodes_[node_].inputs.at(i)].requires_grad;
}

template <typename T>
Tensor<T>& BackwardContext<T>::grad(std::size_t i) {
  const std::size_t id = tape_.nodes_[node_].inputs.at(i);
  Tensor<T>& g = grads_[id];
  if (g.empty()) g = Tensor<T>::zeros_like(tape_.nodes_[id].value);
  return g;
}

template <typename T>
Var<T> Tape<T>::constant(Tensor<T> value) {
  Node node;
  node.value = std::move(value);
  nodes_.push_back(std::move(node));
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Var<T> Tape<T>::leaf(Tensor<T> value) {
  Node node;
  node.grad = Tensor<T>::zeros_like(value);
  node.value = std::move(value);
  node.requires_grad = true;
  node.is_leaf = true;
  nodes_.push_back(std::move(node));
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Var<T> Tape<T>::param(Parameter<T>& p) {
  Node node;
  node.value = p.value;
  node.requires_grad = true;
  node.is_leaf = true;
  node.param = &p;
  nodes_.push_back(std::move(node));
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Var<T> Tape<T>::record(Tensor<T> value, const std::vector<Var<T>>& inputs, BackwardFn backward) {
  Node node;
  node.value = std::move(value);
  for (const auto& v : inputs) {
    if (&v.tape() != this) throw Error("tape: op inputs belong to a different tape");
    node.inputs.push_back(v.id());
    node.requires_grad = node.requires_grad || nodes_[v.id()].requires_grad;
  }
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
const Tensor<T>& Tape<T>::leaf_grad(std::size_t id) const {
  const Node& n = nodes_.at(id);
  if (!n.is_leaf) throw Error("tape: gradient requested for a non-leaf node");
  return n.param ? n.param->grad : n.grad;
}

template <typename T>
void Tape<T>::backward(const Var<T>& loss) {
  if (&loss.tape() != this) throw Error("backward: loss belongs to a different tape");
  const Node& root = nodes_.at(loss.id());
  if (root.value.size() != 1) {
    throw ShapeError("backward: loss must be a scalar, got shape " + to_string(root.value.shape()));
  }
  if (!root.requires_grad) throw Error("backward: loss is detached from every differentiable leaf");

  std::vector<Tensor<T>> grads(nodes_.size());
  grads[loss.id()] = Tensor<T>(root.value.shape(), T{1});
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    if (grads[id].empty()) continue;
    Node& node = nodes_[id];
    if (node.is_leaf) {
      if (node.param) {
        node.param->grad += grads[id];
      } else {
        node.grad += grads[id];
      }
    } else if (node.backward) {
      BackwardContext<T> ctx(*this, id, grads);
      node.backward(ctx);
    }
    grads[id] = Tensor<T>();
  }
}

namespace ops {

namespace {

template <typename T, typename F>
Tensor<T> map(const Tensor<T>& a, F f) {
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i]);
  return out;
}

template <typename T>
void same_shape(const Var<T>& a, const Var<T>& b, const char* what) {
  Tensor<T>::require_same_shape(a.value(), b.value(), what);
}

}  // namespace

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  same_shape(a, b, "add");
  Tensor<T> out = a.value();
  out += b.value();
  return a.tape().record(std::move(out), {a, b}, [](BackwardContext<T>& ctx) {
    if (ctx.needs(0)) ctx.grad(0) += ctx.grad_out();
    if (ctx.needs(1)) ctx.grad(1) += ctx.grad_out();
  });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  same_shape(a, b, "sub");
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return a.tape().record(std::move(out), {a, b}, [](BackwardContext<T>& ctx) {
    const auto& g = ctx.grad_out();
    if (ctx.needs(0)) ctx.grad(0) += g;
    if (ctx.needs(1)) {
      auto& gb = ctx.grad(1);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  same_shape(a, b, "mul");
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return a.tape().record(std::move(out), {a, b}, [](BackwardContext<T>& ctx) {
    const auto& g = ctx.grad_out();
    const auto& av = ctx.input(0);
    const auto& bv = ctx.input(1);
    if (ctx.needs(0)) {
      auto& ga = ctx.grad(0);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (ctx.needs(1)) {
      auto& gb = ctx.grad(1);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

template <typename T>
Var<T> div(const Var<T>& a, const Var<T>& b) {
  same_shape(a, b, "div");
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] /= b.value()[i];
  return a.tape().record(std::move(out), {a, b}, [](BackwardContext<T>& ctx) {
    const auto& g = ctx.grad_out();
    const auto& bv = ctx.input(1);
    const auto& q = ctx.output();
    if (ctx.needs(0)) {
      auto& ga = ctx.grad(0);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / bv[i];
    }
    if (ctx.needs(1)) {
      auto& gb = ctx.grad(1);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i] * q[i] / bv[i];
    }
  });
}

template <typename T>
Var<T> guarded_div(const Var<T>& a, const Var<T>& b, double min_abs, std::size_t* clamp_events) {
  same_shape(a, b, "guarded_div");
  const T lim = static_cast<T>(min_abs);
  Tensor<T> den = b.value();
  std::vector<bool> clamped(den.size(), false);
  for (std::size_t i = 0; i < den.size(); ++i) {
    if (std::abs(den[i]) < lim) {
      den[i] = den[i] < T{0} ? -lim : lim;
      clamped[i] = true;
      if (clamp_events) ++*clamp_events;
    }
  }
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] /= den[i];
  return a.tape().record(
      std::move(out), {a, b},
      [den = std::move(den), clamped = std::move(clamped)](BackwardContext<T>& ctx) {
        const auto& g = ctx.grad_out();
        const auto& q = ctx.output();
        if (ctx.needs(0)) {
          auto& ga = ctx.grad(0);
          for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / den[i];
        }
        if (ctx.needs(1)) {
          auto& gb = ctx.grad(1);
          for (std::size_t i = 0; i < g.size(); ++i) {
            if (!clamped[i]) gb[i] -= g[i] * q[i] / den[i];
          }
        }
      });
}

template <typename T>
Var<T> scale(const Var<T>& a, double s) {
  const T ts = static_cast<T>(s);
  return a.tape().record(map(a.value(), [ts](T v) { return v * ts; }), {a},
                         [ts](BackwardContext<T>& ctx) {
                           const auto& g = ctx.grad_out();
                           auto& ga = ctx.grad(0);
                           for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * ts;
                         });
}

template <typename T>
Var<T> add_scalar(const Var<T>& a, double s) {
  const T ts = static_cast<T>(s);
  return a.tape().record(map(a.value(), [ts](T v) { return v + ts; }), {a},
                         [](BackwardContext<T>& ctx) { ctx.grad(0) += ctx.grad_out(); });
}

template <typename T>
Var<T> pow(const Var<T>& a, int k) {
  Tensor<T> out = kernels::elem_pow(a.value(), k);
  return a.tape().record(std::move(out), {a}, [k](BackwardContext<T>& ctx) {
    const auto& g = ctx.grad_out();
    const auto& x = ctx.input(0);
    auto& ga = ctx.grad(0);
    if (k == 1) {
      ga += g;
      return;
    }
    const Tensor<T> lower = kernels::elem_pow(x, k - 1);
    const T tk = static_cast<T>(k);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * tk * lower[i];
  });
}

template <typename T>
Var<T> sum(const Var<T>& a) {
  T s = T{0};
  for (T v : a.value().values()) s += v;
  return a.tape().record(Tensor<T>::scalar(s), {a}, [](BackwardContext<T>& ctx) {
    const T g = ctx.grad_out()[0];
    auto& ga = ctx.grad(0);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
  });
}

template <typename T>
Var<T> mean(const Var<T>& a) {
  const std::size_t n = a.value().size();
  return scale(sum(a), 1.0 / static_cast<double>(n));
}

template <typename T>
Var<T> reshape(const Var<T>& a, Shape shape) {
  Tensor<T> out = a.value().reshaped(std::move(shape));
  return a.tape().record(std::move(out), {a}, [](BackwardContext<T>& ctx) {
    auto& ga = ctx.grad(0);
    const auto& g = ctx.grad_out();
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

template <typename T>
Var<T> relu(const Var<T>& a) {
  return a.tape().record(map(a.value(), [](T v) { return v > T{0} ? v : T{0}; }), {a},
                         [](BackwardContext<T>& ctx) {
                           const auto& g = ctx.grad_out();
                           const auto& x = ctx.input(0);
                           auto& ga = ctx.grad(0);
                           for (std::size_t i = 0; i < g.size(); ++i)
                             if (x[i] > T{0}) ga[i] += g[i];
                         });
}

template <typename T>
Var<T> gelu(const Var<T>& a) {
  constexpr double kInvSqrt2 = 0.70710678118654752440;
  constexpr double kInvSqrt2Pi = 0.39894228040143267794;
  return a.tape().record(
      map(a.value(),
          [](T v) {
            const double x = v;
            return static_cast<T>(0.5 * x * (1.0 + std::erf(x * kInvSqrt2)));
          }),
      {a}, [](BackwardContext<T>& ctx) {
        const auto& g = ctx.grad_out();
        const auto& xs = ctx.input(0);
        auto& ga = ctx.grad(0);
        for (std::size_t i = 0; i < g.size(); ++i) {
          const double x = xs[i];
          const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
          const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
          ga[i] += static_cast<T>(g[i] * (cdf + x * pdf));
        }
      });
}

template <typename T>
Var<T> tanh(const Var<T>& a) {
  return a.tape().record(map(a.value(), [](T v) { return std::tanh(v); }), {a},
                         [](BackwardContext<T>& ctx) {
                           const auto& g = ctx.grad_out();
                           const auto& y = ctx.output();
                           auto& ga = ctx.grad(0);
                           for (std::size_t i = 0; i < g.size(); ++i)
                             ga[i] += g[i] * (T{1} - y[i] * y[i]);
                         });
}

template <typename T>
Var<T> soft_limit(const Var<T>& a, double m) {
  if (!(m > 0.0)) throw Error("soft_limit: bound m must be positive");
  const T tm = static_cast<T>(m);
  return a.tape().record(map(a.value(), [tm](T v) { return bounded_tanh(v, tm); }), {a},
                         [tm](BackwardContext<T>& ctx) {
                           const auto& g = ctx.grad_out();
                           const auto& y = ctx.output();
                           auto& ga = ctx.grad(0);
                           for (std::size_t i = 0; i < g.size(); ++i) {
                             const T t = y[i] / tm;
                             ga[i] += g[i] * (T{1} - t * t);
                           }
                         });
}

#define PAON_INSTANTIATE_OPS(T)                                                         \
  template Var<T> add<T>(const Var<T>&, const Var<T>&);                                 \
  template Var<T> sub<T>(const Var<T>&, const Var<T>&);                                 \
  template Var<T> mul<T>(const Var<T>&, const Var<T>&);                                 \
  template Var<T> div<T>(const Var<T>&, const Var<T>&);                                 \
  template Var<T> guarded_div<T>(const Var<T>&, const Var<T>&, double, std::size_t*);   \
  template Var<T> scale<T>(const Var<T>&, double);                                      \
  template Var<T> add_scalar<T>(const Var<T>&, double);                                 \
  template Var<T> pow<T>(const Var<T>&, int);                                           \
  template Var<T> sum<T>(const Var<T>&);                                                \
  template Var<T> mean<T>(const Var<T>&);                                               \
  template Var<T> reshape<T>(const Var<T>&, Shape);                                     \
  template Var<T> relu<T>(const Var<T>&);                                               \
  template Var<T> gelu<T>(const Var<T>&);                                               \
  template Var<T> tanh<T>(const Var<T>&);                                               \
  template Var<T> soft_limit<T>(const Var<T>&, double);

PAON_INSTANTIATE_OPS(float)
PAON_INSTANTIATE_OPS(double)

}  // namespace ops

template class BackwardContext<float>;
template class BackwardContext<double>;
template class Tape<float>;
template class Tape<double>;

}  // namespace paon
