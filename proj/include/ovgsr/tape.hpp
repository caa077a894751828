#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ovgsr/errors.hpp"
#include "ovgsr/kernels.hpp"
#include "ovgsr/tensor.hpp"

// Reverse-mode automatic differentiation on a per-example tape.
// Templated on the scalar type: training runs float, gradient checking
// runs double over the identical code path.
namespace ovgsr {

template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;    // same shape as value, zeroed between steps
  Tensor<T> adam_m;  // optimizer state, allocated on first update
  Tensor<T> adam_v;

  Parameter() = default;
  Parameter(std::string n, Tensor<T> v)
      : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}

  void zero_grad() { grad.fill(T(0)); }
};

template <typename T>
class Tape;

// Handle to a node on a tape. Cheap to copy.
template <typename T>
struct Var {
  Tape<T>* tape = nullptr;
  int id = -1;
  bool defined() const { return tape != nullptr; }
};

template <typename T>
class Tape {
 public:
  using BackFn = std::function<void(Tape&)>;

  Var<T> constant(Tensor<T> v) {
    return {this, add_node(std::move(v), false, nullptr)};
  }

  Var<T> scalar_const(T v) { return constant(Tensor<T>::scalar(v)); }

  // Registers a trainable leaf. The same Parameter registered twice on
  // one tape maps to one node, so its gradient accumulates correctly.
  Var<T> param(Parameter<T>& p) {
    auto it = param_ids_.find(&p);
    if (it != param_ids_.end()) return {this, it->second};
    const int id = add_node(p.value, true, nullptr);
    param_ids_.emplace(&p, id);
    links_.emplace_back(id, &p);
    return {this, id};
  }

  // Id the next add_node call will receive; ops capture it in their
  // backward closures to reach their own gradient buffer.
  int next_id() const { return static_cast<int>(nodes_.size()); }

  int add_node(Tensor<T> value, bool needs_grad, BackFn back) {
    nodes_.push_back(Node{std::move(value), Tensor<T>(), std::move(back), needs_grad});
    return static_cast<int>(nodes_.size()) - 1;
  }

  // Returned by value: tensors share storage, so this is a shallow copy
  // that stays valid when later ops grow the node vector.
  Tensor<T> val(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  Tensor<T> val(Var<T> v) const { return val(v.id); }

  bool wants_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].needs_grad; }
  bool wants_grad(Var<T> v) const { return wants_grad(v.id); }

  bool grad_defined(int id) const { return nodes_[static_cast<std::size_t>(id)].grad.defined(); }

  // Gradient buffer for a node, allocated (zeroed) on first touch.
  Tensor<T>& grad_buf(int id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.grad.defined()) n.grad = Tensor<T>(n.value.shape());
    return n.grad;
  }

  // Only valid during backward (no nodes are added there) or after it.
  const Tensor<T>& node_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].grad; }
  Tensor<T> grad(Var<T> v) const { return nodes_[static_cast<std::size_t>(v.id)].grad; }

  // Backpropagates from a scalar root, then flushes leaf gradients into
  // their Parameters (accumulating, so one tape per example and several
  // tapes per batch compose).
  void backward(Var<T> root) {
    if (root.tape != this) throw ShapeMismatch("backward: foreign var");
    Node& r = nodes_[static_cast<std::size_t>(root.id)];
    if (r.value.numel() != 1)
      throw ShapeMismatch("backward: root must be a scalar, got " + r.value.shape_str());
    grad_buf(root.id).fill(T(1));
    for (int i = root.id; i >= 0; --i) {
      Node& n = nodes_[static_cast<std::size_t>(i)];
      if (n.back && n.needs_grad && n.grad.defined()) n.back(*this);
    }
    for (auto& [id, p] : links_) {
      const Node& n = nodes_[static_cast<std::size_t>(id)];
      if (n.grad.defined())
        kernels::axpy(T(1), n.grad.data(), p->grad.data(),
                      static_cast<std::size_t>(n.grad.numel()));
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    BackFn back;
    bool needs_grad;
  };

  std::vector<Node> nodes_;
  std::unordered_map<const void*, int> param_ids_;
  std::vector<std::pair<int, Parameter<T>*>> links_;
};

enum class Reduce { Sum, Mean };

namespace detail {

template <typename T>
inline void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (!a.same_shape(b))
    throw ShapeMismatch(std::string(op) + ": shape mismatch " + a.shape_str() +
                        " vs " + b.shape_str());
}

template <typename T>
inline Tensor<T> transposed(const Tensor<T>& a) {
  const std::int64_t r = a.rows(), c = a.cols();
  Tensor<T> out({c, r});
  for (std::int64_t i = 0; i < r; ++i)
    for (std::int64_t j = 0; j < c; ++j) out.at(j, i) = a.at(i, j);
  return out;
}

// Shared pattern for unary elementwise ops: Fwd maps x to y, Dfn maps
// (x, y) to dy/dx.
template <typename T, typename Fwd, typename Dfn>
Var<T> map_unary(Var<T> a, Fwd fwd, Dfn dfn) {
  Tape<T>& t = *a.tape;
  const Tensor<T>& va = t.val(a);
  Tensor<T> out(va.shape());
  for (std::int64_t i = 0; i < va.numel(); ++i) out.at(i) = fwd(va.at(i));
  const bool ng = t.wants_grad(a);
  const int ia = a.id, self = t.next_id();
  typename Tape<T>::BackFn back;
  if (ng) {
    back = [self, ia, dfn](Tape<T>& tp) {
      const Tensor<T>& g = tp.node_grad(self);
      const Tensor<T>& x = tp.val(ia);
      const Tensor<T>& y = tp.val(self);
      Tensor<T>& ga = tp.grad_buf(ia);
      for (std::int64_t i = 0; i < g.numel(); ++i)
        ga.at(i) += g.at(i) * dfn(x.at(i), y.at(i));
    };
  }
  t.add_node(std::move(out), ng, std::move(back));
  return {&t, self};
}

}  // namespace detail

// ---- elementwise -------------------------------------------------------

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  Tape<T>& t = *a.tape;
  const Tensor<T>&va = t.val(a), &vb = t.val(b);
  detail::check_same_shape(va, vb, "add");
  Tensor<T> out(va.shape());
  kernels::add(va.data(), vb.data(), out.data(), static_cast<std::size_t>(out.numel()));
  const bool ng = t.wants_grad(a) || t.wants_grad(b);
  const int ia = a.id, ib = b.id, self = t.next_id();
  typename Tape<T>::BackFn back;
  if (ng) {
    back = [self, ia, ib](Tape<T>& tp) {
      const Tensor<T>& g = tp.node_grad(self);
      const auto n = static_cast<std::size_t>(g.numel());
      if (tp.wants_grad(ia)) kernels::axpy(T(1), g.data(), tp.grad_buf(ia).data(), n);
      if (tp.wants_grad(ib)) kernels::axpy(T(1), g.data(), tp.grad_buf(ib).data(), n);
    };
  }
  t.add_node(std::move(out), ng, std::move(back));
  return {&t, self};
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  Tape<T>& t = *a.tape;
  const Tensor<T>&va = t.val(a), &vb = t.val(b);
  detail::check_same_shape(va, vb, "sub");
  Tensor<T> out(va.shape());
  kernels::sub(va.data(), vb.data(), out.data(), static_cast<std::size_t>(out.numel()));
  const bool ng = t.wants_grad(a) || t.wants_grad(b);
  const int ia = a.id, ib = b.id, self = t.next_id();
  typename Tape<T>::BackFn back;
  if (ng) {
    back = [self, ia, ib](Tape<T>& tp) {
      const Tensor<T>& g = tp.node_grad(self);
      const auto n = static_cast<std::size_t>(g.numel());
      if (tp.wants_grad(ia)) kernels::axpy(T(1), g.data(), tp.grad_buf(ia).data(), n);
      if (tp.wants_grad(ib)) kernels::axpy(T(-1), g.data(), tp.grad_buf(ib).data(), n);
    };
  }
  t.add_node(std::move(out), ng, std::move(back));
  return {&t, self};
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  Tape<T>& t = *a.tape;
  const Tensor<T>&va = t.val(a), &vb = t.val(b);
  detail::check_same_shape(va, vb, "mul");
  Tensor<T> out(va.shape());
  kernels::mul(va.data(), vb.data(), out.data(), static_cast<std::size_t>(out.numel()));
  const bool ng = t.wants_grad(a) || t.wants_grad(b);
  const int ia = a.id, ib = b.id, self = t.next_id();
  typename Tape<T>::BackFn back;
  if (ng) {
    back = [self, ia, ib](Tape<T>& tp) {
      const Tensor<T>& g = tp.node_grad(self);
      const std::int64_t n = g.numel();
      if (tp.wants_grad(ia)) {
        Tensor<T>& ga = tp.grad_buf(ia);
        const Tensor<T>& vb2 = tp.val(ib);
        for (std::int64_t i = 0; i < n; ++i) ga.at(i) += g.at(i) * vb2.at(i);
      }
      if (tp.wants_grad(ib)) {
        Tensor<T>& gb = tp.grad_buf(ib);
        const Tensor<T>& va2 = tp.val(ia);
        for (std::int64_t i = 0; i < n; ++i) gb.at(i) += g.at(i) * va2.at(i);
      }
    };
  }
  t.add_node(std::move(out), ng, std::move(back));
  return {&t, self};
}

template <typename T>
Var<T> div(Var<T> a, Var<T> b) {
  Tape<T>& t = *a.tape;
  const Tensor<T>&va = t.val(a), &vb = t.val(b);
  detail::check_same_shape(va, vb, "div");
  Tensor<T> out(va.shape());
  for (std::int64_t i = 0; i < out.numel(); ++i) out.at(i) = va.at(i) / vb.at(i);
  const bool ng = t.wants_grad(a) || t.wants_grad(b);
  const int ia = a.id, ib = b.id, self = t.next_id();
  typename Tape<T>::BackFn back;
  if (ng) {
    back = [self, ia, ib](Tape<T>& tp) {
      const Tensor<T>& g = tp.node_grad(self);
      const Tensor<T>& y = tp.val(self);
      const Tensor<T>& vb2 = tp.val(ib);
      const std::int64_t n = g.numel();
      if (tp.wants_grad(ia)) {
        Tensor<T>& ga = tp.grad_buf(ia);
        for (std::int64_t i = 0; i < n; ++i) ga.at(i) += g.at(i) / vb2.at(i);
      }
      if (tp.wants_grad(ib)) {
        Tensor<T>& gb = tp.grad_buf(ib);
        for (std::int64_t i = 0; i < n; ++i)
          gb.at(i) -= g.at(i) * y.at(i) / vb2.at(i);
      }
    };
  }
  t.add_node(std::move(out), ng, std::move(back));
  return {&t, self};
}

// alpha * a + beta, elementwise.
template <typename T>
Var<T> affine(Var<T> a, T alpha, T beta) {
  Tape<T>& t = *a.tape;
  const Tensor<T>& va = t.val(a);
  Tensor<T> out(va.shape());
  for (std::int64_t i = 0; i < out.numel(); ++i) out.at(i) = alpha * va.at(i) + beta;
  const bool ng = t.wants_grad(a);
  const int ia = a.id, self = t.next_id();
  typename Tape<T>::BackFn back;
  if (ng) {
    back = [self, ia, alpha](Tape<T>& tp) {
      const Tensor<T>& g = tp.node_grad(self);
      kernels::axpy(alpha, g.data(), tp.grad_buf(ia).data(),
                    static_cast<std::size_t>(g.numel()));
    };
  }
  t.add_node(std::move(out), ng, std::move(back));
  return {&t, self};
}

template <typename T>
Var<T> scale(Var<T> a, T alpha) {
  return affine(a, alpha, T(0));
}

template <typename T>
Var<T> sigmoid(Var<T> a) {
  return detail::map_unary(
      a,
      [](T x) {
        return x >= T(0) ? T(1) / (T(1) + std::exp(-x))
                         : std::exp(x) / (T(1) + std::exp(x));
      },
      [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Var<T> relu(Var<T> a) {
  return detail::map_unary(a, [](T x) { return x > T(0) ? x : T(0); },
                           [](T x, T) { return x > T(0) ? T(1) : T(0); });
}

// log(1 + e^x), computed stably.
template <typename T>
Var<T> softplus(Var<T> a) {
  return detail::map_unary(
      a,
      [](T x) {
        return std::max(x, T(0)) + std::log1p(std::exp(-std::abs(x)));
      },
      [](T x, T) {
        return x >= T(0) ? T(1) / (T(1) + std::exp(-x))
                         : std::exp(x) / (T(1) + std::exp(x));
      });
}

template <typename T>
Var<T> absval(Var<T> a) {
  return detail::map_unary(a, [](T x) { return std::abs(x); },
                           [](T x, T) { return x > T(0) ? T(1) : (x < T(0) ? T(-1) : T(0)); });
}

// Elementwise minimum; ties route the gradient to a.
template <typename T>
Var<T> min_ew(Var<T> a, Var<T> b) {
  Tape<T>& t = *a.tape;
  const Tensor<T>&va = t.val(a), &vb = t.val(b);
  detail::check_same_shape(va, vb, "min_ew");
  Tensor<T> out(va.shape());
  for (std::int64_t i = 0; i < out.numel(); ++i) out.at(i) = std::min(va.at(i), vb.at(i));
  const bool ng = t.wants_grad(a) || t.wants_grad(b);
  const int ia = a.id, ib = b.id, self = t.next_id();
  typename Tape<T>::BackFn back;
  if (ng) {
    back = [self, ia, ib](Tape<T>& tp) {
      const Tensor<T>& g = tp.node_grad(self);
      const Tensor<T>&xa = tp.val(ia), &xb = tp.val(ib);
      const std::int64_t n = g.numel();
      const bool wa = tp.wants_grad(ia), wb = tp.wants_grad(ib);
      Tensor<T>* ga = wa ? &tp.grad_buf(ia) : nullptr;
      Tensor<T>* gb = wb ? &tp.grad_buf(ib) : nullptr;
      for (std::int64_t i = 0; i < n; ++i) {
        if (xa.at(i) <= xb.at(i)) {
          if (wa) ga->at(i) += g.at(i);
        } else if (wb) {
          gb->at(i) += g.at(i);
        }
      }
    };
  }
  t.add_node(std::move(out), ng, std::move(back));
  return {&t, self};
}

// Elementwise maximum; ties route the gradient to a.
template <typename T>
Var<T> max_ew(Var<T> a, Var<T> b) {
  Tape<T>& t = *a.tape;
  const Tensor<T>&va = t.val(a), &vb = t.val(b);
  detail::check_same_shape(va, vb, "max_ew");
  Tensor<T> out(va.shape());
  for (std::int64_t i = 0; i < out.numel(); ++i) out.at(i) = std::max(va.at(i), vb.at(i));
  const bool ng = t.wants_grad(a) || t.wants_grad(b);
  const int ia = a.id, ib = b.id, self = t.next_id();
  typename Tape<T>::BackFn back;
  if (ng) {
    back = [self, ia, ib](Tape<T>& tp) {
      const Tensor<T>& g = tp.node_grad(self);
      const Tensor<T>&xa = tp.val(ia), &xb = tp.val(ib);
      const std::int64_t n = g.numel();
      const bool wa = tp.wants_grad(ia), wb = tp.wants_grad(ib);
      Tensor<T>* ga = wa ? &tp.grad_buf(ia) : nullptr;
      Tensor<T>* gb = wb ? &tp.grad_buf(ib) : nullptr;
      for (std::int64_t i = 0; i < n; ++i) {
        if (xa.at(i) >= xb.at(i)) {
          if (wa) ga->at(i) += g.at(i);
        } else if (wb) {
          gb->at(i) += g.at(i);
        }
      }
    };
  }
  t.add_node(std::move(out), ng, std::move(back));
  return {&t, self};
}

// ---- shape plumbing ------------------------------------------------------

template <typename T>
Var<T> reshape(Var<T> a, std::vector<std::int64_t> shape) {
  Tape<T>& t = *a.tape;
  Tensor<T> out = t.val(a).reshaped(std::move(shape));
  const bool ng = t.wants_grad(a);
  const int ia = a.id, self = t.next_id();
  typename Tape<T>::BackFn back;
  if (ng) {
    back = [self, ia](Tape<T>& tp) {
      const Tensor<T>& g = tp.node_grad(self);
      kernels::axpy(T(1), g.data(), tp.grad_buf(ia).data(),
                    static_cast<std::size_t>(g.numel()));
    };
  }
  t.add_node(std::move(out), ng, std::move(back));
  return {&t, self};
}

template <typename T>
Var<T> transpose(Var<T> a) {
  Tape<T>& t = *a.tape;
  const Tensor<T>& va = t.val(a);
  if (va.ndim() != 2) throw ShapeMismatch("transpose: expects 2D, got " + va.shape_str());
  Tensor<T> out = detail::transposed(va);
  const bool ng = t.wants_grad(a);
  const int ia = a.id, self = t.next_id();
  typename Tape<T>::BackFn back;
  if (ng) {
    back = [self, ia](Tape<T>& tp) {
      Tensor<T> gt = detail::transposed(tp.node_grad(self));
      kernels::axpy(T(1), gt.data(), tp.grad_buf(ia).data(),
                    static_cast<std::size_t>(gt.numel()));
    };
  }
  t.add_node(std::move(out), ng, std::move(back));
  return {&t, self};
}

template <typename T>
Var<T> gather_rows(Var<T> a, std::vector<std::int64_t> idx) {
  Tape<T>& t = *a.tape;
  const Tensor<T>& va = t.val(a);
  if (va.ndim() != 2) throw ShapeMismatch("gather_rows: expects 2D");
  const std::int64_t c = va.cols();
  for (auto i : idx)
    if (i < 0 || i >= va.rows()) throw ShapeMismatch("gather_rows: index out of range");
  Tensor<T> out({static_cast<std::int64_t>(idx.size()), c});
  for (std::size_t k = 0; k < idx.size(); ++k)
    std::copy(va.data() + idx[k] * c, va.data() + (idx[k] + 1) * c,
              out.data() + static_cast<std::int64_t>(k) * c);
  const bool ng = t.wants_grad(a);
  const int ia = a.id, self = t.next_id();
  typename Tape<T>::BackFn back;
  if (ng) {
    back = [self, ia, idx](Tape<T>& tp) {
      const Tensor<T>& g = tp.node_grad(self);
      Tensor<T>& ga = tp.grad_buf(ia);
      const std::int64_t c2 = ga.cols();
      for (std::size_t k = 0; k < idx.size(); ++k)
        kernels::axpy(T(1), g.data() + static_cast<std::int64_t>(k) * c2,
                      ga.data() + idx[k] * c2, static_cast<std::size_t>(c2));
    };
  }
  t.add_node(std::move(out), ng, std::move(back));
  return {&t, self};
}

// Each output row is a weighted combination of input rows:
// out[k] = sum_j w_kj * a[i_kj]. Used for bilinear sampling and border
// assembly, where the mixing pattern is data-independent.
template <typename T>
Var<T> weighted_gather_rows(Var<T> a,
                            std::vector<std::vector<std::pair<std::int64_t, T>>> rows) {
  Tape<T>& t = *a.tape;
  const Tensor<T>& va = t.val(a);
  if (va.ndim() != 2) throw ShapeMismatch("weighted_gather_rows: expects 2D");
  const std::int64_t c = va.cols();
  Tensor<T> out({static_cast<std::int64_t>(rows.size()), c});
  for (std::size_t k = 0; k < rows.size(); ++k) {
    T* dst = out.data() + static_cast<std::int64_t>(k) * c;
    for (const auto& [i, w] : rows[k]) {
      if (i < 0 || i >= va.rows())
        throw ShapeMismatch("weighted_gather_rows: index out of range");
      kernels::axpy(w, va.data() + i * c, dst, static_cast<std::size_t>(c));
    }
  }
  const bool ng = t.wants_grad(a);
  const int ia = a.id, self = t.next_id();
  typename Tape<T>::BackFn back;
  if (ng) {
    back = [self, ia, rows](Tape<T>& tp) {
      const Tensor<T>& g = tp.node_grad(self);
      Tensor<T>& ga = tp.grad_buf(ia);
      const std::int64_t c2 = ga.cols();
      for (std::size_t k = 0; k < rows.size(); ++k)
        for (const auto& [i, w] : rows[k])
          kernels::axpy(w, g.data() + static_cast<std::int64_t>(k) * c2,
                        ga.data() + i * c2, static_cast<std::size_t>(c2));
    };
  }
  t.add_node(std::move(out), ng, std::move(back));
  return {&t, self};
}

template <typename T>
Var<T> slice_rows(Var<T> a, std::int64_t r0, std::int64_t r1) {
  Tape<T>& t = *a.tape;
  const Tensor<T>& va = t.val(a);
  if (va.ndim() != 2 || r0 < 0 || r1 > va.rows() || r0 >= r1)
    throw ShapeMismatch("slice_rows: bad range");
  const std::int64_t c = va.cols();
  Tensor<T> out({r1 - r0, c});
  std::copy(va.data() + r0 * c, va.data() + r1 * c, out.data());
  const bool ng = t.wants_grad(a);
  const int ia = a.id, self = t.next_id();
  typename Tape<T>::BackFn back;
  if (ng) {
    back = [self, ia, r0](Tape<T>& tp) {
      const Tensor<T>& g = tp.node_grad(self);
      Tensor<T>& ga = tp.grad_buf(ia);
      kernels::axpy(T(1), g.data(), ga.data() + r0 * ga.cols(),
                    static_cast<std::size_t>(g.numel()));
    };
  }
  t.add_node(std::move(out), ng, std::move(back));
  return {&t, self};
}

template <typename T>
Var<T> concat_rows(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw ShapeMismatch("concat_rows: no inputs");
  Tape<T>& t = *parts[0].tape;
  const std::int64_t c = t.val(parts[0]).cols();
  std::int64_t rows = 0;
  bool ng = false;
  for (const auto& p : parts) {
    const Tensor<T>& v = t.val(p);
    if (v.ndim() != 2 || v.cols() != c)
      throw ShapeMismatch("concat_rows: column mismatch");
    rows += v.rows();
    ng = ng || t.wants_grad(p);
  }
  Tensor<T> out({rows, c});
  std::int64_t r = 0;
  std::vector<std::pair<int, std::int64_t>> spans;  // (node, start row)
  for (const auto& p : parts) {
    const Tensor<T>& v = t.val(p);
    std::copy(v.data(), v.data() + v.numel(), out.data() + r * c);
    spans.emplace_back(p.id, r);
    r += v.rows();
  }
  const int self = t.next_id();
  typename Tape<T>::BackFn back;
  if (ng) {
    back = [self, spans](Tape<T>& tp) {
      const Tensor<T>& g = tp.node_grad(self);
      const std::int64_t c2 = g.cols();
      for (const auto& [id, start] : spans) {
        if (!tp.wants_grad(id)) continue;
        Tensor<T>& gp = tp.grad_buf(id);
        kernels::axpy(T(1), g.data() + start * c2, gp.data(),
                      static_cast<std::size_t>(gp.numel()));
      }
    };
  }
  t.add_node(std::move(out), ng, std::move(back));
  return {&t, self};
}

template <typename T>
Var<T> split_cols(Var<T> a, std::int64_t c0, std::int64_t c1) {
  Tape<T>& t = *a.tape;
  const Tensor<T>& va = t.val(a);
  if (va.ndim() != 2 || c0 < 0 || c1 > va.cols() || c0 >= c1)
    throw ShapeMismatch("split_cols: bad range");
  const std::int64_t r = va.rows(), c = va.cols(), w = c1 - c0;
  Tensor<T> out({r, w});
  for (std::int64_t i = 0; i < r; ++i)
    std::copy(va.data() + i * c + c0, va.data() + i * c + c1, out.data() + i * w);
  const bool ng = t.wants_grad(a);
  const int ia = a.id, self = t.next_id();
  typename Tape<T>::BackFn back;
  if (ng) {
    back = [self, ia, c0](Tape<T>& tp) {
      const Tensor<T>& g = tp.node_grad(self);
      Tensor<T>& ga = tp.grad_buf(ia);
      const std::int64_t r2 = g.rows(), w2 = g.cols(), c2 = ga.cols();
      for (std::int64_t i = 0; i < r2; ++i)
        kernels::axpy(T(1), g.data() + i * w2, ga.data() + i * c2 + c0,
                      static_cast<std::size_t>(w2));
    };
  }
  t.add_node(std::move(out), ng, std::move(back));
  return {&t, self};
}

template <typename T>
Var<T> concat_cols(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw ShapeMismatch("concat_cols: no inputs");
  Tape<T>& t = *parts[0].tape;
  const std::int64_t r = t.val(parts[0]).rows();
  std::int64_t cols = 0;
  bool ng = false;
  for (const auto& p : parts) {
    const Tensor<T>& v = t.val(p);
    if (v.ndim() != 2 || v.rows() != r) throw ShapeMismatch("concat_cols: row mismatch");
    cols += v.cols();
    ng = ng || t.wants_grad(p);
  }
  Tensor<T> out({r, cols});
  std::int64_t c = 0;
  std::vector<std::tuple<int, std::int64_t, std::int64_t>> spans;  // (node, start col, width)
  for (const auto& p : parts) {
    const Tensor<T>& v = t.val(p);
    const std::int64_t w = v.cols();
    for (std::int64_t i = 0; i < r; ++i)
      std::copy(v.data() + i * w, v.data() + (i + 1) * w, out.data() + i * cols + c);
    spans.emplace_back(p.id, c, w);
    c += w;
  }
  const int self = t.next_id();
  typename Tape<T>::BackFn back;
  if (ng) {
    back = [self, spans](Tape<T>& tp) {
      const Tensor<T>& g = tp.node_grad(self);
      const std::int64_t r2 = g.rows(), cols2 = g.cols();
      for (const auto& [id, start, w] : spans) {
        if (!tp.wants_grad(id)) continue;
        Tensor<T>& gp = tp.grad_buf(id);
        for (std::int64_t i = 0; i < r2; ++i)
          kernels::axpy(T(1), g.data() + i * cols2 + start, gp.data() + i * w,
                        static_cast<std::size_t>(w));
      }
    };
  }
  t.add_node(std::move(out), ng, std::move(back));
  return {&t, self};
}

// ---- linear algebra ------------------------------------------------------

// op(A) @ op(B) where op optionally transposes.
template <typename T>
Var<T> matmul(Var<T> a, Var<T> b, bool trans_a = false, bool trans_b = false) {
  Tape<T>& t = *a.tape;
  const Tensor<T>&va = t.val(a), &vb = t.val(b);
  if (va.ndim() != 2 || vb.ndim() != 2)
    throw ShapeMismatch("matmul: expects 2D operands");
  Tensor<T> A = trans_a ? detail::transposed(va) : va;
  Tensor<T> B = trans_b ? detail::transposed(vb) : vb;
  const std::int64_t m = A.rows(), k = A.cols(), n = B.cols();
  if (B.rows() != k)
    throw ShapeMismatch("matmul: inner dimension mismatch " + va.shape_str() +
                        (trans_a ? "^T" : "") + " @ " + vb.shape_str() +
                        (trans_b ? "^T" : ""));
  Tensor<T> out({m, n});
  kernels::gemm(static_cast<std::size_t>(m), static_cast<std::size_t>(n),
                static_cast<std::size_t>(k), A.data(), static_cast<std::size_t>(k),
                B.data(), static_cast<std::size_t>(n), out.data(),
                static_cast<std::size_t>(n), false);
  const bool ng = t.wants_grad(a) || t.wants_grad(b);
  const int ia = a.id, ib = b.id, self = t.next_id();
  typename Tape<T>::BackFn back;
  if (ng) {
    // A and B are captured in their op()-applied orientation.
    back = [self, ia, ib, A, B, trans_a, trans_b, m, n, k](Tape<T>& tp) {
      const Tensor<T>& g = tp.node_grad(self);
      if (tp.wants_grad(ia)) {
        Tensor<T> bt = detail::transposed(B);  // n x k
        Tensor<T> da({m, k});
        kernels::gemm(static_cast<std::size_t>(m), static_cast<std::size_t>(k),
                      static_cast<std::size_t>(n), g.data(), static_cast<std::size_t>(n),
                      bt.data(), static_cast<std::size_t>(k), da.data(),
                      static_cast<std::size_t>(k), false);
        if (trans_a) da = detail::transposed(da);
        kernels::axpy(T(1), da.data(), tp.grad_buf(ia).data(),
                      static_cast<std::size_t>(da.numel()));
      }
      if (tp.wants_grad(ib)) {
        Tensor<T> at = detail::transposed(A);  // k x m
        Tensor<T> db({k, n});
        kernels::gemm(static_cast<std::size_t>(k), static_cast<std::size_t>(n),
                      static_cast<std::size_t>(m), at.data(), static_cast<std::size_t>(m),
                      g.data(), static_cast<std::size_t>(n), db.data(),
                      static_cast<std::size_t>(n), false);
        if (trans_b) db = detail::transposed(db);
        kernels::axpy(T(1), db.data(), tp.grad_buf(ib).data(),
                      static_cast<std::size_t>(db.numel()));
      }
    };
  }
  t.add_node(std::move(out), ng, std::move(back));
  return {&t, self};
}

// X[r,:] + b for every row.
template <typename T>
Var<T> add_row(Var<T> x, Var<T> b) {
  Tape<T>& t = *x.tape;
  const Tensor<T>&vx = t.val(x), &vb = t.val(b);
  if (vx.ndim() != 2 || vb.numel() != vx.cols())
    throw ShapeMismatch("add_row: bias length must equal column count");
  Tensor<T> out(vx.shape());
  const std::int64_t r = vx.rows(), c = vx.cols();
  for (std::int64_t i = 0; i < r; ++i)
    kernels::add(vx.data() + i * c, vb.data(), out.data() + i * c,
                 static_cast<std::size_t>(c));
  const bool ng = t.wants_grad(x) || t.wants_grad(b);
  const int ix = x.id, ib = b.id, self = t.next_id();
  typename Tape<T>::BackFn back;
  if (ng) {
    back = [self, ix, ib](Tape<T>& tp) {
      const Tensor<T>& g = tp.node_grad(self);
      const std::int64_t r2 = g.rows(), c2 = g.cols();
      if (tp.wants_grad(ix))
        kernels::axpy(T(1), g.data(), tp.grad_buf(ix).data(),
                      static_cast<std::size_t>(g.numel()));
      if (tp.wants_grad(ib)) {
        Tensor<T>& gb = tp.grad_buf(ib);
        for (std::int64_t i = 0; i < r2; ++i)
          kernels::axpy(T(1), g.data() + i * c2, gb.data(), static_cast<std::size_t>(c2));
      }
    };
  }
  t.add_node(std::move(out), ng, std::move(back));
  return {&t, self};
}

// ---- reductions ------------------------------------------------------

template <typename T>
Var<T> sum_all(Var<T> a) {
  Tape<T>& t = *a.tape;
  const Tensor<T>& va = t.val(a);
  Tensor<T> out = Tensor<T>::scalar(
      kernels::sum(va.data(), static_cast<std::size_t>(va.numel())));
  const bool ng = t.wants_grad(a);
  const int ia = a.id, self = t.next_id();
  typename Tape<T>::BackFn back;
  if (ng) {
    back = [self, ia](Tape<T>& tp) {
      const T g = tp.node_grad(self).at(0);
      Tensor<T>& ga = tp.grad_buf(ia);
      for (std::int64_t i = 0; i < ga.numel(); ++i) ga.at(i) += g;
    };
  }
  t.add_node(std::move(out), ng, std::move(back));
  return {&t, self};
}

template <typename T>
Var<T> mean_all(Var<T> a) {
  Tape<T>& t = *a.tape;
  const std::int64_t n = t.val(a).numel();
  return scale(sum_all(a), T(1) / static_cast<T>(n));
}

// Column means of a 2D tensor: [n, d] -> [d].
template <typename T>
Var<T> mean_axis0(Var<T> a) {
  Tape<T>& t = *a.tape;
  const Tensor<T>& va = t.val(a);
  if (va.ndim() != 2) throw ShapeMismatch("mean_axis0: expects 2D");
  const std::int64_t r = va.rows(), c = va.cols();
  Tensor<T> out({c});
  for (std::int64_t i = 0; i < r; ++i)
    kernels::axpy(T(1) / static_cast<T>(r), va.data() + i * c, out.data(),
                  static_cast<std::size_t>(c));
  const bool ng = t.wants_grad(a);
  const int ia = a.id, self = t.next_id();
  typename Tape<T>::BackFn back;
  if (ng) {
    back = [self, ia, r](Tape<T>& tp) {
      const Tensor<T>& g = tp.node_grad(self);
      Tensor<T>& ga = tp.grad_buf(ia);
      const std::int64_t c2 = g.numel();
      for (std::int64_t i = 0; i < r; ++i)
        kernels::axpy(T(1) / static_cast<T>(r), g.data(), ga.data() + i * c2,
                      static_cast<std::size_t>(c2));
    };
  }
  t.add_node(std::move(out), ng, std::move(back));
  return {&t, self};
}

// ---- softmax and losses --------------------------------------------------

template <typename T>
Var<T> softmax_rows(Var<T> a) {
  Tape<T>& t = *a.tape;
  const Tensor<T>& va = t.val(a);
  if (va.ndim() != 2) throw ShapeMismatch("softmax_rows: expects 2D");
  const std::int64_t r = va.rows(), c = va.cols();
  Tensor<T> out(va.shape());
  for (std::int64_t i = 0; i < r; ++i) {
    const T* x = va.data() + i * c;
    T* y = out.data() + i * c;
    const T m = kernels::max(x, static_cast<std::size_t>(c));
    for (std::int64_t j = 0; j < c; ++j) y[j] = std::exp(x[j] - m);
    const T s = kernels::sum(y, static_cast<std::size_t>(c));
    for (std::int64_t j = 0; j < c; ++j) y[j] /= s;
  }
  const bool ng = t.wants_grad(a);
  const int ia = a.id, self = t.next_id();
  typename Tape<T>::BackFn back;
  if (ng) {
    back = [self, ia](Tape<T>& tp) {
      const Tensor<T>& g = tp.node_grad(self);
      const Tensor<T>& y = tp.val(self);
      Tensor<T>& ga = tp.grad_buf(ia);
      const std::int64_t r2 = g.rows(), c2 = g.cols();
      for (std::int64_t i = 0; i < r2; ++i) {
        const T* gr = g.data() + i * c2;
        const T* yr = y.data() + i * c2;
        const T dotgy = kernels::dot(gr, yr, static_cast<std::size_t>(c2));
        T* gar = ga.data() + i * c2;
        for (std::int64_t j = 0; j < c2; ++j) gar[j] += yr[j] * (gr[j] - dotgy);
      }
    };
  }
  t.add_node(std::move(out), ng, std::move(back));
  return {&t, self};
}

// Cross entropy from raw logits, reduced over rows.
template <typename T>
Var<T> cross_entropy(Var<T> logits, std::vector<std::int64_t> targets, Reduce reduce) {
  Tape<T>& t = *logits.tape;
  const Tensor<T>& va = t.val(logits);
  if (va.ndim() != 2) throw ShapeMismatch("cross_entropy: expects 2D logits");
  const std::int64_t r = va.rows(), c = va.cols();
  if (static_cast<std::int64_t>(targets.size()) != r)
    throw ShapeMismatch("cross_entropy: one target per row required");
  for (auto tgt : targets)
    if (tgt < 0 || tgt >= c) throw ShapeMismatch("cross_entropy: target out of range");
  Tensor<T> probs({r, c});
  T total = 0;
  for (std::int64_t i = 0; i < r; ++i) {
    const T* x = va.data() + i * c;
    T* p = probs.data() + i * c;
    const T m = kernels::max(x, static_cast<std::size_t>(c));
    for (std::int64_t j = 0; j < c; ++j) p[j] = std::exp(x[j] - m);
    const T s = kernels::sum(p, static_cast<std::size_t>(c));
    for (std::int64_t j = 0; j < c; ++j) p[j] /= s;
    total += m + std::log(s) - x[targets[static_cast<std::size_t>(i)]];
  }
  if (reduce == Reduce::Mean) total /= static_cast<T>(r);
  const bool ng = t.wants_grad(logits);
  const int ia = logits.id, self = t.next_id();
  typename Tape<T>::BackFn back;
  if (ng) {
    const T w = reduce == Reduce::Mean ? T(1) / static_cast<T>(r) : T(1);
    back = [self, ia, targets, probs, w](Tape<T>& tp) {
      const T g = tp.node_grad(self).at(0) * w;
      Tensor<T>& ga = tp.grad_buf(ia);
      const std::int64_t r2 = ga.rows(), c2 = ga.cols();
      for (std::int64_t i = 0; i < r2; ++i) {
        kernels::axpy(g, probs.data() + i * c2, ga.data() + i * c2,
                      static_cast<std::size_t>(c2));
        ga.at(i, targets[static_cast<std::size_t>(i)]) -= g;
      }
    };
  }
  t.add_node(Tensor<T>::scalar(total), ng, std::move(back));
  return {&t, self};
}

// Cosine similarity of two flat vectors.
template <typename T>
Var<T> cosine(Var<T> a, Var<T> b) {
  Tape<T>& t = *a.tape;
  const Tensor<T>&va = t.val(a), &vb = t.val(b);
  if (va.numel() != vb.numel())
    throw ShapeMismatch("cosine: length mismatch");
  const auto n = static_cast<std::size_t>(va.numel());
  const T na = std::sqrt(kernels::dot(va.data(), va.data(), n));
  const T nb = std::sqrt(kernels::dot(vb.data(), vb.data(), n));
  if (na < T(1e-12) || nb < T(1e-12))
    throw ZeroVector("cosine: zero-norm input");
  const T ab = kernels::dot(va.data(), vb.data(), n);
  const T c = ab / (na * nb);
  const bool ng = t.wants_grad(a) || t.wants_grad(b);
  const int ia = a.id, ib = b.id, self = t.next_id();
  typename Tape<T>::BackFn back;
  if (ng) {
    back = [self, ia, ib, na, nb, c](Tape<T>& tp) {
      const T g = tp.node_grad(self).at(0);
      const Tensor<T>& xa = tp.val(ia);
      const Tensor<T>& xb = tp.val(ib);
      const std::int64_t n2 = xa.numel();
      if (tp.wants_grad(ia)) {
        Tensor<T>& ga = tp.grad_buf(ia);
        for (std::int64_t i = 0; i < n2; ++i)
          ga.at(i) += g * (xb.at(i) / (na * nb) - c * xa.at(i) / (na * na));
      }
      if (tp.wants_grad(ib)) {
        Tensor<T>& gb = tp.grad_buf(ib);
        for (std::int64_t i = 0; i < n2; ++i)
          gb.at(i) += g * (xa.at(i) / (na * nb) - c * xb.at(i) / (nb * nb));
      }
    };
  }
  t.add_node(Tensor<T>::scalar(c), ng, std::move(back));
  return {&t, self};
}

}  // namespace ovgsr
