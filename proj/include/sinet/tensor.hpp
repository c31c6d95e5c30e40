#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <vector>

#include "sinet/error.hpp"
#include "sinet/rng.hpp"

namespace sinet {

struct Shape {
  long n = 0, c = 0, h = 0, w = 0;

  long numel() const { return n * c * h * w; }
  bool operator==(const Shape&) const = default;

  std::string str() const {
    return "(" + std::to_string(n) + "," + std::to_string(c) + "," +
           std::to_string(h) + "," + std::to_string(w) + ")";
  }
};

namespace detail {

// Grad recording is on by default; NoGradGuard flips it for a scope.
inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}

template <class T>
struct TensorNode {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode>> parents;
  // Reads this node's grad and accumulates into the parents' grads. The node
  // is passed in instead of captured so closures never own their own node.
  std::function<void(TensorNode&)> backward_fn;

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
  }
};

template <class T>
bool all_finite(const std::vector<T>& v) {
  for (T x : v) {
    if (!std::isfinite(static_cast<double>(x))) return false;
  }
  return true;
}

}  // namespace detail

struct NoGradGuard {
  bool prev;
  NoGradGuard() : prev(detail::grad_mode()) { detail::grad_mode() = false; }
  ~NoGradGuard() { detail::grad_mode() = prev; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

inline bool grad_enabled() { return detail::grad_mode(); }

// Dense NCHW tensor. Copying a Tensor copies the handle; the storage is
// shared. Ops produce fresh tensors and never mutate their inputs; the only
// sanctioned mutation is through mut_data()/mut_grad() on leaf tensors
// (weights updated by the optimizer, finite-difference probes).
template <class T>
class Tensor {
 public:
  using Node = detail::TensorNode<T>;

  Tensor() : node_(std::make_shared<Node>()) {}

  static Tensor zeros(Shape s) {
    Tensor t;
    t.node_->shape = s;
    t.node_->value.assign(static_cast<size_t>(s.numel()), T(0));
    return t;
  }

  static Tensor full(Shape s, T v) {
    Tensor t;
    t.node_->shape = s;
    t.node_->value.assign(static_cast<size_t>(s.numel()), v);
    return t;
  }

  static Tensor from_data(Shape s, std::vector<T> data) {
    if (static_cast<long>(data.size()) != s.numel()) {
      throw DimensionError("tensor data length " + std::to_string(data.size()) +
                           " does not match shape " + s.str());
    }
    Tensor t;
    t.node_->shape = s;
    t.node_->value = std::move(data);
    return t;
  }

  static Tensor rand_uniform(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t = zeros(s);
    for (auto& x : t.node_->value) x = static_cast<T>(rng.uniform(lo, hi));
    return t;
  }

  static Tensor rand_normal(Shape s, Rng& rng, double mean = 0.0, double stddev = 1.0) {
    Tensor t = zeros(s);
    for (auto& x : t.node_->value) x = static_cast<T>(mean + stddev * rng.normal());
    return t;
  }

  const Shape& shape() const { return node_->shape; }
  long numel() const { return node_->shape.numel(); }

  const std::vector<T>& data() const { return node_->value; }
  std::vector<T>& mut_data() { return node_->value; }

  bool requires_grad() const { return node_->requires_grad; }
  Tensor& set_requires_grad(bool on) {
    node_->requires_grad = on;
    return *this;
  }

  bool has_grad() const { return !node_->grad.empty(); }
  const std::vector<T>& grad() const {
    if (node_->grad.empty()) {
      throw Error("tensor has no gradient; call backward() first");
    }
    return node_->grad;
  }
  std::vector<T>& mut_grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  void zero_grad() {
    if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), T(0));
  }

  long index(long n, long c, long h, long w) const {
    const Shape& s = node_->shape;
    return ((n * s.c + c) * s.h + h) * s.w + w;
  }
  T at(long n, long c, long h, long w) const {
    return node_->value[static_cast<size_t>(index(n, c, h, w))];
  }
  T& at_mut(long n, long c, long h, long w) {
    return node_->value[static_cast<size_t>(index(n, c, h, w))];
  }

  // Value copy with no graph attached.
  Tensor detach() const {
    Tensor t;
    t.node_->shape = node_->shape;
    t.node_->value = node_->value;
    return t;
  }

  // Reverse-mode sweep from a scalar result. Topologically orders the
  // reachable graph, seeds d(self)/d(self) = 1 and replays the closures.
  void backward() {
    if (numel() != 1) {
      throw Error("backward() requires a scalar tensor, got shape " + shape().str());
    }
    if (!node_->requires_grad) {
      throw Error("backward() on a tensor that does not require grad");
    }
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, size_t>> stack;
    stack.emplace_back(node_.get(), 0);
    seen.insert(node_.get());
    while (!stack.empty()) {
      auto& [nd, idx] = stack.back();
      if (idx < nd->parents.size()) {
        Node* p = nd->parents[idx++].get();
        if (p->requires_grad && !seen.count(p)) {
          seen.insert(p);
          stack.emplace_back(p, 0);
        }
      } else {
        order.push_back(nd);
        stack.pop_back();
      }
    }
    node_->ensure_grad();
    node_->grad[0] = T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      Node* nd = *it;
      if (nd->backward_fn) {
        nd->ensure_grad();
        nd->backward_fn(*nd);
      }
    }
  }

  std::shared_ptr<Node>& node() { return node_; }
  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

namespace detail {

// Wires up autograd bookkeeping for an op result. `backward` receives the
// result node; parent grads are reachable through node.parents.
template <class T, class F>
void attach_backward(Tensor<T>& out, std::vector<Tensor<T>> inputs, F&& backward) {
  if (!grad_mode()) return;
  bool any = false;
  for (const auto& in : inputs) any = any || in.requires_grad();
  if (!any) return;
  auto& node = *out.node();
  node.requires_grad = true;
  node.parents.reserve(inputs.size());
  for (auto& in : inputs) node.parents.push_back(in.node());
  node.backward_fn = std::forward<F>(backward);
}

// Accumulation helper: parents that do not require grad are skipped by
// handing out a null destination.
template <class T>
T* grad_dst(const std::shared_ptr<TensorNode<T>>& parent) {
  if (!parent->requires_grad) return nullptr;
  parent->ensure_grad();
  return parent->grad.data();
}

}  // namespace detail

#ifndef NDEBUG
#define SINET_DCHECK_FINITE(tensor, opname)                                      \
  do {                                                                           \
    if (!::sinet::detail::all_finite((tensor).data())) {                         \
      throw ::sinet::Error(std::string(opname) + ": non-finite value produced"); \
    }                                                                            \
  } while (0)
#else
#define SINET_DCHECK_FINITE(tensor, opname) \
  do {                                      \
  } while (0)
#endif

}  // namespace sinet
