#pragma once

#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "warpforge/error.hpp"

namespace warpforge {

template <typename T>
class Tape;

// Handle into a Tape node. Cheap to copy; the tape owns values and grads.
template <typename T>
class Tensor {
 public:
  Tensor() = default;

  bool valid() const { return tape_ != nullptr; }
  Tape<T>* tape() const { return tape_; }
  int node() const { return node_; }

  const std::vector<int>& shape() const;
  const std::vector<T>& value() const;
  const std::vector<T>& grad() const;
  bool requires_grad() const;
  int64_t numel() const;

  // Value of a single-element tensor.
  T scalar() const;

 private:
  friend class Tape<T>;
  Tensor(Tape<T>* tape, int node) : tape_(tape), node_(node) {}

  Tape<T>* tape_ = nullptr;
  int node_ = -1;
};

inline int64_t shape_numel(const std::vector<int>& shape) {
  int64_t n = 1;
  for (int e : shape) n *= e;
  return n;
}

inline std::string shape_str(const std::vector<int>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

// Eager reverse-mode tape. Operations append nodes in execution order, so
// the recorded list is already topologically sorted: every input of a node
// precedes it. backward() sweeps the list once in reverse.
template <typename T>
class Tape {
 public:
  struct Node {
    std::vector<int> shape;
    std::vector<T> value;
    std::vector<T> grad;  // allocated during backward, same length as value
    std::vector<int> inputs;
    std::function<void(Tape&, int)> backward;
    bool requires_grad = false;
  };

  Tensor<T> leaf(std::vector<int> shape, std::vector<T> data, bool requires_grad = false) {
    if (shape_numel(shape) != int64_t(data.size()))
      fail_shape("leaf: shape " + shape_str(shape) + " does not match data length " +
                 std::to_string(data.size()));
    Node n;
    n.shape = std::move(shape);
    n.value = std::move(data);
    n.requires_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return Tensor<T>(this, int(nodes_.size()) - 1);
  }

  Tensor<T> emit(std::vector<int> shape, std::vector<T> value, std::vector<int> inputs,
                 std::function<void(Tape&, int)> backward_fn) {
    Node n;
    n.shape = std::move(shape);
    n.value = std::move(value);
    n.inputs = std::move(inputs);
    for (int in : n.inputs)
      if (nodes_[in].requires_grad) n.requires_grad = true;
    if (n.requires_grad) n.backward = std::move(backward_fn);
    nodes_.push_back(std::move(n));
    return Tensor<T>(this, int(nodes_.size()) - 1);
  }

  Node& node(int id) { return nodes_[id]; }
  const Node& node(int id) const { return nodes_[id]; }
  std::size_t size() const { return nodes_.size(); }

  // Accumulation buffer for a node's gradient, zero-initialized on first use.
  std::vector<T>& grad_buf(int id) {
    Node& n = nodes_[id];
    if (n.grad.empty()) n.grad.assign(n.value.size(), T(0));
    return n.grad;
  }

  // Populates grad for every requires_grad node reachable from `loss`.
  // Each node's rule runs exactly once, in reverse execution order.
  void backward(const Tensor<T>& loss) {
    if (loss.tape() != this) fail(ErrorCode::invalid_argument, "backward: tensor from another tape");
    if (loss.numel() != 1) fail_shape("backward: loss must be scalar, got " + shape_str(loss.shape()));
    std::vector<char> reachable(nodes_.size(), 0);
    std::vector<int> stack{loss.node()};
    if (nodes_[loss.node()].requires_grad) reachable[loss.node()] = 1;
    while (!stack.empty()) {
      int id = stack.back();
      stack.pop_back();
      for (int in : nodes_[id].inputs) {
        if (!reachable[in] && nodes_[in].requires_grad) {
          reachable[in] = 1;
          stack.push_back(in);
        }
      }
    }
    grad_buf(loss.node())[0] += T(1);
    for (int id = loss.node(); id >= 0; --id) {
      if (reachable[id] && nodes_[id].backward) nodes_[id].backward(*this, id);
    }
  }

  void reset() { nodes_.clear(); }

 private:
  std::deque<Node> nodes_;  // push_back keeps references to nodes stable
};

template <typename T>
const std::vector<int>& Tensor<T>::shape() const {
  return tape_->node(node_).shape;
}
template <typename T>
const std::vector<T>& Tensor<T>::value() const {
  return tape_->node(node_).value;
}
template <typename T>
const std::vector<T>& Tensor<T>::grad() const {
  return tape_->node(node_).grad;
}
template <typename T>
bool Tensor<T>::requires_grad() const {
  return tape_->node(node_).requires_grad;
}
template <typename T>
int64_t Tensor<T>::numel() const {
  return int64_t(tape_->node(node_).value.size());
}
template <typename T>
T Tensor<T>::scalar() const {
  if (numel() != 1) fail_shape("scalar() on tensor of shape " + shape_str(shape()));
  return value()[0];
}

namespace op_detail {

template <typename T>
Tape<T>& same_tape(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.tape() == nullptr || a.tape() != b.tape())
    fail(ErrorCode::invalid_argument, "operands must come from the same tape");
  return *a.tape();
}

template <typename T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape())
    fail_shape(std::string(op) + ": " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

template <typename T>
void accumulate(Tape<T>& tape, int id, const std::vector<T>& g) {
  if (!tape.node(id).requires_grad) return;
  auto& dst = tape.grad_buf(id);
  for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
}

}  // namespace op_detail

// ---- elementwise binary ----

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  auto& tape = op_detail::same_tape(a, b);
  op_detail::check_same_shape(a, b, "add");
  std::vector<T> out(a.value());
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  int ia = a.node(), ib = b.node();
  return tape.emit(a.shape(), std::move(out), {ia, ib}, [ia, ib](Tape<T>& t, int self) {
    const auto& g = t.node(self).grad;
    op_detail::accumulate(t, ia, g);
    op_detail::accumulate(t, ib, g);
  });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  auto& tape = op_detail::same_tape(a, b);
  op_detail::check_same_shape(a, b, "sub");
  std::vector<T> out(a.value());
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  int ia = a.node(), ib = b.node();
  return tape.emit(a.shape(), std::move(out), {ia, ib}, [ia, ib](Tape<T>& t, int self) {
    const auto& g = t.node(self).grad;
    op_detail::accumulate(t, ia, g);
    if (t.node(ib).requires_grad) {
      auto& dst = t.grad_buf(ib);
      for (std::size_t i = 0; i < g.size(); ++i) dst[i] -= g[i];
    }
  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  auto& tape = op_detail::same_tape(a, b);
  op_detail::check_same_shape(a, b, "mul");
  std::vector<T> out(a.value());
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  int ia = a.node(), ib = b.node();
  return tape.emit(a.shape(), std::move(out), {ia, ib}, [ia, ib](Tape<T>& t, int self) {
    const auto& g = t.node(self).grad;
    const auto& av = t.node(ia).value;
    const auto& bval = t.node(ib).value;
    if (t.node(ia).requires_grad) {
      auto& da = t.grad_buf(ia);
      for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * bval[i];
    }
    if (t.node(ib).requires_grad) {
      auto& db = t.grad_buf(ib);
      for (std::size_t i = 0; i < g.size(); ++i) db[i] += g[i] * av[i];
    }
  });
}

template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
  auto& tape = op_detail::same_tape(a, b);
  op_detail::check_same_shape(a, b, "div");
  std::vector<T> out(a.value());
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] /= bv[i];
  int ia = a.node(), ib = b.node();
  return tape.emit(a.shape(), std::move(out), {ia, ib}, [ia, ib](Tape<T>& t, int self) {
    const auto& g = t.node(self).grad;
    const auto& av = t.node(ia).value;
    const auto& bval = t.node(ib).value;
    if (t.node(ia).requires_grad) {
      auto& da = t.grad_buf(ia);
      for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] / bval[i];
    }
    if (t.node(ib).requires_grad) {
      auto& db = t.grad_buf(ib);
      for (std::size_t i = 0; i < g.size(); ++i) db[i] -= g[i] * av[i] / (bval[i] * bval[i]);
    }
  });
}

// ---- scalar-constant ops ----

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T c) {
  std::vector<T> out(a.value());
  for (auto& v : out) v += c;
  int ia = a.node();
  return a.tape()->emit(a.shape(), std::move(out), {ia}, [ia](Tape<T>& t, int self) {
    op_detail::accumulate(t, ia, t.node(self).grad);
  });
}

template <typename T>
Tensor<T> mul_scalar(const Tensor<T>& a, T c) {
  std::vector<T> out(a.value());
  for (auto& v : out) v *= c;
  int ia = a.node();
  return a.tape()->emit(a.shape(), std::move(out), {ia}, [ia, c](Tape<T>& t, int self) {
    if (!t.node(ia).requires_grad) return;
    const auto& g = t.node(self).grad;
    auto& da = t.grad_buf(ia);
    for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * c;
  });
}

// ---- elementwise unary ----

namespace op_detail {

template <typename T, typename FwdFn, typename BwdFn>
Tensor<T> unary(const Tensor<T>& a, FwdFn fwd, BwdFn bwd) {
  // bwd(x, y) gives dy/dx from input and output values.
  std::vector<T> out(a.value().size());
  const auto& av = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(av[i]);
  int ia = a.node();
  return a.tape()->emit(a.shape(), std::move(out), {ia}, [ia, bwd](Tape<T>& t, int self) {
    if (!t.node(ia).requires_grad) return;
    const auto& g = t.node(self).grad;
    const auto& x = t.node(ia).value;
    const auto& y = t.node(self).value;
    auto& da = t.grad_buf(ia);
    for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * bwd(x[i], y[i]);
  });
}

}  // namespace op_detail

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
  return op_detail::unary(
      a, [](T x) { return x > T(0) ? x : T(0); },
      [](T x, T) { return x > T(0) ? T(1) : T(0); });
}

template <typename T>
Tensor<T> sqrt(const Tensor<T>& a) {
  return op_detail::unary(
      a, [](T x) { return std::sqrt(x); }, [](T, T y) { return T(0.5) / y; });
}

template <typename T>
Tensor<T> exp(const Tensor<T>& a) {
  return op_detail::unary(
      a, [](T x) { return std::exp(x); }, [](T, T y) { return y; });
}

template <typename T>
Tensor<T> log(const Tensor<T>& a) {
  return op_detail::unary(
      a, [](T x) { return std::log(x); }, [](T x, T) { return T(1) / x; });
}

// Subgradient at 0 is 0 (the deterministic soft choice used by the TV term).
template <typename T>
Tensor<T> abs(const Tensor<T>& a) {
  return op_detail::unary(
      a, [](T x) { return std::fabs(x); },
      [](T x, T) { return x > T(0) ? T(1) : (x < T(0) ? T(-1) : T(0)); });
}

template <typename T>
Tensor<T> square(const Tensor<T>& a) {
  return op_detail::unary(
      a, [](T x) { return x * x; }, [](T x, T) { return T(2) * x; });
}

// ---- reductions ----

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  T s = T(0);
  for (T v : a.value()) s += v;
  int ia = a.node();
  return a.tape()->emit({1}, {s}, {ia}, [ia](Tape<T>& t, int self) {
    if (!t.node(ia).requires_grad) return;
    const T g = t.node(self).grad[0];
    auto& da = t.grad_buf(ia);
    for (auto& v : da) v += g;
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
  const T inv = T(1) / T(a.numel());
  T s = T(0);
  for (T v : a.value()) s += v;
  s *= inv;
  int ia = a.node();
  return a.tape()->emit({1}, {s}, {ia}, [ia, inv](Tape<T>& t, int self) {
    if (!t.node(ia).requires_grad) return;
    const T g = t.node(self).grad[0] * inv;
    auto& da = t.grad_buf(ia);
    for (auto& v : da) v += g;
  });
}

// ---- shape ----

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, std::vector<int> new_shape) {
  if (shape_numel(new_shape) != a.numel())
    fail_shape("reshape: " + shape_str(a.shape()) + " -> " + shape_str(new_shape));
  int ia = a.node();
  return a.tape()->emit(std::move(new_shape), a.value(), {ia}, [ia](Tape<T>& t, int self) {
    op_detail::accumulate(t, ia, t.node(self).grad);
  });
}

// Fills `shape` with the value of a scalar tensor. This is the only
// broadcast in the op set; PCC/SSIM-style losses need x - mean(x).
template <typename T>
Tensor<T> broadcast_scalar(const Tensor<T>& s, std::vector<int> shape) {
  if (s.numel() != 1) fail_shape("broadcast_scalar: source must be scalar");
  std::vector<T> out(std::size_t(shape_numel(shape)), s.value()[0]);
  int is = s.node();
  return s.tape()->emit(std::move(shape), std::move(out), {is}, [is](Tape<T>& t, int self) {
    if (!t.node(is).requires_grad) return;
    const auto& g = t.node(self).grad;
    T acc = T(0);
    for (T v : g) acc += v;
    t.grad_buf(is)[0] += acc;
  });
}

}  // namespace warpforge
