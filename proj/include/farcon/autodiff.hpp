#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "farcon/tensor.hpp"

// Tensor-level reverse-mode differentiation over a fixed set of primitives.
// Nodes are appended in evaluation order, so reverse insertion order is a
// valid topological order for the backward sweep.
namespace farcon::ad {

class Graph;

class Var {
 public:
  Var() = default;

  bool valid() const noexcept { return graph_ != nullptr; }
  Graph& graph() const { return *graph_; }
  std::size_t id() const noexcept { return id_; }
  const Tensor& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }

 private:
  friend class Graph;
  Var(Graph* graph, std::size_t id) : graph_(graph), id_(id) {}

  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, std::size_t self)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor value);
  Var variable(Tensor value);

  const Tensor& value(Var v) const { return nodes_[v.id()].value; }
  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  /// Gradient of the last backward() root w.r.t. v; zeros if v did not contribute.
  Tensor grad(Var v) const;

  /// Seeds d(root)/d(root) = 1 and sweeps. root must hold a single element.
  void backward(Var root);

  std::size_t size() const noexcept { return nodes_.size(); }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  /// Accumulator for the gradient of node id, allocated on first use.
  Tensor& grad_slot(std::size_t id);
  /// Incoming gradient of a node during the backward sweep.
  const Tensor& upstream(std::size_t id) const { return nodes_[id].grad; }

  /// Appends a computed node. Throws NumericError if value is not finite.
  Var record(const char* op, Tensor value, std::initializer_list<Var> parents, BackwardFn backward);
  Var record(const char* op, Tensor value, std::span<const Var> parents, BackwardFn backward);

  /// Labels nodes created while alive; used in numeric diagnostics.
  class ScopeGuard {
   public:
    ScopeGuard(Graph& g, std::string name) : graph_(g), previous_(std::move(g.scope_)) {
      g.scope_ = std::move(name);
    }
    ~ScopeGuard() { graph_.scope_ = std::move(previous_); }
    ScopeGuard(const ScopeGuard&) = delete;
    ScopeGuard& operator=(const ScopeGuard&) = delete;

   private:
    Graph& graph_;
    std::string previous_;
  };

  ScopeGuard scope(std::string name) { return ScopeGuard(*this, std::move(name)); }
  const std::string& current_scope() const noexcept { return scope_; }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    BackwardFn backward;
    bool requires_grad = false;
  };

  std::vector<Node> nodes_;
  std::string scope_;
};

inline const Tensor& Var::value() const { return graph_->value(*this); }

// Primitives. All operate on rank-2 values; scalars are [1 x 1].
Var affine(Var x, Var weight, Var bias);  // x * weight^T + bias (bias broadcast over rows)
Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var add_scalar(Var a, double offset);
Var exp(Var a);
Var log(Var a);
Var relu(Var a);
Var leaky_relu(Var a, double slope);
Var tanh(Var a);
Var sigmoid(Var a);
Var softplus(Var a);  // log(1 + e^a), stable for large |a|
Var square(Var a);
Var reciprocal(Var a);
Var clamp(Var a, double lo, double hi);  // zero gradient outside [lo, hi]
Var concat_cols(std::span<const Var> parts);
Var concat_cols(std::initializer_list<Var> parts);
Var slice_cols(Var a, std::size_t begin, std::size_t end);
Var sum_cols(Var a);  // [n x m] -> [n x 1]
Var sum_all(Var a);   // -> [1 x 1]
Var mean_all(Var a);  // -> [1 x 1]

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator*(double c, Var a) { return scale(a, c); }
inline Var operator+(Var a, double c) { return add_scalar(a, c); }

}  // namespace farcon::ad
