#include "farcon/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "farcon/errors.hpp"
#include "farcon/kernels.hpp"

namespace farcon::ad {

Var Graph::constant(Tensor value) {
  if (!value.all_finite()) throw NumericError("constant", scope_);
  nodes_.push_back(Node{std::move(value), {}, {}, false});
  return Var(this, nodes_.size() - 1);
}

Var Graph::variable(Tensor value) {
  if (!value.all_finite()) throw NumericError("variable", scope_);
  nodes_.push_back(Node{std::move(value), {}, {}, true});
  return Var(this, nodes_.size() - 1);
}

Tensor Graph::grad(Var v) const {
  const Node& n = nodes_[v.id()];
  if (n.grad.empty() && !n.value.empty()) return Tensor(n.value.shape());
  return n.grad;
}

Tensor& Graph::grad_slot(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad = Tensor(n.value.shape());
  return n.grad;
}

Var Graph::record(const char* op, Tensor value, std::initializer_list<Var> parents, BackwardFn backward) {
  return record(op, std::move(value), std::span<const Var>(parents.begin(), parents.size()), std::move(backward));
}

Var Graph::record(const char* op, Tensor value, std::span<const Var> parents, BackwardFn backward) {
  if (!value.all_finite()) throw NumericError(op, scope_);
  bool needs = false;
  for (const Var& p : parents) {
    if (p.graph_ != this) throw DimensionError(std::string(op) + ": operands belong to different graphs");
    needs = needs || nodes_[p.id()].requires_grad;
  }
  nodes_.push_back(Node{std::move(value), {}, needs ? std::move(backward) : BackwardFn{}, needs});
  return Var(this, nodes_.size() - 1);
}

void Graph::backward(Var root) {
  if (root.graph_ != this) throw DimensionError("backward: root belongs to a different graph");
  if (nodes_[root.id()].value.size() != 1) throw DimensionError("backward: root must be a scalar");
  for (Node& n : nodes_) n.grad = Tensor();
  grad_slot(root.id())[0] = 1.0;
  for (std::size_t i = root.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || !n.backward || n.grad.empty()) continue;
    n.backward(*this, i);
  }
}

namespace {

void require_matrix(const Tensor& t, const char* op) {
  if (t.rank() != 2) throw DimensionError(std::string(op) + ": expected rank-2 operand, got " + t.shape_string());
}

void require_same(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " + b.shape_string());
  }
}

// Elementwise primitive with derivative dy/dx = deriv(x, y).
template <typename Fwd, typename Deriv>
Var unary(const char* op, Var a, Fwd fwd, Deriv deriv) {
  Graph& g = a.graph();
  const Tensor& in = a.value();
  Tensor out(in.shape());
  {
    const auto src = in.data();
    auto dst = out.data();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = fwd(src[i]);
  }
  const std::size_t ia = a.id();
  return g.record(op, std::move(out), {a}, [ia, deriv](Graph& gr, std::size_t self) {
    if (!gr.requires_grad(ia)) return;
    const auto x = gr.value(ia).data();
    const auto y = gr.value(self).data();
    const auto up = gr.upstream(self).data();
    auto dst = gr.grad_slot(ia).data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += up[i] * deriv(x[i], y[i]);
  });
}

void accumulate(Graph& g, std::size_t target, std::span<const double> delta, double sign = 1.0) {
  auto dst = g.grad_slot(target).data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += sign * delta[i];
}

}  // namespace

Var affine(Var x, Var weight, Var bias) {
  const Tensor& xv = x.value();
  const Tensor& wv = weight.value();
  const Tensor& bv = bias.value();
  require_matrix(xv, "affine");
  require_matrix(wv, "affine");
  if (xv.cols() != wv.cols()) {
    throw DimensionError("affine: input " + xv.shape_string() + " vs weight " + wv.shape_string());
  }
  if (bv.size() != wv.rows()) throw DimensionError("affine: bias size does not match weight rows");
  Tensor out = kernels::matmul_nt(xv, wv);
  const std::size_t n = out.rows();
  const std::size_t m = out.cols();
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t j = 0; j < m; ++j) out(r, j) += bv[j];
  }
  const std::size_t ix = x.id(), iw = weight.id(), ib = bias.id();
  return x.graph().record("affine", std::move(out), {x, weight, bias}, [ix, iw, ib](Graph& g, std::size_t self) {
    const Tensor& up = g.upstream(self);
    if (g.requires_grad(ix)) accumulate(g, ix, kernels::matmul(up, g.value(iw)).data());
    if (g.requires_grad(iw)) accumulate(g, iw, kernels::matmul_tn(up, g.value(ix)).data());
    if (g.requires_grad(ib)) {
      auto db = g.grad_slot(ib).data();
      const std::size_t cols = up.cols();
      for (std::size_t r = 0; r < up.rows(); ++r) {
        for (std::size_t j = 0; j < cols; ++j) db[j] += up(r, j);
      }
    }
  });
}

Var matmul(Var a, Var b) {
  Tensor out = kernels::matmul(a.value(), b.value());
  const std::size_t ia = a.id(), ib = b.id();
  return a.graph().record("matmul", std::move(out), {a, b}, [ia, ib](Graph& g, std::size_t self) {
    const Tensor& up = g.upstream(self);
    if (g.requires_grad(ia)) accumulate(g, ia, kernels::matmul_nt(up, g.value(ib)).data());
    if (g.requires_grad(ib)) accumulate(g, ib, kernels::matmul_tn(g.value(ia), up).data());
  });
}

Var add(Var a, Var b) {
  require_same(a.value(), b.value(), "add");
  Tensor out = a.value();
  const auto bv = b.value().data();
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += bv[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.graph().record("add", std::move(out), {a, b}, [ia, ib](Graph& g, std::size_t self) {
    const auto up = g.upstream(self).data();
    if (g.requires_grad(ia)) accumulate(g, ia, up);
    if (g.requires_grad(ib)) accumulate(g, ib, up);
  });
}

Var sub(Var a, Var b) {
  require_same(a.value(), b.value(), "sub");
  Tensor out = a.value();
  const auto bv = b.value().data();
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] -= bv[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.graph().record("sub", std::move(out), {a, b}, [ia, ib](Graph& g, std::size_t self) {
    const auto up = g.upstream(self).data();
    if (g.requires_grad(ia)) accumulate(g, ia, up);
    if (g.requires_grad(ib)) accumulate(g, ib, up, -1.0);
  });
}

Var mul(Var a, Var b) {
  require_same(a.value(), b.value(), "mul");
  Tensor out = a.value();
  const auto bv = b.value().data();
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] *= bv[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.graph().record("mul", std::move(out), {a, b}, [ia, ib](Graph& g, std::size_t self) {
    const auto up = g.upstream(self).data();
    if (g.requires_grad(ia)) {
      const auto other = g.value(ib).data();
      auto dst = g.grad_slot(ia).data();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += up[i] * other[i];
    }
    if (g.requires_grad(ib)) {
      const auto other = g.value(ia).data();
      auto dst = g.grad_slot(ib).data();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += up[i] * other[i];
    }
  });
}

Var scale(Var a, double factor) {
  return unary("scale", a, [factor](double x) { return factor * x; }, [factor](double, double) { return factor; });
}

Var add_scalar(Var a, double offset) {
  return unary("add_scalar", a, [offset](double x) { return x + offset; }, [](double, double) { return 1.0; });
}

Var exp(Var a) {
  return unary("exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(Var a) {
  return unary("log", a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var relu(Var a) {
  return unary("relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
               [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var leaky_relu(Var a, double slope) {
  return unary("leaky_relu", a, [slope](double x) { return x > 0.0 ? x : slope * x; },
               [slope](double x, double) { return x > 0.0 ? 1.0 : slope; });
}

Var tanh(Var a) {
  return unary("tanh", a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(Var a) {
  return unary("sigmoid", a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
               [](double, double y) { return y * (1.0 - y); });
}

Var softplus(Var a) {
  return unary("softplus", a, [](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); },
               [](double x, double) { return 1.0 / (1.0 + std::exp(-x)); });
}

Var square(Var a) {
  return unary("square", a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var reciprocal(Var a) {
  return unary("reciprocal", a, [](double x) { return 1.0 / x; }, [](double, double y) { return -y * y; });
}

Var clamp(Var a, double lo, double hi) {
  return unary("clamp", a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
               [lo, hi](double x, double) { return (x < lo || x > hi) ? 0.0 : 1.0; });
}

Var concat_cols(std::initializer_list<Var> parts) {
  return concat_cols(std::span<const Var>(parts.begin(), parts.size()));
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no operands");
  std::vector<const Tensor*> values;
  values.reserve(parts.size());
  for (const Var& p : parts) {
    require_matrix(p.value(), "concat_cols");
    values.push_back(&p.value());
  }
  Tensor out = Tensor::concat_cols(values);
  std::vector<std::size_t> ids;
  ids.reserve(parts.size());
  for (const Var& p : parts) ids.push_back(p.id());
  return parts[0].graph().record("concat_cols", std::move(out), parts, [ids](Graph& g, std::size_t self) {
    const Tensor& up = g.upstream(self);
    const std::size_t width = up.cols();
    std::size_t offset = 0;
    for (std::size_t id : ids) {
      const std::size_t c = g.value(id).cols();
      if (g.requires_grad(id)) {
        Tensor& dst = g.grad_slot(id);
        for (std::size_t r = 0; r < up.rows(); ++r) {
          for (std::size_t j = 0; j < c; ++j) dst(r, j) += up.data()[r * width + offset + j];
        }
      }
      offset += c;
    }
  });
}

Var slice_cols(Var a, std::size_t begin, std::size_t end) {
  require_matrix(a.value(), "slice_cols");
  Tensor out = a.value().slice_cols(begin, end);
  const std::size_t ia = a.id();
  return a.graph().record("slice_cols", std::move(out), {a}, [ia, begin, end](Graph& g, std::size_t self) {
    if (!g.requires_grad(ia)) return;
    const Tensor& up = g.upstream(self);
    Tensor& dst = g.grad_slot(ia);
    for (std::size_t r = 0; r < up.rows(); ++r) {
      for (std::size_t j = begin; j < end; ++j) dst(r, j) += up(r, j - begin);
    }
  });
}

Var sum_cols(Var a) {
  const Tensor& in = a.value();
  require_matrix(in, "sum_cols");
  Tensor out = Tensor::zeros(in.rows(), 1);
  for (std::size_t r = 0; r < in.rows(); ++r) {
    double s = 0.0;
    for (double v : in.row(r)) s += v;
    out[r] = s;
  }
  const std::size_t ia = a.id();
  return a.graph().record("sum_cols", std::move(out), {a}, [ia](Graph& g, std::size_t self) {
    if (!g.requires_grad(ia)) return;
    const Tensor& up = g.upstream(self);
    Tensor& dst = g.grad_slot(ia);
    const std::size_t c = dst.cols();
    for (std::size_t r = 0; r < dst.rows(); ++r) {
      for (std::size_t j = 0; j < c; ++j) dst(r, j) += up[r];
    }
  });
}

Var sum_all(Var a) {
  Tensor out = Tensor::scalar(a.value().sum());
  const std::size_t ia = a.id();
  return a.graph().record("sum_all", std::move(out), {a}, [ia](Graph& g, std::size_t self) {
    if (!g.requires_grad(ia)) return;
    const double up = g.upstream(self)[0];
    for (double& v : g.grad_slot(ia).data()) v += up;
  });
}

Var mean_all(Var a) {
  const std::size_t n = a.value().size();
  if (n == 0) throw DimensionError("mean_all: empty operand");
  Tensor out = Tensor::scalar(a.value().sum() / static_cast<double>(n));
  const std::size_t ia = a.id();
  return a.graph().record("mean_all", std::move(out), {a}, [ia, n](Graph& g, std::size_t self) {
    if (!g.requires_grad(ia)) return;
    const double up = g.upstream(self)[0] / static_cast<double>(n);
    for (double& v : g.grad_slot(ia).data()) v += up;
  });
}

}  // namespace farcon::ad
