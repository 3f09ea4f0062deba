#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "farcon/autodiff.hpp"
#include "farcon/tensor.hpp"

namespace farcon {

/// Non-owning handle to a named parameter tensor.
struct ParamRef {
  std::string name;
  Tensor* tensor;
};

using ParamList = std::vector<ParamRef>;

/// One gradient per parameter, shape-matched and in ParamList order.
using GradientSet = std::vector<Tensor>;

/// Builds a scalar loss on the graph from the bound parameter variables.
using LossFn = std::function<ad::Var(ad::Graph&, std::span<const ad::Var>)>;

struct LossAndGrads {
  double loss = 0.0;
  GradientSet grads;
};

LossAndGrads loss_and_grads(const ParamList& params, const LossFn& loss_fn);

/// Loss only; parameters enter the graph as constants.
double loss_value(const ParamList& params, const LossFn& loss_fn);

struct GradCheckEntry {
  std::string name;
  double max_rel_err = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  bool pass = true;
};

struct GradCheckReport {
  double max_rel_err = 0.0;
  bool pass = true;
  std::vector<GradCheckEntry> entries;
};

/// Compares analytic gradients with central differences (f(t+h) - f(t-h)) / 2h,
/// elementwise, relative error |a - n| / max(|a|, |n|, 1e-8). Parameters are
/// perturbed in place and restored. Never throws on a mismatch; failures are
/// reported per parameter.
GradCheckReport finite_diff_check(const ParamList& params, const LossFn& loss_fn, double step, double tol);

}  // namespace farcon
