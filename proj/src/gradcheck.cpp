#include "farcon/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "farcon/errors.hpp"

namespace farcon {

LossAndGrads loss_and_grads(const ParamList& params, const LossFn& loss_fn) {
  ad::Graph graph;
  std::vector<ad::Var> vars;
  vars.reserve(params.size());
  for (const ParamRef& p : params) vars.push_back(graph.variable(*p.tensor));
  ad::Var loss = loss_fn(graph, vars);
  graph.backward(loss);
  LossAndGrads out;
  out.loss = loss.value().item();
  out.grads.reserve(vars.size());
  for (const ad::Var& v : vars) out.grads.push_back(graph.grad(v));
  return out;
}

double loss_value(const ParamList& params, const LossFn& loss_fn) {
  ad::Graph graph;
  std::vector<ad::Var> vars;
  vars.reserve(params.size());
  for (const ParamRef& p : params) vars.push_back(graph.constant(*p.tensor));
  return loss_fn(graph, vars).value().item();
}

GradCheckReport finite_diff_check(const ParamList& params, const LossFn& loss_fn, double step, double tol) {
  if (!(step > 0.0) || !(tol > 0.0)) throw ConfigError("finite_diff_check: step and tol must be positive");
  const LossAndGrads analytic = loss_and_grads(params, loss_fn);
  GradCheckReport report;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& theta = *params[k].tensor;
    GradCheckEntry entry{params[k].name};
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double saved = theta[i];
      theta[i] = saved + step;
      const double up = loss_value(params, loss_fn);
      theta[i] = saved - step;
      const double down = loss_value(params, loss_fn);
      theta[i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic.grads[k][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      const double rel = std::abs(a - numeric) / denom;
      if (i == 0 || rel > entry.max_rel_err) {
        entry.max_rel_err = rel;
        entry.worst_index = i;
        entry.analytic = a;
        entry.numeric = numeric;
      }
    }
    entry.pass = entry.max_rel_err <= tol;
    report.max_rel_err = std::max(report.max_rel_err, entry.max_rel_err);
    report.pass = report.pass && entry.pass;
    report.entries.push_back(std::move(entry));
  }
  return report;
}

}  // namespace farcon
