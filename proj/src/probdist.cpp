#include "farcon/probdist.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "farcon/errors.hpp"

namespace farcon::probdist {

namespace {

void require_same_dim(const DiagGaussian& p, const DiagGaussian& q, const char* op) {
  if (p.dim() != q.dim()) {
    throw DimensionError(std::string(op) + ": dimension mismatch " + std::to_string(p.dim()) + " vs " +
                         std::to_string(q.dim()));
  }
}

}  // namespace

DiagGaussian::DiagGaussian(Tensor mu, Tensor log_var) : mu_(std::move(mu)), log_var_(std::move(log_var)) {
  if (!mu_.same_shape(log_var_)) {
    throw DimensionError("DiagGaussian: mu " + mu_.shape_string() + " and log_var " + log_var_.shape_string() +
                         " differ");
  }
  for (double& v : log_var_.data()) v = std::clamp(v, kLogVarMin, kLogVarMax);
}

DiagGaussian DiagGaussian::standard(std::size_t dim) {
  return DiagGaussian(Tensor({dim}), Tensor({dim}));
}

double DiagGaussian::variance(std::size_t i) const { return std::exp(log_var_[i]); }

DiagGaussian DiagGaussian::row(std::size_t r) const {
  const auto m = mu_.row(r);
  const auto lv = log_var_.row(r);
  return DiagGaussian(Tensor::vector({m.begin(), m.end()}), Tensor::vector({lv.begin(), lv.end()}));
}

double kl_diag_gaussian(const DiagGaussian& p, const DiagGaussian& q) {
  require_same_dim(p, q, "kl_diag_gaussian");
  double total = 0.0;
  for (std::size_t d = 0; d < p.dim(); ++d) {
    const double var_p = p.variance(d);
    const double var_q = q.variance(d);
    const double diff = p.mu()[d] - q.mu()[d];
    total += 0.5 * (q.log_var()[d] - p.log_var()[d] + (var_p + diff * diff) / var_q - 1.0);
  }
  return total;
}

double symmetrized_kl(const DiagGaussian& p, const DiagGaussian& q) {
  require_same_dim(p, q, "symmetrized_kl");
  return 0.5 * (kl_diag_gaussian(p, q) + kl_diag_gaussian(q, p));
}

double kl_to_standard_prior(const DiagGaussian& p) {
  double total = 0.0;
  for (std::size_t d = 0; d < p.dim(); ++d) {
    const double mu = p.mu()[d];
    const double lv = p.log_var()[d];
    total += 0.5 * (std::exp(lv) + mu * mu - 1.0 - lv);
  }
  return total;
}

double kl_to_standard_prior(const DiagGaussian& p, const StandardPrior& prior) {
  if (p.dim() != prior.dim) throw DimensionError("kl_to_standard_prior: dimension mismatch");
  return kl_to_standard_prior(p);
}

Tensor reparameterize(const DiagGaussian& p, const Tensor& noise) {
  if (noise.size() != p.dim()) {
    throw DimensionError("reparameterize: noise " + noise.shape_string() + " vs posterior " +
                         p.mu().shape_string());
  }
  Tensor out = p.mu();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += std::exp(0.5 * p.log_var()[i]) * noise[i];
  return out;
}

double log_density(const DiagGaussian& p, std::span<const double> z) {
  if (z.size() != p.dim()) throw DimensionError("log_density: dimension mismatch");
  double total = 0.0;
  for (std::size_t d = 0; d < p.dim(); ++d) {
    const double diff = z[d] - p.mu()[d];
    total += -0.5 * (std::log(2.0 * std::numbers::pi) + p.log_var()[d] + diff * diff / p.variance(d));
  }
  return total;
}

double bernoulli_nll(const Tensor& logits, const Tensor& target) {
  if (logits.size() != target.size()) throw DimensionError("bernoulli_nll: shape mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double t = target[i];
    if (t != 0.0 && t != 1.0) {
      throw std::invalid_argument("bernoulli_nll: target " + std::to_string(t) + " is not binary");
    }
    const double l = logits[i];
    total += std::max(l, 0.0) + std::log1p(std::exp(-std::abs(l))) - t * l;
  }
  return total;
}

double gaussian_nll(const Tensor& mean, const Tensor& target) {
  if (mean.size() != target.size()) throw DimensionError("gaussian_nll: shape mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < mean.size(); ++i) {
    const double d = mean[i] - target[i];
    total += 0.5 * d * d;
  }
  return total;
}

GaussianVars make_gaussian(ad::Var mu, ad::Var raw_log_var) {
  if (!mu.value().same_shape(raw_log_var.value())) throw DimensionError("make_gaussian: shape mismatch");
  return {mu, ad::clamp(raw_log_var, kLogVarMin, kLogVarMax)};
}

ad::Var kl_diag_gaussian(const GaussianVars& p, const GaussianVars& q) {
  if (!p.mu.value().same_shape(q.mu.value())) throw DimensionError("kl_diag_gaussian: dimension mismatch");
  // 0.5 * sum[lv_q - lv_p + exp(lv_p - lv_q) + (mu_p - mu_q)^2 exp(-lv_q) - 1]
  ad::Var log_ratio = ad::sub(p.log_var, q.log_var);
  ad::Var mean_term = ad::mul(ad::square(ad::sub(p.mu, q.mu)), ad::exp(ad::scale(q.log_var, -1.0)));
  ad::Var inner = ad::add(ad::sub(ad::exp(log_ratio), log_ratio), mean_term);
  return ad::scale(ad::sum_cols(ad::add_scalar(inner, -1.0)), 0.5);
}

ad::Var symmetrized_kl(const GaussianVars& p, const GaussianVars& q) {
  return ad::scale(ad::add(kl_diag_gaussian(p, q), kl_diag_gaussian(q, p)), 0.5);
}

ad::Var kl_to_standard_prior(const GaussianVars& p) {
  ad::Var inner = ad::sub(ad::add(ad::exp(p.log_var), ad::square(p.mu)), p.log_var);
  return ad::scale(ad::sum_cols(ad::add_scalar(inner, -1.0)), 0.5);
}

ad::Var reparameterize(const GaussianVars& p, ad::Var noise) {
  if (!noise.value().same_shape(p.mu.value())) throw DimensionError("reparameterize: noise shape mismatch");
  return ad::add(p.mu, ad::mul(ad::exp(ad::scale(p.log_var, 0.5)), noise));
}

ad::Var bernoulli_nll_rows(ad::Var logits, ad::Var target) {
  return ad::sum_cols(ad::sub(ad::softplus(logits), ad::mul(target, logits)));
}

ad::Var gaussian_nll_rows(ad::Var mean, ad::Var target) {
  return ad::scale(ad::sum_cols(ad::square(ad::sub(mean, target))), 0.5);
}

ad::Var mixed_nll_rows(ad::Var params, ad::Var target, const std::vector<bool>& binary_columns) {
  const Tensor& pv = params.value();
  if (!pv.same_shape(target.value())) throw DimensionError("mixed_nll_rows: shape mismatch");
  if (binary_columns.size() != pv.cols()) throw DimensionError("mixed_nll_rows: column mask width mismatch");
  const bool any_binary = std::find(binary_columns.begin(), binary_columns.end(), true) != binary_columns.end();
  const bool any_continuous = std::find(binary_columns.begin(), binary_columns.end(), false) != binary_columns.end();
  if (!any_continuous) return bernoulli_nll_rows(params, target);
  if (!any_binary) return gaussian_nll_rows(params, target);

  ad::Graph& g = params.graph();
  Tensor binary_mask(pv.shape());
  Tensor continuous_mask(pv.shape());
  for (std::size_t r = 0; r < pv.rows(); ++r) {
    for (std::size_t j = 0; j < pv.cols(); ++j) {
      binary_mask(r, j) = binary_columns[j] ? 1.0 : 0.0;
      continuous_mask(r, j) = binary_columns[j] ? 0.0 : 1.0;
    }
  }
  ad::Var bmask = g.constant(std::move(binary_mask));
  ad::Var cmask = g.constant(std::move(continuous_mask));
  ad::Var bern = ad::mul(ad::sub(ad::softplus(params), ad::mul(target, params)), bmask);
  ad::Var gauss = ad::mul(ad::scale(ad::square(ad::sub(params, target)), 0.5), cmask);
  return ad::sum_cols(ad::add(bern, gauss));
}

}  // namespace farcon::probdist
