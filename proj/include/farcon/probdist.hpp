#pragma once

#include <span>
#include <vector>

#include "farcon/autodiff.hpp"
#include "farcon/tensor.hpp"

namespace farcon::probdist {

inline constexpr double kLogVarMin = -10.0;
inline constexpr double kLogVarMax = 10.0;

/// Diagonal Gaussian N(mu, diag(exp(log_var))). log_var is clamped to
/// [kLogVarMin, kLogVarMax] on construction. The tensors may carry any shape;
/// every element is one independent coordinate.
class DiagGaussian {
 public:
  DiagGaussian(Tensor mu, Tensor log_var);

  static DiagGaussian standard(std::size_t dim);

  const Tensor& mu() const noexcept { return mu_; }
  const Tensor& log_var() const noexcept { return log_var_; }
  std::size_t dim() const noexcept { return mu_.size(); }
  double variance(std::size_t i) const;

  /// Row r of a batched [n x d] posterior.
  DiagGaussian row(std::size_t r) const;

 private:
  Tensor mu_;
  Tensor log_var_;
};

/// N(0, I_dim).
struct StandardPrior {
  std::size_t dim = 0;
  DiagGaussian distribution() const { return DiagGaussian::standard(dim); }
};

double kl_diag_gaussian(const DiagGaussian& p, const DiagGaussian& q);
/// (KL(p||q) + KL(q||p)) / 2
double symmetrized_kl(const DiagGaussian& p, const DiagGaussian& q);
double kl_to_standard_prior(const DiagGaussian& p);
double kl_to_standard_prior(const DiagGaussian& p, const StandardPrior& prior);

/// mu + exp(log_var / 2) * noise
Tensor reparameterize(const DiagGaussian& p, const Tensor& noise);

double log_density(const DiagGaussian& p, std::span<const double> z);

/// -sum[t log sigmoid(l) + (1 - t) log(1 - sigmoid(l))], computed as softplus(l) - t*l.
/// Throws std::invalid_argument for targets outside {0, 1}.
double bernoulli_nll(const Tensor& logits, const Tensor& target);
/// 0.5 * ||mean - target||^2 (unit variance, constants dropped).
double gaussian_nll(const Tensor& mean, const Tensor& target);

// Graph forms. Rows of [batch x dim] operands are independent posteriors and
// every reduction returns a [batch x 1] column.

struct GaussianVars {
  ad::Var mu;
  ad::Var log_var;
};

/// Applies the log-variance clamp.
GaussianVars make_gaussian(ad::Var mu, ad::Var raw_log_var);

ad::Var kl_diag_gaussian(const GaussianVars& p, const GaussianVars& q);
ad::Var symmetrized_kl(const GaussianVars& p, const GaussianVars& q);
ad::Var kl_to_standard_prior(const GaussianVars& p);
ad::Var reparameterize(const GaussianVars& p, ad::Var noise);
ad::Var bernoulli_nll_rows(ad::Var logits, ad::Var target);
ad::Var gaussian_nll_rows(ad::Var mean, ad::Var target);

/// Per-row NLL for a mixed block: Bernoulli on columns flagged binary,
/// unit-variance Gaussian elsewhere.
ad::Var mixed_nll_rows(ad::Var params, ad::Var target, const std::vector<bool>& binary_columns);

}  // namespace farcon::probdist
