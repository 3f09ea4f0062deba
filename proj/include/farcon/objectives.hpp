#pragma once

#include <string>
#include <vector>

#include "farcon/autodiff.hpp"
#include "farcon/model.hpp"
#include "farcon/probdist.hpp"

namespace farcon {

enum class KernelKind { gaussian, student_t };

std::string to_string(KernelKind k);
KernelKind kernel_from_string(const std::string& name);

struct LossWeights {
  double alpha = 1.0;  // distributional contrastive
  double beta = 0.2;   // KL to the prior
  double gamma = 0.0;  // swap reconstruction
  KernelKind kernel = KernelKind::gaussian;

  /// Throws ConfigError unless every weight is finite and non-negative.
  void validate() const;
};

/// Every field is a batch mean. ELBO fields are averaged over the two pair
/// members, so
///   total = recon_x + recon_s + pred_y + beta (kld_x + kld_s)
///         + alpha (dc_positive + dc_negative) + gamma sr.
struct LossBreakdown {
  double recon_x = 0.0;
  double recon_s = 0.0;
  double pred_y = 0.0;
  double kld_x = 0.0;
  double kld_s = 0.0;
  double dc_positive = 0.0;
  double dc_negative = 0.0;
  double sr = 0.0;
  double total = 0.0;

  double composed(const LossWeights& w) const;
};

/// k(d) = exp(-d) or 1 / (1 + d). Throws std::invalid_argument for d < 0.
double kernel_similarity(double d, KernelKind kernel);
ad::Var kernel_similarity(ad::Var d, KernelKind kernel);

/// Value form on single (unbatched) posteriors:
///   KLbar(zx, zx~) + k(KLbar(zs, zs~)) + k(KLbar(zx, zs)) + k(KLbar(zx~, zs~)).
double distributional_contrastive(const probdist::DiagGaussian& qzx, const probdist::DiagGaussian& qzx_cf,
                                  const probdist::DiagGaussian& qzs, const probdist::DiagGaussian& qzs_cf,
                                  KernelKind kernel);

struct DcTerms {
  ad::Var positive;  // batch mean of KLbar(zx, zx~)
  ad::Var negative;  // batch mean of the three kernel terms
};

/// Per-row terms on batched posteriors, averaged over rows.
DcTerms distributional_contrastive(const probdist::GaussianVars& qzx, const probdist::GaussianVars& qzx_cf,
                                   const probdist::GaussianVars& qzs, const probdist::GaussianVars& qzs_cf,
                                   KernelKind kernel);

enum class PairMember { original, counterfactual };

struct ElboTerms {
  ad::Var recon_x, recon_s, pred_y, kld_x, kld_s;  // scalar batch means
};

ElboTerms elbo_terms(const FarconModel& model, const PairOutputs& out, PairMember member);
/// recon_x + recon_s + pred_y + beta (kld_x + kld_s)
ad::Var elbo_loss(const ElboTerms& terms, double beta);

/// 1/2 [NLL(x, s | z_x~, z_s) + NLL(x~, s~ | z_x, z_s~)], batch mean.
ad::Var swap_recon_loss(const FarconModel& model, const PairOutputs& out);

struct TotalLoss {
  ad::Var total;
  LossBreakdown breakdown;
};

/// 1/2 (ELBO + ELBO~) + alpha L_DC + gamma L_SR. Terms whose weight is zero
/// are still computed and reported.
TotalLoss total_loss(const FarconModel& model, const PairOutputs& out, const LossWeights& weights);

// Kernel propositions -------------------------------------------------------

struct PropositionGrid {
  std::vector<double> mean_gaps;     // |mu1 - mu2|
  std::vector<double> sigma_ratios;  // sigma2 / sigma1, or the common sigma for equal variances

  /// 100 mean gaps evenly in [0, 10] and 101 log-spaced ratios in [1e-2, 1e2]
  /// (ratio 1 included exactly).
  static PropositionGrid standard();
  std::size_t points() const { return mean_gaps.size() * sigma_ratios.size(); }
};

struct GapStats {
  double min_gap = 0.0;
  double max_gap = 0.0;
  std::size_t points = 0;
  /// sigma ratio at which min_gap was attained (equal-means regime).
  double argmin_ratio = 0.0;
};

struct PropositionReport {
  std::size_t grid_points = 0;
  GapStats equal_variance;  // Div = KL(N(0, s^2) || N(g, s^2))
  GapStats equal_mean;      // Div = KL(N(g, 1) || N(g, r^2))
  GapStats wide_ratio;      // equal means, r >= 100
  bool prop1_holds = false;
  bool prop2_min_holds = false;
  bool prop2_limit_holds = false;
  bool pass() const { return prop1_holds && prop2_min_holds && prop2_limit_holds; }
};

/// gap(Div) = (1 + Div)^-1 - exp(-Div), Div the directed KL.
double kernel_gap(double div);
PropositionReport verify_propositions(const PropositionGrid& grid);

}  // namespace farcon
