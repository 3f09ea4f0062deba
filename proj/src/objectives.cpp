#include "farcon/objectives.hpp"

#include <cmath>
#include <stdexcept>

#include "farcon/errors.hpp"

namespace farcon {

std::string to_string(KernelKind k) { return k == KernelKind::gaussian ? "gaussian" : "student_t"; }

KernelKind kernel_from_string(const std::string& name) {
  if (name == "gaussian") return KernelKind::gaussian;
  if (name == "student_t") return KernelKind::student_t;
  throw ConfigError("unknown kernel '" + name + "' (expected gaussian or student_t)");
}

void LossWeights::validate() const {
  for (double w : {alpha, beta, gamma})
    if (!std::isfinite(w) || w < 0.0) throw ConfigError("loss weights must be finite and non-negative");
}

double LossBreakdown::composed(const LossWeights& w) const {
  return recon_x + recon_s + pred_y + w.beta * (kld_x + kld_s) + w.alpha * (dc_positive + dc_negative) + w.gamma * sr;
}

double kernel_similarity(double d, KernelKind kernel) {
  if (!(d >= 0.0)) throw std::invalid_argument("kernel_similarity: divergence must be non-negative");
  return kernel == KernelKind::gaussian ? std::exp(-d) : 1.0 / (1.0 + d);
}

ad::Var kernel_similarity(ad::Var d, KernelKind kernel) {
  for (double v : d.value().data())
    if (!(v >= 0.0)) throw std::invalid_argument("kernel_similarity: divergence must be non-negative");
  return kernel == KernelKind::gaussian ? ad::exp(ad::scale(d, -1.0)) : ad::reciprocal(ad::add_scalar(d, 1.0));
}

double distributional_contrastive(const probdist::DiagGaussian& qzx, const probdist::DiagGaussian& qzx_cf,
                                  const probdist::DiagGaussian& qzs, const probdist::DiagGaussian& qzs_cf,
                                  KernelKind kernel) {
  const std::size_t d = qzx.dim();
  if (qzx_cf.dim() != d || qzs.dim() != d || qzs_cf.dim() != d)
    throw DimensionError("distributional_contrastive: posteriors must share one dimension");
  using probdist::symmetrized_kl;
  return symmetrized_kl(qzx, qzx_cf) + kernel_similarity(symmetrized_kl(qzs, qzs_cf), kernel) +
         kernel_similarity(symmetrized_kl(qzx, qzs), kernel) + kernel_similarity(symmetrized_kl(qzx_cf, qzs_cf), kernel);
}

DcTerms distributional_contrastive(const probdist::GaussianVars& qzx, const probdist::GaussianVars& qzx_cf,
                                   const probdist::GaussianVars& qzs, const probdist::GaussianVars& qzs_cf,
                                   KernelKind kernel) {
  const Tensor& ref = qzx.mu.value();
  for (const auto* q : {&qzx_cf, &qzs, &qzs_cf})
    if (!q->mu.value().same_shape(ref))
      throw DimensionError("distributional_contrastive: posteriors differ in shape (" + ref.shape_string() + " vs " +
                           q->mu.value().shape_string() + ")");
  auto scope = qzx.mu.graph().scope("dc");
  using probdist::symmetrized_kl;
  DcTerms t;
  t.positive = ad::mean_all(symmetrized_kl(qzx, qzx_cf));
  ad::Var neg = ad::add(ad::add(kernel_similarity(symmetrized_kl(qzs, qzs_cf), kernel),
                                kernel_similarity(symmetrized_kl(qzx, qzs), kernel)),
                        kernel_similarity(symmetrized_kl(qzx_cf, qzs_cf), kernel));
  t.negative = ad::mean_all(neg);
  return t;
}

ElboTerms elbo_terms(const FarconModel& model, const PairOutputs& out, PairMember member) {
  const bool cf = member == PairMember::counterfactual;
  ad::Graph& g = out.x.graph();
  ElboTerms t;
  {
    auto scope = g.scope("recon_x");
    t.recon_x = ad::mean_all(probdist::mixed_nll_rows(cf ? out.x_cf_rec : out.x_rec, cf ? out.x_cf : out.x, model.x_binary));
  }
  {
    auto scope = g.scope("recon_s");
    t.recon_s = ad::mean_all(probdist::bernoulli_nll_rows(cf ? out.s_cf_rec : out.s_rec, cf ? out.s_cf : out.s));
  }
  {
    auto scope = g.scope("pred_y");
    t.pred_y = ad::mean_all(probdist::bernoulli_nll_rows(cf ? out.y_logit_cf : out.y_logit, out.y));
  }
  {
    auto scope = g.scope("kld_x");
    t.kld_x = ad::mean_all(probdist::kl_to_standard_prior(cf ? out.q_zx_cf : out.q_zx));
  }
  {
    auto scope = g.scope("kld_s");
    t.kld_s = ad::mean_all(probdist::kl_to_standard_prior(cf ? out.q_zs_cf : out.q_zs));
  }
  return t;
}

ad::Var elbo_loss(const ElboTerms& t, double beta) {
  return t.recon_x + t.recon_s + t.pred_y + beta * (t.kld_x + t.kld_s);
}

ad::Var swap_recon_loss(const FarconModel& model, const PairOutputs& out) {
  auto scope = out.x.graph().scope("sr");
  ad::Var a = ad::add(probdist::mixed_nll_rows(out.x_swap, out.x, model.x_binary),
                      probdist::bernoulli_nll_rows(out.s_swap, out.s));
  ad::Var b = ad::add(probdist::mixed_nll_rows(out.x_cf_swap, out.x_cf, model.x_binary),
                      probdist::bernoulli_nll_rows(out.s_cf_swap, out.s_cf));
  return ad::scale(ad::mean_all(ad::add(a, b)), 0.5);
}

TotalLoss total_loss(const FarconModel& model, const PairOutputs& out, const LossWeights& w) {
  w.validate();
  const ElboTerms e = elbo_terms(model, out, PairMember::original);
  const ElboTerms c = elbo_terms(model, out, PairMember::counterfactual);
  const DcTerms dc = distributional_contrastive(out.q_zx, out.q_zx_cf, out.q_zs, out.q_zs_cf, w.kernel);
  const ad::Var sr = swap_recon_loss(model, out);

  auto scope = out.x.graph().scope("total");
  ad::Var elbo = ad::scale(elbo_loss(e, w.beta) + elbo_loss(c, w.beta), 0.5);
  TotalLoss t;
  t.total = elbo + w.alpha * (dc.positive + dc.negative) + w.gamma * sr;

  auto avg = [](ad::Var a, ad::Var b) { return 0.5 * (a.value().item() + b.value().item()); };
  LossBreakdown& br = t.breakdown;
  br.recon_x = avg(e.recon_x, c.recon_x);
  br.recon_s = avg(e.recon_s, c.recon_s);
  br.pred_y = avg(e.pred_y, c.pred_y);
  br.kld_x = avg(e.kld_x, c.kld_x);
  br.kld_s = avg(e.kld_s, c.kld_s);
  br.dc_positive = dc.positive.value().item();
  br.dc_negative = dc.negative.value().item();
  br.sr = sr.value().item();
  br.total = t.total.value().item();
  return t;
}

// Propositions --------------------------------------------------------------

double kernel_gap(double div) { return 1.0 / (1.0 + div) - std::exp(-div); }

PropositionGrid PropositionGrid::standard() {
  PropositionGrid g;
  for (int i = 0; i < 100; ++i) g.mean_gaps.push_back(10.0 * i / 99.0);
  for (int i = 0; i <= 100; ++i) g.sigma_ratios.push_back(i == 50 ? 1.0 : std::pow(10.0, -2.0 + 4.0 * i / 100.0));
  return g;
}

namespace {

double directed_kl_1d(double mu1, double sigma1, double mu2, double sigma2) {
  using probdist::DiagGaussian;
  const DiagGaussian p(Tensor::vector({mu1}), Tensor::vector({2.0 * std::log(sigma1)}));
  const DiagGaussian q(Tensor::vector({mu2}), Tensor::vector({2.0 * std::log(sigma2)}));
  return probdist::kl_diag_gaussian(p, q);
}

void observe(GapStats& s, double gap, double ratio) {
  if (s.points == 0 || gap < s.min_gap) {
    s.min_gap = gap;
    s.argmin_ratio = ratio;
  }
  if (s.points == 0 || gap > s.max_gap) s.max_gap = gap;
  ++s.points;
}

}  // namespace

PropositionReport verify_propositions(const PropositionGrid& grid) {
  PropositionReport r;
  for (double g : grid.mean_gaps) {
    for (double ratio : grid.sigma_ratios) {
      observe(r.equal_variance, kernel_gap(directed_kl_1d(0.0, ratio, g, ratio)), ratio);
      const double gap = kernel_gap(directed_kl_1d(g, 1.0, g, ratio));
      observe(r.equal_mean, gap, ratio);
      if (ratio >= 100.0) observe(r.wide_ratio, gap, ratio);
      r.grid_points += 2;
    }
  }
  r.prop1_holds = r.equal_variance.points > 0 && r.equal_variance.min_gap >= -1e-12;
  r.prop2_min_holds = r.equal_mean.points > 0 && std::abs(r.equal_mean.min_gap) <= 1e-9 && r.equal_mean.argmin_ratio == 1.0;
  r.prop2_limit_holds = r.wide_ratio.points > 0 && r.wide_ratio.min_gap > 0.0;
  return r;
}

}  // namespace farcon
