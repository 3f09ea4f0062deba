#include "farcon/training.hpp"

#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "farcon/errors.hpp"
#include "farcon/rng.hpp"

namespace farcon {

namespace {

ParamList mlp_parameters(MlpParams& net) {
  ParamList out;
  for (std::size_t k = 0; k < net.layers.size(); ++k) {
    out.push_back({"layer" + std::to_string(k) + ".weight", &net.layers[k].weight});
    out.push_back({"layer" + std::to_string(k) + ".bias", &net.layers[k].bias});
  }
  return out;
}

std::vector<std::size_t> iota(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

}  // namespace

// Adam ------------------------------------------------------------------------

void adam_step(const ParamList& params, const GradientSet& grads, AdamState& state, const AdamOptions& opt) {
  if (grads.size() != params.size()) throw DimensionError("adam_step: gradient count does not match parameters");
  if (state.m.empty()) {
    for (const ParamRef& p : params) {
      state.m.emplace_back(p.tensor->shape());
      state.v.emplace_back(p.tensor->shape());
    }
  }
  if (state.m.size() != params.size()) throw DimensionError("adam_step: state does not match parameters");
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(opt.beta1, t);
  const double c2 = 1.0 - std::pow(opt.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& theta = *params[k].tensor;
    const Tensor& g = grads[k];
    if (g.size() != theta.size() || state.m[k].size() != theta.size())
      throw DimensionError("adam_step: shape mismatch for " + params[k].name);
    auto m = state.m[k].data();
    auto v = state.v[k].data();
    for (std::size_t i = 0; i < theta.size(); ++i) {
      m[i] = opt.beta1 * m[i] + (1.0 - opt.beta1) * g[i];
      v[i] = opt.beta2 * v[i] + (1.0 - opt.beta2) * g[i] * g[i];
      theta[i] -= opt.lr * opt.weight_decay * theta[i];
      theta[i] -= opt.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + opt.eps);
    }
  }
}

double beta_schedule(std::size_t epoch, std::size_t total_epochs, double target_beta, double anneal_fraction) {
  if (epoch >= total_epochs) throw std::out_of_range("beta_schedule: epoch outside [0, total_epochs)");
  if (anneal_fraction <= 0.0) return target_beta;
  const auto ramp = static_cast<std::size_t>(std::ceil(anneal_fraction * static_cast<double>(total_epochs)));
  if (epoch >= ramp) return target_beta;
  return target_beta * static_cast<double>(epoch) / static_cast<double>(ramp);
}

// Binary classifiers ------------------------------------------------------------

Tensor BinaryClassifier::logits(const Tensor& x) const { return mlp_forward(net, x, "classifier"); }

Tensor BinaryClassifier::predict(const Tensor& x) const {
  Tensor l = logits(x);
  for (double& v : l.data()) v = v > 0.0 ? 1.0 : 0.0;
  return l;
}

double BinaryClassifier::accuracy(const Tensor& x, const Tensor& y) const {
  if (x.rows() == 0) return kNaN;
  const Tensor p = predict(x);
  std::size_t hit = 0;
  for (std::size_t r = 0; r < p.rows(); ++r) hit += p[r] == y[r];
  return 100.0 * static_cast<double>(hit) / static_cast<double>(p.rows());
}

BinaryClassifier fit_binary_classifier(const Tensor& x, const Tensor& y, const std::vector<double>& row_weights,
                                       const FitSettings& s, std::uint64_t seed, const Tensor* valid_x,
                                       const Tensor* valid_y) {
  const std::size_t n = x.rows();
  if (y.size() != n) throw DimensionError("fit_binary_classifier: x and y row counts differ");
  if (!row_weights.empty() && row_weights.size() != n) throw DimensionError("fit_binary_classifier: weight count differs");
  if (n == 0) throw DataError("fit_binary_classifier: no rows");
  Rng init(Rng::derive(seed, 0));
  Rng order_rng(Rng::derive(seed, 1));
  BinaryClassifier clf;
  clf.net = make_mlp(x.cols(), s.hidden, 1, Activation::relu, Activation::identity, init);
  ParamList params = mlp_parameters(clf.net);
  AdamState state;
  const AdamOptions opt{s.lr, s.weight_decay};
  const bool validate = valid_x && valid_y && valid_x->rows() > 0;
  MlpParams best = clf.net;
  double best_acc = -1.0;

  std::vector<std::size_t> order = iota(n);
  for (std::size_t epoch = 0; epoch < s.epochs; ++epoch) {
    order_rng.shuffle(std::span<std::size_t>(order));
    for (std::size_t start = 0; start < n; start += s.batch_size) {
      const std::size_t end = std::min(n, start + s.batch_size);
      const std::span<const std::size_t> rows(order.data() + start, end - start);
      Tensor w({rows.size(), 1}, 1.0);
      if (!row_weights.empty())
        for (std::size_t i = 0; i < rows.size(); ++i) w[i] = row_weights[rows[i]];
      auto loss_fn = [&](ad::Graph& g, std::span<const ad::Var> vars) {
        MlpVars mv;
        for (std::size_t k = 0; k < clf.net.layers.size(); ++k)
          mv.layers.push_back({vars[2 * k], vars[2 * k + 1], clf.net.layers[k].activation});
        ad::Var logit = mlp_forward(mv, g.constant(x.select_rows(rows)), "classifier");
        ad::Var target = g.constant(y.select_rows(rows).reshaped({rows.size(), 1}));
        ad::Var nll = probdist::bernoulli_nll_rows(logit, target);
        ad::Var loss = ad::mean_all(ad::mul(nll, g.constant(w)));
        if (s.l2 > 0.0)
          for (const auto& l : mv.layers) loss = loss + s.l2 * ad::sum_all(ad::square(l.weight));
        return loss;
      };
      const LossAndGrads lg = loss_and_grads(params, loss_fn);
      adam_step(params, lg.grads, state, opt);
    }
    if (validate) {
      const double acc = clf.accuracy(*valid_x, *valid_y);
      if (acc > best_acc) {
        best_acc = acc;
        best = clf.net;
      }
    }
  }
  if (validate) clf.net = best;
  clf.train_accuracy = clf.accuracy(x, y);
  clf.valid_accuracy = validate ? clf.accuracy(*valid_x, *valid_y) : kNaN;
  return clf;
}

std::vector<double> group_balance_weights(const Dataset& data) {
  const std::size_t n = data.size();
  std::map<std::pair<int, std::vector<double>>, std::size_t> counts;
  auto key = [&](std::size_t r) {
    auto row = data.S.row(r);
    return std::make_pair(static_cast<int>(data.Y[r]), std::vector<double>(row.begin(), row.end()));
  };
  for (std::size_t r = 0; r < n; ++r) ++counts[key(r)];
  std::vector<double> w(n);
  double total = 0.0;
  for (std::size_t r = 0; r < n; ++r) total += w[r] = 1.0 / static_cast<double>(counts[key(r)]);
  for (double& v : w) v *= static_cast<double>(n) / total;
  return w;
}

BinaryClassifier train_aux_classifier(const FarconConfig& config, const Dataset& train, const Dataset* valid) {
  const std::vector<double> w = config.aux.group_balance ? group_balance_weights(train) : std::vector<double>{};
  return fit_binary_classifier(train.X, train.Y, w, config.aux, Rng::derive(config.seed, 100), valid ? &valid->X : nullptr,
                               valid ? &valid->Y : nullptr);
}

namespace {

Tensor with_s(const Dataset& d) {
  const Tensor* parts[] = {&d.X, &d.S};
  return Tensor::concat_cols(parts);
}

}  // namespace

BinaryClassifier train_erm_baseline(const FarconConfig& config, const Dataset& train, const Dataset* valid) {
  const Tensor xs = with_s(train);
  Tensor vxs;
  if (valid) vxs = with_s(*valid);
  return fit_binary_classifier(xs, train.Y, {}, config.baseline, Rng::derive(config.seed, 200), valid ? &vxs : nullptr,
                               valid ? &valid->Y : nullptr);
}

Tensor baseline_features(const BinaryClassifier& baseline, const Dataset& data) {
  MlpParams body = baseline.net;
  if (body.layers.size() > 1) body.layers.pop_back();
  return mlp_forward(body, with_s(data), "baseline");
}

// FarconVAE ---------------------------------------------------------------------

FarconModel initial_model(const FarconConfig& config, const Dataset& train) {
  ModelDims dims{train.x_dim(), train.s_dim(), 1, config.zx_dim, config.zs_dim};
  Rng rng(Rng::derive(config.seed, 1));
  return make_model(dims, config.architecture, train.x_binary_mask(), rng);
}

Tensor y_hat(const BinaryClassifier& aux, const Dataset& data) { return aux.predict(data.X); }

double y_accuracy(const FarconModel& model, const Dataset& data, const Tensor& y_input) {
  if (data.size() == 0) return kNaN;
  const Posteriors q = encode(model, data.X, data.S, y_input);
  const Tensor logits = predict_y(model, q.zx.mu());
  std::size_t hit = 0;
  for (std::size_t r = 0; r < data.size(); ++r) hit += (logits[r] > 0.0 ? 1.0 : 0.0) == data.Y[r];
  return 100.0 * static_cast<double>(hit) / static_cast<double>(data.size());
}

TrainResult train_farcon(const FarconConfig& config, const TrainInputs& in, const StepObserver& observer) {
  config.validate();
  if (!in.train || in.train->size() == 0) throw DataError("train_farcon: no training pairs");
  const PairedDataset& train = *in.train;
  const bool validate = in.valid && in.aux && in.valid->size() > 0;

  TrainResult result;
  result.model = in.initial ? *in.initial : initial_model(config, train.original);
  FarconModel& model = result.model;
  const ParamList params = model.parameters();
  AdamState state;
  const AdamOptions opt{config.lr, config.weight_decay};
  Rng order_rng(Rng::derive(config.seed, 2));
  Rng noise_rng(Rng::derive(config.seed, 3));

  Tensor valid_y_input;
  if (validate) valid_y_input = y_hat(*in.aux, *in.valid);
  double best_acc = -1.0;
  std::size_t since_best = 0;
  std::size_t step = 0;

  const std::size_t n = train.size();
  std::vector<std::size_t> order;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    LossWeights w = config.weights;
    w.beta = beta_schedule(epoch, config.epochs, config.weights.beta, config.beta_anneal_fraction);
    order = iota(n);
    order_rng.shuffle(std::span<std::size_t>(order));

    EpochRecord rec;
    rec.epoch = epoch;
    rec.beta = w.beta;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::size_t end = std::min(n, start + config.batch_size);
      const PairBatch batch = train.batch(std::span<const std::size_t>(order.data() + start, end - start));
      const PairNoise noise = PairNoise::sample(batch.size(), model.dims, noise_rng);

      ad::Graph g;
      std::vector<ad::Var> vars;
      vars.reserve(params.size());
      for (const ParamRef& p : params) {
        if (!p.tensor->all_finite())
          throw TrainingAborted("training aborted at epoch " + std::to_string(epoch) + ": non-finite parameter " + p.name,
                                model, "parameter:" + p.name, epoch);
        vars.push_back(g.variable(*p.tensor));
      }
      TotalLoss loss;
      try {
        const ModelVars mv = bind_from(model, vars);
        const PairOutputs out = forward_pair(g, model, mv, batch, noise);
        loss = total_loss(model, out, w);
        g.backward(loss.total);
      } catch (const NumericError& e) {
        throw TrainingAborted("training aborted at epoch " + std::to_string(epoch) + ": " + e.what(), model,
                              e.scope().empty() ? e.primitive() : e.scope(), epoch);
      }
      GradientSet grads;
      grads.reserve(vars.size());
      for (std::size_t k = 0; k < vars.size(); ++k) {
        grads.push_back(g.grad(vars[k]));
        if (!grads.back().all_finite())
          throw TrainingAborted("training aborted at epoch " + std::to_string(epoch) + ": non-finite gradient for " +
                                    params[k].name,
                                model, "gradient:" + params[k].name, epoch);
      }
      if (observer) observer(step, loss.breakdown);
      adam_step(params, grads, state, opt);
      ++step;

      const LossBreakdown& b = loss.breakdown;
      LossBreakdown& acc = rec.loss;
      acc.recon_x += b.recon_x;
      acc.recon_s += b.recon_s;
      acc.pred_y += b.pred_y;
      acc.kld_x += b.kld_x;
      acc.kld_s += b.kld_s;
      acc.dc_positive += b.dc_positive;
      acc.dc_negative += b.dc_negative;
      acc.sr += b.sr;
      acc.total += b.total;
      ++batches;
    }
    const double inv = 1.0 / static_cast<double>(batches);
    for (double* f : {&rec.loss.recon_x, &rec.loss.recon_s, &rec.loss.pred_y, &rec.loss.kld_x, &rec.loss.kld_s,
                      &rec.loss.dc_positive, &rec.loss.dc_negative, &rec.loss.sr, &rec.loss.total})
      *f *= inv;
    rec.valid_y_accuracy = validate ? y_accuracy(model, *in.valid, valid_y_input) : kNaN;
    result.history.push_back(rec);

    if (validate && config.patience > 0) {
      if (rec.valid_y_accuracy > best_acc) {
        best_acc = rec.valid_y_accuracy;
        since_best = 0;
      } else if (++since_best >= config.patience) {
        result.stopped_early = true;
        break;
      }
    }
  }
  return result;
}

}  // namespace farcon
