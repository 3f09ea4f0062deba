#pragma once

#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "farcon/config.hpp"
#include "farcon/data.hpp"
#include "farcon/gradcheck.hpp"
#include "farcon/model.hpp"
#include "farcon/objectives.hpp"

namespace farcon {

// Adam ------------------------------------------------------------------------

struct AdamOptions {
  double lr = 1e-3;
  double weight_decay = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::size_t step = 0;
};

/// Bias-corrected Adam with decoupled weight decay (theta -= lr * wd * theta,
/// then the Adam update). Moments are allocated on the first call.
void adam_step(const ParamList& params, const GradientSet& grads, AdamState& state, const AdamOptions& opt);

/// Linear ramp from 0 to target over the first ceil(fraction * total) epochs.
double beta_schedule(std::size_t epoch, std::size_t total_epochs, double target_beta, double anneal_fraction);

// Small supervised fits -------------------------------------------------------

/// Binary classifier on X producing one logit per row.
struct BinaryClassifier {
  MlpParams net;
  double train_accuracy = 0.0;
  /// NaN when no validation set was given.
  double valid_accuracy = 0.0;

  Tensor logits(const Tensor& x) const;
  /// Hard 0/1 predictions as [n x 1].
  Tensor predict(const Tensor& x) const;
  double accuracy(const Tensor& x, const Tensor& y) const;
};

/// Mini-batch Adam on (weighted) binary cross-entropy plus the l2 penalty.
/// With a validation set the parameters of the best validation epoch are kept.
/// row_weights may be empty (all ones).
BinaryClassifier fit_binary_classifier(const Tensor& x, const Tensor& y, const std::vector<double>& row_weights,
                                       const FitSettings& settings, std::uint64_t seed, const Tensor* valid_x = nullptr,
                                       const Tensor* valid_y = nullptr);

/// Row weights proportional to 1 / count(y, s), normalized to mean 1.
std::vector<double> group_balance_weights(const Dataset& data);

/// The classifier whose predictions feed the encoder's y input at evaluation
/// time. Trained on X only.
BinaryClassifier train_aux_classifier(const FarconConfig& config, const Dataset& train, const Dataset* valid);

/// Unconstrained baseline on [X | S]; its hidden activations are its representation.
BinaryClassifier train_erm_baseline(const FarconConfig& config, const Dataset& train, const Dataset* valid);
Tensor baseline_features(const BinaryClassifier& baseline, const Dataset& data);

// FarconVAE training ----------------------------------------------------------

struct EpochRecord {
  std::size_t epoch = 0;
  double beta = 0.0;
  LossBreakdown loss;  // mean over the epoch's steps
  double valid_y_accuracy = 0.0;  // NaN without validation data
};

struct TrainResult {
  FarconModel model;
  std::vector<EpochRecord> history;
  bool stopped_early = false;
};

/// Called after every optimizer step with the global step index and the
/// loss breakdown evaluated before the update.
using StepObserver = std::function<void(std::size_t step, const LossBreakdown& loss)>;

/// Thrown when a loss, gradient or parameter becomes non-finite.
class TrainingAborted : public std::runtime_error {
 public:
  TrainingAborted(const std::string& what, FarconModel last_good, std::string component, std::size_t epoch)
      : std::runtime_error(what), last_good_(std::move(last_good)), component_(std::move(component)), epoch_(epoch) {}
  const FarconModel& last_good() const noexcept { return last_good_; }
  const std::string& component() const noexcept { return component_; }
  std::size_t epoch() const noexcept { return epoch_; }

 private:
  FarconModel last_good_;
  std::string component_;
  std::size_t epoch_;
};

struct TrainInputs {
  const PairedDataset* train = nullptr;
  const Dataset* valid = nullptr;               // optional, enables early stopping
  const BinaryClassifier* aux = nullptr;        // y-hat source for validation
  const FarconModel* initial = nullptr;         // optional starting point
};

/// Shuffled mini-batch Adam on total_loss. Streams derived from config.seed:
/// initialization, batch order and reparameterization noise.
TrainResult train_farcon(const FarconConfig& config, const TrainInputs& inputs, const StepObserver& observer = {});

/// Model whose dimensions follow the data and config, initialized from config.seed.
FarconModel initial_model(const FarconConfig& config, const Dataset& train);

/// Encoder y-input for evaluation: the aux classifier's predictions.
Tensor y_hat(const BinaryClassifier& aux, const Dataset& data);

/// Accuracy (%) of predict_y on the posterior mean of z_x, with y_input fed to the encoder.
double y_accuracy(const FarconModel& model, const Dataset& data, const Tensor& y_input);

}  // namespace farcon
