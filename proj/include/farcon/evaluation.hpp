#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "farcon/config.hpp"
#include "farcon/data.hpp"
#include "farcon/model.hpp"
#include "farcon/training.hpp"

namespace farcon {

enum class YSource { true_y, aux_classifier };
enum class Latent { zx, zs };

/// Row i is the posterior mean of q(z | x_i, s_i, y_i) where y_i is the true
/// label or the aux classifier's prediction. Throws std::invalid_argument
/// when aux predictions are requested without a classifier.
Tensor encode_dataset(const FarconModel& model, const Dataset& data, YSource source, const BinaryClassifier* aux,
                      Latent latent = Latent::zx);

struct ProbeResult {
  double accuracy = 0.0;  // % on the held-out part
  std::vector<std::string> warnings;
};

/// Logistic regression on standardized embeddings, trained on a seeded
/// (1 - holdout) share of rows and scored on the rest. Single-class labels
/// score 100 with a warning.
ProbeResult linear_probe(const Tensor& embeddings, const Tensor& labels, const FitSettings& settings, double holdout,
                         std::uint64_t seed);
ProbeResult linear_probe(const Tensor& embeddings, const Tensor& labels, std::uint64_t seed);

/// 100 - |a - b|
double mrg(double s_acc_model, double s_acc_random_guess);
/// Share (%) of the most frequent value of a 0/1 label column.
double majority_rate(const Tensor& labels);

// Experiments -------------------------------------------------------------------

struct PreparedData {
  Dataset train;  // s possibly corrupted
  Dataset valid;
  Dataset test;
  Dataset full;   // clean train + valid + test, used for probes
  std::vector<std::string> warnings;
};

/// Loads or generates data per config, splits, standardizes with training
/// statistics and applies the configured s corruption to the training split.
PreparedData prepare_data(const FarconConfig& config);

struct BaselineMetrics {
  double y_accuracy = 0.0;
  double s_probe_accuracy = 0.0;
};

struct RunMetrics {
  std::uint64_t seed = 0;
  double y_accuracy = 0.0;
  double s_probe_accuracy = 0.0;
  double mrg = 0.0;
  double zs_probe_accuracy = 0.0;
  double aux_valid_accuracy = 0.0;
  double aux_test_accuracy = 0.0;
  std::size_t epochs_run = 0;
  std::optional<BaselineMetrics> baseline;
};

struct RunArtifacts {
  PreparedData data;
  BinaryClassifier aux;
  TrainResult training;
  RunMetrics metrics;
  std::optional<BinaryClassifier> baseline;
};

/// Full pipeline for one seed: aux classifier, pairing, training, test y
/// accuracy with y-hat inputs, s probe on z_x (and z_s) of the whole dataset.
/// Synthetic data also gets the ERM baseline.
RunArtifacts run_experiment(const FarconConfig& config);
/// Re-scores a trained model, as `eval` does.
RunMetrics evaluate_model(const FarconConfig& config, const FarconModel& model, const BinaryClassifier& aux,
                          const PreparedData& data);

struct Summary {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation, 0 for one value
};
Summary summarize(const std::vector<double>& values);

struct MetricsReport {
  std::string preset;
  std::string config_fingerprint;
  double random_guess_s = 50.0;
  double majority_rate_s = 0.0;
  std::vector<RunMetrics> runs;

  /// Keys sort lexicographically; means and sample stds over runs included.
  nlohmann::json to_json() const;
  static MetricsReport from_json(const nlohmann::json& j);
};

/// Multi-seed run of one config; seed k uses config.seed + k.
MetricsReport run_seeds(const FarconConfig& config, const std::vector<std::uint64_t>& seeds);

struct SweepCell {
  double epsilon = 0.0;
  RunMetrics metrics;
};

/// Corrupts s on the training split only at each epsilon, retrains, and
/// scores on the clean data.
std::vector<SweepCell> noise_sweep(const FarconConfig& config, const std::vector<double>& epsilons,
                                   const std::vector<std::uint64_t>& seeds);
nlohmann::json sweep_to_json(const FarconConfig& config, const std::vector<SweepCell>& cells);

struct AblationToggles {
  bool use_dc = true;
  bool use_sr = true;
};
std::string to_string(const AblationToggles& t);

/// Trains with alpha * [use_dc] and gamma * [use_sr].
MetricsReport ablation_run(const FarconConfig& config, const AblationToggles& toggles,
                           const std::vector<std::uint64_t>& seeds);
FarconConfig ablated(const FarconConfig& config, const AblationToggles& toggles);

/// CSV with header z_0..z_{d-1},y,s and 17 significant digits.
void export_embeddings(const Tensor& embeddings, const Tensor& labels_y, const Tensor& labels_s, const std::string& path);

/// Pretty-printed (indent 2) JSON with sorted keys.
void write_json(const nlohmann::json& j, const std::string& path);

}  // namespace farcon
