#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "farcon/data.hpp"
#include "farcon/model.hpp"
#include "farcon/objectives.hpp"

namespace farcon {

/// Settings of a small supervised MLP fit (aux classifier, ERM baseline, probe).
struct FitSettings {
  std::vector<std::size_t> hidden;
  std::size_t epochs = 50;
  std::size_t batch_size = 64;
  double lr = 1e-3;
  double weight_decay = 0.0;
  /// Penalty l2 * sum(w^2) over weight matrices, added to the mean loss.
  double l2 = 0.0;
  /// Reweight rows by 1 / count(y, s) so every (y, s) group carries equal mass.
  bool group_balance = false;
};

struct DataSettings {
  std::string source = "synthetic";  // "csv" or "synthetic"
  std::string csv;
  std::string schema;
  std::array<double, 3> split{0.8, 0.1, 0.1};
  std::uint64_t split_seed = 0;
  /// Fraction of training rows whose s is flipped before pairing.
  double noise_epsilon = 0.0;
};

struct FarconConfig {
  std::string preset = "default";
  std::uint64_t seed = 0;

  std::size_t zx_dim = 8;
  std::size_t zs_dim = 8;
  Architecture architecture;
  LossWeights weights;

  double lr = 1e-3;
  double weight_decay = 1e-4;
  std::size_t epochs = 100;
  std::size_t batch_size = 64;
  double beta_anneal_fraction = 0.0;
  /// Early-stopping patience in epochs on validation y accuracy; 0 disables.
  std::size_t patience = 30;
  PairStrategy pairing = PairStrategy::matched_neighbor;

  DataSettings data;
  SyntheticSpec synthetic;
  FitSettings aux;
  FitSettings baseline;
  FitSettings probe;
  double probe_holdout = 0.2;

  /// Throws ConfigError on the first invalid field.
  void validate() const;
  nlohmann::json to_json() const;
  /// Keys absent from j keep the values of the preset named by j["preset"]
  /// (or the defaults). Unknown keys are rejected.
  static FarconConfig from_json(const nlohmann::json& j);
};

/// "adult", "german", "synthetic", "synthetic-wb" or "default".
FarconConfig preset(const std::string& name);
std::vector<std::string> preset_names();

/// Applies one "dotted.key=value" override to a config document. The value is
/// parsed as JSON when possible, otherwise taken as a string.
void apply_override(nlohmann::json& doc, const std::string& assignment);

FarconConfig load_config(const std::string& path);

/// FNV-1a of the canonical (sorted-key, compact) JSON, as 16 hex digits.
std::string config_fingerprint(const FarconConfig& config);

}  // namespace farcon
