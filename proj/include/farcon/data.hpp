#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "farcon/tensor.hpp"

namespace farcon {

enum class ColumnKind { continuous, binary, categorical };

struct ColumnSpec {
  std::string name;
  ColumnKind kind = ColumnKind::continuous;
};

/// JSON sidecar describing a CSV file:
///   {"columns": [{"name": ..., "kind": "continuous|binary|categorical"}, ...],
///    "sensitive": name, "target": name,
///    "positive": {column: value},   optional, value mapped to 1 for binary columns
///    "missing": ["?"]}              optional, rows holding these tokens are dropped
struct TabularSchema {
  std::vector<ColumnSpec> columns;
  std::string sensitive;
  std::string target;
  std::map<std::string, std::string> positive;
  std::vector<std::string> missing;

  static TabularSchema from_json(const nlohmann::json& j);
  static TabularSchema load(const std::string& path);
  nlohmann::json to_json() const;
};

/// One model-facing column of X after one-hot expansion.
struct FeatureColumn {
  std::string name;
  bool binary = false;
};

struct Dataset {
  Tensor X;  // [n x x_dim]
  Tensor S;  // [n x s_dim], binary
  Tensor Y;  // [n], class indices (0/1)
  std::vector<FeatureColumn> x_columns;
  std::vector<std::string> s_columns;

  std::size_t size() const { return Y.size(); }
  std::size_t x_dim() const { return x_columns.size(); }
  std::size_t s_dim() const { return s_columns.size(); }
  std::vector<bool> x_binary_mask() const;
  /// Y as a [n x 1] column, the shape the model consumes.
  Tensor y_column() const;
  Dataset subset(std::span<const std::size_t> rows) const;
  static Dataset concat(const Dataset& a, const Dataset& b);
};

struct LoadStats {
  std::size_t rows_read = 0;
  std::size_t rows_dropped = 0;
};

/// Reads a comma-separated file with a header row. Categorical columns are
/// one-hot expanded with categories in lexicographic order. Throws DataError
/// naming the line and column of any missing column or unparseable cell.
Dataset load_tabular(const std::string& csv_path, const TabularSchema& schema, LoadStats* stats = nullptr);

/// Writes X, S and Y as a CSV plus the matching schema, so that
/// load_tabular(csv, schema) reproduces the dataset.
void save_tabular(const Dataset& data, const std::string& csv_path, const std::string& schema_path,
                  const std::string& target_name = "y");

/// Per-column z-scoring of continuous X columns, fitted on one split only.
struct Standardizer {
  std::vector<std::size_t> columns;
  std::vector<double> mean;
  std::vector<double> scale;

  static Standardizer fit(const Dataset& train);
  void apply(Dataset& data) const;
};

// Counterfactual pairing ----------------------------------------------------

enum class PairStrategy { matched_neighbor, s_flip };
enum class PairSource { matched_neighbor, s_flip };

std::string to_string(PairStrategy s);
PairStrategy pair_strategy_from_string(const std::string& name);

/// Row-aligned mini-batch of originals and their counterfactual partners.
/// The partner shares y; y is stored once.
struct PairBatch {
  Tensor x;     // [B x x_dim]
  Tensor s;     // [B x s_dim]
  Tensor y;     // [B x 1]
  Tensor x_cf;  // [B x x_dim]
  Tensor s_cf;  // [B x s_dim]
  std::vector<PairSource> source;

  std::size_t size() const { return x.rows(); }
  /// Throws DimensionError when row counts disagree.
  void validate() const;
};

struct PairedDataset {
  Dataset original;
  Tensor X_cf;
  Tensor S_cf;
  std::vector<PairSource> source;
  /// Partner row for matched pairs; equals the row itself for s_flip pairs.
  std::vector<std::size_t> partner;

  std::size_t size() const { return original.size(); }
  PairBatch batch(std::span<const std::size_t> rows) const;
  /// Every row paired with itself (x~ = x, s~ = s). Reduces the objective to a
  /// conditional beta-VAE when alpha = gamma = 0.
  static PairedDataset self_paired(const Dataset& data);
};

/// matched_neighbor: partner is the nearest row (Euclidean on X) among rows
/// with the same y and a different s, ties to the lowest index; rows without
/// such a candidate fall back to s_flip. s_flip: x~ = x, s~ = 1 - s.
PairedDataset build_counterfactual_pairs(const Dataset& data, PairStrategy strategy);

// Corruption, synthesis and splitting ----------------------------------------

/// Flips s on exactly round(epsilon * n) rows chosen uniformly by seed.
Dataset corrupt_sensitive(const Dataset& data, double epsilon, std::uint64_t seed);

struct SyntheticSpec {
  std::size_t n = 2000;
  double corr_train = 0.9;
  double corr_test = 0.1;
  std::size_t core_dim = 8;
  double core_shift = 0.6;
  std::size_t spurious_dim = 16;
};

struct SyntheticSplits {
  Dataset train;
  Dataset test;
};

/// y ~ Bernoulli(1/2); s agrees with y with probability corr_*; the core block
/// is N((2y - 1) * core_shift, I); every spurious column equals 2s - 1.
/// X = [core | spurious], n rows per split.
SyntheticSplits make_synthetic_spurious(const SyntheticSpec& spec, std::uint64_t seed);
SyntheticSplits make_synthetic_spurious(std::size_t n, double corr_train, double corr_test, std::uint64_t seed);

struct SplitResult {
  Dataset train;
  Dataset valid;
  Dataset test;
  std::vector<std::size_t> train_rows;
  std::vector<std::size_t> valid_rows;
  std::vector<std::size_t> test_rows;
  std::vector<std::string> warnings;
};

/// Disjoint, exhaustive split stratified by (y, s). Split sizes are the
/// largest-remainder rounding of fractions * n.
SplitResult split(const Dataset& data, const std::array<double, 3>& fractions, std::uint64_t seed);

}  // namespace farcon
