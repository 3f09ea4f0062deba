#pragma once

#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "farcon/autodiff.hpp"
#include "farcon/data.hpp"
#include "farcon/gradcheck.hpp"
#include "farcon/mlp.hpp"
#include "farcon/probdist.hpp"
#include "farcon/rng.hpp"

namespace farcon {

struct ModelDims {
  std::size_t x_dim = 0;
  std::size_t s_dim = 1;
  std::size_t y_dim = 1;
  std::size_t zx_dim = 0;
  std::size_t zs_dim = 0;

  std::size_t encoder_in() const { return x_dim + s_dim + y_dim; }
  std::size_t decoder_in() const { return zx_dim + zs_dim; }
  friend bool operator==(const ModelDims&, const ModelDims&) = default;
};

struct Architecture {
  std::vector<std::size_t> encoder_hidden{64};
  std::vector<std::size_t> decoder_hidden{64};
  /// Empty: the predictor is a single linear layer (logistic regression).
  std::vector<std::size_t> predictor_hidden{};
  Activation activation = Activation::relu;
};

/// Encoder body -> two heads emitting [mu | log_var]; decoder body on
/// [z_x | z_s] -> x and s heads; y predictor on z_x alone.
struct FarconModel {
  ModelDims dims;
  /// Decoder likelihood per x column: Bernoulli where true, unit Gaussian otherwise.
  std::vector<bool> x_binary;
  MlpParams encoder_body;
  MlpParams encoder_head_x;
  MlpParams encoder_head_s;
  MlpParams decoder_body;
  MlpParams decoder_head_x;
  MlpParams decoder_head_s;
  MlpParams predictor_y;

  void validate() const;
  /// Every weight and bias, named "<module>.<layer>.weight|bias", in a fixed order.
  ParamList parameters();
  std::size_t parameter_count() const;
};

FarconModel make_model(const ModelDims& dims, const Architecture& arch, std::vector<bool> x_binary, Rng& rng);
/// Same topology with every weight and bias zero.
FarconModel zero_model(const ModelDims& dims, const Architecture& arch, std::vector<bool> x_binary);

// Inference path ----------------------------------------------------------

struct Posteriors {
  probdist::DiagGaussian zx;
  probdist::DiagGaussian zs;
};

struct Reconstruction {
  Tensor x;  // Gaussian means / Bernoulli logits per x_binary
  Tensor s;  // logits
};

/// x [B x x_dim], s [B x s_dim], y [B x y_dim].
Posteriors encode(const FarconModel& model, const Tensor& x, const Tensor& s, const Tensor& y);
Reconstruction decode(const FarconModel& model, const Tensor& zx, const Tensor& zs);
Tensor predict_y(const FarconModel& model, const Tensor& zx);

// Graph path --------------------------------------------------------------

struct ModelVars {
  MlpVars encoder_body;
  MlpVars encoder_head_x;
  MlpVars encoder_head_s;
  MlpVars decoder_body;
  MlpVars decoder_head_x;
  MlpVars decoder_head_s;
  MlpVars predictor_y;
};

/// Binds parameters in the order of FarconModel::parameters().
ModelVars bind(ad::Graph& graph, const FarconModel& model, bool trainable);
/// Rebuilds ModelVars from variables already bound in parameters() order.
ModelVars bind_from(const FarconModel& model, std::span<const ad::Var> params);

std::pair<probdist::GaussianVars, probdist::GaussianVars> encode(const FarconModel& model, const ModelVars& vars,
                                                                 ad::Var x, ad::Var s, ad::Var y);
std::pair<ad::Var, ad::Var> decode(const FarconModel& model, const ModelVars& vars, ad::Var zx, ad::Var zs);
ad::Var predict_y(const FarconModel& model, const ModelVars& vars, ad::Var zx);

/// Standard-normal draws for the four reparameterized samples of one step.
struct PairNoise {
  Tensor zx, zs, zx_cf, zs_cf;

  /// Drawn in the order zx, zs, zx_cf, zs_cf, each row-major.
  static PairNoise sample(std::size_t rows, const ModelDims& dims, Rng& rng);
  static PairNoise zeros(std::size_t rows, const ModelDims& dims);
};

struct PairOutputs {
  ad::Var x, s, y, x_cf, s_cf;
  probdist::GaussianVars q_zx, q_zs, q_zx_cf, q_zs_cf;
  ad::Var zx, zs, zx_cf, zs_cf;
  ad::Var x_rec, s_rec;        // decode(z_x, z_s)
  ad::Var x_cf_rec, s_cf_rec;  // decode(z_x~, z_s~)
  ad::Var x_swap, s_swap;      // decode(z_x~, z_s), targets (x, s)
  ad::Var x_cf_swap, s_cf_swap;  // decode(z_x, z_s~), targets (x~, s~)
  ad::Var y_logit, y_logit_cf;
};

PairOutputs forward_pair(ad::Graph& graph, const FarconModel& model, const ModelVars& vars, const PairBatch& batch,
                         const PairNoise& noise);

// Checkpoints -------------------------------------------------------------

nlohmann::json mlp_to_json(const MlpParams& mlp);
MlpParams mlp_from_json(const nlohmann::json& j);
nlohmann::json model_to_json(const FarconModel& model);
FarconModel model_from_json(const nlohmann::json& j);
void save_checkpoint(const FarconModel& model, const std::string& path);
FarconModel load_checkpoint(const std::string& path);

}  // namespace farcon
