#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "farcon/autodiff.hpp"
#include "farcon/rng.hpp"
#include "farcon/tensor.hpp"

namespace farcon {

enum class Activation { relu, leaky_relu, tanh, identity };

inline constexpr double kLeakyReluSlope = 0.01;

std::string_view to_string(Activation a);
Activation activation_from_string(std::string_view name);

struct DenseLayer {
  Tensor weight;  // [out x in]
  Tensor bias;    // [out]
  Activation activation = Activation::identity;

  std::size_t in_dim() const { return weight.cols(); }
  std::size_t out_dim() const { return weight.rows(); }
};

/// A stack of dense layers. An empty stack is the identity map.
struct MlpParams {
  std::vector<DenseLayer> layers;

  bool empty() const { return layers.empty(); }
  std::size_t in_dim() const;
  std::size_t out_dim() const;
  /// Throws DimensionError naming the first layer whose input does not chain.
  void validate(std::string_view name = "mlp") const;
  std::size_t parameter_count() const;
};

/// Hidden layers use hidden_activation; the last layer uses output_activation.
/// Weights are uniform in +-sqrt(6 / (fan_in + fan_out)), biases zero.
MlpParams make_mlp(std::size_t in_dim, const std::vector<std::size_t>& hidden, std::size_t out_dim,
                   Activation hidden_activation, Activation output_activation, Rng& rng);

MlpParams zero_mlp(std::size_t in_dim, const std::vector<std::size_t>& hidden, std::size_t out_dim,
                   Activation hidden_activation, Activation output_activation);

void apply_activation(Activation a, std::span<double> values);

/// Inference path. input is [batch x in].
Tensor mlp_forward(const MlpParams& params, const Tensor& input, std::string_view name = "mlp");

/// Graph handles for one MlpParams.
struct MlpVars {
  struct Layer {
    ad::Var weight;
    ad::Var bias;
    Activation activation;
  };
  std::vector<Layer> layers;
};

/// trainable=false binds parameters as constants.
MlpVars bind(ad::Graph& graph, const MlpParams& params, bool trainable);
ad::Var apply(ad::Var x, Activation a);
ad::Var mlp_forward(const MlpVars& vars, ad::Var input, std::string_view name = "mlp");

}  // namespace farcon
