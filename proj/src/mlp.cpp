#include "farcon/mlp.hpp"

#include <cmath>

#include "farcon/errors.hpp"
#include "farcon/kernels.hpp"

namespace farcon {

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::leaky_relu: return "leaky_relu";
    case Activation::tanh: return "tanh";
    case Activation::identity: return "identity";
  }
  return "identity";
}

Activation activation_from_string(std::string_view name) {
  if (name == "relu") return Activation::relu;
  if (name == "leaky_relu") return Activation::leaky_relu;
  if (name == "tanh") return Activation::tanh;
  if (name == "identity" || name == "linear") return Activation::identity;
  throw ConfigError("unknown activation '" + std::string(name) + "'");
}

std::size_t MlpParams::in_dim() const { return layers.empty() ? 0 : layers.front().in_dim(); }
std::size_t MlpParams::out_dim() const { return layers.empty() ? 0 : layers.back().out_dim(); }

void MlpParams::validate(std::string_view name) const {
  for (std::size_t k = 0; k < layers.size(); ++k) {
    const DenseLayer& l = layers[k];
    if (l.weight.rank() != 2 || l.bias.size() != l.weight.rows()) {
      throw DimensionError(std::string(name) + " layer " + std::to_string(k) + ": weight " +
                           l.weight.shape_string() + " and bias " + l.bias.shape_string() + " disagree");
    }
    if (k > 0 && layers[k - 1].out_dim() != l.in_dim()) {
      throw DimensionError(std::string(name) + " layer " + std::to_string(k) + ": expects " +
                           std::to_string(l.in_dim()) + " inputs but layer " + std::to_string(k - 1) +
                           " produces " + std::to_string(layers[k - 1].out_dim()));
    }
  }
}

std::size_t MlpParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.weight.size() + l.bias.size();
  return n;
}

namespace {

std::vector<std::size_t> layer_widths(std::size_t in_dim, const std::vector<std::size_t>& hidden,
                                      std::size_t out_dim) {
  std::vector<std::size_t> widths{in_dim};
  widths.insert(widths.end(), hidden.begin(), hidden.end());
  widths.push_back(out_dim);
  return widths;
}

}  // namespace

MlpParams make_mlp(std::size_t in_dim, const std::vector<std::size_t>& hidden, std::size_t out_dim,
                   Activation hidden_activation, Activation output_activation, Rng& rng) {
  MlpParams p = zero_mlp(in_dim, hidden, out_dim, hidden_activation, output_activation);
  for (DenseLayer& l : p.layers) {
    const double limit = std::sqrt(6.0 / static_cast<double>(l.in_dim() + l.out_dim()));
    for (double& w : l.weight.data()) w = rng.uniform(-limit, limit);
  }
  return p;
}

MlpParams zero_mlp(std::size_t in_dim, const std::vector<std::size_t>& hidden, std::size_t out_dim,
                   Activation hidden_activation, Activation output_activation) {
  const auto widths = layer_widths(in_dim, hidden, out_dim);
  MlpParams p;
  for (std::size_t k = 0; k + 1 < widths.size(); ++k) {
    const bool last = k + 2 == widths.size();
    p.layers.push_back(DenseLayer{Tensor::zeros(widths[k + 1], widths[k]), Tensor::vector(std::vector<double>(widths[k + 1])),
                                  last ? output_activation : hidden_activation});
  }
  return p;
}

void apply_activation(Activation a, std::span<double> values) {
  switch (a) {
    case Activation::relu:
      for (double& v : values) v = v > 0.0 ? v : 0.0;
      break;
    case Activation::leaky_relu:
      for (double& v : values) v = v > 0.0 ? v : kLeakyReluSlope * v;
      break;
    case Activation::tanh:
      for (double& v : values) v = std::tanh(v);
      break;
    case Activation::identity:
      break;
  }
}

Tensor mlp_forward(const MlpParams& params, const Tensor& input, std::string_view name) {
  if (input.rank() != 2) throw DimensionError(std::string(name) + ": input must be [batch x features]");
  Tensor h = input;
  for (std::size_t k = 0; k < params.layers.size(); ++k) {
    const DenseLayer& l = params.layers[k];
    if (h.cols() != l.in_dim()) {
      throw DimensionError(std::string(name) + " layer " + std::to_string(k) + ": expects " +
                           std::to_string(l.in_dim()) + " inputs, got " + std::to_string(h.cols()));
    }
    Tensor out = kernels::matmul_nt(h, l.weight);
    const std::size_t m = out.cols();
    for (std::size_t r = 0; r < out.rows(); ++r) {
      for (std::size_t j = 0; j < m; ++j) out(r, j) += l.bias[j];
    }
    apply_activation(l.activation, out.data());
    h = std::move(out);
  }
  return h;
}

MlpVars bind(ad::Graph& graph, const MlpParams& params, bool trainable) {
  MlpVars vars;
  for (const DenseLayer& l : params.layers) {
    Tensor bias = l.bias.reshaped({1, l.bias.size()});
    if (trainable) {
      vars.layers.push_back({graph.variable(l.weight), graph.variable(std::move(bias)), l.activation});
    } else {
      vars.layers.push_back({graph.constant(l.weight), graph.constant(std::move(bias)), l.activation});
    }
  }
  return vars;
}

ad::Var apply(ad::Var x, Activation a) {
  switch (a) {
    case Activation::relu: return ad::relu(x);
    case Activation::leaky_relu: return ad::leaky_relu(x, kLeakyReluSlope);
    case Activation::tanh: return ad::tanh(x);
    case Activation::identity: return x;
  }
  return x;
}

ad::Var mlp_forward(const MlpVars& vars, ad::Var input, std::string_view name) {
  ad::Var h = input;
  for (std::size_t k = 0; k < vars.layers.size(); ++k) {
    const auto& l = vars.layers[k];
    if (h.cols() != l.weight.cols()) {
      throw DimensionError(std::string(name) + " layer " + std::to_string(k) + ": expects " +
                           std::to_string(l.weight.cols()) + " inputs, got " + std::to_string(h.cols()));
    }
    h = apply(ad::affine(h, l.weight, l.bias), l.activation);
  }
  return h;
}

}  // namespace farcon
