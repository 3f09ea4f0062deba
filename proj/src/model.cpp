#include "farcon/model.hpp"

#include <fstream>

#include "farcon/errors.hpp"

namespace farcon {

namespace {

// Stack of hidden layers only, every layer activated. Empty widths give the identity.
MlpParams body(std::size_t in, const std::vector<std::size_t>& widths, Activation act) {
  MlpParams p;
  std::size_t prev = in;
  for (std::size_t w : widths) {
    p.layers.push_back(DenseLayer{Tensor::zeros(w, prev), Tensor::vector(std::vector<double>(w)), act});
    prev = w;
  }
  return p;
}

std::size_t width_after(const MlpParams& body, std::size_t in) { return body.empty() ? in : body.out_dim(); }

void glorot(MlpParams& p, Rng& rng) {
  for (DenseLayer& l : p.layers) {
    const double limit = std::sqrt(6.0 / static_cast<double>(l.in_dim() + l.out_dim()));
    for (double& w : l.weight.data()) w = rng.uniform(-limit, limit);
  }
}

template <typename F>
void for_each_module(FarconModel& m, F&& f) {
  f("encoder_body", m.encoder_body);
  f("encoder_head_x", m.encoder_head_x);
  f("encoder_head_s", m.encoder_head_s);
  f("decoder_body", m.decoder_body);
  f("decoder_head_x", m.decoder_head_x);
  f("decoder_head_s", m.decoder_head_s);
  f("predictor_y", m.predictor_y);
}

template <typename F>
void for_each_module(const FarconModel& m, F&& f) {
  for_each_module(const_cast<FarconModel&>(m), [&](const char* name, MlpParams& p) { f(name, static_cast<const MlpParams&>(p)); });
}

void require_cols(const Tensor& t, std::size_t cols, const char* what) {
  if (t.rank() != 2 || t.cols() != cols)
    throw DimensionError(std::string(what) + ": expected " + std::to_string(cols) + " columns, got " + t.shape_string());
}

void require_cols(ad::Var v, std::size_t cols, const char* what) { require_cols(v.value(), cols, what); }

probdist::DiagGaussian split_head(const Tensor& out, std::size_t d) {
  return probdist::DiagGaussian(out.slice_cols(0, d), out.slice_cols(d, 2 * d));
}

probdist::GaussianVars split_head(ad::Var out, std::size_t d) {
  return probdist::make_gaussian(ad::slice_cols(out, 0, d), ad::slice_cols(out, d, 2 * d));
}

MlpVars take(std::span<const ad::Var> params, std::size_t& pos, const MlpParams& p) {
  MlpVars v;
  for (const DenseLayer& l : p.layers) {
    if (pos + 2 > params.size()) throw DimensionError("bind_from: too few parameters");
    v.layers.push_back({params[pos], params[pos + 1], l.activation});
    pos += 2;
  }
  return v;
}

}  // namespace

void FarconModel::validate() const {
  const ModelDims& d = dims;
  if (x_binary.size() != d.x_dim) throw DimensionError("FarconModel: x_binary has " + std::to_string(x_binary.size()) + " entries, x_dim is " + std::to_string(d.x_dim));
  auto check = [](const MlpParams& p, std::size_t in, std::size_t out, const char* name) {
    p.validate(name);
    if (p.empty()) {
      if (in != out) throw DimensionError(std::string(name) + ": empty stack must preserve width");
      return;
    }
    if (p.in_dim() != in || p.out_dim() != out)
      throw DimensionError(std::string(name) + ": expected " + std::to_string(in) + " -> " + std::to_string(out) + ", got " +
                           std::to_string(p.in_dim()) + " -> " + std::to_string(p.out_dim()));
  };
  const std::size_t eh = width_after(encoder_body, d.encoder_in());
  const std::size_t dh = width_after(decoder_body, d.decoder_in());
  check(encoder_body, d.encoder_in(), eh, "encoder_body");
  check(encoder_head_x, eh, 2 * d.zx_dim, "encoder_head_x");
  check(encoder_head_s, eh, 2 * d.zs_dim, "encoder_head_s");
  check(decoder_body, d.decoder_in(), dh, "decoder_body");
  check(decoder_head_x, dh, d.x_dim, "decoder_head_x");
  check(decoder_head_s, dh, d.s_dim, "decoder_head_s");
  check(predictor_y, d.zx_dim, d.y_dim, "predictor_y");
}

ParamList FarconModel::parameters() {
  ParamList out;
  for_each_module(*this, [&](const char* name, MlpParams& p) {
    for (std::size_t k = 0; k < p.layers.size(); ++k) {
      const std::string base = std::string(name) + "." + std::to_string(k);
      out.push_back({base + ".weight", &p.layers[k].weight});
      out.push_back({base + ".bias", &p.layers[k].bias});
    }
  });
  return out;
}

std::size_t FarconModel::parameter_count() const {
  std::size_t n = 0;
  for_each_module(*this, [&](const char*, const MlpParams& p) { n += p.parameter_count(); });
  return n;
}

FarconModel zero_model(const ModelDims& dims, const Architecture& arch, std::vector<bool> x_binary) {
  if (dims.x_dim == 0 || dims.s_dim == 0 || dims.y_dim == 0 || dims.zx_dim == 0 || dims.zs_dim == 0)
    throw ConfigError("model dimensions must be positive");
  FarconModel m;
  m.dims = dims;
  m.x_binary = std::move(x_binary);
  m.encoder_body = body(dims.encoder_in(), arch.encoder_hidden, arch.activation);
  const std::size_t eh = width_after(m.encoder_body, dims.encoder_in());
  m.encoder_head_x = zero_mlp(eh, {}, 2 * dims.zx_dim, arch.activation, Activation::identity);
  m.encoder_head_s = zero_mlp(eh, {}, 2 * dims.zs_dim, arch.activation, Activation::identity);
  m.decoder_body = body(dims.decoder_in(), arch.decoder_hidden, arch.activation);
  const std::size_t dh = width_after(m.decoder_body, dims.decoder_in());
  m.decoder_head_x = zero_mlp(dh, {}, dims.x_dim, arch.activation, Activation::identity);
  m.decoder_head_s = zero_mlp(dh, {}, dims.s_dim, arch.activation, Activation::identity);
  m.predictor_y = zero_mlp(dims.zx_dim, arch.predictor_hidden, dims.y_dim, arch.activation, Activation::identity);
  m.validate();
  return m;
}

FarconModel make_model(const ModelDims& dims, const Architecture& arch, std::vector<bool> x_binary, Rng& rng) {
  FarconModel m = zero_model(dims, arch, std::move(x_binary));
  for_each_module(m, [&](const char*, MlpParams& p) { glorot(p, rng); });
  return m;
}

// Inference ---------------------------------------------------------------

Posteriors encode(const FarconModel& model, const Tensor& x, const Tensor& s, const Tensor& y) {
  const ModelDims& d = model.dims;
  require_cols(x, d.x_dim, "encode: x");
  require_cols(s, d.s_dim, "encode: s");
  require_cols(y, d.y_dim, "encode: y");
  if (s.rows() != x.rows() || y.rows() != x.rows()) throw DimensionError("encode: x, s, y row counts differ");
  const Tensor* parts[] = {&x, &s, &y};
  const Tensor h = mlp_forward(model.encoder_body, Tensor::concat_cols(parts), "encoder_body");
  return {split_head(mlp_forward(model.encoder_head_x, h, "encoder_head_x"), d.zx_dim),
          split_head(mlp_forward(model.encoder_head_s, h, "encoder_head_s"), d.zs_dim)};
}

Reconstruction decode(const FarconModel& model, const Tensor& zx, const Tensor& zs) {
  require_cols(zx, model.dims.zx_dim, "decode: z_x");
  require_cols(zs, model.dims.zs_dim, "decode: z_s");
  if (zx.rows() != zs.rows()) throw DimensionError("decode: z_x and z_s row counts differ");
  const Tensor* parts[] = {&zx, &zs};
  const Tensor h = mlp_forward(model.decoder_body, Tensor::concat_cols(parts), "decoder_body");
  return {mlp_forward(model.decoder_head_x, h, "decoder_head_x"), mlp_forward(model.decoder_head_s, h, "decoder_head_s")};
}

Tensor predict_y(const FarconModel& model, const Tensor& zx) {
  require_cols(zx, model.dims.zx_dim, "predict_y: z_x");
  return mlp_forward(model.predictor_y, zx, "predictor_y");
}

// Graph -------------------------------------------------------------------

ModelVars bind(ad::Graph& graph, const FarconModel& model, bool trainable) {
  ModelVars v;
  v.encoder_body = farcon::bind(graph, model.encoder_body, trainable);
  v.encoder_head_x = farcon::bind(graph, model.encoder_head_x, trainable);
  v.encoder_head_s = farcon::bind(graph, model.encoder_head_s, trainable);
  v.decoder_body = farcon::bind(graph, model.decoder_body, trainable);
  v.decoder_head_x = farcon::bind(graph, model.decoder_head_x, trainable);
  v.decoder_head_s = farcon::bind(graph, model.decoder_head_s, trainable);
  v.predictor_y = farcon::bind(graph, model.predictor_y, trainable);
  return v;
}

ModelVars bind_from(const FarconModel& model, std::span<const ad::Var> params) {
  std::size_t pos = 0;
  ModelVars v;
  v.encoder_body = take(params, pos, model.encoder_body);
  v.encoder_head_x = take(params, pos, model.encoder_head_x);
  v.encoder_head_s = take(params, pos, model.encoder_head_s);
  v.decoder_body = take(params, pos, model.decoder_body);
  v.decoder_head_x = take(params, pos, model.decoder_head_x);
  v.decoder_head_s = take(params, pos, model.decoder_head_s);
  v.predictor_y = take(params, pos, model.predictor_y);
  if (pos != params.size()) throw DimensionError("bind_from: too many parameters");
  return v;
}

std::pair<probdist::GaussianVars, probdist::GaussianVars> encode(const FarconModel& model, const ModelVars& vars,
                                                                 ad::Var x, ad::Var s, ad::Var y) {
  const ModelDims& d = model.dims;
  require_cols(x, d.x_dim, "encode: x");
  require_cols(s, d.s_dim, "encode: s");
  require_cols(y, d.y_dim, "encode: y");
  auto scope = x.graph().scope("encoder");
  const ad::Var h = mlp_forward(vars.encoder_body, ad::concat_cols({x, s, y}), "encoder_body");
  return {split_head(mlp_forward(vars.encoder_head_x, h, "encoder_head_x"), d.zx_dim),
          split_head(mlp_forward(vars.encoder_head_s, h, "encoder_head_s"), d.zs_dim)};
}

std::pair<ad::Var, ad::Var> decode(const FarconModel& model, const ModelVars& vars, ad::Var zx, ad::Var zs) {
  require_cols(zx, model.dims.zx_dim, "decode: z_x");
  require_cols(zs, model.dims.zs_dim, "decode: z_s");
  auto scope = zx.graph().scope("decoder");
  const ad::Var h = mlp_forward(vars.decoder_body, ad::concat_cols({zx, zs}), "decoder_body");
  return {mlp_forward(vars.decoder_head_x, h, "decoder_head_x"), mlp_forward(vars.decoder_head_s, h, "decoder_head_s")};
}

ad::Var predict_y(const FarconModel& model, const ModelVars& vars, ad::Var zx) {
  require_cols(zx, model.dims.zx_dim, "predict_y: z_x");
  auto scope = zx.graph().scope("predictor_y");
  return mlp_forward(vars.predictor_y, zx, "predictor_y");
}

PairNoise PairNoise::sample(std::size_t rows, const ModelDims& dims, Rng& rng) {
  PairNoise n = zeros(rows, dims);
  for (Tensor* t : {&n.zx, &n.zs, &n.zx_cf, &n.zs_cf})
    for (double& v : t->data()) v = rng.normal();
  return n;
}

PairNoise PairNoise::zeros(std::size_t rows, const ModelDims& dims) {
  return {Tensor::zeros(rows, dims.zx_dim), Tensor::zeros(rows, dims.zs_dim), Tensor::zeros(rows, dims.zx_dim),
          Tensor::zeros(rows, dims.zs_dim)};
}

PairOutputs forward_pair(ad::Graph& graph, const FarconModel& model, const ModelVars& vars, const PairBatch& batch,
                         const PairNoise& noise) {
  batch.validate();
  const std::size_t n = batch.size();
  for (const Tensor* t : {&noise.zx, &noise.zs, &noise.zx_cf, &noise.zs_cf})
    if (t->rows() != n) throw DimensionError("forward_pair: noise rows do not match batch");
  PairOutputs o;
  o.x = graph.constant(batch.x);
  o.s = graph.constant(batch.s);
  o.y = graph.constant(batch.y);
  o.x_cf = graph.constant(batch.x_cf);
  o.s_cf = graph.constant(batch.s_cf);
  std::tie(o.q_zx, o.q_zs) = encode(model, vars, o.x, o.s, o.y);
  std::tie(o.q_zx_cf, o.q_zs_cf) = encode(model, vars, o.x_cf, o.s_cf, o.y);
  {
    auto scope = graph.scope("reparameterize");
    o.zx = probdist::reparameterize(o.q_zx, graph.constant(noise.zx));
    o.zs = probdist::reparameterize(o.q_zs, graph.constant(noise.zs));
    o.zx_cf = probdist::reparameterize(o.q_zx_cf, graph.constant(noise.zx_cf));
    o.zs_cf = probdist::reparameterize(o.q_zs_cf, graph.constant(noise.zs_cf));
  }
  std::tie(o.x_rec, o.s_rec) = decode(model, vars, o.zx, o.zs);
  std::tie(o.x_cf_rec, o.s_cf_rec) = decode(model, vars, o.zx_cf, o.zs_cf);
  std::tie(o.x_swap, o.s_swap) = decode(model, vars, o.zx_cf, o.zs);
  std::tie(o.x_cf_swap, o.s_cf_swap) = decode(model, vars, o.zx, o.zs_cf);
  o.y_logit = predict_y(model, vars, o.zx);
  o.y_logit_cf = predict_y(model, vars, o.zx_cf);
  return o;
}

// Checkpoints -------------------------------------------------------------

namespace {

nlohmann::json tensor_json(const Tensor& t) {
  return {{"shape", t.shape()}, {"data", std::vector<double>(t.data().begin(), t.data().end())}};
}

Tensor tensor_from(const nlohmann::json& j) {
  return Tensor(j.at("shape").get<std::vector<std::size_t>>(), j.at("data").get<std::vector<double>>());
}

}  // namespace

nlohmann::json mlp_to_json(const MlpParams& mlp) {
  nlohmann::json layers = nlohmann::json::array();
  for (const DenseLayer& l : mlp.layers)
    layers.push_back({{"activation", std::string(to_string(l.activation))}, {"weight", tensor_json(l.weight)}, {"bias", tensor_json(l.bias)}});
  return {{"layers", layers}};
}

MlpParams mlp_from_json(const nlohmann::json& j) {
  MlpParams p;
  for (const auto& l : j.at("layers"))
    p.layers.push_back({tensor_from(l.at("weight")), tensor_from(l.at("bias")), activation_from_string(l.at("activation").get<std::string>())});
  return p;
}

nlohmann::json model_to_json(const FarconModel& model) {
  nlohmann::json j;
  j["format"] = "farcon-checkpoint";
  j["version"] = 1;
  const ModelDims& d = model.dims;
  j["dims"] = {{"x_dim", d.x_dim}, {"s_dim", d.s_dim}, {"y_dim", d.y_dim}, {"zx_dim", d.zx_dim}, {"zs_dim", d.zs_dim}};
  j["x_binary"] = model.x_binary;
  nlohmann::json modules;
  for_each_module(model, [&](const char* name, const MlpParams& p) { modules[name] = mlp_to_json(p); });
  j["modules"] = modules;
  return j;
}

FarconModel model_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format") != "farcon-checkpoint") throw DataError("checkpoint: unrecognized format");
    if (j.at("version") != 1) throw DataError("checkpoint: unsupported version");
    FarconModel m;
    const auto& d = j.at("dims");
    m.dims = {d.at("x_dim"), d.at("s_dim"), d.at("y_dim"), d.at("zx_dim"), d.at("zs_dim")};
    m.x_binary = j.at("x_binary").get<std::vector<bool>>();
    for_each_module(m, [&](const char* name, MlpParams& p) { p = mlp_from_json(j.at("modules").at(name)); });
    m.validate();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint: ") + e.what());
  }
}

void save_checkpoint(const FarconModel& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write checkpoint " + path);
  out << model_to_json(model).dump() << '\n';
  if (!out) throw DataError("write failed: " + path);
}

FarconModel load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open checkpoint " + path);
  try {
    return model_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError("checkpoint " + path + ": " + e.what());
  }
}

}  // namespace farcon
