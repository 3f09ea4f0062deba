#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "farcon/errors.hpp"
#include "farcon/gradcheck.hpp"
#include "farcon/mlp.hpp"
#include "farcon/model.hpp"
#include "helpers.hpp"

using namespace farcon;
using farcon::test::random_tensor;

// MLP ------------------------------------------------------------------------

namespace {

DenseLayer layer(Tensor w, std::vector<double> b, Activation a) { return {std::move(w), Tensor::vector(std::move(b)), a}; }

}  // namespace

TEST(Mlp, IdentityAndReluExamples) {
  MlpParams id{{layer(Tensor::from_rows({{1, 0}, {0, 1}}), {0, 0}, Activation::identity)}};
  EXPECT_EQ(mlp_forward(id, Tensor::from_rows({{1, 2}})), Tensor::from_rows({{1, 2}}));
  MlpParams relu{{layer(Tensor::from_rows({{1, 0}, {0, 1}}), {0, 0}, Activation::relu)}};
  EXPECT_EQ(mlp_forward(relu, Tensor::from_rows({{-1, 3}})), Tensor::from_rows({{0, 3}}));
}

TEST(Mlp, TwoLayerHandEvaluation) {
  MlpParams net{{layer(Tensor::from_rows({{1, -1}, {2, 0.5}}), {0, -1}, Activation::relu),
                 layer(Tensor::from_rows({{1, 2}}), {0.5}, Activation::identity)}};
  // [3, 1]: h = relu(2, 5.5); out = 2 + 11 + 0.5.  [-1, 2]: h = relu(-3, -2); out = 0.5.
  EXPECT_EQ(mlp_forward(net, Tensor::from_rows({{3, 1}, {-1, 2}})), Tensor::from_rows({{13.5}, {0.5}}));
}

TEST(Mlp, ActivationsByDefinition) {
  std::vector<double> v{-2.0, 0.0, 1.5};
  auto run = [&](Activation a) {
    auto c = v;
    apply_activation(a, c);
    return c;
  };
  EXPECT_EQ(run(Activation::leaky_relu), (std::vector<double>{-2.0 * kLeakyReluSlope, 0.0, 1.5}));
  EXPECT_EQ(run(Activation::tanh)[2], std::tanh(1.5));
  EXPECT_EQ(activation_from_string(to_string(Activation::leaky_relu)), Activation::leaky_relu);
  EXPECT_THROW(activation_from_string("gelu"), ConfigError);
}

TEST(Mlp, ShapeErrorsNameTheLayer) {
  Rng rng(1);
  MlpParams net = make_mlp(3, {4}, 2, Activation::relu, Activation::identity, rng);
  try {
    mlp_forward(net, Tensor::zeros(2, 5), "encoder_body");
    FAIL();
  } catch (const DimensionError& e) {
    EXPECT_NE(std::string(e.what()).find("encoder_body"), std::string::npos);
  }
  net.layers[1].weight = Tensor::zeros(2, 7);
  try {
    net.validate("decoder_body");
    FAIL();
  } catch (const DimensionError& e) {
    EXPECT_NE(std::string(e.what()).find("decoder_body layer 1"), std::string::npos) << e.what();
  }
}

TEST(Mlp, GlorotBoundsAndZeroBias) {
  Rng rng(2);
  MlpParams net = make_mlp(10, {30}, 5, Activation::relu, Activation::identity, rng);
  const double b0 = std::sqrt(6.0 / 40.0), b1 = std::sqrt(6.0 / 35.0);
  for (double w : net.layers[0].weight.data()) EXPECT_LE(std::abs(w), b0);
  for (double w : net.layers[1].weight.data()) EXPECT_LE(std::abs(w), b1);
  EXPECT_EQ(net.layers[0].bias.sum(), 0.0);
  EXPECT_EQ(net.parameter_count(), 10u * 30 + 30 + 30 * 5 + 5);
}

TEST(Mlp, DeterministicAndRowEquivariant) {
  Rng rng(3);
  MlpParams net = make_mlp(4, {8, 8}, 3, Activation::tanh, Activation::identity, rng);
  Tensor x = random_tensor(6, 4, rng);
  const Tensor out = mlp_forward(net, x);
  EXPECT_EQ(out, mlp_forward(net, x));
  std::vector<std::size_t> perm{5, 2, 0, 4, 1, 3};
  EXPECT_EQ(mlp_forward(net, x.select_rows(perm)), out.select_rows(perm));
}

TEST(Mlp, GraphPathMatchesValuePath) {
  Rng rng(4);
  MlpParams net = make_mlp(3, {5}, 2, Activation::leaky_relu, Activation::identity, rng);
  Tensor x = random_tensor(4, 3, rng);
  ad::Graph g;
  EXPECT_EQ(mlp_forward(bind(g, net, false), g.constant(x)).value(), mlp_forward(net, x));
}

TEST(Mlp, EmptyStackIsIdentity) {
  MlpParams none;
  Tensor x = Tensor::from_rows({{1, 2}});
  EXPECT_EQ(mlp_forward(none, x), x);
}

// Model ----------------------------------------------------------------------

namespace {

ModelDims small_dims() { return {3, 1, 1, 2, 2}; }

FarconModel random_model(std::uint64_t seed, Architecture arch = {{6}, {6}, {}, Activation::tanh}) {
  Rng rng(seed);
  return make_model(small_dims(), arch, {false, false, true}, rng);
}

PairBatch random_batch(std::size_t n, Rng& rng) {
  PairBatch b;
  b.x = random_tensor(n, 3, rng);
  b.x_cf = random_tensor(n, 3, rng);
  for (std::size_t r = 0; r < n; ++r) b.x(r, 2) = b.x_cf(r, 2) = rng.bernoulli(0.5);
  b.s = farcon::test::random_binary(n, 1, rng);
  b.s_cf = Tensor::zeros(n, 1);
  for (std::size_t r = 0; r < n; ++r) b.s_cf(r, 0) = 1.0 - b.s(r, 0);
  b.y = farcon::test::random_binary(n, 1, rng);
  b.source.assign(n, PairSource::matched_neighbor);
  return b;
}

// Linear everything: dims x=2, s=1, y=1, z_x=1, z_s=1.
FarconModel hand_model() {
  FarconModel m = zero_model({2, 1, 1, 1, 1}, {{}, {}, {}, Activation::relu}, {false, false});
  m.encoder_head_x.layers[0].weight = Tensor::from_rows({{1, 0, 0, 0}, {0, 0, 1, 0}});
  m.encoder_head_x.layers[0].bias = Tensor::vector({0.5, -1});
  m.encoder_head_s.layers[0].weight = Tensor::from_rows({{0, 1, 0, 0}, {0, 0, 0, 1}});
  m.encoder_head_s.layers[0].bias = Tensor::vector({0, 0.2});
  m.decoder_head_x.layers[0].weight = Tensor::from_rows({{1, 0}, {0, 2}});
  m.decoder_head_x.layers[0].bias = Tensor::vector({0, 1});
  m.decoder_head_s.layers[0].weight = Tensor::from_rows({{-1, 1}});
  m.predictor_y.layers[0].weight = Tensor::from_rows({{3}});
  m.predictor_y.layers[0].bias = Tensor::vector({-1});
  return m;
}

}  // namespace

TEST(Model, WidthsFollowDims) {
  const FarconModel m = random_model(1);
  EXPECT_EQ(m.encoder_body.in_dim(), 5u);
  EXPECT_EQ(m.encoder_head_x.out_dim(), 4u);
  EXPECT_EQ(m.decoder_body.in_dim(), 4u);
  EXPECT_EQ(m.decoder_head_x.out_dim(), 3u);
  EXPECT_EQ(m.predictor_y.in_dim(), 2u);
  EXPECT_THROW(zero_model({3, 1, 1, 0, 2}, {}, {false, false, false}), ConfigError);
}

TEST(Model, ParameterNamesAndOrder) {
  FarconModel m = random_model(1);
  const ParamList p = m.parameters();
  ASSERT_FALSE(p.empty());
  EXPECT_EQ(p.front().name, "encoder_body.0.weight");
  EXPECT_EQ(p.back().name, "predictor_y.0.bias");
  std::size_t total = 0;
  for (const auto& r : p) total += r.tensor->size();
  EXPECT_EQ(total, m.parameter_count());
}

TEST(Model, ZeroNetworkGivesStandardPosteriorsAndZeroOutputs) {
  const FarconModel m = zero_model(small_dims(), {}, {false, false, false});
  Rng rng(2);
  const Posteriors q = encode(m, random_tensor(4, 3, rng), Tensor::full(4, 1, 1), Tensor::zeros(4, 1));
  for (double v : q.zx.mu().data()) EXPECT_EQ(v, 0.0);
  for (double v : q.zs.log_var().data()) EXPECT_EQ(v, 0.0);
  const Reconstruction r = decode(m, random_tensor(4, 2, rng), random_tensor(4, 2, rng));
  EXPECT_EQ(r.x, Tensor::zeros(4, 3));
  EXPECT_EQ(r.s, Tensor::zeros(4, 1));
  const Tensor logit = predict_y(m, random_tensor(4, 2, rng));
  EXPECT_EQ(logit, Tensor::zeros(4, 1));
}

TEST(Model, HandSetEncodeDecodePredict) {
  const FarconModel m = hand_model();
  const Posteriors q = encode(m, Tensor::from_rows({{1, 2}}), Tensor::from_rows({{1}}), Tensor::from_rows({{0}}));
  EXPECT_DOUBLE_EQ(q.zx.mu()[0], 1.5);
  EXPECT_DOUBLE_EQ(q.zx.log_var()[0], 0.0);
  EXPECT_DOUBLE_EQ(q.zs.mu()[0], 2.0);
  EXPECT_DOUBLE_EQ(q.zs.log_var()[0], 0.2);
  const Reconstruction r = decode(m, Tensor::from_rows({{1.5}}), Tensor::from_rows({{2}}));
  EXPECT_EQ(r.x, Tensor::from_rows({{1.5, 5}}));
  EXPECT_EQ(r.s, Tensor::from_rows({{0.5}}));
  EXPECT_EQ(predict_y(m, Tensor::from_rows({{1.5}})), Tensor::from_rows({{3.5}}));
}

TEST(Model, WidthMismatchThrows) {
  const FarconModel m = random_model(3);
  EXPECT_THROW(encode(m, Tensor::zeros(2, 4), Tensor::zeros(2, 1), Tensor::zeros(2, 1)), DimensionError);
  EXPECT_THROW(decode(m, Tensor::zeros(2, 3), Tensor::zeros(2, 2)), DimensionError);
  EXPECT_THROW(predict_y(m, Tensor::zeros(2, 3)), DimensionError);
}

TEST(Model, PredictionIgnoresZs) {
  // Perturbing anything that only reaches z_s must not move the y logit.
  FarconModel m = random_model(4);
  Rng rng(5);
  PairBatch b = random_batch(5, rng);
  const PairNoise noise = PairNoise::sample(5, m.dims, rng);
  auto logits = [&](const FarconModel& model, const PairNoise& n) {
    ad::Graph g;
    return forward_pair(g, model, bind(g, model, false), b, n).y_logit.value();
  };
  const Tensor base = logits(m, noise);
  FarconModel changed = m;
  for (double& w : changed.encoder_head_s.layers[0].weight.data()) w += 0.7;
  PairNoise other = noise;
  for (double& v : other.zs.data()) v += 3.0;
  EXPECT_EQ(logits(changed, noise), base);
  EXPECT_EQ(logits(m, other), base);
}

TEST(Model, YLossGradientIsZeroOnZsHead) {
  FarconModel m = random_model(6);
  Rng rng(7);
  PairBatch b = random_batch(6, rng);
  const PairNoise noise = PairNoise::sample(6, m.dims, rng);
  const ParamList params = m.parameters();
  const LossAndGrads r = loss_and_grads(params, [&](ad::Graph& g, std::span<const ad::Var> v) {
    const PairOutputs out = forward_pair(g, m, bind_from(m, v), b, noise);
    return ad::mean_all(probdist::bernoulli_nll_rows(out.y_logit, out.y));
  });
  bool any_nonzero = false;
  for (std::size_t k = 0; k < params.size(); ++k) {
    const bool zs_head = params[k].name.rfind("encoder_head_s", 0) == 0;
    for (double g : r.grads[k].data()) {
      if (zs_head) {
        EXPECT_EQ(g, 0.0) << params[k].name;
      }
      if (params[k].name.rfind("encoder_head_x", 0) == 0 && g != 0.0) any_nonzero = true;
    }
  }
  EXPECT_TRUE(any_nonzero);
}

TEST(Model, ForwardPairDegenerateAndZeroNoise) {
  FarconModel m = random_model(8);
  Rng rng(9);
  PairBatch b = random_batch(4, rng);
  b.x_cf = b.x;
  b.s_cf = b.s;
  ad::Graph g;
  const PairOutputs out = forward_pair(g, m, bind(g, m, false), b, PairNoise::zeros(4, m.dims));
  EXPECT_EQ(out.zx.value(), out.q_zx.mu.value());
  EXPECT_EQ(out.zs_cf.value(), out.q_zs_cf.mu.value());
  EXPECT_EQ(out.x_swap.value(), out.x_rec.value());
  EXPECT_EQ(out.s_cf_swap.value(), out.s_cf_rec.value());
  EXPECT_EQ(out.y_logit.value(), out.y_logit_cf.value());
}

TEST(Model, ForwardPairMatchesComposedValueOracle) {
  FarconModel m = random_model(10);
  Rng rng(11);
  PairBatch b = random_batch(2, rng);
  const PairNoise noise = PairNoise::sample(2, m.dims, rng);
  ad::Graph g;
  const PairOutputs out = forward_pair(g, m, bind(g, m, false), b, noise);

  const Posteriors q = encode(m, b.x, b.s, b.y), qc = encode(m, b.x_cf, b.s_cf, b.y);
  const Tensor zx = probdist::reparameterize(q.zx, noise.zx), zs = probdist::reparameterize(q.zs, noise.zs);
  const Tensor zxc = probdist::reparameterize(qc.zx, noise.zx_cf), zsc = probdist::reparameterize(qc.zs, noise.zs_cf);
  auto near = [](const Tensor& a, const Tensor& e) {
    ASSERT_EQ(a.size(), e.size());
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], e[i], 1e-12);
  };
  near(out.q_zx.mu.value(), q.zx.mu());
  near(out.q_zs_cf.log_var.value(), qc.zs.log_var());
  near(out.zx.value(), zx);
  near(out.zs_cf.value(), zsc);
  near(out.x_rec.value(), decode(m, zx, zs).x);
  near(out.s_cf_rec.value(), decode(m, zxc, zsc).s);
  near(out.x_swap.value(), decode(m, zxc, zs).x);
  near(out.s_cf_swap.value(), decode(m, zx, zsc).s);
  near(out.y_logit.value(), predict_y(m, zx));
  near(out.y_logit_cf.value(), predict_y(m, zxc));
}

TEST(Model, ForwardPairRejectsMisalignedBatch) {
  FarconModel m = random_model(12);
  Rng rng(13);
  PairBatch b = random_batch(4, rng);
  b.x_cf = random_tensor(3, 3, rng);
  ad::Graph g;
  EXPECT_THROW(forward_pair(g, m, bind(g, m, false), b, PairNoise::zeros(4, m.dims)), DimensionError);
}

TEST(Model, NoiseDrawOrder) {
  Rng a(14), b(14);
  const PairNoise n = PairNoise::sample(3, small_dims(), a);
  std::vector<double> expect;
  for (int i = 0; i < 4 * 3 * 2; ++i) expect.push_back(b.normal());
  std::vector<double> got;
  for (const Tensor* t : {&n.zx, &n.zs, &n.zx_cf, &n.zs_cf}) got.insert(got.end(), t->data().begin(), t->data().end());
  EXPECT_EQ(got, expect);
}

TEST(Checkpoint, RoundTripIsExact) {
  FarconModel m = random_model(15);
  farcon::test::TempDir dir("ckpt");
  save_checkpoint(m, dir.file("m.json"));
  const FarconModel back = load_checkpoint(dir.file("m.json"));
  EXPECT_EQ(back.dims, m.dims);
  EXPECT_EQ(back.x_binary, m.x_binary);
  FarconModel copy = back;
  const ParamList a = m.parameters(), b = copy.parameters();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t k = 0; k < a.size(); ++k) {
    EXPECT_EQ(a[k].name, b[k].name);
    EXPECT_EQ(*a[k].tensor, *b[k].tensor);
  }
}

TEST(Checkpoint, RejectsForeignOrCorruptFiles) {
  farcon::test::TempDir dir("ckpt_bad");
  farcon::test::write_file(dir.file("a.json"), R"({"format":"other","version":1})");
  EXPECT_THROW(load_checkpoint(dir.file("a.json")), DataError);
  farcon::test::write_file(dir.file("b.json"), "{not json");
  EXPECT_THROW(load_checkpoint(dir.file("b.json")), DataError);
  EXPECT_THROW(load_checkpoint(dir.file("missing.json")), DataError);
  nlohmann::json j = model_to_json(random_model(16));
  j["modules"]["decoder_head_x"]["layers"][0]["weight"]["shape"] = {2, 2};
  EXPECT_ANY_THROW(model_from_json(j));
}
