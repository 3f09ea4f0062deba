#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "farcon/errors.hpp"
#include "farcon/evaluation.hpp"
#include "helpers.hpp"

using namespace farcon;
using farcon::test::random_binary;
using farcon::test::random_tensor;
using farcon::test::TempDir;

namespace {

FarconConfig tiny_synthetic() {
  FarconConfig c = preset("synthetic");
  c.synthetic.n = 300;
  c.epochs = 2;
  c.baseline.epochs = 5;
  c.aux.epochs = 5;
  c.probe.epochs = 20;
  return c;
}

Dataset random_dataset(std::size_t n, Rng& rng) {
  Dataset d;
  d.X = random_tensor(n, 3, rng);
  d.S = random_binary(n, 1, rng);
  d.Y = random_binary(n, 1, rng).reshaped({n});
  d.x_columns = {{"a", false}, {"b", false}, {"c", false}};
  d.s_columns = {"s"};
  return d;
}

}  // namespace

TEST(EncodeDataset, ZeroModelGivesZeros) {
  Rng rng(1);
  const Dataset d = random_dataset(10, rng);
  const FarconModel m = zero_model({3, 1, 1, 2, 4}, {}, {false, false, false});
  EXPECT_EQ(encode_dataset(m, d, YSource::true_y, nullptr), Tensor::zeros(10, 2));
  EXPECT_EQ(encode_dataset(m, d, YSource::true_y, nullptr, Latent::zs), Tensor::zeros(10, 4));
  EXPECT_THROW(encode_dataset(m, d, YSource::aux_classifier, nullptr), std::invalid_argument);
}

TEST(EncodeDataset, AuxInputDiffersOnlyWhereThePredictionIsWrong) {
  Rng rng(2);
  const Dataset d = random_dataset(80, rng);
  const FarconModel m = make_model({3, 1, 1, 2, 2}, {}, {false, false, false}, rng);
  const BinaryClassifier aux = fit_binary_classifier(d.X, d.Y, {}, {{}, 3, 16, 1e-2}, 1);
  const Tensor truth = encode_dataset(m, d, YSource::true_y, nullptr);
  const Tensor with_aux = encode_dataset(m, d, YSource::aux_classifier, &aux);
  EXPECT_EQ(encode_dataset(m, d, YSource::true_y, nullptr), truth);
  const Tensor pred = aux.predict(d.X);
  std::size_t wrong = 0;
  for (std::size_t r = 0; r < d.size(); ++r) {
    const bool same = truth(r, 0) == with_aux(r, 0) && truth(r, 1) == with_aux(r, 1);
    EXPECT_EQ(same, pred[r] == d.Y[r]) << r;
    wrong += pred[r] != d.Y[r];
  }
  EXPECT_GT(wrong, 0u);
}

TEST(Probe, ConstantLabelsWarn) {
  Rng rng(3);
  const ProbeResult r = linear_probe(random_tensor(50, 2, rng), Tensor::zeros(50, 1), 0);
  EXPECT_EQ(r.accuracy, 100.0);
  EXPECT_EQ(r.warnings.size(), 1u);
}

TEST(Probe, NoiseScoresNearChance) {
  Rng rng(4);
  const ProbeResult r = linear_probe(random_tensor(2000, 4, rng), random_binary(2000, 1, rng), 0);
  EXPECT_NEAR(r.accuracy, 50.0, 5.0);
  EXPECT_TRUE(r.warnings.empty());
}

TEST(Probe, LabelAsEmbeddingIsPerfect) {
  Rng rng(5);
  const Tensor y = random_binary(500, 1, rng);
  EXPECT_EQ(linear_probe(y, y, 1).accuracy, 100.0);
}

TEST(Probe, Errors) {
  Rng rng(6);
  EXPECT_THROW(linear_probe(random_tensor(10, 2, rng), random_binary(9, 1, rng), 0), DimensionError);
  EXPECT_THROW(linear_probe(random_tensor(10, 2, rng), Tensor::full(10, 1, 0.5), 0), DataError);
}

TEST(Metrics, MrgAndMajority) {
  EXPECT_NEAR(mrg(67.36, 50.0), 82.64, 1e-12);
  EXPECT_EQ(mrg(40.0, 50.0), mrg(60.0, 50.0));
  EXPECT_EQ(mrg(50.0, 50.0), 100.0);
  EXPECT_EQ(majority_rate(Tensor::vector({1, 0, 1, 1})), 75.0);
  EXPECT_EQ(majority_rate(Tensor::vector({0, 0, 1, 0, 0})), 80.0);
}

TEST(Metrics, Summarize) {
  const Summary s = summarize({1, 2, 3, 4});
  EXPECT_DOUBLE_EQ(s.mean, 2.5);
  EXPECT_NEAR(s.std, std::sqrt(5.0 / 3.0), 1e-15);
  EXPECT_EQ(summarize({7}).std, 0.0);
}

TEST(Export, RoundTripsTo12Digits) {
  TempDir dir("export");
  Rng rng(7);
  const Tensor z = random_tensor(6, 3, rng, 1e3);
  const Tensor y = random_binary(6, 1, rng), s = random_binary(6, 1, rng);
  export_embeddings(z, y, s, dir.file("e.csv"));
  std::ifstream in(dir.file("e.csv"));
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "z_0,z_1,z_2,y,s");
  for (std::size_t r = 0; r < 6; ++r) {
    ASSERT_TRUE(std::getline(in, line));
    std::stringstream ss(line);
    std::string cell;
    for (std::size_t c = 0; c < 5; ++c) {
      std::getline(ss, cell, ',');
      const double want = c < 3 ? z(r, c) : c == 3 ? y[r] : s[r];
      EXPECT_NEAR(std::stod(cell), want, 1e-12 * std::max(1.0, std::abs(want)));
    }
  }
}

TEST(Export, EmptyWritesHeaderOnly) {
  TempDir dir("export_empty");
  export_embeddings(Tensor::zeros(0, 2), Tensor::zeros(0, 1), Tensor::zeros(0, 1), dir.file("e.csv"));
  EXPECT_EQ(farcon::test::read_file(dir.file("e.csv")), "z_0,z_1,y,s\n");
}

TEST(Report, JsonRoundTripWithSortedKeys) {
  MetricsReport r;
  r.preset = "german";
  r.config_fingerprint = "0123456789abcdef";
  r.majority_rate_s = 69.0;
  RunMetrics a;
  a.seed = 3;
  a.y_accuracy = 80.5;
  a.s_probe_accuracy = 61.25;
  a.mrg = 88.75;
  a.epochs_run = 12;
  a.baseline = BaselineMetrics{30.0, 99.0};
  r.runs = {a, a};
  const nlohmann::json j = r.to_json();
  EXPECT_EQ(j.at("summary").at("y_accuracy").at("mean"), 80.5);
  EXPECT_EQ(j.at("summary").at("y_accuracy").at("std"), 0.0);
  std::string prev;
  for (auto it = j.begin(); it != j.end(); ++it) {
    EXPECT_LT(prev, it.key());
    prev = it.key();
  }
  const MetricsReport back = MetricsReport::from_json(nlohmann::json::parse(j.dump()));
  EXPECT_EQ(back.to_json(), j);
  EXPECT_THROW(MetricsReport::from_json(nlohmann::json::object()), DataError);
}

TEST(Report, EmptySweepHasEmptyResults) {
  const nlohmann::json j = sweep_to_json(tiny_synthetic(), {});
  EXPECT_TRUE(j.at("results").is_array());
  EXPECT_TRUE(j.at("results").empty());
}

TEST(Experiment, PreparedSyntheticData) {
  const PreparedData d = prepare_data(tiny_synthetic());
  EXPECT_EQ(d.train.size() + d.valid.size(), 300u);
  EXPECT_EQ(d.test.size(), 300u);
  EXPECT_EQ(d.full.size(), 600u);
}

TEST(Experiment, ZeroNoiseSweepEqualsAPlainRun) {
  const FarconConfig c = tiny_synthetic();
  const RunMetrics plain = run_experiment(c).metrics;
  const std::vector<SweepCell> cells = noise_sweep(c, {0.0}, {c.seed});
  ASSERT_EQ(cells.size(), 1u);
  EXPECT_EQ(cells[0].metrics.y_accuracy, plain.y_accuracy);
  EXPECT_EQ(cells[0].metrics.s_probe_accuracy, plain.s_probe_accuracy);
  EXPECT_EQ(cells[0].metrics.zs_probe_accuracy, plain.zs_probe_accuracy);
  ASSERT_TRUE(plain.baseline.has_value());
  EXPECT_EQ(cells[0].metrics.baseline->s_probe_accuracy, plain.baseline->s_probe_accuracy);
  EXPECT_THROW(noise_sweep(c, {1.5}, {0}), ConfigError);
}

TEST(Experiment, AblationTogglesZeroTheWeights) {
  const FarconConfig c = preset("synthetic-wb");
  EXPECT_EQ(ablated(c, {false, false}).weights.alpha, 0.0);
  EXPECT_EQ(ablated(c, {false, false}).weights.gamma, 0.0);
  EXPECT_EQ(ablated(c, {true, false}).weights.alpha, c.weights.alpha);
  EXPECT_EQ(ablated(c, {true, false}).weights.gamma, 0.0);
  EXPECT_EQ(ablated(c, {true, true}).weights.gamma, c.weights.gamma);
  EXPECT_EQ(to_string(AblationToggles{true, true}), "dc+sr");
  EXPECT_EQ(to_string(AblationToggles{false, false}), "none");
}
