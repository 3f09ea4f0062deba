#include "farcon/evaluation.hpp"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <stdexcept>

#include "farcon/errors.hpp"
#include "farcon/rng.hpp"

namespace farcon {

namespace fs = std::filesystem;

Tensor encode_dataset(const FarconModel& model, const Dataset& data, YSource source, const BinaryClassifier* aux,
                      Latent latent) {
  Tensor y_input;
  if (source == YSource::aux_classifier) {
    if (!aux) throw std::invalid_argument("encode_dataset: aux classifier predictions requested but none given");
    y_input = y_hat(*aux, data);
  } else {
    y_input = data.y_column();
  }
  const Posteriors q = encode(model, data.X, data.S, y_input);
  return latent == Latent::zx ? q.zx.mu() : q.zs.mu();
}

double mrg(double a, double b) { return 100.0 - std::abs(a - b); }

double majority_rate(const Tensor& labels) {
  if (labels.size() == 0) return 0.0;
  std::size_t ones = 0;
  for (double v : labels.data()) ones += v != 0.0;
  const std::size_t top = std::max(ones, labels.size() - ones);
  return 100.0 * static_cast<double>(top) / static_cast<double>(labels.size());
}

ProbeResult linear_probe(const Tensor& embeddings, const Tensor& labels, const FitSettings& settings, double holdout,
                         std::uint64_t seed) {
  const std::size_t n = embeddings.rows();
  if (labels.size() != n) throw DimensionError("linear_probe: embeddings and labels differ in rows");
  ProbeResult res;
  std::size_t ones = 0;
  for (double v : labels.data()) {
    if (v != 0.0 && v != 1.0) throw DataError("linear_probe: labels must be 0/1");
    ones += v == 1.0;
  }
  if (ones == 0 || ones == n) {
    res.accuracy = 100.0;
    res.warnings.push_back("linear_probe: labels take a single value; reporting 100%");
    return res;
  }
  if (std::min(ones, n - ones) < 10) throw DataError("linear_probe: each class needs at least 10 rows");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(Rng::derive(seed, 0));
  rng.shuffle(std::span<std::size_t>(order));
  const auto n_test = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(holdout * static_cast<double>(n))));
  const std::span<const std::size_t> test_rows(order.data(), n_test);
  const std::span<const std::size_t> train_rows(order.data() + n_test, n - n_test);

  Tensor xtr = embeddings.select_rows(train_rows);
  Tensor xte = embeddings.select_rows(test_rows);
  const std::size_t d = embeddings.cols();
  for (std::size_t c = 0; c < d; ++c) {
    double mean = 0.0, var = 0.0;
    for (std::size_t r = 0; r < xtr.rows(); ++r) mean += xtr(r, c);
    mean /= static_cast<double>(xtr.rows());
    for (std::size_t r = 0; r < xtr.rows(); ++r) var += (xtr(r, c) - mean) * (xtr(r, c) - mean);
    const double sd = std::sqrt(var / static_cast<double>(xtr.rows()));
    const double scale = sd > 1e-12 ? sd : 1.0;
    for (std::size_t r = 0; r < xtr.rows(); ++r) xtr(r, c) = (xtr(r, c) - mean) / scale;
    for (std::size_t r = 0; r < xte.rows(); ++r) xte(r, c) = (xte(r, c) - mean) / scale;
  }
  const Tensor ytr = labels.select_rows(train_rows);
  const Tensor yte = labels.select_rows(test_rows);
  FitSettings s = settings;
  s.hidden.clear();
  const BinaryClassifier clf = fit_binary_classifier(xtr, ytr, {}, s, Rng::derive(seed, 1));
  res.accuracy = clf.accuracy(xte, yte);
  return res;
}

ProbeResult linear_probe(const Tensor& embeddings, const Tensor& labels, std::uint64_t seed) {
  const FarconConfig defaults = preset("default");
  return linear_probe(embeddings, labels, defaults.probe, defaults.probe_holdout, seed);
}

// Data --------------------------------------------------------------------------

namespace {

std::string resolve(const std::string& path) {
  if (fs::exists(path)) return path;
  if (const char* dir = std::getenv("FARCON_DATA_DIR")) {
    const fs::path alt = fs::path(dir) / fs::path(path).filename();
    if (fs::exists(alt)) return alt.string();
  }
  return path;
}

Tensor s_labels(const Dataset& d) {
  if (d.s_dim() != 1) throw DataError("probes support a single binary sensitive column");
  return d.S.reshaped({d.size()});
}

}  // namespace

PreparedData prepare_data(const FarconConfig& config) {
  config.validate();
  PreparedData out;
  Dataset train, valid, test;
  if (config.data.source == "csv") {
    const TabularSchema schema = TabularSchema::load(resolve(config.data.schema));
    const Dataset all = load_tabular(resolve(config.data.csv), schema);
    SplitResult sp = split(all, config.data.split, config.data.split_seed);
    out.warnings = std::move(sp.warnings);
    train = std::move(sp.train);
    valid = std::move(sp.valid);
    test = std::move(sp.test);
  } else {
    SyntheticSplits syn = make_synthetic_spurious(config.synthetic, config.data.split_seed);
    const double train_share = config.data.split[0] + config.data.split[2];
    SplitResult sp = split(syn.train, {train_share, config.data.split[1], 0.0}, config.data.split_seed);
    out.warnings = std::move(sp.warnings);
    train = std::move(sp.train);
    valid = std::move(sp.valid);
    test = std::move(syn.test);
  }
  const Standardizer st = Standardizer::fit(train);
  st.apply(train);
  st.apply(valid);
  st.apply(test);
  out.full = Dataset::concat(Dataset::concat(train, valid), test);
  out.train = config.data.noise_epsilon > 0.0 ? corrupt_sensitive(train, config.data.noise_epsilon, Rng::derive(config.seed, 7))
                                              : std::move(train);
  out.valid = std::move(valid);
  out.test = std::move(test);
  return out;
}

// Experiments -------------------------------------------------------------------

RunMetrics evaluate_model(const FarconConfig& config, const FarconModel& model, const BinaryClassifier& aux,
                          const PreparedData& data) {
  RunMetrics m;
  m.seed = config.seed;
  m.aux_valid_accuracy = aux.valid_accuracy;
  m.aux_test_accuracy = aux.accuracy(data.test.X, data.test.Y);
  m.y_accuracy = y_accuracy(model, data.test, y_hat(aux, data.test));
  const Tensor s = s_labels(data.full);
  const Tensor zx = encode_dataset(model, data.full, YSource::aux_classifier, &aux, Latent::zx);
  const Tensor zs = encode_dataset(model, data.full, YSource::aux_classifier, &aux, Latent::zs);
  const std::uint64_t probe_seed = Rng::derive(config.seed, 300);
  m.s_probe_accuracy = linear_probe(zx, s, config.probe, config.probe_holdout, probe_seed).accuracy;
  m.zs_probe_accuracy = linear_probe(zs, s, config.probe, config.probe_holdout, probe_seed).accuracy;
  m.mrg = mrg(m.s_probe_accuracy, 100.0 / 2.0);
  return m;
}

RunArtifacts run_experiment(const FarconConfig& config) {
  RunArtifacts a;
  a.data = prepare_data(config);
  a.aux = train_aux_classifier(config, a.data.train, &a.data.valid);
  const PairedDataset paired = build_counterfactual_pairs(a.data.train, config.pairing);
  TrainInputs in;
  in.train = &paired;
  in.valid = &a.data.valid;
  in.aux = &a.aux;
  a.training = train_farcon(config, in);
  a.metrics = evaluate_model(config, a.training.model, a.aux, a.data);
  a.metrics.epochs_run = a.training.history.size();
  if (config.data.source == "synthetic") {
    a.baseline = train_erm_baseline(config, a.data.train, &a.data.valid);
    BaselineMetrics b;
    b.y_accuracy = a.baseline->accuracy([&] {
      const Tensor* parts[] = {&a.data.test.X, &a.data.test.S};
      return Tensor::concat_cols(parts);
    }(), a.data.test.Y);
    b.s_probe_accuracy = linear_probe(baseline_features(*a.baseline, a.data.full), s_labels(a.data.full), config.probe,
                                      config.probe_holdout, Rng::derive(config.seed, 301))
                             .accuracy;
    a.metrics.baseline = b;
  }
  return a;
}

Summary summarize(const std::vector<double>& v) {
  Summary s;
  if (v.empty()) return s;
  s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return s;
}

namespace {

using nlohmann::json;

json run_json(const RunMetrics& m) {
  json j = {{"seed", m.seed},
            {"y_accuracy", m.y_accuracy},
            {"s_probe_accuracy", m.s_probe_accuracy},
            {"mrg", m.mrg},
            {"zs_probe_accuracy", m.zs_probe_accuracy},
            {"aux_valid_accuracy", m.aux_valid_accuracy},
            {"aux_test_accuracy", m.aux_test_accuracy},
            {"epochs_run", m.epochs_run}};
  if (m.baseline) j["baseline"] = {{"y_accuracy", m.baseline->y_accuracy}, {"s_probe_accuracy", m.baseline->s_probe_accuracy}};
  return j;
}

RunMetrics run_from(const json& j) {
  RunMetrics m;
  m.seed = j.at("seed");
  m.y_accuracy = j.at("y_accuracy");
  m.s_probe_accuracy = j.at("s_probe_accuracy");
  m.mrg = j.at("mrg");
  m.zs_probe_accuracy = j.at("zs_probe_accuracy");
  m.aux_valid_accuracy = j.at("aux_valid_accuracy");
  m.aux_test_accuracy = j.at("aux_test_accuracy");
  m.epochs_run = j.at("epochs_run");
  if (j.contains("baseline")) m.baseline = BaselineMetrics{j.at("baseline").at("y_accuracy"), j.at("baseline").at("s_probe_accuracy")};
  return m;
}

json summary_json(const std::vector<RunMetrics>& runs, double RunMetrics::*field) {
  std::vector<double> v;
  for (const auto& r : runs) v.push_back(r.*field);
  const Summary s = summarize(v);
  return {{"mean", s.mean}, {"std", s.std}};
}

}  // namespace

nlohmann::json MetricsReport::to_json() const {
  json j;
  j["preset"] = preset;
  j["config_fingerprint"] = config_fingerprint;
  j["random_guess_s"] = random_guess_s;
  j["majority_rate_s"] = majority_rate_s;
  j["runs"] = json::array();
  for (const auto& r : runs) j["runs"].push_back(run_json(r));
  j["seeds"] = json::array();
  for (const auto& r : runs) j["seeds"].push_back(r.seed);
  j["summary"] = {{"y_accuracy", summary_json(runs, &RunMetrics::y_accuracy)},
                  {"s_probe_accuracy", summary_json(runs, &RunMetrics::s_probe_accuracy)},
                  {"mrg", summary_json(runs, &RunMetrics::mrg)},
                  {"zs_probe_accuracy", summary_json(runs, &RunMetrics::zs_probe_accuracy)}};
  return j;
}

MetricsReport MetricsReport::from_json(const nlohmann::json& j) {
  MetricsReport r;
  try {
    r.preset = j.at("preset");
    r.config_fingerprint = j.at("config_fingerprint");
    r.random_guess_s = j.at("random_guess_s");
    r.majority_rate_s = j.at("majority_rate_s");
    for (const auto& run : j.at("runs")) r.runs.push_back(run_from(run));
  } catch (const json::exception& e) {
    throw DataError(std::string("metrics: ") + e.what());
  }
  return r;
}

MetricsReport run_seeds(const FarconConfig& config, const std::vector<std::uint64_t>& seeds) {
  MetricsReport report;
  report.preset = config.preset;
  report.config_fingerprint = config_fingerprint(config);
  for (std::uint64_t seed : seeds) {
    FarconConfig c = config;
    c.seed = seed;
    RunArtifacts a = run_experiment(c);
    report.majority_rate_s = majority_rate(s_labels(a.data.full));
    report.runs.push_back(a.metrics);
  }
  return report;
}

std::vector<SweepCell> noise_sweep(const FarconConfig& config, const std::vector<double>& epsilons,
                                   const std::vector<std::uint64_t>& seeds) {
  std::vector<SweepCell> cells;
  for (double eps : epsilons) {
    if (!(eps >= 0.0 && eps <= 1.0)) throw ConfigError("noise_sweep: epsilon must lie in [0, 1]");
    for (std::uint64_t seed : seeds) {
      FarconConfig c = config;
      c.data.noise_epsilon = eps;
      c.seed = seed;
      cells.push_back({eps, run_experiment(c).metrics});
    }
  }
  return cells;
}

nlohmann::json sweep_to_json(const FarconConfig& config, const std::vector<SweepCell>& cells) {
  json j;
  j["preset"] = config.preset;
  j["config_fingerprint"] = config_fingerprint(config);
  j["results"] = json::array();
  for (const auto& c : cells) {
    json r = run_json(c.metrics);
    r["epsilon"] = c.epsilon;
    j["results"].push_back(r);
  }
  return j;
}

std::string to_string(const AblationToggles& t) {
  if (t.use_dc && t.use_sr) return "dc+sr";
  if (t.use_dc) return "dc";
  if (t.use_sr) return "sr";
  return "none";
}

FarconConfig ablated(const FarconConfig& config, const AblationToggles& t) {
  FarconConfig c = config;
  c.weights.alpha = t.use_dc ? config.weights.alpha : 0.0;
  c.weights.gamma = t.use_sr ? config.weights.gamma : 0.0;
  return c;
}

MetricsReport ablation_run(const FarconConfig& config, const AblationToggles& toggles,
                           const std::vector<std::uint64_t>& seeds) {
  return run_seeds(ablated(config, toggles), seeds);
}

void export_embeddings(const Tensor& emb, const Tensor& labels_y, const Tensor& labels_s, const std::string& path) {
  const std::size_t n = labels_y.size();
  if (labels_s.size() != n || (emb.size() != 0 && emb.rows() != n)) throw DimensionError("export_embeddings: lengths differ");
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  const std::size_t d = emb.size() == 0 ? (emb.rank() == 2 ? emb.cols() : 0) : emb.cols();
  for (std::size_t c = 0; c < d; ++c) out << "z_" << c << ',';
  out << "y,s\n";
  out << std::setprecision(17);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < d; ++c) out << emb(r, c) << ',';
    out << labels_y[r] << ',' << labels_s[r] << '\n';
  }
  if (!out) throw DataError("write failed: " + path);
}

void write_json(const nlohmann::json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << j.dump(2) << '\n';
  if (!out) throw DataError("write failed: " + path);
}

}  // namespace farcon
