#include "farcon/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "farcon/errors.hpp"

namespace farcon {

namespace {

using nlohmann::json;

json fit_json(const FitSettings& f) {
  return {{"hidden", f.hidden},   {"epochs", f.epochs}, {"batch_size", f.batch_size},        {"lr", f.lr},
          {"weight_decay", f.weight_decay}, {"l2", f.l2},         {"group_balance", f.group_balance}};
}

FitSettings fit_from(const json& j) {
  FitSettings f;
  f.hidden = j.at("hidden").get<std::vector<std::size_t>>();
  f.epochs = j.at("epochs");
  f.batch_size = j.at("batch_size");
  f.lr = j.at("lr");
  f.weight_decay = j.at("weight_decay");
  f.l2 = j.at("l2");
  f.group_balance = j.at("group_balance");
  return f;
}

void check_fit(const FitSettings& f, const std::string& name) {
  if (f.epochs < 1) throw ConfigError(name + ".epochs must be at least 1");
  if (f.batch_size < 1) throw ConfigError(name + ".batch_size must be at least 1");
  if (!(f.lr > 0.0) || !std::isfinite(f.lr)) throw ConfigError(name + ".lr must be positive");
  if (!(f.weight_decay >= 0.0) || !(f.l2 >= 0.0)) throw ConfigError(name + ": weight_decay and l2 must be non-negative");
}

// Rejects keys in patch that the reference document does not have.
void check_known(const json& reference, const json& patch, const std::string& path) {
  if (!patch.is_object()) return;
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    const std::string key = path.empty() ? it.key() : path + "." + it.key();
    if (!reference.contains(it.key())) throw ConfigError("unknown config key '" + key + "'");
    const json& ref = reference.at(it.key());
    if (ref.is_object()) {
      if (!it.value().is_object()) throw ConfigError("config key '" + key + "' must be an object");
      check_known(ref, it.value(), key);
    }
  }
}

FarconConfig tabular(const std::string& name, std::size_t z) {
  FarconConfig c;
  c.preset = name;
  c.zx_dim = c.zs_dim = z;
  c.architecture = Architecture{};
  c.weights = {1.0, 0.2, 0.0, KernelKind::gaussian};
  c.lr = 1e-3;
  c.weight_decay = 1e-4;
  c.epochs = 300;
  c.batch_size = 64;
  c.patience = 30;
  c.data.source = "csv";
  c.data.csv = "data/" + name + ".csv";
  c.data.schema = "data/" + name + ".schema.json";
  c.aux = {{64}, 30, 64, 1e-3, 1e-4, 0.0, false};
  return c;
}

}  // namespace

void FarconConfig::validate() const {
  if (zx_dim < 1 || zs_dim < 1) throw ConfigError("zx_dim and zs_dim must be at least 1");
  weights.validate();
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be positive");
  if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) throw ConfigError("weight_decay must be non-negative");
  if (epochs < 1) throw ConfigError("epochs must be at least 1");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (!(beta_anneal_fraction >= 0.0 && beta_anneal_fraction <= 1.0)) throw ConfigError("beta_anneal_fraction must lie in [0, 1]");
  if (data.source != "csv" && data.source != "synthetic") throw ConfigError("data.source must be 'csv' or 'synthetic'");
  if (data.source == "csv" && (data.csv.empty() || data.schema.empty())) throw ConfigError("data.csv and data.schema are required for csv data");
  double total = 0.0;
  for (double f : data.split) {
    if (!(f >= 0.0)) throw ConfigError("data.split fractions must be non-negative");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("data.split fractions must sum to 1");
  if (!(data.noise_epsilon >= 0.0 && data.noise_epsilon <= 1.0)) throw ConfigError("data.noise_epsilon must lie in [0, 1]");
  if (synthetic.n < 100) throw ConfigError("synthetic.n must be at least 100");
  for (double c : {synthetic.corr_train, synthetic.corr_test})
    if (!(c >= 0.0 && c <= 1.0)) throw ConfigError("synthetic correlations must lie in [0, 1]");
  check_fit(aux, "aux");
  check_fit(baseline, "baseline");
  check_fit(probe, "probe");
  if (!(probe_holdout > 0.0 && probe_holdout < 1.0)) throw ConfigError("probe_holdout must lie in (0, 1)");
}

nlohmann::json FarconConfig::to_json() const {
  json j;
  j["preset"] = preset;
  j["seed"] = seed;
  j["zx_dim"] = zx_dim;
  j["zs_dim"] = zs_dim;
  j["architecture"] = {{"encoder_hidden", architecture.encoder_hidden},
                       {"decoder_hidden", architecture.decoder_hidden},
                       {"predictor_hidden", architecture.predictor_hidden},
                       {"activation", std::string(to_string(architecture.activation))}};
  j["alpha"] = weights.alpha;
  j["beta"] = weights.beta;
  j["gamma"] = weights.gamma;
  j["kernel"] = to_string(weights.kernel);
  j["lr"] = lr;
  j["weight_decay"] = weight_decay;
  j["epochs"] = epochs;
  j["batch_size"] = batch_size;
  j["beta_anneal_fraction"] = beta_anneal_fraction;
  j["patience"] = patience;
  j["pairing"] = to_string(pairing);
  j["data"] = {{"source", data.source}, {"csv", data.csv},           {"schema", data.schema},
               {"split", data.split},   {"split_seed", data.split_seed}, {"noise_epsilon", data.noise_epsilon}};
  j["synthetic"] = {{"n", synthetic.n},
                    {"corr_train", synthetic.corr_train},
                    {"corr_test", synthetic.corr_test},
                    {"core_dim", synthetic.core_dim},
                    {"core_shift", synthetic.core_shift},
                    {"spurious_dim", synthetic.spurious_dim}};
  j["aux"] = fit_json(aux);
  j["baseline"] = fit_json(baseline);
  j["probe"] = fit_json(probe);
  j["probe_holdout"] = probe_holdout;
  return j;
}

FarconConfig FarconConfig::from_json(const nlohmann::json& patch) {
  if (!patch.is_object()) throw ConfigError("config must be a JSON object");
  const std::string base_name = patch.contains("preset") ? patch.at("preset").get<std::string>() : "default";
  json doc = farcon::preset(base_name).to_json();
  check_known(doc, patch, "");
  doc.merge_patch(patch);
  FarconConfig c;
  try {
    c.preset = doc.at("preset");
    c.seed = doc.at("seed");
    c.zx_dim = doc.at("zx_dim");
    c.zs_dim = doc.at("zs_dim");
    const json& a = doc.at("architecture");
    c.architecture.encoder_hidden = a.at("encoder_hidden").get<std::vector<std::size_t>>();
    c.architecture.decoder_hidden = a.at("decoder_hidden").get<std::vector<std::size_t>>();
    c.architecture.predictor_hidden = a.at("predictor_hidden").get<std::vector<std::size_t>>();
    c.architecture.activation = activation_from_string(a.at("activation").get<std::string>());
    c.weights.alpha = doc.at("alpha");
    c.weights.beta = doc.at("beta");
    c.weights.gamma = doc.at("gamma");
    c.weights.kernel = kernel_from_string(doc.at("kernel"));
    c.lr = doc.at("lr");
    c.weight_decay = doc.at("weight_decay");
    c.epochs = doc.at("epochs");
    c.batch_size = doc.at("batch_size");
    c.beta_anneal_fraction = doc.at("beta_anneal_fraction");
    c.patience = doc.at("patience");
    c.pairing = pair_strategy_from_string(doc.at("pairing"));
    const json& d = doc.at("data");
    c.data.source = d.at("source");
    c.data.csv = d.at("csv");
    c.data.schema = d.at("schema");
    c.data.split = d.at("split").get<std::array<double, 3>>();
    c.data.split_seed = d.at("split_seed");
    c.data.noise_epsilon = d.at("noise_epsilon");
    const json& s = doc.at("synthetic");
    c.synthetic.n = s.at("n");
    c.synthetic.corr_train = s.at("corr_train");
    c.synthetic.corr_test = s.at("corr_test");
    c.synthetic.core_dim = s.at("core_dim");
    c.synthetic.core_shift = s.at("core_shift");
    c.synthetic.spurious_dim = s.at("spurious_dim");
    c.aux = fit_from(doc.at("aux"));
    c.baseline = fit_from(doc.at("baseline"));
    c.probe = fit_from(doc.at("probe"));
    c.probe_holdout = doc.at("probe_holdout");
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

FarconConfig preset(const std::string& name) {
  if (name == "default") {
    FarconConfig c;
    c.aux = {{64}, 30, 64, 1e-3, 1e-4, 0.0, false};
    c.baseline = {{64}, 100, 64, 1e-3, 0.0, 0.1, false};
    c.probe = {{}, 200, 64, 1e-2, 0.0, 1e-4, false};
    return c;
  }
  if (name == "adult") {
    FarconConfig c = tabular("adult", 15);
    c.probe = preset("default").probe;
    c.baseline = preset("default").baseline;
    return c;
  }
  if (name == "german") {
    FarconConfig c = tabular("german", 5);
    c.probe = preset("default").probe;
    c.baseline = preset("default").baseline;
    return c;
  }
  if (name == "synthetic" || name == "synthetic-wb") {
    FarconConfig c = preset("default");
    c.preset = name;
    c.data.source = "synthetic";
    c.data.split = {0.9, 0.1, 0.0};
    c.zx_dim = c.zs_dim = 8;
    c.epochs = 100;
    // The spurious block is many identical columns, so Adam's step noise on
    // them adds up along the s direction of z_x; larger batches keep it small.
    c.batch_size = 256;
    c.aux.group_balance = true;
    if (name == "synthetic") {
      c.weights = {1.0, 0.2, 0.0, KernelKind::student_t};
      c.lr = 1e-3;
      c.weight_decay = 1e-4;
    } else {
      c.weights = {0.5, 0.2, 0.5, KernelKind::student_t};
      c.lr = 7e-4;
      c.weight_decay = 1e-4;
      c.beta_anneal_fraction = 0.1;
    }
    return c;
  }
  throw ConfigError("unknown preset '" + name + "'");
}

std::vector<std::string> preset_names() { return {"default", "adult", "german", "synthetic", "synthetic-wb"}; }

void apply_override(nlohmann::json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' must look like key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError("override key '" + key + "' has an empty component");
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    if (!node->contains(part)) (*node)[part] = json::object();
    node = &(*node)[part];
    if (!node->is_object()) throw ConfigError("override key '" + key + "': '" + part + "' is not an object");
    start = dot + 1;
  }
}

FarconConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ConfigError("config file " + path + " is not valid JSON");
  return FarconConfig::from_json(j);
}

std::string config_fingerprint(const FarconConfig& config) {
  const std::string canonical = config.to_json().dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : canonical) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace farcon
