// farcon: train, evaluate and probe FarconVAE models from the command line.
//
// Exit codes: 0 success, 1 usage error, 2 runtime failure.

#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "farcon/config.hpp"
#include "farcon/data.hpp"
#include "farcon/errors.hpp"
#include "farcon/evaluation.hpp"
#include "farcon/model.hpp"
#include "farcon/objectives.hpp"
#include "farcon/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Usage problems detected after argument parsing (bad config, missing files).
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigArgs {
  std::string config_path;
  std::string preset_name;
  std::vector<std::string> overrides;
  std::int64_t seed = -1;
};

void add_config_flags(CLI::App* cmd, ConfigArgs& a) {
  cmd->add_option("--config", a.config_path, "Config JSON file");
  cmd->add_option("--preset", a.preset_name, "Built-in preset: default, adult, german, synthetic, synthetic-wb");
  cmd->add_option("--set", a.overrides, "Override a config key, e.g. --set alpha=0.5 (repeatable)");
  cmd->add_option("--seed", a.seed, "Random seed (overrides the config)");
}

farcon::FarconConfig resolve_config(const ConfigArgs& a) {
  json doc = json::object();
  if (!a.config_path.empty()) {
    std::ifstream in(a.config_path);
    if (!in) throw UsageError("cannot open config file " + a.config_path);
    doc = json::parse(in, nullptr, false);
    if (doc.is_discarded() || !doc.is_object()) throw UsageError("config file " + a.config_path + " is not a JSON object");
  }
  if (!a.preset_name.empty()) doc["preset"] = a.preset_name;
  try {
    for (const auto& o : a.overrides) farcon::apply_override(doc, o);
    if (a.seed >= 0) doc["seed"] = a.seed;
    return farcon::FarconConfig::from_json(doc);
  } catch (const farcon::ConfigError& e) {
    throw UsageError(e.what());
  }
}

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      throw UsageError("cannot parse list item '" + item + "'");
    }
    if (used != item.size()) throw UsageError("cannot parse list item '" + item + "'");
    out.push_back(v);
  }
  return out;
}

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> out;
  for (double v : parse_list(text)) {
    if (v < 0 || v != std::floor(v)) throw UsageError("seeds must be non-negative integers");
    out.push_back(static_cast<std::uint64_t>(v));
  }
  return out;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw farcon::DataError("cannot create output directory " + dir + ": " + ec.message());
}

std::string join(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

void write_history(const farcon::TrainResult& r, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw farcon::DataError("cannot write " + path);
  out << "epoch,beta,total,recon_x,recon_s,pred_y,kld_x,kld_s,dc_positive,dc_negative,sr,valid_y_accuracy\n";
  out << std::setprecision(10);
  for (const auto& e : r.history) {
    const auto& l = e.loss;
    out << e.epoch << ',' << e.beta << ',' << l.total << ',' << l.recon_x << ',' << l.recon_s << ',' << l.pred_y << ','
        << l.kld_x << ',' << l.kld_s << ',' << l.dc_positive << ',' << l.dc_negative << ',' << l.sr << ','
        << e.valid_y_accuracy << '\n';
  }
}

farcon::MetricsReport single_report(const farcon::FarconConfig& c, const farcon::RunArtifacts& a) {
  farcon::MetricsReport rep;
  rep.preset = c.preset;
  rep.config_fingerprint = farcon::config_fingerprint(c);
  rep.majority_rate_s = farcon::majority_rate(a.data.full.S.reshaped({a.data.full.size()}));
  rep.runs.push_back(a.metrics);
  return rep;
}

int cmd_train(const ConfigArgs& args, const std::string& out_dir) {
  const farcon::FarconConfig c = resolve_config(args);
  ensure_dir(out_dir);
  farcon::write_json(c.to_json(), join(out_dir, "config.json"));
  const farcon::RunArtifacts a = farcon::run_experiment(c);
  const farcon::MetricsReport rep = single_report(c, a);
  farcon::write_json(rep.to_json(), join(out_dir, "metrics.json"));
  farcon::save_checkpoint(a.training.model, join(out_dir, "checkpoint.json"));
  farcon::write_json(farcon::mlp_to_json(a.aux.net), join(out_dir, "aux_classifier.json"));
  write_history(a.training, join(out_dir, "history.csv"));
  std::ofstream log(join(out_dir, "train.log"));
  for (const auto& w : a.data.warnings) log << "warning: " << w << '\n';
  log << "epochs run: " << a.training.history.size() << (a.training.stopped_early ? " (early stop)" : "") << '\n';
  log << "aux classifier valid accuracy: " << a.aux.valid_accuracy << '\n';
  const auto& m = a.metrics;
  std::cout << "y_accuracy " << m.y_accuracy << "  s_probe_accuracy " << m.s_probe_accuracy << "  mrg " << m.mrg
            << "  majority_rate_s " << rep.majority_rate_s << '\n';
  return 0;
}

int cmd_eval(const std::string& run_dir, const std::string& out_dir) {
  const std::string cfg_path = join(run_dir, "config.json");
  if (!fs::exists(cfg_path)) throw UsageError(run_dir + " is not a run directory (config.json missing)");
  const farcon::FarconConfig c = farcon::load_config(cfg_path);
  const farcon::FarconModel model = farcon::load_checkpoint(join(run_dir, "checkpoint.json"));
  std::ifstream in(join(run_dir, "aux_classifier.json"));
  if (!in) throw farcon::DataError("aux_classifier.json missing from " + run_dir);
  farcon::BinaryClassifier aux;
  aux.net = farcon::mlp_from_json(json::parse(in));
  const farcon::PreparedData data = farcon::prepare_data(c);
  aux.valid_accuracy = aux.accuracy(data.valid.X, data.valid.Y);
  farcon::MetricsReport rep;
  rep.preset = c.preset;
  rep.config_fingerprint = farcon::config_fingerprint(c);
  rep.majority_rate_s = farcon::majority_rate(data.full.S.reshaped({data.full.size()}));
  rep.runs.push_back(farcon::evaluate_model(c, model, aux, data));
  ensure_dir(out_dir);
  farcon::write_json(rep.to_json(), join(out_dir, "eval_metrics.json"));
  std::cout << rep.to_json().at("summary").dump() << '\n';
  return 0;
}

int cmd_sweep(const ConfigArgs& args, const std::string& eps_text, const std::string& seeds_text, const std::string& out_dir) {
  const farcon::FarconConfig c = resolve_config(args);
  const auto eps = parse_list(eps_text);
  const auto seeds = parse_seeds(seeds_text);
  ensure_dir(out_dir);
  farcon::write_json(c.to_json(), join(out_dir, "config.json"));
  const auto cells = farcon::noise_sweep(c, eps, seeds);
  farcon::write_json(farcon::sweep_to_json(c, cells), join(out_dir, "sweep.json"));
  for (const auto& cell : cells)
    std::cout << "epsilon " << cell.epsilon << " seed " << cell.metrics.seed << "  y " << cell.metrics.y_accuracy << "  mrg "
              << cell.metrics.mrg << '\n';
  return 0;
}

int cmd_ablate(const ConfigArgs& args, const std::string& seeds_text, const std::string& out_dir) {
  const farcon::FarconConfig c = resolve_config(args);
  const auto seeds = parse_seeds(seeds_text);
  ensure_dir(out_dir);
  farcon::write_json(c.to_json(), join(out_dir, "config.json"));
  json out = json::object();
  for (bool dc : {false, true})
    for (bool sr : {false, true}) {
      const farcon::AblationToggles t{dc, sr};
      const auto rep = farcon::ablation_run(c, t, seeds);
      out[farcon::to_string(t)] = rep.to_json();
      std::cout << std::setw(6) << farcon::to_string(t) << "  s_probe " << out[farcon::to_string(t)]["summary"]["s_probe_accuracy"]["mean"]
                << "  mrg " << out[farcon::to_string(t)]["summary"]["mrg"]["mean"] << '\n';
    }
  farcon::write_json(out, join(out_dir, "ablation.json"));
  return 0;
}

int cmd_verify_props(const std::string& out_dir) {
  const farcon::PropositionReport r = farcon::verify_propositions(farcon::PropositionGrid::standard());
  auto stats = [](const farcon::GapStats& s) {
    return json{{"min_gap", s.min_gap}, {"max_gap", s.max_gap}, {"points", s.points}, {"argmin_ratio", s.argmin_ratio}};
  };
  const json j = {{"grid_points", r.grid_points},
                  {"equal_variance", stats(r.equal_variance)},
                  {"equal_mean", stats(r.equal_mean)},
                  {"equal_mean_wide_ratio", stats(r.wide_ratio)},
                  {"prop1_holds", r.prop1_holds},
                  {"prop2_min_holds", r.prop2_min_holds},
                  {"prop2_limit_holds", r.prop2_limit_holds}};
  std::cout << std::setprecision(6);
  std::cout << "grid points                 " << r.grid_points << '\n'
            << "prop 1  (equal variances)   min gap " << r.equal_variance.min_gap << "  max gap " << r.equal_variance.max_gap
            << (r.prop1_holds ? "  OK" : "  FAIL") << '\n'
            << "prop 2i (equal means)       min gap " << r.equal_mean.min_gap << " at sigma ratio "
            << r.equal_mean.argmin_ratio << (r.prop2_min_holds ? "  OK" : "  FAIL") << '\n'
            << "prop 2ii (ratio >= 100)     min gap " << r.wide_ratio.min_gap << (r.prop2_limit_holds ? "  OK" : "  FAIL")
            << '\n';
  if (!out_dir.empty()) {
    ensure_dir(out_dir);
    farcon::write_json(j, join(out_dir, "propositions.json"));
  }
  return r.pass() ? 0 : 2;
}

int cmd_export(const std::string& run_dir, const std::string& latent, const std::string& out_dir) {
  const std::string cfg_path = join(run_dir, "config.json");
  if (!fs::exists(cfg_path)) throw UsageError(run_dir + " is not a run directory (config.json missing)");
  if (latent != "zx" && latent != "zs") throw UsageError("--latent must be zx or zs");
  const farcon::FarconConfig c = farcon::load_config(cfg_path);
  const farcon::FarconModel model = farcon::load_checkpoint(join(run_dir, "checkpoint.json"));
  std::ifstream in(join(run_dir, "aux_classifier.json"));
  if (!in) throw farcon::DataError("aux_classifier.json missing from " + run_dir);
  farcon::BinaryClassifier aux;
  aux.net = farcon::mlp_from_json(json::parse(in));
  const farcon::PreparedData data = farcon::prepare_data(c);
  const farcon::Tensor emb = farcon::encode_dataset(model, data.full, farcon::YSource::aux_classifier, &aux,
                                                    latent == "zx" ? farcon::Latent::zx : farcon::Latent::zs);
  ensure_dir(out_dir);
  const std::string path = join(out_dir, "embeddings_" + latent + ".csv");
  farcon::export_embeddings(emb, data.full.Y, data.full.S.reshaped({data.full.size()}), path);
  std::cout << "wrote " << emb.rows() << " rows to " << path << '\n';
  return 0;
}

int cmd_make_synthetic(std::size_t n, double corr_train, double corr_test, std::uint64_t seed, const std::string& out_dir) {
  if (!(corr_train >= 0 && corr_train <= 1 && corr_test >= 0 && corr_test <= 1))
    throw UsageError("correlations must lie in [0, 1]");
  if (n < 100) throw UsageError("--n must be at least 100");
  const farcon::SyntheticSplits s = farcon::make_synthetic_spurious(n, corr_train, corr_test, seed);
  ensure_dir(out_dir);
  farcon::save_tabular(s.train, join(out_dir, "train.csv"), join(out_dir, "train.schema.json"));
  farcon::save_tabular(s.test, join(out_dir, "test.csv"), join(out_dir, "test.schema.json"));
  std::cout << "wrote " << n << " train and " << n << " test rows to " << out_dir << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"FarconVAE: fair representation learning with distributional contrastive and swap-reconstruction losses"};
  app.require_subcommand(1);

  ConfigArgs train_args, sweep_args, ablate_args;
  std::string out = "runs/latest";
  std::string run_dir, latent = "zx", epsilons = "0,0.1,0.2,0.3", seeds = "0,1,2,3,4";
  std::size_t syn_n = 2000;
  double corr_train = 0.9, corr_test = 0.1;
  std::uint64_t syn_seed = 0;
  std::string props_out;

  auto* train = app.add_subcommand("train", "Train one model and write config, metrics, checkpoint and logs");
  add_config_flags(train, train_args);
  train->add_option("--out", out, "Output directory");

  auto* eval = app.add_subcommand("eval", "Re-score a trained run directory");
  eval->add_option("--run", run_dir, "Run directory written by train")->required();
  eval->add_option("--out", out, "Output directory (defaults to the run directory)");

  auto* sweep = app.add_subcommand("sweep-noise", "Retrain at several s-noise rates");
  add_config_flags(sweep, sweep_args);
  sweep->add_option("--epsilons", epsilons, "Comma-separated noise rates");
  sweep->add_option("--seeds", seeds, "Comma-separated seeds");
  sweep->add_option("--out", out, "Output directory");

  auto* ablate = app.add_subcommand("ablate", "Run the four DC/SR toggle combinations");
  add_config_flags(ablate, ablate_args);
  ablate->add_option("--seeds", seeds, "Comma-separated seeds");
  ablate->add_option("--out", out, "Output directory");

  auto* props = app.add_subcommand("verify-props", "Check the kernel-gap propositions on a parameter grid");
  props->add_option("--out", props_out, "Optional output directory for propositions.json");

  auto* exp = app.add_subcommand("export-embeddings", "Write posterior-mean embeddings of the whole dataset as CSV");
  exp->add_option("--run", run_dir, "Run directory written by train")->required();
  exp->add_option("--latent", latent, "zx or zs");
  exp->add_option("--out", out, "Output directory (defaults to the run directory)");

  auto* syn = app.add_subcommand("make-synthetic", "Write the spurious-correlation dataset as CSV + schema");
  syn->add_option("--n", syn_n, "Rows per split");
  syn->add_option("--corr-train", corr_train, "P(s == y) in train");
  syn->add_option("--corr-test", corr_test, "P(s == y) in test");
  syn->add_option("--seed", syn_seed, "Generation seed");
  syn->add_option("--out", out, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*train) return cmd_train(train_args, out);
    if (*eval) return cmd_eval(run_dir, eval->count("--out") ? out : run_dir);
    if (*sweep) return cmd_sweep(sweep_args, epsilons, seeds, out);
    if (*ablate) return cmd_ablate(ablate_args, seeds, out);
    if (*props) return cmd_verify_props(props_out);
    if (*exp) return cmd_export(run_dir, latent, exp->count("--out") ? out : run_dir);
    if (*syn) return cmd_make_synthetic(syn_n, corr_train, corr_test, syn_seed, out);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  } catch (const farcon::TrainingAborted& e) {
    std::cerr << "error: " << e.what() << " (component: " << e.component() << ")\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
