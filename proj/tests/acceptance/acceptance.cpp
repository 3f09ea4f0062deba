// End-to-end acceptance checks. One line per criterion:
//   [PASS] 4 adult  ...details...
// Usage: farcon_acceptance [criterion numbers...] [--known-red N]...
// A criterion listed with --known-red still prints FAIL when it fails but does
// not make the exit status non-zero.

#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "farcon/evaluation.hpp"
#include "farcon/gradcheck.hpp"
#include "farcon/objectives.hpp"
#include "farcon/probdist.hpp"

using namespace farcon;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

class Clock {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::vector<std::uint64_t> seeds(std::uint64_t n) {
  std::vector<std::uint64_t> s(n);
  for (std::uint64_t i = 0; i < n; ++i) s[i] = i;
  return s;
}

double mean_of(const std::vector<RunMetrics>& runs, double RunMetrics::*f) {
  double s = 0.0;
  for (const auto& r : runs) s += r.*f;
  return s / static_cast<double>(runs.size());
}

std::string per_seed(const std::vector<RunMetrics>& runs, double RunMetrics::*f) {
  std::string out = "[";
  for (std::size_t i = 0; i < runs.size(); ++i) out += fmt(i ? " %.1f" : "%.1f", runs[i].*f);
  return out + "]";
}

// 1 -----------------------------------------------------------------------------

Outcome gradient_check() {
  const Clock clock;
  double worst = 0.0;
  bool pass = true;
  for (auto kernel : {KernelKind::gaussian, KernelKind::student_t}) {
    Rng rng(42);
    FarconModel model = make_model({5, 1, 1, 3, 3}, {{6}, {6}, {}, Activation::tanh}, {false, false, false, true, true}, rng);
    const std::size_t n = 8;
    PairBatch b{Tensor::zeros(n, 5), Tensor::zeros(n, 1), Tensor::zeros(n, 1), Tensor::zeros(n, 5), Tensor::zeros(n, 1),
                std::vector<PairSource>(n, PairSource::matched_neighbor)};
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t c = 0; c < 5; ++c) {
        b.x(r, c) = c < 3 ? rng.normal() : rng.bernoulli(0.5);
        b.x_cf(r, c) = c < 3 ? rng.normal() : rng.bernoulli(0.5);
      }
      b.s[r] = rng.bernoulli(0.5);
      b.s_cf[r] = 1.0 - b.s[r];
      b.y[r] = rng.bernoulli(0.5);
    }
    const PairNoise noise = PairNoise::sample(n, model.dims, rng);
    const LossWeights w{1.0, 0.2, 0.5, kernel};
    const GradCheckReport r = finite_diff_check(
        model.parameters(),
        [&](ad::Graph& g, std::span<const ad::Var> v) {
          return total_loss(model, forward_pair(g, model, bind_from(model, v), b, noise), w).total;
        },
        1e-5, 1e-4);
    worst = std::max(worst, r.max_rel_err);
    pass = pass && r.pass;
  }
  const double t = clock.seconds();
  return {pass && worst <= 1e-4 && t < 10.0, fmt("max rel err %.2e (<= 1e-4), %.2f s (< 10 s)", worst, t)};
}

// 2 -----------------------------------------------------------------------------

Outcome propositions() {
  const Clock clock;
  const PropositionGrid grid = PropositionGrid::standard();
  const PropositionReport r = verify_propositions(grid);
  const double t = clock.seconds();
  const bool p1 = r.equal_variance.min_gap >= -1e-12;
  const bool p2i = std::abs(r.equal_mean.min_gap) <= 1e-9 && r.equal_mean.argmin_ratio == 1.0;
  const bool p2ii = r.wide_ratio.min_gap > 0.0;
  return {grid.points() >= 10000 && p1 && p2i && p2ii && t < 5.0,
          fmt("%zu points; prop1 min gap %.2e; prop2(i) min gap %.2e at ratio %g; prop2(ii) min gap %.3e; %.2f s",
              grid.points(), r.equal_variance.min_gap, r.equal_mean.min_gap, r.equal_mean.argmin_ratio,
              r.wide_ratio.min_gap, t)};
}

// 3 -----------------------------------------------------------------------------

Outcome kl_monte_carlo() {
  Rng rng(7);
  const int draws = 100, samples = 100000;
  int inside = 0;
  double worst_z = 0.0;
  for (int k = 0; k < draws; ++k) {
    const std::size_t d = 1 + static_cast<std::size_t>(rng.uniform() * 4);
    Tensor mp = Tensor::zeros(1, d), lp = Tensor::zeros(1, d), mq = Tensor::zeros(1, d), lq = Tensor::zeros(1, d);
    for (std::size_t i = 0; i < d; ++i) {
      mp[i] = rng.uniform(-2, 2);
      mq[i] = rng.uniform(-2, 2);
      lp[i] = rng.uniform(-2, 2);
      lq[i] = rng.uniform(-2, 2);
    }
    const double closed = probdist::kl_diag_gaussian(probdist::DiagGaussian(mp, lp), probdist::DiagGaussian(mq, lq));
    // E_p[log p(z) - log q(z)], densities written out directly.
    double sum = 0.0, sum_sq = 0.0;
    for (int s = 0; s < samples; ++s) {
      double diff = 0.0;
      for (std::size_t i = 0; i < d; ++i) {
        const double z = mp[i] + std::exp(0.5 * lp[i]) * rng.normal();
        const double lpz = -0.5 * (std::log(2 * M_PI) + lp[i] + (z - mp[i]) * (z - mp[i]) / std::exp(lp[i]));
        const double lqz = -0.5 * (std::log(2 * M_PI) + lq[i] + (z - mq[i]) * (z - mq[i]) / std::exp(lq[i]));
        diff += lpz - lqz;
      }
      sum += diff;
      sum_sq += diff * diff;
    }
    const double mean = sum / samples;
    const double se = std::sqrt((sum_sq / samples - mean * mean) / (samples - 1));
    const double z = std::abs(mean - closed) / se;
    worst_z = std::max(worst_z, z);
    inside += z <= 3.0;
  }
  return {inside == draws, fmt("%d/%d draws within 3 SE at 1e5 samples; worst |z| %.2f", inside, draws, worst_z)};
}

// 4, 5 --------------------------------------------------------------------------

Outcome adult() {
  const Clock clock;
  const MetricsReport r = run_seeds(preset("adult"), seeds(5));
  const double y = mean_of(r.runs, &RunMetrics::y_accuracy), s = mean_of(r.runs, &RunMetrics::s_probe_accuracy);
  const double limit = r.majority_rate_s + 1.5;
  return {y >= 83.5 && s <= limit,
          fmt("y %.2f (>= 83.5), s-probe %.2f (<= %.2f = majority %.2f + 1.5) per seed %s; %.0f s/seed", y, s, limit,
              r.majority_rate_s, per_seed(r.runs, &RunMetrics::s_probe_accuracy).c_str(), clock.seconds() / 5)};
}

Outcome german() {
  const Clock clock;
  const MetricsReport r = run_seeds(preset("german"), seeds(10));
  const double y = mean_of(r.runs, &RunMetrics::y_accuracy), m = mean_of(r.runs, &RunMetrics::mrg);
  return {y >= 78.0 && m >= 85.0,
          fmt("y %.2f (>= 78), MRG %.2f (>= 85), s-probe %.2f, majority %.2f; %.1f s/seed", y, m,
              mean_of(r.runs, &RunMetrics::s_probe_accuracy), r.majority_rate_s, clock.seconds() / 10)};
}

// 6 -----------------------------------------------------------------------------

Outcome noise_robustness() {
  const FarconConfig c = preset("german");
  const auto cells = noise_sweep(c, {0.0, 0.3}, seeds(5));
  const auto ablation = noise_sweep(ablated(c, {false, false}), {0.3}, seeds(5));
  double clean = 0.0, noisy = 0.0, abl = 0.0;
  for (const auto& cell : cells) (cell.epsilon == 0.0 ? clean : noisy) += cell.metrics.mrg / 5;
  for (const auto& cell : ablation) abl += cell.metrics.mrg / 5;
  return {noisy > abl && clean - noisy <= 10.0,
          fmt("MRG at eps 0.3: %.2f vs ablation %.2f; degradation from eps 0: %.2f pp (<= 10)", noisy, abl, clean - noisy)};
}

// 7 -----------------------------------------------------------------------------

Outcome ablation_direction() {
  const FarconConfig c = preset("synthetic-wb");
  const auto none = ablation_run(c, {false, false}, seeds(5)).runs;
  const auto dc = ablation_run(c, {true, false}, seeds(5)).runs;
  const auto both = ablation_run(c, {true, true}, seeds(5)).runs;
  const double s0 = mean_of(none, &RunMetrics::s_probe_accuracy), s1 = mean_of(dc, &RunMetrics::s_probe_accuracy),
               s2 = mean_of(both, &RunMetrics::s_probe_accuracy);
  const double m1 = mean_of(dc, &RunMetrics::mrg), m2 = mean_of(both, &RunMetrics::mrg);
  return {s0 > s1 && s1 >= s2 && m2 >= m1,
          fmt("s-probe none %.2f > dc %.2f >= dc+sr %.2f; MRG dc+sr %.2f >= dc %.2f", s0, s1, s2, m2, m1)};
}

// 8 -----------------------------------------------------------------------------

Outcome spurious() {
  const Clock clock;
  const MetricsReport r = run_seeds(preset("synthetic"), seeds(5));
  const double y = mean_of(r.runs, &RunMetrics::y_accuracy), s = mean_of(r.runs, &RunMetrics::s_probe_accuracy);
  double by = 0.0, bs = 0.0;
  for (const auto& run : r.runs) {
    by += run.baseline->y_accuracy / 5;
    bs += run.baseline->s_probe_accuracy / 5;
  }
  const double per_run = clock.seconds() / 5;
  return {y >= 85.0 && by <= 50.0 && s <= 60.0 && bs >= 85.0 && per_run < 120.0,
          fmt("y %.2f (>= 85) vs ERM %.2f (<= 50); s-probe %.2f (<= 60) per seed %s vs ERM %.2f (>= 85); %.1f s/run", y,
              by, s, per_seed(r.runs, &RunMetrics::s_probe_accuracy).c_str(), bs, per_run)};
}

// 9 -----------------------------------------------------------------------------

int run_cli(const std::string& args) {
  const std::string cmd = std::string("\"") + FARCON_CLI_PATH + "\" " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome determinism() {
  const fs::path root = fs::temp_directory_path() / ("farcon_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(root);
  bool pass = true;
  std::string detail;
  for (const std::string args : {"--preset german --seed 3", "--preset synthetic --seed 1"}) {
    const fs::path a = root / "a", b = root / "b";
    const int ca = run_cli("train " + args + " --out " + a.string());
    const int cb = run_cli("train " + args + " --out " + b.string());
    const std::string ma = slurp(a / "metrics.json"), mb = slurp(b / "metrics.json");
    const bool same = ca == 0 && cb == 0 && !ma.empty() && ma == mb;
    pass = pass && same;
    detail += (detail.empty() ? "" : "; ") + args + (same ? ": byte-identical" : ": DIFFERENT");
    fs::remove_all(root);
  }
  return {pass, detail};
}

}  // namespace

int main(int argc, char** argv) {
  setenv("FARCON_DATA_DIR", FARCON_DATA_DIR, 0);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"gradient correctness", gradient_check},
      {"kernel propositions", propositions},
      {"KL Monte-Carlo agreement", kl_monte_carlo},
      {"Adult reproduction", adult},
      {"German reproduction", german},
      {"noise robustness (German)", noise_robustness},
      {"ablation direction (synthetic)", ablation_direction},
      {"spurious-correlation generalization", spurious},
      {"determinism", determinism},
  };

  std::set<int> selected, known_red;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--known-red" && i + 1 < argc) {
      known_red.insert(std::atoi(argv[++i]));
    } else {
      selected.insert(std::atoi(a.c_str()));
    }
  }

  int failures = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    const int id = static_cast<int>(k + 1);
    if (!selected.empty() && !selected.count(id)) continue;
    Outcome o;
    try {
      o = criteria[k].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const bool tolerated = !o.pass && known_red.count(id);
    std::cout << (o.pass ? "[PASS] " : "[FAIL] ") << id << ' ' << criteria[k].first << ": " << o.detail
              << (tolerated ? "  (known red)" : "") << std::endl;
    if (!o.pass && !tolerated) ++failures;
  }
  return failures == 0 ? 0 : 1;
}
