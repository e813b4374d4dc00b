// Acceptance run: one PASS/FAIL line per criterion. Usage:
//   brafl_acceptance [output_dir] [path/to/brafl]
// When the CLI path is given, the determinism check runs it as a subprocess.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "brafl/baselines.hpp"
#include "brafl/bra.hpp"
#include "brafl/experiment.hpp"
#include "brafl/fedsim.hpp"
#include "brafl/model.hpp"
#include "brafl/oracle.hpp"
#include "oracles.hpp"

using namespace brafl;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* spec, double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, x);
  return buf;
}

double dist(const ParamVector& a, const ParamVector& b) { return std::sqrt(squared_distance(a, b)); }

fs::path g_out = "acceptance_out";
std::string g_cli;

// Desk-scale federated configurations.
const std::string kBase =
    "dataset = synthetic\n"
    "partition.clients = 20\n"
    "partition.alpha = 100\n"
    "rounds = 30\n";

const std::string kDynamic =
    "dataset = synthetic\n"
    "partition.clients = 10\n"
    "partition.alpha = 100\n"
    "train.local_epochs = 5\n"
    "aggregator = bra\n"
    "attack = sign_flip\n"
    "adversary.mode = dynamic\n"
    "rounds = 25\n";

constexpr std::size_t kWindow = 10;
const std::vector<std::uint64_t> kSeeds{0, 1, 2};

std::vector<RoundRecord> run_text(const std::string& text, const std::map<std::string, std::string>& overrides) {
  return run_federated(parse_config(text, overrides));
}

// ---------------------------------------------------------------------------

Outcome elbo_ascent() {
  Rng rng(1, 100);
  std::size_t instances = 0;
  std::size_t checked = 0;
  std::size_t violations = 0;
  double worst = 0.0;
  for (; instances < 1200; ++instances) {
    const std::size_t k = 4 + rng.index(47);
    const std::size_t d = 1 + rng.index(64);
    const auto updates = oracle::cluster_mixture(rng, k, d);
    BraTrace trace;
    aggregate_bra(updates, {}, &trace);
    for (std::size_t i = 1; i < trace.size(); ++i) {
      if (trace[i].epsilon_clamped || trace[i].sigma2_floored) continue;
      ++checked;
      const double drop = trace[i - 1].elbo - trace[i].elbo;
      const double scale = std::abs(trace[i - 1].elbo);
      if (drop > 1e-9 * scale) ++violations;
      if (scale > 0.0) worst = std::max(worst, drop / scale);
    }
  }
  return {violations == 0 && checked > 0,
          "instances=" + std::to_string(instances) + " iterations_checked=" + std::to_string(checked) +
              " violations=" + std::to_string(violations) + " worst_relative_drop=" + fmt("%.3g", worst)};
}

Outcome certificate() {
  Rng rng(2, 100);
  std::size_t failures = 0;
  std::size_t subsets = 0;
  double worst = 0.0;
  const std::size_t instances = 240;
  for (std::size_t i = 0; i < instances; ++i) {
    const std::size_t k = 4 + rng.index(7);
    const std::size_t m = rng.index((k - 1) / 2 + 1);
    const std::size_t d = 1 + rng.index(6);
    const auto updates = i % 2 == 0 ? oracle::cluster_mixture(rng, k, d)
                                    : oracle::planted_instance(rng, k, d, m, 1.0, 1.0 + 20.0 * rng.uniform()).updates;
    const auto sol = brute_force_subset(updates, m);
    const auto report = check_robust_bound(sol.centroid, updates, m);
    subsets += report.subsets_checked;
    worst = std::max(worst, report.worst_ratio);
    if (!report.satisfied || report.worst_ratio > 1.0 + 1e-9) ++failures;
  }
  return {failures == 0, "instances=" + std::to_string(instances) + " subsets_checked=" + std::to_string(subsets) +
                             " failures=" + std::to_string(failures) + " worst_ratio=" + fmt("%.6f", worst)};
}

struct PlantedCase {
  oracle::PlantedInstance inst;
  std::size_t k = 0;
  std::size_t m = 0;
};

// Honest std 1e-3; outliers at `lo`..`hi` times the largest honest radius.
std::vector<PlantedCase> planted_family(std::uint64_t seed, std::size_t count, bool all_m, double lo = 10.0,
                                        double hi = 50.0) {
  Rng rng(seed, 100);
  std::vector<PlantedCase> out;
  while (out.size() < count) {
    const std::size_t k = 4 + rng.index(7);
    const std::size_t d = 1 + rng.index(10);
    const std::size_t max_m = (k - 1) / 2;
    std::vector<std::size_t> ms;
    if (all_m) {
      for (std::size_t m = 0; m <= max_m; ++m) ms.push_back(m);
    } else {
      ms.push_back(rng.index(max_m + 1));
    }
    for (std::size_t m : ms) {
      const double factor = lo * std::pow(hi / lo, rng.uniform());
      out.push_back({oracle::planted_instance(rng, k, d, m, 1e-3, factor), k, m});
    }
  }
  return out;
}

struct FamilyScore {
  std::size_t instances = 0;
  std::size_t failures = 0;
  double worst_gap = 0.0;
  double min_benign = 1.0;
  double max_malicious = 0.0;
  double worst_eps = 0.0;
};

FamilyScore score_fidelity(const std::vector<PlantedCase>& family) {
  FamilyScore out;
  out.instances = family.size();
  for (const auto& c : family) {
    const auto r = aggregate_bra(c.inst.updates);
    const auto sol = brute_force_subset(c.inst.updates, c.m);
    const double tol = 1e-4 * (1.0 + std::sqrt(squared_norm(sol.centroid)));
    const double gap = dist(r.mean, sol.centroid);
    out.worst_gap = std::max(out.worst_gap, gap / tol);
    bool ok = gap <= tol;
    for (std::size_t id : c.inst.honest) {
      out.min_benign = std::min(out.min_benign, r.pi[id]);
      ok = ok && r.pi[id] >= 0.9;
    }
    for (std::size_t id : c.inst.outliers) {
      out.max_malicious = std::max(out.max_malicious, r.pi[id]);
      ok = ok && r.pi[id] <= 0.1;
    }
    out.failures += !ok;
  }
  return out;
}

FamilyScore score_epsilon(const std::vector<PlantedCase>& family) {
  FamilyScore out;
  out.instances = family.size();
  for (const auto& c : family) {
    const auto r = aggregate_bra(c.inst.updates);
    const double kd = static_cast<double>(c.k);
    const double err = std::abs(r.epsilon_hat - static_cast<double>(c.m) / kd);
    out.worst_eps = std::max(out.worst_eps, err * kd);
    bool ok = err <= 1.0 / kd;
    if (c.m == 0) ok = ok && r.epsilon_hat <= 1.0 / (2.0 * kd) + 1.0 / kd;
    out.failures += !ok;
  }
  return out;
}

Outcome fidelity() {
  const auto s = score_fidelity(planted_family(3, 150, false));
  const auto wide = score_fidelity(planted_family(3, 150, false, 1e3, 1e4));
  return {s.failures == 0, "separation=10x-50x instances=" + std::to_string(s.instances) + " failures=" +
                               std::to_string(s.failures) + " worst_gap/tol=" + fmt("%.3g", s.worst_gap) +
                               " min_benign_pi=" + fmt("%.4f", s.min_benign) + " max_malicious_pi=" +
                               fmt("%.3g", s.max_malicious) + " | separation=1e3x-1e4x failures=" +
                               std::to_string(wide.failures) + "/" + std::to_string(wide.instances)};
}

Outcome epsilon_adaptivity() {
  const auto s = score_epsilon(planted_family(4, 150, true));
  const auto wide = score_epsilon(planted_family(4, 150, true, 1e3, 1e4));
  return {s.failures == 0, "separation=10x-50x instances=" + std::to_string(s.instances) + " failures=" +
                               std::to_string(s.failures) + " worst_K*|eps_hat-M/K|=" + fmt("%.4f", s.worst_eps) +
                               " | separation=1e3x-1e4x failures=" + std::to_string(wide.failures) + "/" +
                               std::to_string(wide.instances)};
}

Outcome sign_flip_analogue() {
  bool pass = true;
  std::ostringstream detail;
  for (std::uint64_t seed : kSeeds) {
    const std::string s = std::to_string(seed);
    const double benign = window_mean_acc(run_text(kBase, {{"aggregator", "fedavg"}, {"seed", s}}), kWindow);
    const std::map<std::string, std::string> attack{
        {"attack", "sign_flip"}, {"attack.gamma", "4"}, {"adversary.fraction", "0.4"}, {"seed", s}};
    auto with = [&](std::map<std::string, std::string> extra) {
      extra.insert(attack.begin(), attack.end());
      return window_mean_acc(run_text(kBase, extra), kWindow);
    };
    const double fedavg = with({{"aggregator", "fedavg"}});
    const double bra = with({{"aggregator", "bra"}});
    const double krum = with({{"aggregator", "multi_krum"}, {"aggregator.krum_l", "12"}});
    pass = pass && fedavg <= 0.30 && std::abs(bra - benign) <= 0.02 && std::abs(krum - benign) <= 0.02;
    detail << "seed" << seed << "[benign=" << fmt("%.3f", benign) << " fedavg=" << fmt("%.3f", fedavg)
           << " bra=" << fmt("%.3f", bra) << " krum=" << fmt("%.3f", krum) << "] ";
  }
  return {pass, detail.str()};
}

Outcome backdoor_analogue() {
  bool pass = true;
  std::ostringstream detail;
  for (std::uint64_t seed : kSeeds) {
    const std::string s = std::to_string(seed);
    const double benign = window_mean_acc(run_text(kBase, {{"aggregator", "fedavg"}, {"seed", s}}), kWindow);
    detail << "seed" << seed << "[benign=" << fmt("%.3f", benign);
    for (const char* fraction : {"0.2", "0.4"}) {
      const std::map<std::string, std::string> attack{{"attack", "backdoor"},
                                                      {"attack.source_class", "0"},
                                                      {"attack.target_class", "8"},
                                                      {"adversary.fraction", fraction},
                                                      {"seed", s}};
      auto run_with = [&](const char* agg) {
        auto o = attack;
        o["aggregator"] = agg;
        return run_text(kBase, o);
      };
      const auto fed = run_with("fedavg");
      const auto bra = run_with("bra");
      const double fed_asr = *window_mean_asr(fed, kWindow);
      const double bra_asr = *window_mean_asr(bra, kWindow);
      const double bra_acc = window_mean_acc(bra, kWindow);
      pass = pass && fed_asr >= 0.8 && bra_asr <= 0.05 && std::abs(bra_acc - benign) <= 0.02;
      detail << " eps" << fraction << ":fedavg_asr=" << fmt("%.3f", fed_asr) << ",bra_asr=" << fmt("%.3f", bra_asr)
             << ",bra_acc=" << fmt("%.3f", bra_acc);
    }
    detail << "] ";
  }
  return {pass, detail.str()};
}

Outcome dynamic_tracking() {
  bool pass = true;
  std::ostringstream detail;
  for (const char* fraction : {"0.2", "0.3", "0.4"}) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const auto cfg = parse_config(kDynamic, {{"adversary.fraction", fraction}, {"seed", std::to_string(seed)}});
      const auto records = run_federated(cfg);
      const std::size_t k = cfg.partition.num_clients;
      std::size_t count_ok = 0;
      std::size_t class_ok = 0;
      std::size_t both_ok = 0;
      for (const auto& r : records) {
        const long estimate = std::lround(static_cast<double>(k) * *r.epsilon_hat);
        const long actual = static_cast<long>(r.actual_malicious.size());
        const bool count = std::abs(estimate - actual) <= 2;
        std::size_t correct = 0;
        for (std::size_t id = 0; id < k; ++id) {
          const bool flagged = (*r.pi)[id] < 0.5;
          correct += flagged == r.actual_malicious.contains(id);
        }
        const bool classified = static_cast<double>(correct) / static_cast<double>(k) >= 0.9;
        count_ok += count;
        class_ok += classified;
        both_ok += count && classified;
      }
      const double rounds = static_cast<double>(records.size());
      const bool ok = static_cast<double>(both_ok) / rounds >= 0.9;
      pass = pass && ok;
      if (!ok || seed == 0) {
        detail << "eps" << fraction << "/seed" << seed << "[count=" << fmt("%.2f", count_ok / rounds)
               << " classify=" << fmt("%.2f", class_ok / rounds) << "] ";
      }
    }
  }
  return {pass, "runs=15 rounds=25 " + detail.str()};
}

Outcome baseline_oracles() {
  Rng rng(8, 100);
  const std::size_t instances = 150;
  std::size_t median_bad = 0;
  std::size_t trimmed_bad = 0;
  std::size_t krum_bad = 0;
  std::size_t geomed_bad = 0;
  std::size_t line_bad = 0;
  double worst_sub = 0.0;
  for (std::size_t i = 0; i < instances; ++i) {
    const std::size_t k = 3 + rng.index(20);
    const std::size_t d = 1 + rng.index(12);
    const auto updates = oracle::cluster_mixture(rng, k, d);

    median_bad += aggregate_median(updates).vec() != oracle::sort_median(updates);

    const std::size_t trim = rng.index((k - 1) / 2 + 1);
    const double beta = static_cast<double>(trim) / static_cast<double>(k);
    trimmed_bad += aggregate_trimmed_mean(updates, beta).vec() != oracle::sort_trimmed_mean(updates, trim);

    const std::size_t l = 3 + rng.index(k - 2);
    krum_bad += multi_krum(updates, l).scores != oracle::naive_krum_scores(updates, l - 2);

    const auto gm = geometric_median(updates);
    std::vector<double> g(d, 0.0);
    double coincident = 0.0;
    for (const auto& u : updates) {
      const double r = dist(u.params, gm.point);
      if (r == 0.0) {
        coincident += 1.0;
        continue;
      }
      for (std::size_t j = 0; j < d; ++j) g[j] += (gm.point[j] - u.params[j]) / r;
    }
    double n2 = 0.0;
    for (double v : g) n2 += v * v;
    const double sub = std::max(0.0, std::sqrt(n2) - coincident);
    worst_sub = std::max(worst_sub, sub);
    geomed_bad += sub > 1e-6;

    const std::size_t odd = 2 * rng.index(10) + 1;
    std::vector<std::vector<double>> line(odd, std::vector<double>(1));
    for (auto& p : line) p[0] = rng.normal(0.0, 10.0);
    const auto pts = make_updates(line);
    line_bad += std::abs(aggregate_geometric_median(pts)[0] - oracle::sort_median(pts)[0]) > 1e-8;
  }
  const bool pass = median_bad + trimmed_bad + krum_bad + geomed_bad + line_bad == 0;
  return {pass, "instances=" + std::to_string(instances) + " median_mismatch=" + std::to_string(median_bad) +
                    " trimmed_mismatch=" + std::to_string(trimmed_bad) + " krum_mismatch=" + std::to_string(krum_bad) +
                    " geomed_over_tol=" + std::to_string(geomed_bad) + " worst_subgradient=" + fmt("%.3g", worst_sub) +
                    " median_1d_mismatch=" + std::to_string(line_bad)};
}

Outcome gradient_check() {
  Rng rng(9, 100);
  const std::size_t pairs = 60;
  std::size_t failures = 0;
  double worst = 0.0;
  for (std::size_t i = 0; i < pairs; ++i) {
    const std::size_t y = 2 + rng.index(9);
    const std::size_t d = 1 + rng.index(12);
    Dataset batch{d, y, {}, {}};
    const std::size_t n = 1 + rng.index(32);
    for (std::size_t s = 0; s < n; ++s) {
      for (std::size_t j = 0; j < d; ++j) batch.features.push_back(rng.normal());
      batch.labels.push_back(static_cast<ClassId>(rng.index(y)));
    }
    std::vector<double> params(LogisticModel::param_count(y, d));
    for (auto& p : params) p = rng.normal(0.0, 0.5);
    const double wd = i % 3 == 0 ? 0.0 : 1e-2;
    const auto analytic = model_loss_and_grad(LogisticModel(y, d, ParamVector(params)), batch, wd).grad;
    const auto numeric = oracle::finite_difference_grad(y, d, params, batch, wd, 1e-5);
    double diff = 0.0;
    double norm = 0.0;
    for (std::size_t j = 0; j < params.size(); ++j) {
      diff += (analytic[j] - numeric[j]) * (analytic[j] - numeric[j]);
      norm += numeric[j] * numeric[j];
    }
    const double rel = std::sqrt(diff) / std::sqrt(norm);
    worst = std::max(worst, rel);
    failures += !(rel <= 1e-5);
  }
  return {failures == 0, "pairs=" + std::to_string(pairs) + " failures=" + std::to_string(failures) +
                             " worst_relative_error=" + fmt("%.3g", worst)};
}

std::string metrics_bytes(const fs::path& dir) { return read_text_file(dir / "metrics.csv"); }

Outcome determinism() {
  const std::string text = kBase + "aggregator = bra\nattack = sign_flip\nadversary.fraction = 0.2\n";
  const fs::path base = g_out / "determinism";
  fs::create_directories(base);
  bool identical = false;
  std::string how;
  if (!g_cli.empty()) {
    const fs::path cfg = base / "run.cfg";
    {
      std::ofstream(cfg) << text;
    }
    auto run = [&](const char* sub) {
      const std::string cmd = "\"" + g_cli + "\" run \"" + cfg.string() + "\" --out \"" + (base / sub).string() +
                              "\" > \"" + (base / (std::string(sub) + ".log")).string() + "\" 2>&1";
      return std::system(cmd.c_str()) == 0;
    };
    const bool ran = run("a") && run("b");
    identical = ran && metrics_bytes(base / "a") == metrics_bytes(base / "b");
    how = "cli";
  } else {
    const auto cfg = parse_config(text);
    run_experiment(cfg, "inline", base / "a");
    run_experiment(cfg, "inline", base / "b");
    identical = metrics_bytes(base / "a") == metrics_bytes(base / "b");
    how = "library";
  }

  std::vector<SweepRow> bra_rows;
  std::vector<SweepRow> fed_rows;
  sweep(kBase + "aggregator = bra\nattack = sign_flip\n", "inline", {0.0}, base / "sweep_bra", &bra_rows);
  sweep(kBase + "aggregator = fedavg\nattack = sign_flip\n", "inline", {0.0}, base / "sweep_fedavg", &fed_rows);
  const double gap = std::abs(bra_rows[0].acc - fed_rows[0].acc);
  return {identical && gap <= 0.01, "runs_via=" + how + " metrics_identical=" + (identical ? "yes" : "no") +
                                        " acc_bra=" + fmt("%.4f", bra_rows[0].acc) + " acc_fedavg=" +
                                        fmt("%.4f", fed_rows[0].acc) + " gap=" + fmt("%.4f", gap)};
}

}  // namespace

int main(int argc, char** argv) {
  if (argc > 1) g_out = argv[1];
  if (argc > 2) g_cli = argv[2];
  fs::create_directories(g_out);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"elbo_coordinate_ascent", elbo_ascent},
      {"subset_certificate", certificate},
      {"relaxation_fidelity", fidelity},
      {"epsilon_adaptivity", epsilon_adaptivity},
      {"sign_flip_desk_scale", sign_flip_analogue},
      {"backdoor_desk_scale", backdoor_analogue},
      {"dynamic_adversary_tracking", dynamic_tracking},
      {"baseline_oracles", baseline_oracles},
      {"gradient_correctness", gradient_check},
      {"determinism_and_benign_parity", determinism},
  };

  std::size_t failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto& [name, fn] = criteria[i];
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const std::chrono::duration<double> secs = std::chrono::steady_clock::now() - start;
    failed += !o.pass;
    std::printf("%s %2zu %-30s %s (%.1fs)\n", o.pass ? "PASS" : "FAIL", i + 1, name.c_str(), o.detail.c_str(),
                secs.count());
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria passed\n", criteria.size() - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
