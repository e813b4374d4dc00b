#include "selftest.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "brafl/baselines.hpp"
#include "brafl/bra.hpp"
#include "brafl/dataset.hpp"
#include "brafl/fedsim.hpp"
#include "brafl/model.hpp"
#include "brafl/oracle.hpp"
#include "brafl/rng.hpp"

namespace brafl_tools {

namespace {

using namespace brafl;

std::vector<ClientUpdate> random_round(Rng& rng, std::size_t k, std::size_t d, std::size_t outliers) {
  std::vector<std::vector<double>> pts(k, std::vector<double>(d));
  for (std::size_t c = 0; c < k; ++c) {
    for (auto& x : pts[c]) x = rng.normal(0.0, 0.1);
  }
  for (std::size_t c = 0; c < outliers && c < k; ++c) {
    for (auto& x : pts[c]) x += rng.normal(0.0, 5.0);
  }
  return make_updates(pts);
}

bool elbo_monotone() {
  Rng rng(11, 1);
  for (int i = 0; i < 100; ++i) {
    const std::size_t k = 4 + rng.index(20);
    const auto updates = random_round(rng, k, 1 + rng.index(8), rng.index(k / 2));
    BraTrace trace;
    aggregate_bra(updates, {}, &trace);
    for (std::size_t t = 1; t < trace.size(); ++t) {
      if (trace[t].epsilon_clamped || trace[t].sigma2_floored) continue;
      if (trace[t].elbo < trace[t - 1].elbo - 1e-9 * std::abs(trace[t - 1].elbo)) return false;
    }
  }
  return true;
}

bool permutation_equivariance() {
  Rng rng(12, 1);
  for (int i = 0; i < 50; ++i) {
    const std::size_t k = 4 + rng.index(12);
    const auto updates = random_round(rng, k, 1 + rng.index(6), rng.index(k / 2));
    std::vector<std::size_t> perm(k);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    std::vector<ClientUpdate> shuffled;
    for (std::size_t j = 0; j < k; ++j) shuffled.push_back({j, updates[perm[j]].params, 1});
    const auto a = aggregate_bra(updates);
    const auto b = aggregate_bra(shuffled);
    if (std::sqrt(squared_distance(a.mean, b.mean)) > 1e-9 * (1.0 + std::sqrt(squared_norm(a.mean)))) {
      return false;
    }
    for (std::size_t j = 0; j < k; ++j) {
      if (std::abs(a.pi[perm[j]] - b.pi[j]) > 1e-9) return false;
    }
  }
  return true;
}

bool certificate() {
  Rng rng(13, 1);
  for (int i = 0; i < 30; ++i) {
    const std::size_t k = 4 + rng.index(5);
    const std::size_t m = rng.index((k - 1) / 2 + 1);
    const auto updates = random_round(rng, k, 1 + rng.index(4), m);
    const auto sol = brute_force_subset(updates, m);
    if (!check_robust_bound(sol.centroid, updates, m).satisfied) return false;
  }
  return true;
}

bool median_oracle() {
  Rng rng(14, 1);
  for (int i = 0; i < 50; ++i) {
    const std::size_t k = 1 + rng.index(15);
    const std::size_t d = 1 + rng.index(5);
    const auto updates = random_round(rng, k, d, 0);
    const auto med = aggregate_median(updates);
    for (std::size_t j = 0; j < d; ++j) {
      std::vector<double> col;
      for (const auto& u : updates) col.push_back(u.params[j]);
      std::sort(col.begin(), col.end());
      const double want = k % 2 ? col[k / 2] : 0.5 * (col[k / 2 - 1] + col[k / 2]);
      if (med[j] != want) return false;
    }
  }
  return true;
}

bool gradient_check() {
  Rng rng(15, 1);
  for (int i = 0; i < 10; ++i) {
    const std::size_t y = 2 + rng.index(4);
    const std::size_t d = 1 + rng.index(5);
    Dataset batch = make_synthetic_dataset(y, d, 3, 1.0, rng);
    std::vector<double> p(LogisticModel::param_count(y, d));
    for (auto& v : p) v = rng.normal(0.0, 0.5);
    const LogisticModel model(y, d, ParamVector(p));
    const auto g = model_loss_and_grad(model, batch, 1e-3).grad;
    for (std::size_t j = 0; j < p.size(); ++j) {
      auto hi = p;
      auto lo = p;
      hi[j] += 1e-5;
      lo[j] -= 1e-5;
      const double fd = (model_loss_and_grad(LogisticModel(y, d, ParamVector(hi)), batch, 1e-3).loss -
                         model_loss_and_grad(LogisticModel(y, d, ParamVector(lo)), batch, 1e-3).loss) /
                        2e-5;
      if (std::abs(fd - g[j]) > 1e-5 * std::max(1.0, std::abs(g[j]))) return false;
    }
  }
  return true;
}

bool exact_cover() {
  Rng rng(16, 1);
  for (int i = 0; i < 10; ++i) {
    const Dataset ds = make_synthetic_dataset(5, 5, 20, 0.5, rng);
    const auto parts = dirichlet_partition(ds, {1 + rng.index(20), 0.5}, rng);
    std::vector<int> seen(ds.size(), 0);
    for (const auto& p : parts) {
      if (p.empty()) return false;
      for (std::size_t idx : p) ++seen[idx];
    }
    if (std::any_of(seen.begin(), seen.end(), [](int c) { return c != 1; })) return false;
  }
  return true;
}

bool deterministic_run() {
  FedRunConfig cfg;
  cfg.data = SyntheticDataSpec{4, 4, 20, 20, 0.5};
  cfg.partition = {5, 1.0};
  cfg.training.local_epochs = 1;
  cfg.rounds = 3;
  cfg.master_seed = 7;
  ParamVector a = ParamVector::zeros(1);
  ParamVector b = ParamVector::zeros(1);
  run_federated(cfg, &a);
  run_federated(cfg, &b);
  return a == b;
}

}  // namespace

bool run_selftest(std::ostream& out) {
  const std::vector<std::pair<std::string, std::function<bool()>>> checks = {
      {"elbo_monotone", elbo_monotone},
      {"bra_permutation_equivariance", permutation_equivariance},
      {"subset_certificate", certificate},
      {"median_vs_sort", median_oracle},
      {"gradient_vs_finite_difference", gradient_check},
      {"partition_exact_cover", exact_cover},
      {"run_determinism", deterministic_run},
  };
  bool ok = true;
  for (const auto& [name, fn] : checks) {
    bool passed = false;
    try {
      passed = fn();
    } catch (const std::exception& e) {
      out << name << ": exception " << e.what() << '\n';
    }
    out << (passed ? "ok   " : "FAIL ") << name << '\n';
    ok = ok && passed;
  }
  return ok;
}

}  // namespace brafl_tools
