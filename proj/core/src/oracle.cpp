#include "brafl/oracle.hpp"

#include <algorithm>
#include <limits>
#include <string>

namespace brafl {

namespace {

void check_enumerable(std::size_t k, std::size_t m) {
  if (2 * m >= k) {
    throw Error("oracle: requires M < K/2 (K=" + std::to_string(k) + ", M=" + std::to_string(m) +
                ")");
  }
  if (binomial(k, k - m) > kMaxSubsets) {
    throw Error("oracle: C(" + std::to_string(k) + "," + std::to_string(k - m) +
                ") subsets exceed the enumeration guard of 1e6; use a smaller K");
  }
}

}  // namespace

double binomial(std::size_t n, std::size_t r) {
  if (r > n) return 0.0;
  if (r > n - r) r = n - r;
  double acc = 1.0;
  for (std::size_t i = 1; i <= r; ++i) {
    acc = acc * static_cast<double>(n - r + i) / static_cast<double>(i);
  }
  return acc;
}

ParamVector subset_centroid(std::span<const ClientUpdate> updates,
                            std::span<const std::size_t> subset) {
  std::vector<double> weights(updates.size(), 0.0);
  for (std::size_t id : subset) weights.at(id) = 1.0;
  return weighted_centroid(updates, weights);
}

double subset_objective(std::span<const ClientUpdate> updates, std::span<const std::size_t> subset) {
  const ParamVector c = subset_centroid(updates, subset);
  double acc = 0.0;
  for (std::size_t id : subset) acc += squared_distance(updates[id].params, c);
  return acc;
}

SubsetSolution brute_force_subset(std::span<const ClientUpdate> updates, std::size_t num_malicious) {
  validate_round(updates);
  const std::size_t k = updates.size();
  check_enumerable(k, num_malicious);

  SubsetSolution best{{}, updates.front().params, 0.0};
  bool have = false;
  for_each_subset(k, k - num_malicious, [&](std::span<const std::size_t> s) {
    const double obj = subset_objective(updates, s);
    if (!have || obj < best.objective) {
      have = true;
      best.objective = obj;
      best.subset.assign(s.begin(), s.end());
    }
  });
  best.centroid = subset_centroid(updates, best.subset);
  return best;
}

double robustness_kappa(std::size_t num_clients, std::size_t num_malicious) {
  if (2 * num_malicious >= num_clients) {
    throw Error("robustness_kappa: requires M < K/2");
  }
  const double k = static_cast<double>(num_clients);
  const double m = static_cast<double>(num_malicious);
  return 4.0 * (1.0 + m / (k - 2.0 * m));
}

RobustnessReport check_robust_bound(const ParamVector& aggregate,
                                    std::span<const ClientUpdate> updates,
                                    std::size_t num_malicious) {
  validate_round(updates);
  const std::size_t k = updates.size();
  check_enumerable(k, num_malicious);
  if (aggregate.dim() != updates.front().params.dim()) {
    throw Error("check_robust_bound: aggregate dim " + std::to_string(aggregate.dim()) +
                " vs update dim " + std::to_string(updates.front().params.dim()));
  }

  RobustnessReport report;
  report.kappa = robustness_kappa(k, num_malicious);
  const double scale = report.kappa / static_cast<double>(k - num_malicious);
  for_each_subset(k, k - num_malicious, [&](std::span<const std::size_t> b) {
    const ParamVector cb = subset_centroid(updates, b);
    double spread = 0.0;
    for (std::size_t id : b) spread += squared_distance(updates[id].params, cb);
    const double lhs = squared_distance(aggregate, cb);
    const double rhs = scale * spread;
    double ratio = 0.0;
    if (rhs > 0.0) {
      ratio = lhs / rhs;
    } else if (lhs > 0.0) {
      ratio = std::numeric_limits<double>::infinity();
    }
    report.worst_ratio = std::max(report.worst_ratio, ratio);
    ++report.subsets_checked;
  });
  report.satisfied = report.worst_ratio <= 1.0 + 1e-9;
  return report;
}

std::size_t count_triangle_violations(std::span<const ClientUpdate> updates,
                                      std::span<const std::size_t> subset_s,
                                      std::size_t num_malicious) {
  validate_round(updates);
  const std::size_t k = updates.size();
  check_enumerable(k, num_malicious);
  const ParamVector cs = subset_centroid(updates, subset_s);
  std::size_t violations = 0;
  for_each_subset(k, k - num_malicious, [&](std::span<const std::size_t> b) {
    const ParamVector cb = subset_centroid(updates, b);
    const double lhs = squared_distance(cs, cb);
    for (std::size_t id : b) {
      const double rhs = 2.0 * squared_distance(updates[id].params, cs) +
                         2.0 * squared_distance(updates[id].params, cb);
      if (lhs > rhs * (1.0 + 1e-12) + 1e-300) ++violations;
    }
  });
  return violations;
}

}  // namespace brafl
