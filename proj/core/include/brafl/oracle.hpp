#pragma once

// Exact ground truth for the trimmed least-squares objective
//   min_{|S| = K - M} sum_{k in S} ||w_k - mean(S)||^2
// and an executable check of its (M, kappa)-robustness guarantee. Both
// enumerate all C(K, K - M) subsets and refuse beyond kMaxSubsets.

#include <cstddef>
#include <span>
#include <vector>

#include "brafl/core.hpp"

namespace brafl {

inline constexpr double kMaxSubsets = 1e6;

/// C(n, r) as a double (exact for the sizes we accept).
double binomial(std::size_t n, std::size_t r);

struct SubsetSolution {
  /// Ascending client indices, |subset| = K - M.
  std::vector<std::size_t> subset;
  ParamVector centroid;
  double objective = 0.0;
};

/// Sum of squared distances of the chosen points to their own centroid.
double subset_objective(std::span<const ClientUpdate> updates, std::span<const std::size_t> subset);

ParamVector subset_centroid(std::span<const ClientUpdate> updates,
                            std::span<const std::size_t> subset);

/// Calls fn(subset) for every size-`size` subset of {0..n-1} in lexicographic order.
template <typename Fn>
void for_each_subset(std::size_t n, std::size_t size, Fn&& fn) {
  std::vector<std::size_t> idx(size);
  for (std::size_t i = 0; i < size; ++i) idx[i] = i;
  if (size > n) return;
  while (true) {
    fn(std::span<const std::size_t>(idx));
    std::size_t i = size;
    while (i > 0 && idx[i - 1] == n - size + i - 1) --i;
    if (i == 0) return;
    ++idx[i - 1];
    for (std::size_t j = i; j < size; ++j) idx[j] = idx[j - 1] + 1;
  }
}

/// Exhaustive minimizer; ties go to the lexicographically smallest subset.
SubsetSolution brute_force_subset(std::span<const ClientUpdate> updates, std::size_t num_malicious);

/// kappa = 4 (1 + M / (K - 2M)). Requires M < K/2.
double robustness_kappa(std::size_t num_clients, std::size_t num_malicious);

struct RobustnessReport {
  double kappa = 0.0;
  /// max over B of ||agg - mean(B)||^2 / (kappa/(K-M) sum_B ||w_k - mean(B)||^2);
  /// 0/0 counts as 0.
  double worst_ratio = 0.0;
  bool satisfied = true;
  /// Subsets B examined.
  std::size_t subsets_checked = 0;
};

RobustnessReport check_robust_bound(const ParamVector& aggregate,
                                    std::span<const ClientUpdate> updates,
                                    std::size_t num_malicious);

/// Checks 2||w_k - mean(S)||^2 + 2||w_k - mean(B)||^2 >= ||mean(S) - mean(B)||^2
/// for the given S, every B of size K - M and every k in B. Returns the number
/// of violations (always 0 up to rounding).
std::size_t count_triangle_violations(std::span<const ClientUpdate> updates,
                                      std::span<const std::size_t> subset_s,
                                      std::size_t num_malicious);

}  // namespace brafl
