#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "brafl/core.hpp"

namespace brafl {

enum class BaselineKind { fedavg, median, trimmed_mean, geometric_median, multi_krum };

std::string to_string(BaselineKind kind);
BaselineKind parse_baseline_kind(const std::string& name);

struct BaselineSpec {
  BaselineKind kind = BaselineKind::fedavg;
  /// Fraction trimmed from each extreme (trimmed_mean).
  double beta = 0.0;
  /// Number of retained updates (multi_krum).
  std::size_t krum_l = 0;
  double geomed_tolerance = 1e-10;
  std::size_t geomed_max_iters = 1000;

  void validate(std::size_t num_clients) const;
};

/// sum n_k w_k / sum n_k with n_k = sample_count.
ParamVector aggregate_fedavg(std::span<const ClientUpdate> updates);

/// Coordinate-wise median; even K averages the two middle order statistics.
ParamVector aggregate_median(std::span<const ClientUpdate> updates);

/// Per coordinate, drops floor(beta*K) values from each end and averages the rest.
ParamVector aggregate_trimmed_mean(std::span<const ClientUpdate> updates, double beta);

struct GeometricMedianResult {
  ParamVector point;
  std::size_t iterations = 0;
  double subgradient_norm = 0.0;
  bool converged = false;
};

/// Norm of the minimum-norm subgradient of z -> sum_k ||w_k - z|| at z.
/// Points closer than `coincide_tol` to z contribute the unit ball.
double geometric_median_subgradient_norm(std::span<const ClientUpdate> updates,
                                         const ParamVector& z, double coincide_tol = 0.0);

double geometric_median_objective(std::span<const ClientUpdate> updates, const ParamVector& z);

/// Weiszfeld iteration from the coordinate-wise mean. A data point that
/// already satisfies the vertex optimality condition is returned directly.
GeometricMedianResult geometric_median(std::span<const ClientUpdate> updates,
                                       double tolerance = 1e-10, std::size_t max_iters = 1000);

ParamVector aggregate_geometric_median(std::span<const ClientUpdate> updates,
                                       double tolerance = 1e-10, std::size_t max_iters = 1000);

struct MultiKrumResult {
  ParamVector mean;
  std::vector<double> scores;
  /// Selected client ids, ascending.
  std::vector<std::size_t> selected;
};

/// Krum score of client i: sum of its K - f - 2 smallest squared distances to
/// other clients, with f = K - L. The L lowest scores are averaged.
MultiKrumResult multi_krum(std::span<const ClientUpdate> updates, std::size_t retain);

ParamVector aggregate_multi_krum(std::span<const ClientUpdate> updates, std::size_t retain);

/// Dispatches on spec.kind. pi is all ones, sigma2 is the unweighted variance
/// around the output.
AggregationResult aggregate_baseline(std::span<const ClientUpdate> updates,
                                     const BaselineSpec& spec);

}  // namespace brafl
