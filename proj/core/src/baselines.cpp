#include "brafl/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace brafl {

namespace {

std::vector<double> column(std::span<const ClientUpdate> updates, std::size_t i) {
  std::vector<double> col(updates.size());
  for (std::size_t k = 0; k < updates.size(); ++k) col[k] = updates[k].params[i];
  return col;
}

std::size_t trim_count(double beta, std::size_t k) {
  return static_cast<std::size_t>(std::floor(beta * static_cast<double>(k) + 1e-9));
}

}  // namespace

std::string to_string(BaselineKind kind) {
  switch (kind) {
    case BaselineKind::fedavg: return "fedavg";
    case BaselineKind::median: return "median";
    case BaselineKind::trimmed_mean: return "trimmed_mean";
    case BaselineKind::geometric_median: return "geometric_median";
    case BaselineKind::multi_krum: return "multi_krum";
  }
  return "unknown";
}

BaselineKind parse_baseline_kind(const std::string& name) {
  for (auto k : {BaselineKind::fedavg, BaselineKind::median, BaselineKind::trimmed_mean,
                 BaselineKind::geometric_median, BaselineKind::multi_krum}) {
    if (to_string(k) == name) return k;
  }
  throw Error("unknown aggregator '" + name + "'");
}

void BaselineSpec::validate(std::size_t num_clients) const {
  switch (kind) {
    case BaselineKind::trimmed_mean: {
      if (!(beta >= 0.0 && beta < 0.5)) throw Error("trimmed_mean: beta must lie in [0, 0.5)");
      const std::size_t m = trim_count(beta, num_clients);
      if (num_clients < 2 * m + 1) throw Error("trimmed_mean: over-trimming leaves no values");
      break;
    }
    case BaselineKind::multi_krum:
      if (krum_l < 2 || krum_l > num_clients) throw Error("multi_krum: need 2 <= L <= K");
      if (krum_l < 3) throw Error("multi_krum: K too small for f = K - L (need K - f - 2 >= 1)");
      break;
    case BaselineKind::geometric_median:
      if (!(geomed_tolerance > 0.0) || geomed_max_iters == 0) {
        throw Error("geometric_median: tolerance and max_iters must be positive");
      }
      break;
    default: break;
  }
}

ParamVector aggregate_fedavg(std::span<const ClientUpdate> updates) {
  validate_round(updates);
  std::vector<double> weights(updates.size());
  for (std::size_t k = 0; k < updates.size(); ++k) {
    weights[k] = static_cast<double>(updates[k].sample_count);
  }
  return weighted_centroid(updates, weights);
}

ParamVector aggregate_median(std::span<const ClientUpdate> updates) {
  const std::size_t dim = validate_round(updates);
  const std::size_t k = updates.size();
  std::vector<double> out(dim);
  for (std::size_t i = 0; i < dim; ++i) {
    auto col = column(updates, i);
    std::sort(col.begin(), col.end());
    out[i] = (k % 2 == 1) ? col[k / 2] : 0.5 * (col[k / 2 - 1] + col[k / 2]);
  }
  return ParamVector(std::move(out));
}

ParamVector aggregate_trimmed_mean(std::span<const ClientUpdate> updates, double beta) {
  const std::size_t dim = validate_round(updates);
  const std::size_t k = updates.size();
  BaselineSpec{BaselineKind::trimmed_mean, beta}.validate(k);
  const std::size_t m = trim_count(beta, k);
  std::vector<double> out(dim);
  for (std::size_t i = 0; i < dim; ++i) {
    auto col = column(updates, i);
    std::sort(col.begin(), col.end());
    double acc = 0.0;
    for (std::size_t j = m; j < k - m; ++j) acc += col[j];
    out[i] = acc / static_cast<double>(k - 2 * m);
  }
  return ParamVector(std::move(out));
}

double geometric_median_objective(std::span<const ClientUpdate> updates, const ParamVector& z) {
  double acc = 0.0;
  for (const auto& u : updates) acc += std::sqrt(squared_distance(u.params, z));
  return acc;
}

double geometric_median_subgradient_norm(std::span<const ClientUpdate> updates,
                                         const ParamVector& z, double coincide_tol) {
  const std::size_t dim = validate_round(updates);
  std::vector<double> g(dim, 0.0);
  double coincident = 0.0;
  for (const auto& u : updates) {
    const double dist = std::sqrt(squared_distance(u.params, z));
    if (dist <= coincide_tol) {
      coincident += 1.0;
      continue;
    }
    for (std::size_t i = 0; i < dim; ++i) g[i] += (z[i] - u.params[i]) / dist;
  }
  double norm = 0.0;
  for (double x : g) norm += x * x;
  norm = std::sqrt(norm);
  return std::max(0.0, norm - coincident);
}

GeometricMedianResult geometric_median(std::span<const ClientUpdate> updates, double tolerance,
                                       std::size_t max_iters) {
  validate_round(updates);
  const std::size_t k = updates.size();

  // Vertex check: w_j is optimal iff the pull of the other points has norm at
  // most its multiplicity.
  for (std::size_t j = 0; j < k; ++j) {
    bool seen = false;
    for (std::size_t p = 0; p < j && !seen; ++p) seen = updates[p].params == updates[j].params;
    if (seen) continue;
    const double norm = geometric_median_subgradient_norm(updates, updates[j].params, 0.0);
    if (norm == 0.0) return GeometricMedianResult{updates[j].params, 0, 0.0, true};
  }

  constexpr double kRegularizer = 1e-12;
  const std::vector<double> ones(k, 1.0);
  ParamVector z = weighted_centroid(updates, ones);
  GeometricMedianResult best{z, 0, geometric_median_subgradient_norm(updates, z), false};
  double best_obj = geometric_median_objective(updates, z);
  if (best.subgradient_norm <= tolerance) {
    best.converged = true;
    return best;
  }

  // Plain Weiszfeld crawls when the minimizer sits near a data point, so the
  // step is stretched along the Weiszfeld direction while that keeps lowering
  // the objective.
  std::vector<double> weights(k);
  double stretch = 1.0;
  for (std::size_t it = 1; it <= max_iters; ++it) {
    for (std::size_t j = 0; j < k; ++j) {
      weights[j] = 1.0 / (std::sqrt(squared_distance(updates[j].params, z)) + kRegularizer);
    }
    const ParamVector plain = weighted_centroid(updates, weights);
    double obj = geometric_median_objective(updates, plain);
    ParamVector next = plain;
    if (stretch > 1.0) {
      const ParamVector far = z + stretch * (plain - z);
      const double far_obj = geometric_median_objective(updates, far);
      if (far_obj < obj) {
        next = far;
        obj = far_obj;
        stretch = std::min(2.0 * stretch, 1e6);
      } else {
        stretch = std::max(1.0, stretch / 4.0);
      }
    } else {
      stretch = 2.0;
    }
    z = next;
    const double sub = geometric_median_subgradient_norm(updates, z);
    if (obj <= best_obj) {
      best_obj = obj;
      best.point = z;
      best.subgradient_norm = sub;
    }
    best.iterations = it;
    if (sub <= tolerance) {
      best.point = z;
      best.subgradient_norm = sub;
      best.converged = true;
      break;
    }
  }
  return best;
}

ParamVector aggregate_geometric_median(std::span<const ClientUpdate> updates, double tolerance,
                                       std::size_t max_iters) {
  return geometric_median(updates, tolerance, max_iters).point;
}

MultiKrumResult multi_krum(std::span<const ClientUpdate> updates, std::size_t retain) {
  validate_round(updates);
  const std::size_t k = updates.size();
  BaselineSpec{BaselineKind::multi_krum, 0.0, retain}.validate(k);
  const std::size_t byzantine = k - retain;
  const std::size_t neighbors = k - byzantine - 2;

  std::vector<double> dist(k * k, 0.0);
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = i + 1; j < k; ++j) {
      dist[i * k + j] = dist[j * k + i] = squared_distance(updates[i].params, updates[j].params);
    }
  }

  MultiKrumResult out{updates.front().params, std::vector<double>(k), {}};
  std::vector<double> row;
  for (std::size_t i = 0; i < k; ++i) {
    row.clear();
    for (std::size_t j = 0; j < k; ++j) {
      if (j != i) row.push_back(dist[i * k + j]);
    }
    std::partial_sort(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(neighbors), row.end());
    double acc = 0.0;
    for (std::size_t n = 0; n < neighbors; ++n) acc += row[n];
    out.scores[i] = acc;
  }

  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return out.scores[a] < out.scores[b]; });
  out.selected.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(retain));
  std::sort(out.selected.begin(), out.selected.end());

  std::vector<double> weights(k, 0.0);
  for (std::size_t id : out.selected) weights[id] = 1.0;
  out.mean = weighted_centroid(updates, weights);
  return out;
}

ParamVector aggregate_multi_krum(std::span<const ClientUpdate> updates, std::size_t retain) {
  return multi_krum(updates, retain).mean;
}

AggregationResult aggregate_baseline(std::span<const ClientUpdate> updates,
                                     const BaselineSpec& spec) {
  validate_round(updates);
  spec.validate(updates.size());
  AggregationResult res{updates.front().params, 0.0, {}, 0.0, 0.0, 0, 0.0, true};
  bool converged = true;
  std::size_t iterations = 0;
  switch (spec.kind) {
    case BaselineKind::fedavg: res.mean = aggregate_fedavg(updates); break;
    case BaselineKind::median: res.mean = aggregate_median(updates); break;
    case BaselineKind::trimmed_mean: res.mean = aggregate_trimmed_mean(updates, spec.beta); break;
    case BaselineKind::geometric_median: {
      auto gm = geometric_median(updates, spec.geomed_tolerance, spec.geomed_max_iters);
      res.mean = std::move(gm.point);
      converged = gm.converged;
      iterations = gm.iterations;
      break;
    }
    case BaselineKind::multi_krum: res.mean = aggregate_multi_krum(updates, spec.krum_l); break;
  }
  res.pi.assign(updates.size(), 1.0);
  res.sigma2 = unweighted_variance(updates, res.mean);
  res.epsilon_hat = 0.0;
  res.epsilon_clamped = 0.0;
  res.iterations = iterations;
  res.converged = converged;
  return res;
}

}  // namespace brafl
