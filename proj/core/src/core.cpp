#include "brafl/core.hpp"

#include <cmath>

namespace brafl {

namespace {

void require_finite(const std::vector<double>& v) {
  if (v.empty()) throw Error("ParamVector: dim must be positive");
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i])) {
      throw Error("ParamVector: non-finite entry at index " + std::to_string(i));
    }
  }
}

void require_same_dim(const ParamVector& a, const ParamVector& b) {
  if (a.dim() != b.dim()) {
    throw Error("dimension mismatch: " + std::to_string(a.dim()) + " vs " +
                std::to_string(b.dim()));
  }
}

}  // namespace

ParamVector::ParamVector(std::vector<double> values) : values_(std::move(values)) {
  require_finite(values_);
}

ParamVector::ParamVector(std::initializer_list<double> values) : values_(values) {
  require_finite(values_);
}

ParamVector ParamVector::zeros(std::size_t dim) {
  return ParamVector(std::vector<double>(dim, 0.0));
}

ParamVector operator+(const ParamVector& a, const ParamVector& b) {
  require_same_dim(a, b);
  std::vector<double> out(a.dim());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return ParamVector(std::move(out));
}

ParamVector operator-(const ParamVector& a, const ParamVector& b) {
  require_same_dim(a, b);
  std::vector<double> out(a.dim());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  return ParamVector(std::move(out));
}

ParamVector operator*(double s, const ParamVector& a) {
  std::vector<double> out(a.dim());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = s * a[i];
  return ParamVector(std::move(out));
}

double squared_norm(const ParamVector& a) {
  double acc = 0.0;
  for (double x : a.values()) acc += x * x;
  return acc;
}

double squared_distance(const ParamVector& a, const ParamVector& b) {
  require_same_dim(a, b);
  double acc = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) {
    const double diff = a[i] - b[i];
    acc += diff * diff;
  }
  return acc;
}

std::vector<ClientUpdate> make_updates(const std::vector<std::vector<double>>& points) {
  std::vector<ClientUpdate> out;
  out.reserve(points.size());
  for (std::size_t k = 0; k < points.size(); ++k) {
    out.push_back(ClientUpdate{k, ParamVector(points[k]), 1});
  }
  return out;
}

std::size_t validate_round(std::span<const ClientUpdate> updates) {
  if (updates.empty()) throw Error("empty round: no client updates");
  const std::size_t dim = updates.front().params.dim();
  for (std::size_t k = 0; k < updates.size(); ++k) {
    if (updates[k].client_id != k) {
      throw Error("client ids must be 0..K-1 in order; position " + std::to_string(k) +
                  " has id " + std::to_string(updates[k].client_id));
    }
    if (updates[k].params.dim() != dim) {
      throw Error("dimension mismatch: client 0 has dim " + std::to_string(dim) +
                  ", client " + std::to_string(k) + " has dim " +
                  std::to_string(updates[k].params.dim()));
    }
  }
  return dim;
}

ParamVector weighted_centroid(std::span<const ClientUpdate> updates,
                              std::span<const double> weights) {
  const std::size_t dim = validate_round(updates);
  if (weights.size() != updates.size()) {
    throw Error("weighted_centroid: " + std::to_string(weights.size()) + " weights for " +
                std::to_string(updates.size()) + " updates");
  }
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw Error("weighted_centroid: negative or non-finite weight");
    total += w;
  }
  if (!(total > 0.0)) throw Error("degenerate weights");

  std::vector<double> acc(dim, 0.0);
  for (std::size_t k = 0; k < updates.size(); ++k) {
    if (weights[k] == 0.0) continue;
    const auto v = updates[k].params.values();
    for (std::size_t i = 0; i < dim; ++i) acc[i] += weights[k] * v[i];
  }
  for (double& x : acc) x /= total;
  return ParamVector(std::move(acc));
}

double unweighted_variance(std::span<const ClientUpdate> updates, const ParamVector& mean) {
  validate_round(updates);
  double acc = 0.0;
  for (const auto& u : updates) acc += squared_distance(u.params, mean);
  return acc / static_cast<double>(updates.size());
}

}  // namespace brafl
