#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace brafl {

/// Base exception for every contract violation raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Flattened model parameters. Entries are always finite and dim() > 0.
class ParamVector {
 public:
  explicit ParamVector(std::vector<double> values);
  ParamVector(std::initializer_list<double> values);

  static ParamVector zeros(std::size_t dim);

  std::size_t dim() const noexcept { return values_.size(); }
  std::span<const double> values() const noexcept { return values_; }
  const std::vector<double>& vec() const noexcept { return values_; }
  double operator[](std::size_t i) const { return values_[i]; }

  bool operator==(const ParamVector&) const = default;

 private:
  std::vector<double> values_;
};

ParamVector operator+(const ParamVector& a, const ParamVector& b);
ParamVector operator-(const ParamVector& a, const ParamVector& b);
ParamVector operator*(double s, const ParamVector& a);

double squared_norm(const ParamVector& a);

/// Sum of squared coordinate differences, accumulated in index order.
double squared_distance(const ParamVector& a, const ParamVector& b);

struct ClientUpdate {
  std::size_t client_id = 0;
  ParamVector params;
  std::size_t sample_count = 1;
};

/// Builds a round of updates with ids 0..K-1 and unit sample counts.
std::vector<ClientUpdate> make_updates(const std::vector<std::vector<double>>& points);

/// Throws unless the round is nonempty, ids are exactly 0..K-1 in order, and
/// all dims agree. Returns the common dim.
std::size_t validate_round(std::span<const ClientUpdate> updates);

/// sum_k weights_k * w_k / sum_k weights_k, summed in client order.
ParamVector weighted_centroid(std::span<const ClientUpdate> updates,
                              std::span<const double> weights);

/// Unweighted sum_k ||w_k - mean||^2 / K.
double unweighted_variance(std::span<const ClientUpdate> updates,
                           const ParamVector& mean);

struct AggregationResult {
  ParamVector mean;
  double sigma2 = 0.0;
  std::vector<double> pi;
  /// 1 - sum(pi)/K, before clamping.
  double epsilon_hat = 0.0;
  /// The clamped value that drove the last posterior update (BRA only).
  double epsilon_clamped = 0.0;
  std::size_t iterations = 0;
  double elbo = 0.0;
  bool converged = true;
};

}  // namespace brafl
