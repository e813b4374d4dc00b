#pragma once

// Bayesian Robust Aggregation: an EM-style coordinate ascent on a variational
// lower bound whose latent variables mark each client update as benign or
// malicious. Each round is aggregated independently.
//
// Per iteration, in this order:
//   eps   <- clamp(1 - sum(pi)/K)
//   pi_k  <- logistic(log p(w_k | mean, sigma2) + log((1 - eps)/eps))
//   mean  <- sum(pi_k w_k) / sum(pi_k)
//   sigma2 <- max(floor, sum(pi_k ||w_k - mean||^2) / sum(pi_k))
// where p is the Gaussian density of the scalar residual ||w_k - mean||^2.

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "brafl/core.hpp"

namespace brafl {

struct EpsilonBounds {
  double lo = 0.0;
  double hi = 0.5;
};

struct BraSettings {
  std::size_t max_iterations = 100;
  /// Convergence threshold on max_k |pi_k(new) - pi_k(old)|.
  double pi_tolerance = 1e-8;
  /// Relative variance floor: the effective floor for a round is
  /// sigma2_floor * (1 + mean squared norm of the updates).
  double sigma2_floor = 1e-12;
  /// Defaults to (1/(2K), 0.5) when unset.
  std::optional<EpsilonBounds> epsilon_clamp;
  double pi_init = 0.5;

  /// Throws on invalid settings for a round of K clients.
  void validate(std::size_t num_clients) const;
  EpsilonBounds bounds(std::size_t num_clients) const;
};

/// sigma2_floor scaled by (1 + mean ||w_k||^2).
double effective_sigma2_floor(std::span<const ClientUpdate> updates, const BraSettings& settings);

/// Log-density -0.5 * (residual2/sigma2 + ln(2 pi sigma2)). Throws if sigma2 is
/// below `sigma2_floor`.
double gaussian_loglik(double residual2, double sigma2, double sigma2_floor = 1e-12);

/// Estimated contamination 1 - sum(pi)/K, unclamped.
double estimate_epsilon(std::span<const double> pi);

struct PosteriorStep {
  std::vector<double> pi;
  /// The (clamped) contamination used as prior odds.
  double epsilon = 0.0;
  bool epsilon_clamped = false;
};

PosteriorStep posterior_step(std::span<const ClientUpdate> updates, const ParamVector& mean,
                             double sigma2, std::span<const double> pi_old,
                             const BraSettings& settings);

/// New posteriors for a given location/scale. Computed in log-space, so far
/// outliers get pi near zero instead of NaN. Outputs lie strictly in (0,1).
std::vector<double> update_posteriors(std::span<const ClientUpdate> updates,
                                      const ParamVector& mean, double sigma2,
                                      std::span<const double> pi_old,
                                      const BraSettings& settings);

struct LocationScale {
  ParamVector mean;
  double sigma2 = 0.0;
  bool sigma2_floored = false;
};

/// Closed-form weighted mean and variance. Throws "all clients rejected" when
/// sum(pi) == 0.
LocationScale update_location_scale(std::span<const ClientUpdate> updates,
                                    std::span<const double> pi, const BraSettings& settings);

/// KL between the Bernoulli posteriors pi and the Bernoulli(1 - eps) prior,
/// with 0 ln 0 = 0.
double kl_divergence(std::span<const double> pi, double epsilon);

/// Lower bound: sum_k pi_k log p(w_k) - KL(pi, eps).
double elbo(std::span<const ClientUpdate> updates, const ParamVector& mean, double sigma2,
            std::span<const double> pi, double epsilon);

/// Per-client terms pi_k log p(w_k) - KL_k; they sum to elbo().
std::vector<double> elbo_contributions(std::span<const ClientUpdate> updates,
                                       const ParamVector& mean, double sigma2,
                                       std::span<const double> pi, double epsilon);

struct BraIteration {
  double elbo = 0.0;
  double epsilon = 0.0;
  double sigma2 = 0.0;
  std::vector<double> pi;
  double max_pi_change = 0.0;
  bool epsilon_clamped = false;
  bool sigma2_floored = false;
};

using BraTrace = std::vector<BraIteration>;

/// Runs the full loop. Requires K >= 2 and equal dims. If `trace` is given it
/// receives one record per iteration.
AggregationResult aggregate_bra(std::span<const ClientUpdate> updates,
                                const BraSettings& settings = {}, BraTrace* trace = nullptr);

}  // namespace brafl
