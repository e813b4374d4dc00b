#include "brafl/bra.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

namespace brafl {

namespace {

constexpr double kPiLow = std::numeric_limits<double>::min();
const double kPiHigh = std::nextafter(1.0, 0.0);

double logistic(double z) {
  const double p = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
  return std::clamp(p, kPiLow, kPiHigh);
}

// x ln(x / y) with 0 ln 0 = 0.
double xlogx_over(double x, double y) { return x > 0.0 ? x * std::log(x / y) : 0.0; }

std::vector<double> residuals(std::span<const ClientUpdate> updates, const ParamVector& mean) {
  std::vector<double> r(updates.size());
  for (std::size_t k = 0; k < updates.size(); ++k) r[k] = squared_distance(updates[k].params, mean);
  return r;
}

void check_pi(std::span<const double> pi, std::size_t k) {
  if (pi.size() != k) {
    throw Error("pi has " + std::to_string(pi.size()) + " entries for " + std::to_string(k) +
                " clients");
  }
  for (double p : pi) {
    if (!(p >= 0.0 && p <= 1.0)) throw Error("pi entries must lie in [0,1]");
  }
}

}  // namespace

void BraSettings::validate(std::size_t num_clients) const {
  if (max_iterations == 0) throw Error("bra: max_iterations must be positive");
  if (!(pi_tolerance > 0.0)) throw Error("bra: pi_tolerance must be positive");
  if (!(sigma2_floor > 0.0)) throw Error("bra: sigma2_floor must be positive");
  if (!(pi_init > 0.0 && pi_init < 1.0)) throw Error("bra: pi_init must lie in (0,1)");
  const auto b = bounds(num_clients);
  if (!(b.lo > 0.0 && b.lo < b.hi && b.hi <= 0.5)) {
    throw Error("bra: epsilon clamp requires 0 < lo < hi <= 0.5");
  }
}

EpsilonBounds BraSettings::bounds(std::size_t num_clients) const {
  if (epsilon_clamp) return *epsilon_clamp;
  return EpsilonBounds{1.0 / (2.0 * static_cast<double>(num_clients)), 0.5};
}

double effective_sigma2_floor(std::span<const ClientUpdate> updates, const BraSettings& settings) {
  double acc = 0.0;
  for (const auto& u : updates) acc += squared_norm(u.params);
  const double mean_sq = updates.empty() ? 0.0 : acc / static_cast<double>(updates.size());
  return settings.sigma2_floor * (1.0 + mean_sq);
}

double gaussian_loglik(double residual2, double sigma2, double sigma2_floor) {
  if (!(sigma2 >= sigma2_floor) || !(sigma2 > 0.0)) {
    throw Error("gaussian_loglik: sigma2 " + std::to_string(sigma2) + " below floor " +
                std::to_string(sigma2_floor));
  }
  if (!(residual2 >= 0.0)) throw Error("gaussian_loglik: negative residual");
  return -0.5 * (residual2 / sigma2 + std::log(2.0 * std::numbers::pi * sigma2));
}

double estimate_epsilon(std::span<const double> pi) {
  if (pi.empty()) throw Error("estimate_epsilon: empty pi");
  double acc = 0.0;
  for (double p : pi) acc += p;
  return 1.0 - acc / static_cast<double>(pi.size());
}

PosteriorStep posterior_step(std::span<const ClientUpdate> updates, const ParamVector& mean,
                             double sigma2, std::span<const double> pi_old,
                             const BraSettings& settings) {
  const std::size_t k = updates.size();
  validate_round(updates);
  check_pi(pi_old, k);
  const auto b = settings.bounds(k);
  const double raw = estimate_epsilon(pi_old);

  PosteriorStep step;
  step.epsilon = std::clamp(raw, b.lo, b.hi);
  step.epsilon_clamped = raw < b.lo || raw > b.hi;

  const double floor = effective_sigma2_floor(updates, settings);
  const double log_prior_odds = std::log((1.0 - step.epsilon) / step.epsilon);
  step.pi.resize(k);
  for (std::size_t i = 0; i < k; ++i) {
    const double r2 = squared_distance(updates[i].params, mean);
    step.pi[i] = logistic(gaussian_loglik(r2, sigma2, floor) + log_prior_odds);
  }
  return step;
}

std::vector<double> update_posteriors(std::span<const ClientUpdate> updates,
                                      const ParamVector& mean, double sigma2,
                                      std::span<const double> pi_old,
                                      const BraSettings& settings) {
  return posterior_step(updates, mean, sigma2, pi_old, settings).pi;
}

LocationScale update_location_scale(std::span<const ClientUpdate> updates,
                                    std::span<const double> pi, const BraSettings& settings) {
  validate_round(updates);
  check_pi(pi, updates.size());
  double total = 0.0;
  for (double p : pi) total += p;
  if (!(total > 0.0)) throw Error("all clients rejected");

  LocationScale out{weighted_centroid(updates, pi), 0.0, false};
  double acc = 0.0;
  for (std::size_t k = 0; k < updates.size(); ++k) {
    acc += pi[k] * squared_distance(updates[k].params, out.mean);
  }
  const double raw = acc / total;
  const double floor = effective_sigma2_floor(updates, settings);
  out.sigma2_floored = raw < floor;
  out.sigma2 = std::max(floor, raw);
  return out;
}

double kl_divergence(std::span<const double> pi, double epsilon) {
  double acc = 0.0;
  for (double p : pi) acc += xlogx_over(p, 1.0 - epsilon) + xlogx_over(1.0 - p, epsilon);
  return acc;
}

double elbo(std::span<const ClientUpdate> updates, const ParamVector& mean, double sigma2,
            std::span<const double> pi, double epsilon) {
  validate_round(updates);
  check_pi(pi, updates.size());
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw Error("elbo: epsilon must lie in (0,1)");
  const auto r = residuals(updates, mean);
  double loglik = 0.0;
  for (std::size_t k = 0; k < r.size(); ++k) {
    loglik += pi[k] * gaussian_loglik(r[k], sigma2, 0.0);
  }
  return loglik - kl_divergence(pi, epsilon);
}

std::vector<double> elbo_contributions(std::span<const ClientUpdate> updates,
                                       const ParamVector& mean, double sigma2,
                                       std::span<const double> pi, double epsilon) {
  validate_round(updates);
  check_pi(pi, updates.size());
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw Error("elbo: epsilon must lie in (0,1)");
  std::vector<double> out(updates.size());
  for (std::size_t k = 0; k < updates.size(); ++k) {
    const double r2 = squared_distance(updates[k].params, mean);
    const double p = pi[k];
    out[k] = p * gaussian_loglik(r2, sigma2, 0.0) -
             (xlogx_over(p, 1.0 - epsilon) + xlogx_over(1.0 - p, epsilon));
  }
  return out;
}

AggregationResult aggregate_bra(std::span<const ClientUpdate> updates,
                                const BraSettings& settings, BraTrace* trace) {
  const std::size_t k = updates.size();
  if (k < 2) throw Error("aggregate_bra: need at least 2 clients, got " + std::to_string(k));
  validate_round(updates);
  settings.validate(k);
  const double floor = effective_sigma2_floor(updates, settings);
  const auto bounds = settings.bounds(k);

  const std::vector<double> uniform(k, 1.0);
  ParamVector mean = weighted_centroid(updates, uniform);
  const double init_var = unweighted_variance(updates, mean);
  double sigma2 = std::max(floor, init_var);

  if (trace) trace->clear();

  if (init_var == 0.0) {
    // Coincident updates: the mean is exact and sigma2 sits on the floor, so
    // the posteriors solve a scalar fixed point at eps = lo whenever that
    // point keeps raw eps below lo.
    const double logit = gaussian_loglik(0.0, sigma2, floor) + std::log((1.0 - bounds.lo) / bounds.lo);
    const double p = logistic(logit);
    if (1.0 - p < bounds.lo) {
      AggregationResult res{mean, sigma2, std::vector<double>(k, p), 0.0, bounds.lo, 1, 0.0, true};
      res.epsilon_hat = estimate_epsilon(res.pi);
      res.elbo = elbo(updates, mean, sigma2, res.pi, bounds.lo);
      if (trace) {
        trace->push_back(BraIteration{res.elbo, bounds.lo, sigma2, res.pi,
                                      std::abs(p - settings.pi_init), true, true});
      }
      return res;
    }
  }

  std::vector<double> pi(k, settings.pi_init);
  AggregationResult res{mean, sigma2, pi, 0.0, 0.0, 0, 0.0, false};
  for (std::size_t it = 1; it <= settings.max_iterations; ++it) {
    PosteriorStep step = posterior_step(updates, mean, sigma2, pi, settings);
    LocationScale ls = update_location_scale(updates, step.pi, settings);

    double change = 0.0;
    for (std::size_t i = 0; i < k; ++i) change = std::max(change, std::abs(step.pi[i] - pi[i]));

    pi = std::move(step.pi);
    mean = std::move(ls.mean);
    sigma2 = ls.sigma2;

    const double value = elbo(updates, mean, sigma2, pi, step.epsilon);
    if (trace) {
      trace->push_back(BraIteration{value, step.epsilon, sigma2, pi, change, step.epsilon_clamped,
                                    ls.sigma2_floored});
    }
    res.iterations = it;
    res.elbo = value;
    res.epsilon_clamped = step.epsilon;
    if (change < settings.pi_tolerance) {
      res.converged = true;
      break;
    }
  }
  res.mean = std::move(mean);
  res.sigma2 = sigma2;
  res.epsilon_hat = estimate_epsilon(pi);
  res.pi = std::move(pi);
  return res;
}

}  // namespace brafl
