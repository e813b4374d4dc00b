#pragma once

// Single-process federated learning loop. Every client participates in every
// round; each round trains all clients from the current global parameters,
// lets the active adversaries rewrite their submissions, and aggregates the
// parameter vectors in client-id order.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <variant>
#include <vector>

#include "brafl/attacks.hpp"
#include "brafl/baselines.hpp"
#include "brafl/bra.hpp"
#include "brafl/dataset.hpp"
#include "brafl/model.hpp"

namespace brafl {

struct SyntheticDataSpec {
  std::size_t num_classes = 10;
  std::size_t num_features = 12;
  std::size_t train_per_class = 200;
  std::size_t test_per_class = 100;
  double spread = 0.5;
};

struct IdxDataSpec {
  std::filesystem::path train_images;
  std::filesystem::path train_labels;
  std::filesystem::path test_images;
  std::filesystem::path test_labels;
  std::size_t num_classes = 10;
  double mean = 0.0;
  double stddev = 1.0;
};

using DataSpec = std::variant<SyntheticDataSpec, IdxDataSpec>;
using AggregatorSpec = std::variant<BaselineSpec, BraSettings>;

struct FedRunConfig {
  DataSpec data = SyntheticDataSpec{};
  PartitionConfig partition;
  TrainingHyperparams training;
  AggregatorSpec aggregator = BraSettings{};
  std::optional<AttackConfig> attack;
  AdversarySchedule schedule;
  std::size_t rounds = 100;
  std::size_t eval_every = 1;
  std::uint64_t master_seed = 0;

  void validate() const;
  bool uses_bra() const noexcept { return std::holds_alternative<BraSettings>(aggregator); }
  bool has_backdoor() const noexcept {
    return attack && attack->kind == AttackKind::backdoor;
  }
};

struct RoundRecord {
  std::size_t round = 0;
  bool evaluated = false;
  std::optional<double> acc;
  /// Present iff a backdoor attack is configured (and the round is evaluated).
  std::optional<double> asr;
  /// Present iff the aggregator is BRA.
  std::optional<std::vector<double>> pi;
  std::optional<double> epsilon_hat;
  /// Clients that submitted an attack this round.
  std::set<std::size_t> actual_malicious;
  double aggregate_norm = 0.0;
};

struct FederatedData {
  Dataset train;
  Dataset test;
  /// Source-class test rows with the trigger applied (backdoor runs only).
  std::optional<Dataset> triggered_test;
};

FederatedData prepare_data(const FedRunConfig& config);

/// Aggregates one round with the configured rule.
AggregationResult aggregate(std::span<const ClientUpdate> updates, const AggregatorSpec& spec);

std::vector<RoundRecord> run_federated(const FedRunConfig& config);

/// Final global parameters are also returned when requested.
std::vector<RoundRecord> run_federated(const FedRunConfig& config, ParamVector* final_params);

/// Mean of acc (or asr) over the last `window` evaluated rounds.
double window_mean_acc(const std::vector<RoundRecord>& records, std::size_t window);
std::optional<double> window_mean_asr(const std::vector<RoundRecord>& records, std::size_t window);

}  // namespace brafl
