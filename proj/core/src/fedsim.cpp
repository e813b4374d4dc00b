#include "brafl/fedsim.hpp"

#include <cmath>
#include <string>

namespace brafl {

namespace {

constexpr std::uint64_t kTrainStream = 1;
constexpr std::uint64_t kTestStream = 2;
constexpr std::uint64_t kPartitionStream = 3;
constexpr std::uint64_t kClientTag = 0xC11E;
constexpr std::uint64_t kAttackTag = 0xA77A;

Rng client_rng(std::uint64_t seed, std::uint64_t tag, std::size_t round, std::size_t client) {
  return Rng(seed, derive_key({tag, round, client}));
}

Dataset with_flipped_labels(const Dataset& data) {
  Dataset out = data;
  out.labels = flip_labels(data.labels, data.num_classes);
  return out;
}

}  // namespace

void FedRunConfig::validate() const {
  partition.validate();
  training.validate();
  if (rounds == 0) throw Error("config: rounds must be positive");
  if (eval_every == 0) throw Error("config: eval_every must be positive");
  const std::size_t n = partition.num_clients;
  if (const auto* spec = std::get_if<BaselineSpec>(&aggregator)) {
    spec->validate(n);
  } else {
    if (n < 2) throw Error("config: BRA needs at least 2 clients");
    std::get<BraSettings>(aggregator).validate(n);
  }
  schedule.validate(n);
  if (attack) {
    attack->validate();
    if (const auto* syn = std::get_if<SyntheticDataSpec>(&data)) {
      if (attack->kind == AttackKind::backdoor) validate_trigger(attack->trigger, syn->num_features);
      if (attack->source_class >= syn->num_classes || attack->target_class >= syn->num_classes) {
        throw Error("config: attack classes outside the label range");
      }
    }
  }
}

FederatedData prepare_data(const FedRunConfig& config) {
  FederatedData out;
  if (const auto* syn = std::get_if<SyntheticDataSpec>(&config.data)) {
    Rng train_rng(config.master_seed, kTrainStream);
    Rng test_rng(config.master_seed, kTestStream);
    out.train = make_synthetic_dataset(syn->num_classes, syn->num_features, syn->train_per_class,
                                       syn->spread, train_rng);
    out.test = make_synthetic_dataset(syn->num_classes, syn->num_features, syn->test_per_class,
                                      syn->spread, test_rng);
  } else {
    const auto& idx = std::get<IdxDataSpec>(config.data);
    out.train = load_idx_dataset(idx.train_images, idx.train_labels, idx.num_classes, idx.mean,
                                 idx.stddev);
    out.test = load_idx_dataset(idx.test_images, idx.test_labels, idx.num_classes, idx.mean,
                                idx.stddev);
  }
  out.train.validate();
  out.test.validate();
  if (config.has_backdoor()) out.triggered_test = make_triggered_testset(out.test, *config.attack);
  return out;
}

AggregationResult aggregate(std::span<const ClientUpdate> updates, const AggregatorSpec& spec) {
  if (const auto* baseline = std::get_if<BaselineSpec>(&spec)) {
    return aggregate_baseline(updates, *baseline);
  }
  return aggregate_bra(updates, std::get<BraSettings>(spec));
}

std::vector<RoundRecord> run_federated(const FedRunConfig& config) {
  return run_federated(config, nullptr);
}

std::vector<RoundRecord> run_federated(const FedRunConfig& config, ParamVector* final_params) {
  config.validate();
  const FederatedData data = prepare_data(config);
  Rng partition_rng(config.master_seed, kPartitionStream);
  const auto parts = dirichlet_partition(data.train, config.partition, partition_rng);

  std::vector<Dataset> local;
  local.reserve(parts.size());
  for (const auto& p : parts) local.push_back(data.train.subset(p));

  // Poisoned copies are fixed per client; clients without source samples
  // cannot mount the backdoor and stay honest.
  std::vector<std::optional<Dataset>> poisoned(local.size());
  std::vector<std::optional<Dataset>> mixed(local.size());
  if (config.has_backdoor()) {
    for (std::size_t id : config.schedule.malicious_ids) {
      if (local[id].indices_of(config.attack->source_class).empty()) continue;
      poisoned[id] = poisoned_only(local[id], *config.attack);
      Dataset mix = local[id];
      mix.append(*poisoned[id]);
      mixed[id] = std::move(mix);
    }
  }

  const std::size_t classes = data.train.num_classes;
  const std::size_t features = data.train.num_features;
  ParamVector global = ParamVector::zeros(LogisticModel::param_count(classes, features));

  std::vector<RoundRecord> records;
  records.reserve(config.rounds);
  for (std::size_t t = 0; t < config.rounds; ++t) {
    try {
      const bool attack_live = config.attack && t >= config.attack->start_round;
      const std::set<std::size_t> active =
          attack_live ? active_malicious(t, config.schedule) : std::set<std::size_t>{};

      RoundRecord rec;
      rec.round = t;
      std::vector<ClientUpdate> updates;
      updates.reserve(local.size());
      for (std::size_t k = 0; k < local.size(); ++k) {
        Rng rng = client_rng(config.master_seed, kClientTag, t, k);
        if (!active.contains(k)) {
          updates.push_back(local_train(global, local[k], config.training, rng, k));
          continue;
        }
        const AttackConfig& atk = *config.attack;
        switch (atk.kind) {
          case AttackKind::sign_flip:
          case AttackKind::random_update: {
            ClientUpdate honest = local_train(global, local[k], config.training, rng, k);
            const ParamVector delta = honest.params - global;
            Rng noise = client_rng(config.master_seed, kAttackTag, t, k);
            const ParamVector bad = atk.kind == AttackKind::sign_flip
                                        ? sign_flip(delta, atk.gamma)
                                        : random_update(delta, atk.gamma, noise);
            updates.push_back(ClientUpdate{k, global + bad, honest.sample_count});
            rec.actual_malicious.insert(k);
            break;
          }
          case AttackKind::label_flip:
            updates.push_back(local_train(global, with_flipped_labels(local[k]), config.training, rng, k));
            rec.actual_malicious.insert(k);
            break;
          case AttackKind::backdoor: {
            if (!poisoned[k]) {
              updates.push_back(local_train(global, local[k], config.training, rng, k));
              break;
            }
            TrainingHyperparams first = config.training;
            first.local_epochs = (config.training.local_epochs + 1) / 2;
            ClientUpdate step = local_train(global, *poisoned[k], first, rng, k);
            const std::size_t rest = config.training.local_epochs - first.local_epochs;
            if (rest > 0) {
              TrainingHyperparams second = config.training;
              second.local_epochs = rest;
              step = local_train(step.params, *mixed[k], second, rng, k);
            }
            updates.push_back(ClientUpdate{k, std::move(step.params), local[k].size()});
            rec.actual_malicious.insert(k);
            break;
          }
        }
      }

      AggregationResult agg = aggregate(updates, config.aggregator);
      global = agg.mean;
      rec.aggregate_norm = std::sqrt(squared_norm(global));
      if (config.uses_bra()) {
        rec.pi = agg.pi;
        rec.epsilon_hat = agg.epsilon_hat;
      }
      rec.evaluated = (t + 1) % config.eval_every == 0 || t + 1 == config.rounds;
      if (rec.evaluated) {
        rec.acc = evaluate_acc(global, data.test);
        if (data.triggered_test) {
          rec.asr = evaluate_asr(global, *data.triggered_test, config.attack->target_class);
        }
      }
      records.push_back(std::move(rec));
    } catch (const Error& e) {
      throw Error("round " + std::to_string(t) + ": " + e.what());
    }
  }
  if (final_params) *final_params = global;
  return records;
}

double window_mean_acc(const std::vector<RoundRecord>& records, std::size_t window) {
  double acc = 0.0;
  std::size_t n = 0;
  for (auto it = records.rbegin(); it != records.rend() && n < window; ++it) {
    if (!it->acc) continue;
    acc += *it->acc;
    ++n;
  }
  if (n == 0) throw Error("window_mean_acc: no evaluated rounds");
  return acc / static_cast<double>(n);
}

std::optional<double> window_mean_asr(const std::vector<RoundRecord>& records, std::size_t window) {
  double acc = 0.0;
  std::size_t n = 0;
  for (auto it = records.rbegin(); it != records.rend() && n < window; ++it) {
    if (!it->evaluated) continue;
    if (!it->asr) return std::nullopt;
    acc += *it->asr;
    ++n;
  }
  if (n == 0) return std::nullopt;
  return acc / static_cast<double>(n);
}

}  // namespace brafl
