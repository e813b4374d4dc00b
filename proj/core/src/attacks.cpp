#include "brafl/attacks.hpp"

#include <cmath>

namespace brafl {

std::string to_string(AttackKind kind) {
  switch (kind) {
    case AttackKind::sign_flip: return "sign_flip";
    case AttackKind::random_update: return "random_update";
    case AttackKind::label_flip: return "label_flip";
    case AttackKind::backdoor: return "backdoor";
  }
  return "unknown";
}

AttackKind parse_attack_kind(const std::string& name) {
  for (auto k : {AttackKind::sign_flip, AttackKind::random_update, AttackKind::label_flip,
                 AttackKind::backdoor}) {
    if (to_string(k) == name) return k;
  }
  throw Error("unknown attack '" + name + "'");
}

void validate_trigger(const TriggerSpec& trigger, std::size_t num_features) {
  if (const auto* v = std::get_if<VectorTrigger>(&trigger)) {
    if (v->coordinate >= num_features) {
      throw Error("trigger coordinate " + std::to_string(v->coordinate) + " outside " +
                  std::to_string(num_features) + " features");
    }
    if (!std::isfinite(v->magnitude)) throw Error("trigger magnitude must be finite");
    return;
  }
  const auto& img = std::get<ImageTrigger>(trigger);
  if (img.rows * img.cols != num_features) {
    throw Error("image trigger shape " + std::to_string(img.rows) + "x" + std::to_string(img.cols) +
                " does not match " + std::to_string(num_features) + " features");
  }
  const std::size_t height = 2 * img.stroke_height + img.vertical_gap;
  if (img.offset_row + height > img.rows || img.offset_col + img.stroke_width > img.cols) {
    throw Error("image trigger does not fit inside the sample");
  }
}

void stamp_trigger(std::span<double> sample, const TriggerSpec& trigger) {
  validate_trigger(trigger, sample.size());
  if (const auto* v = std::get_if<VectorTrigger>(&trigger)) {
    sample[v->coordinate] = v->magnitude;
    return;
  }
  const auto& img = std::get<ImageTrigger>(trigger);
  const std::size_t second = img.offset_row + img.stroke_height + img.vertical_gap;
  for (std::size_t top : {img.offset_row, second}) {
    for (std::size_t r = top; r < top + img.stroke_height; ++r) {
      for (std::size_t c = img.offset_col; c < img.offset_col + img.stroke_width; ++c) {
        sample[r * img.cols + c] = img.value;
      }
    }
  }
}

void AttackConfig::validate() const {
  if (!(gamma > 0.0)) throw Error("attack: gamma must be positive");
  if (source_class == target_class) throw Error("attack: source_class must differ from target_class");
}

ParamVector sign_flip(const ParamVector& honest_delta, double gamma) {
  if (!(gamma > 0.0)) throw Error("sign_flip: gamma must be positive");
  return (-gamma) * honest_delta;
}

ParamVector random_update(const ParamVector& honest_delta, double gamma, Rng& rng) {
  if (!(gamma > 0.0)) throw Error("random_update: gamma must be positive");
  const double variance = gamma * squared_norm(honest_delta) / static_cast<double>(honest_delta.dim());
  const double stddev = std::sqrt(variance);
  std::vector<double> out(honest_delta.dim(), 0.0);
  if (stddev > 0.0) {
    for (auto& x : out) x = rng.normal(0.0, stddev);
  }
  return ParamVector(std::move(out));
}

std::vector<ClassId> flip_labels(std::span<const ClassId> labels, std::size_t num_classes) {
  if (num_classes == 0) throw Error("flip_labels: zero classes");
  std::vector<ClassId> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= num_classes) {
      throw Error("flip_labels: label " + std::to_string(labels[i]) + " out of range [0," +
                  std::to_string(num_classes) + ")");
    }
    out[i] = static_cast<ClassId>((labels[i] + 1) % num_classes);
  }
  return out;
}

namespace {

void check_classes(const Dataset& dataset, const AttackConfig& config) {
  config.validate();
  if (config.source_class >= dataset.num_classes || config.target_class >= dataset.num_classes) {
    throw Error("backdoor: source/target class outside the label range");
  }
  validate_trigger(config.trigger, dataset.num_features);
}

}  // namespace

Dataset apply_backdoor(const Dataset& dataset, const AttackConfig& config) {
  check_classes(dataset, config);
  Dataset out = dataset;
  std::size_t touched = 0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (out.labels[i] != config.source_class) continue;
    stamp_trigger(out.row(i), config.trigger);
    out.labels[i] = config.target_class;
    ++touched;
  }
  if (touched == 0) throw Error("backdoor: dataset has no source_class samples");
  return out;
}

Dataset poisoned_only(const Dataset& dataset, const AttackConfig& config) {
  check_classes(dataset, config);
  const auto idx = dataset.indices_of(config.source_class);
  if (idx.empty()) throw Error("backdoor: dataset has no source_class samples");
  Dataset out = dataset.subset(idx);
  for (std::size_t i = 0; i < out.size(); ++i) {
    stamp_trigger(out.row(i), config.trigger);
    out.labels[i] = config.target_class;
  }
  return out;
}

Dataset make_triggered_testset(const Dataset& testset, const AttackConfig& config) {
  return poisoned_only(testset, config);
}

void AdversarySchedule::validate(std::size_t num_clients) const {
  for (std::size_t id : malicious_ids) {
    if (id >= num_clients) throw Error("schedule: malicious id " + std::to_string(id) + " out of range");
  }
  if (2 * malicious_ids.size() >= num_clients && !malicious_ids.empty()) {
    throw Error("schedule: requires M < K/2");
  }
  if (!(active_probability > 0.0 && active_probability <= 1.0)) {
    throw Error("schedule: active_probability must lie in (0,1]");
  }
}

std::set<std::size_t> active_malicious(std::size_t round, const AdversarySchedule& schedule) {
  if (schedule.mode == AdversaryMode::static_mode) return schedule.malicious_ids;
  std::set<std::size_t> out;
  for (std::size_t id : schedule.malicious_ids) {
    const double u = keyed_uniform(derive_key({schedule.schedule_seed, round, id}));
    if (u < schedule.active_probability) out.insert(id);
  }
  return out;
}

}  // namespace brafl
