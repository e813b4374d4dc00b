#pragma once

#include <cstddef>
#include <cstdint>
#include <set>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "brafl/core.hpp"
#include "brafl/dataset.hpp"
#include "brafl/rng.hpp"

namespace brafl {

enum class AttackKind { sign_flip, random_update, label_flip, backdoor };

std::string to_string(AttackKind kind);
AttackKind parse_attack_kind(const std::string& name);

/// A fixed magnitude written into one feature coordinate.
struct VectorTrigger {
  std::size_t coordinate = 0;
  double magnitude = 5.0;
};

/// Two stacked horizontal strokes ("=") stamped near the top-left corner of a
/// row-major rows x cols image.
struct ImageTrigger {
  std::size_t rows = 28;
  std::size_t cols = 28;
  std::size_t stroke_width = 7;
  std::size_t stroke_height = 1;
  std::size_t vertical_gap = 1;
  std::size_t offset_row = 2;
  std::size_t offset_col = 2;
  double value = 1.0;
};

using TriggerSpec = std::variant<VectorTrigger, ImageTrigger>;

/// Throws unless the trigger fits in a sample of `num_features` values.
void validate_trigger(const TriggerSpec& trigger, std::size_t num_features);

/// Writes the trigger into one sample in place.
void stamp_trigger(std::span<double> sample, const TriggerSpec& trigger);

struct AttackConfig {
  AttackKind kind = AttackKind::sign_flip;
  /// Scale for sign_flip and random_update.
  double gamma = 4.0;
  ClassId source_class = 0;
  ClassId target_class = 8;
  TriggerSpec trigger = VectorTrigger{};
  /// Malicious clients behave honestly before this round.
  std::size_t start_round = 0;

  void validate() const;
};

/// -gamma * delta.
ParamVector sign_flip(const ParamVector& honest_delta, double gamma);

/// Each coordinate drawn from N(0, gamma ||delta||^2 / d), so the expected
/// squared norm of the output is gamma ||delta||^2.
ParamVector random_update(const ParamVector& honest_delta, double gamma, Rng& rng);

/// y -> (y + 1) mod num_classes.
std::vector<ClassId> flip_labels(std::span<const ClassId> labels, std::size_t num_classes);

/// Stamps the trigger on every source_class sample and relabels it to
/// target_class; other samples are unchanged. Throws if there are none.
Dataset apply_backdoor(const Dataset& dataset, const AttackConfig& config);

/// Only the triggered, relabelled source_class samples.
Dataset poisoned_only(const Dataset& dataset, const AttackConfig& config);

/// Every source_class test sample, triggered and labelled target_class.
Dataset make_triggered_testset(const Dataset& testset, const AttackConfig& config);

enum class AdversaryMode { static_mode, dynamic_mode };

struct AdversarySchedule {
  std::set<std::size_t> malicious_ids;
  AdversaryMode mode = AdversaryMode::static_mode;
  /// Per-round, per-client attack probability in dynamic mode.
  double active_probability = 0.5;
  std::uint64_t schedule_seed = 0;

  void validate(std::size_t num_clients) const;
};

/// Static: all malicious ids. Dynamic: each malicious client attacks with
/// active_probability, decided by a counter-based draw keyed on
/// (schedule_seed, round, client_id).
std::set<std::size_t> active_malicious(std::size_t round, const AdversarySchedule& schedule);

}  // namespace brafl
