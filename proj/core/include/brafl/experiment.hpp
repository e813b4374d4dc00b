#pragma once

// Batch experiment driver: the flat key=value config format, metrics/heatmap
// writers, run manifests, epsilon sweeps and the robustness certificate suite.
//
// Config format: one `key = value` per line, `#` starts a comment. Keys use
// dotted section prefixes. See config_keys() for the full list with defaults.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "brafl/fedsim.hpp"

namespace brafl {

struct ConfigKey {
  std::string name;
  std::string default_value;
  std::string description;
};

/// Every accepted key, in documentation order.
const std::vector<ConfigKey>& config_keys();

/// Splits config text into key/value pairs. Throws on malformed lines or
/// duplicate keys.
std::map<std::string, std::string> parse_key_values(const std::string& text);

/// Validated run configuration with defaults applied. Unknown keys are
/// rejected. `overrides` replace (or add) keys before validation.
FedRunConfig parse_config(const std::string& text,
                          const std::map<std::string, std::string>& overrides = {});

/// Fraction of malicious clients written in the config (adversary.fraction).
double adversary_fraction(const FedRunConfig& config);

std::string read_text_file(const std::filesystem::path& path);

/// Lowercase hex SHA-256.
std::string sha256_hex(const std::string& bytes);

/// `round,acc,asr,epsilon_hat,pi_0..pi_{K-1},malicious_actual`, one row per
/// evaluated round. Inapplicable cells are empty; malicious ids are joined by ';'.
std::string metrics_csv(const std::vector<RoundRecord>& records, std::size_t num_clients);

/// SVG heatmap: one column per client, one row per round. The left panel marks
/// clients that attacked, the right panel shows pi as grey level 255*pi.
std::string pi_heatmap_svg(const std::vector<RoundRecord>& records, std::size_t num_clients);

struct EmittedFile {
  std::string name;
  std::string sha256;
  std::size_t bytes = 0;
};

struct RunManifest {
  std::string config_path;
  std::filesystem::path output_dir;
  std::vector<EmittedFile> files;

  std::string to_json() const;
};

/// Default output directory: $BRAFL_OUT_DIR, else "brafl_out".
std::filesystem::path default_output_dir();

/// Runs the simulation and writes metrics.csv, heatmap.svg (BRA only) and
/// manifest.json into `output_dir`.
RunManifest run_experiment(const FedRunConfig& config, const std::string& config_path,
                           const std::filesystem::path& output_dir);

struct SweepRow {
  double epsilon = 0.0;
  double acc = 0.0;
  std::optional<double> asr;
};

inline constexpr std::size_t kSweepWindow = 20;

/// Runs the template once per epsilon (overriding adversary.fraction) and
/// writes one metrics file per run plus sweep_summary.csv with the mean over
/// the last kSweepWindow evaluated rounds.
RunManifest sweep(const std::string& config_text, const std::string& config_path,
                  const std::vector<double>& epsilons, const std::filesystem::path& output_dir,
                  std::vector<SweepRow>* rows = nullptr);

struct OracleCheckConfig {
  std::size_t instances = 200;
  std::size_t min_clients = 4;
  std::size_t max_clients = 10;
  std::size_t max_dims = 5;
  double outlier_scale = 10.0;
  std::uint64_t seed = 0;
};

OracleCheckConfig parse_oracle_config(const std::string& text);

struct OracleCheckSummary {
  std::size_t instances = 0;
  std::size_t certificate_failures = 0;
  double worst_ratio = 0.0;
  std::size_t triangle_violations = 0;
  /// Measured, not asserted: the relaxed aggregate against the same bound.
  std::size_t bra_bound_satisfied = 0;
  double bra_worst_ratio = 0.0;
};

OracleCheckSummary run_oracle_check(const OracleCheckConfig& config);

}  // namespace brafl
