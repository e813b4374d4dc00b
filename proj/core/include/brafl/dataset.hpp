#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "brafl/rng.hpp"

namespace brafl {

using ClassId = std::uint32_t;

/// Row-major feature matrix with one class label per row.
struct Dataset {
  std::size_t num_features = 0;
  std::size_t num_classes = 0;
  std::vector<double> features;
  std::vector<ClassId> labels;

  std::size_t size() const noexcept { return labels.size(); }
  std::span<const double> row(std::size_t i) const {
    return {features.data() + i * num_features, num_features};
  }
  std::span<double> row(std::size_t i) { return {features.data() + i * num_features, num_features}; }

  /// Throws unless n >= 1, shapes agree, labels < num_classes and features are finite.
  void validate() const;

  Dataset subset(std::span<const std::size_t> indices) const;
  /// Rows whose label equals `label`.
  std::vector<std::size_t> indices_of(ClassId label) const;
  void append(const Dataset& other);
};

/// Gaussian blobs: class c centred at 2 e_{c mod d} with isotropic std `spread`.
/// Samples are interleaved by class (row i has label i mod Y).
Dataset make_synthetic_dataset(std::size_t num_classes, std::size_t num_features,
                               std::size_t n_per_class, double spread, Rng& rng);

struct PartitionConfig {
  std::size_t num_clients = 20;
  /// 1.0 for the i.i.d.-like split, 0.5 for non-i.i.d.
  double alpha = 1.0;

  void validate() const;
};

/// Per class, draws p ~ Dirichlet(alpha 1_N) and assigns each sample of the
/// class to a client drawn from p. Any empty client then receives one sample
/// taken from the currently largest client. Index lists are ascending.
std::vector<std::vector<std::size_t>> dirichlet_partition(const Dataset& dataset,
                                                          const PartitionConfig& config, Rng& rng);

/// Mean entropy (nats) of the per-client label distributions.
double mean_label_entropy(const Dataset& dataset,
                          const std::vector<std::vector<std::size_t>>& partitions);

struct IdxImages {
  std::uint32_t count = 0;
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  std::vector<std::uint8_t> pixels;
};

/// Big-endian IDX, magic 0x00000803.
IdxImages read_idx_images(const std::filesystem::path& path);
/// Big-endian IDX, magic 0x00000801.
std::vector<std::uint8_t> read_idx_labels(const std::filesystem::path& path);

void write_idx_images(const std::filesystem::path& path, const IdxImages& images);
void write_idx_labels(const std::filesystem::path& path, std::span<const std::uint8_t> labels);

/// Pixels scaled to [0,1], then (x - mean) / stddev.
Dataset load_idx_dataset(const std::filesystem::path& images, const std::filesystem::path& labels,
                         std::size_t num_classes = 10, double mean = 0.0, double stddev = 1.0);

}  // namespace brafl
