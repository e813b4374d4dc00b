#include "brafl/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <string>

#include "brafl/core.hpp"

namespace brafl {

void Dataset::validate() const {
  if (labels.empty()) throw Error("dataset: no samples");
  if (num_features == 0) throw Error("dataset: zero features");
  if (num_classes < 2) throw Error("dataset: need at least 2 classes");
  if (features.size() != labels.size() * num_features) throw Error("dataset: shape mismatch");
  for (ClassId y : labels) {
    if (y >= num_classes) throw Error("dataset: label " + std::to_string(y) + " out of range");
  }
  for (double x : features) {
    if (!std::isfinite(x)) throw Error("dataset: non-finite feature");
  }
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out{num_features, num_classes, {}, {}};
  out.features.reserve(indices.size() * num_features);
  out.labels.reserve(indices.size());
  for (std::size_t i : indices) {
    if (i >= size()) throw Error("dataset: subset index out of range");
    const auto r = row(i);
    out.features.insert(out.features.end(), r.begin(), r.end());
    out.labels.push_back(labels[i]);
  }
  return out;
}

std::vector<std::size_t> Dataset::indices_of(ClassId label) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == label) out.push_back(i);
  }
  return out;
}

void Dataset::append(const Dataset& other) {
  if (other.num_features != num_features || other.num_classes != num_classes) {
    throw Error("dataset: append shape mismatch");
  }
  features.insert(features.end(), other.features.begin(), other.features.end());
  labels.insert(labels.end(), other.labels.begin(), other.labels.end());
}

Dataset make_synthetic_dataset(std::size_t num_classes, std::size_t num_features,
                               std::size_t n_per_class, double spread, Rng& rng) {
  if (num_classes < 2) throw Error("synthetic dataset: need at least 2 classes");
  if (num_features == 0 || n_per_class == 0) throw Error("synthetic dataset: empty shape");
  if (!(spread >= 0.0)) throw Error("synthetic dataset: spread must be nonnegative");
  Dataset ds{num_features, num_classes, {}, {}};
  const std::size_t n = num_classes * n_per_class;
  ds.features.resize(n * num_features);
  ds.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto c = static_cast<ClassId>(i % num_classes);
    ds.labels[i] = c;
    auto r = ds.row(i);
    for (std::size_t j = 0; j < num_features; ++j) r[j] = rng.normal(0.0, spread);
    r[c % num_features] += 2.0;
  }
  return ds;
}

void PartitionConfig::validate() const {
  if (num_clients == 0) throw Error("partition: num_clients must be positive");
  if (!(alpha > 0.0)) throw Error("partition: alpha must be positive");
}

std::vector<std::vector<std::size_t>> dirichlet_partition(const Dataset& dataset,
                                                          const PartitionConfig& config, Rng& rng) {
  config.validate();
  const std::size_t n = dataset.size();
  if (n == 0) throw Error("partition: empty dataset");
  const std::size_t clients = config.num_clients;
  if (clients > n) {
    throw Error("partition: " + std::to_string(clients) + " clients for " + std::to_string(n) +
                " samples");
  }
  std::vector<std::vector<std::size_t>> parts(clients);
  if (clients == 1) {
    parts[0].resize(n);
    for (std::size_t i = 0; i < n; ++i) parts[0][i] = i;
    return parts;
  }

  for (std::size_t c = 0; c < dataset.num_classes; ++c) {
    const auto members = dataset.indices_of(static_cast<ClassId>(c));
    if (members.empty()) continue;
    const auto p = rng.dirichlet(clients, config.alpha);
    for (std::size_t i : members) parts[rng.categorical(p)].push_back(i);
  }

  for (std::size_t k = 0; k < clients; ++k) {
    if (!parts[k].empty()) continue;
    std::size_t largest = 0;
    for (std::size_t j = 1; j < clients; ++j) {
      if (parts[j].size() > parts[largest].size()) largest = j;
    }
    parts[k].push_back(parts[largest].back());
    parts[largest].pop_back();
  }
  for (auto& p : parts) std::sort(p.begin(), p.end());
  return parts;
}

double mean_label_entropy(const Dataset& dataset,
                          const std::vector<std::vector<std::size_t>>& partitions) {
  if (partitions.empty()) return 0.0;
  double total = 0.0;
  std::vector<double> counts(dataset.num_classes);
  for (const auto& part : partitions) {
    std::fill(counts.begin(), counts.end(), 0.0);
    for (std::size_t i : part) counts[dataset.labels[i]] += 1.0;
    double h = 0.0;
    for (double c : counts) {
      if (c > 0.0) {
        const double p = c / static_cast<double>(part.size());
        h -= p * std::log(p);
      }
    }
    total += h;
  }
  return total / static_cast<double>(partitions.size());
}

namespace {

std::uint32_t read_be32(std::istream& in, const std::filesystem::path& path) {
  std::array<unsigned char, 4> b{};
  if (!in.read(reinterpret_cast<char*>(b.data()), 4)) {
    throw Error("idx: truncated header in " + path.string());
  }
  return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) |
         std::uint32_t{b[3]};
}

void write_be32(std::ostream& out, std::uint32_t v) {
  const std::array<char, 4> b{static_cast<char>(v >> 24), static_cast<char>(v >> 16),
                              static_cast<char>(v >> 8), static_cast<char>(v)};
  out.write(b.data(), 4);
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("idx: cannot open " + path.string());
  return in;
}

std::vector<std::uint8_t> read_payload(std::istream& in, std::size_t n,
                                       const std::filesystem::path& path) {
  std::vector<std::uint8_t> data(n);
  if (n > 0 && !in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(n))) {
    throw Error("idx: truncated payload in " + path.string());
  }
  return data;
}

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

}  // namespace

IdxImages read_idx_images(const std::filesystem::path& path) {
  auto in = open_in(path);
  const auto magic = read_be32(in, path);
  if (magic != kImageMagic) throw Error("idx: bad image magic in " + path.string());
  IdxImages img;
  img.count = read_be32(in, path);
  img.rows = read_be32(in, path);
  img.cols = read_be32(in, path);
  img.pixels = read_payload(in, std::size_t{img.count} * img.rows * img.cols, path);
  return img;
}

std::vector<std::uint8_t> read_idx_labels(const std::filesystem::path& path) {
  auto in = open_in(path);
  const auto magic = read_be32(in, path);
  if (magic != kLabelMagic) throw Error("idx: bad label magic in " + path.string());
  const auto count = read_be32(in, path);
  return read_payload(in, count, path);
}

void write_idx_images(const std::filesystem::path& path, const IdxImages& images) {
  if (images.pixels.size() != std::size_t{images.count} * images.rows * images.cols) {
    throw Error("idx: pixel count does not match header");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("idx: cannot write " + path.string());
  write_be32(out, kImageMagic);
  write_be32(out, images.count);
  write_be32(out, images.rows);
  write_be32(out, images.cols);
  out.write(reinterpret_cast<const char*>(images.pixels.data()),
            static_cast<std::streamsize>(images.pixels.size()));
}

void write_idx_labels(const std::filesystem::path& path, std::span<const std::uint8_t> labels) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("idx: cannot write " + path.string());
  write_be32(out, kLabelMagic);
  write_be32(out, static_cast<std::uint32_t>(labels.size()));
  out.write(reinterpret_cast<const char*>(labels.data()), static_cast<std::streamsize>(labels.size()));
}

Dataset load_idx_dataset(const std::filesystem::path& images, const std::filesystem::path& labels,
                         std::size_t num_classes, double mean, double stddev) {
  if (!(stddev > 0.0)) throw Error("idx: normalization stddev must be positive");
  const auto img = read_idx_images(images);
  const auto lab = read_idx_labels(labels);
  if (lab.size() != img.count) throw Error("idx: image and label counts differ");
  Dataset ds{std::size_t{img.rows} * img.cols, num_classes, {}, {}};
  ds.features.resize(img.pixels.size());
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    ds.features[i] = (static_cast<double>(img.pixels[i]) / 255.0 - mean) / stddev;
  }
  ds.labels.assign(lab.begin(), lab.end());
  ds.validate();
  return ds;
}

}  // namespace brafl
