#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "liveval/numkit.hpp"

namespace liveval {

using SampleId = std::uint64_t;

struct Dataset {
  Matrix features;                 // N x F
  std::vector<int> labels;         // N, each in [0, num_classes)
  std::vector<SampleId> ids;       // N, unique
  std::vector<std::uint8_t> mask;  // N, 1 = corrupted
  std::size_t num_classes = 0;
  // Optional N x C real regression targets. When empty, mse losses use the
  // one-hot encoding of `labels`.
  Matrix targets;

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t dim() const noexcept { return features.cols; }
  std::span<const double> x(std::size_t row) const { return features.row(row); }

  // Throws consistency error when the dataset invariants do not hold.
  void validate() const;
  std::unordered_map<SampleId, std::size_t> row_index() const;
  std::size_t corrupted_count() const noexcept;
  // Stable 64-bit digest over every field.
  std::uint64_t digest() const;

  bool operator==(const Dataset &) const = default;
};

struct CsvSchema {
  std::string label_column = "label";
  std::string id_column;                // empty: ids are row indices
  std::string mask_column;              // empty: all-false mask
  std::vector<std::string> categorical; // one-hot encoded, categories sorted
  bool standardize = true;

  // Layout written by save_csv; round-trips bit-exactly.
  static CsvSchema native();
};

struct ColumnStats {
  std::vector<double> mean;
  std::vector<double> stddev; // clamped to 1 for constant columns
};

Dataset load_csv(const std::filesystem::path &path, const CsvSchema &schema);
void save_csv(const Dataset &ds, const std::filesystem::path &path);

ColumnStats fit_standardizer(const Matrix &features);
void apply_standardizer(const ColumnStats &stats, Matrix &features);

Dataset load_idx(const std::filesystem::path &images_path,
                 const std::filesystem::path &labels_path);

struct BlobOptions {
  std::size_t n_per_class = 50;
  std::size_t n_classes = 2;
  std::size_t dim = 2;
  double separation = 3.0;
  // Fraction of coordinates kept non-zero per sample; values below 1 emulate
  // sparse high-dimensional inputs.
  double active_fraction = 1.0;
};

// Class c centred at separation * e_c with unit covariance.
Dataset synth_gaussian_blobs(RngState rng, const BlobOptions &opts);

enum class CorruptionKind { label_flip, feature_noise };

struct CorruptionSpec {
  CorruptionKind kind = CorruptionKind::label_flip;
  std::size_t count = 0;
  int source_class = 1;
  int target_class = 7;
  double sigma = 1.0;
  RngState rng{0, streams::corrupt};
};

struct CorruptionEntry {
  SampleId id = 0;
  CorruptionKind kind = CorruptionKind::label_flip;
  int original_label = 0;
  bool operator==(const CorruptionEntry &) const = default;
};

const char *to_string(CorruptionKind kind) noexcept;
CorruptionKind corruption_kind_from_string(const std::string &s);

// Alters exactly spec.count samples that are not already corrupted and
// returns the altered copy. Appends one entry per altered sample to
// `manifest` when given.
Dataset corrupt(const Dataset &ds, const CorruptionSpec &spec,
                std::vector<CorruptionEntry> *manifest = nullptr);

std::string corruption_manifest_json(const std::vector<CorruptionEntry> &entries);
std::vector<CorruptionEntry> parse_corruption_manifest(const std::string &json);

} // namespace liveval
