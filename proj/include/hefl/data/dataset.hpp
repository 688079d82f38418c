// Copyright 2026 The hefl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hefl/bytes.hpp"

namespace hefl::data {

inline constexpr std::size_t kNumClasses = 6;
inline constexpr std::size_t kDefaultFeatures = 32;

/// Class order used everywhere (labels, one-hot targets, confusion matrices).
inline constexpr std::array<std::string_view, kNumClasses> kClassNames = {
    "Normal", "DDoS", "MitM", "Injection", "Malware", "Reconnaissance"};

using ClassCounts = std::array<std::size_t, kNumClasses>;

/// Per-class counts of the Edge-IIoT profile the experiments mimic (31,400 in total).
inline constexpr ClassCounts kTableCounts = {5320, 5472, 4000, 5589, 5504, 5515};

/// Class index for a canonical class name; nullopt when unknown.
std::optional<std::size_t> class_index(std::string_view name);

struct Sample {
  std::vector<double> features;
  std::size_t label = 0;

  friend bool operator==(const Sample&, const Sample&) = default;
};

ClassCounts count_classes(std::span<const Sample> samples);
std::size_t total(const ClassCounts& c);

/// kTableCounts scaled to `total` samples (largest-remainder rounding, so the sum is exact).
ClassCounts scaled_table_counts(std::size_t total);

// ---- CSV ingestion ----------------------------------------------------------

/// Column mapping for load_csv, read from a JSON file:
///   {
///     "label_column": "Attack_type",
///     "features": ["col_a", "col_b", ...],      // feature i comes from features[i]
///     "label_map": {"Normal": "Normal", "DDoS_*": "DDoS", ...}
///   }
/// Unlisted columns are dropped. label_map keys match exactly, or by prefix when they end
/// in '*'; exact keys win, then the longest prefix.
struct Schema {
  std::string label_column;
  std::vector<std::string> features;
  std::vector<std::pair<std::string, std::size_t>> label_map;

  std::optional<std::size_t> map_label(std::string_view raw) const;
};

Schema parse_schema(std::string_view json_text);
Schema load_schema(const std::filesystem::path& path);

struct LoadSummary {
  std::size_t rows = 0;
  std::size_t loaded = 0;
  std::size_t skipped_numeric = 0;  // unparseable or non-finite feature
  std::size_t skipped_label = 0;    // label outside the mapping
  std::size_t skipped_shape = 0;    // wrong number of fields
  std::size_t dropped_reservoir = 0;

  std::size_t skipped() const { return skipped_numeric + skipped_label + skipped_shape; }
};

struct LoadOptions {
  /// When non-zero, keep at most this many rows per class by reservoir sampling, so files
  /// far larger than memory can be reduced in one pass.
  std::size_t reservoir_per_class = 0;
  std::uint64_t seed = 1;
};

struct LoadResult {
  std::vector<Sample> samples;
  LoadSummary summary;
};

/// Throws DataError for a missing file, a missing mapped column or zero usable rows.
LoadResult load_csv(const std::filesystem::path& path, const Schema& schema, const LoadOptions& opts = {});

/// Splits one CSV record (RFC 4180 quoting).
std::vector<std::string> split_csv_line(std::string_view line);

// ---- Transformations --------------------------------------------------------

/// Classes above their target are downsampled without replacement; classes below keep every
/// sample and top up by drawing with replacement. Output is shuffled.
/// Throws DataError when a class with a positive target has no samples.
std::vector<Sample> rebalance(std::span<const Sample> samples, const ClassCounts& targets, std::uint64_t seed);

/// Per-feature min-max scaler. A feature that is constant on the fitting data maps to 0.5.
struct Scaler {
  std::vector<double> min;
  std::vector<double> max;

  static Scaler fit(std::span<const Sample> samples);
  /// Scales and clamps into [0, 1].
  std::vector<double> apply(std::span<const double> x) const;
  std::vector<double> inverse(std::span<const double> x) const;
};

struct DatasetSplit {
  std::vector<Sample> train;
  std::vector<Sample> test;
  Scaler scaler;
};

/// Stratified split (per class round(train_fraction * n_c) go to train, at least one to
/// each side), then min-max scaling fitted on train and applied to both. Needs at least two
/// samples of every class that occurs.
DatasetSplit scale_and_split(std::span<const Sample> samples, double train_fraction, std::uint64_t seed);

struct VuShard {
  std::vector<Sample> local;    // DR_n, stays on the vehicle
  std::vector<Sample> offload;  // DS_n, encrypted and sent to the server
};

/// Deals `train` into n shards with the same class profile (per class, every shard gets
/// floor(n_c / n) or one more). Throws DataError if n exceeds the size of a present class.
std::vector<std::vector<Sample>> partition_for_vus(std::span<const Sample> train, std::size_t n, std::uint64_t seed);

/// Splits one VU's data into local and offloaded parts, |offload| = round(p * |data|),
/// stratified by class.
VuShard split_offload(std::span<const Sample> data, double p, std::uint64_t seed);

/// partition_for_vus followed by split_offload per shard; N = offload.size().
/// Throws DataError if N exceeds the size of some present class or a p_n is outside [0, 1].
std::vector<VuShard> shard_for_vus(std::span<const Sample> train, std::span<const double> offload,
                                   std::uint64_t seed);

// ---- Synthetic data ---------------------------------------------------------

struct SynthSpec {
  std::size_t features = kDefaultFeatures;
  /// Class centres are drawn from N(0, separation^2) per coordinate; samples add N(0, 1)
  /// noise. At 0 the classes coincide.
  double separation = 1.0;
};

/// Seeded Gaussian clusters, one per class, emitted in shuffled order.
std::vector<Sample> synth_generate(const SynthSpec& spec, const ClassCounts& counts, std::uint64_t seed);

// ---- Persistence ------------------------------------------------------------

// Dataset container:
//   "HEFLDATA" | u16 version | u32 feature count | u64 train count | u64 test count |
//   per sample u8 label then f64 features | scaler min[], max[] as f64 | u64 FNV-1a of the above
inline constexpr std::uint16_t kDatasetVersion = 1;

Bytes serialize_split(const DatasetSplit& split);
DatasetSplit deserialize_split(std::span<const std::uint8_t> bytes);

/// CSV with a header row (f0..f{k-1},label) and the class name in the last column.
std::string to_csv(std::span<const Sample> samples);

}  // namespace hefl::data
