// Copyright 2026 The hefl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "hefl/data/dataset.hpp"
#include "hefl/error.hpp"
#include "hefl/fl/protocol.hpp"

namespace hefl::app {

/// Every problem found in a config file, not just the first.
class ConfigIssues : public ConfigError {
 public:
  explicit ConfigIssues(std::vector<std::string> issues);
  const std::vector<std::string>& issues() const { return issues_; }

 private:
  std::vector<std::string> issues_;
};

struct DatasetSource {
  enum class Kind { kSynthetic, kCsv };
  Kind kind = Kind::kSynthetic;
  /// Synthetic: total sample count, split across classes in the Edge-IIoT profile.
  /// CSV: rebalance target total; 0 picks the full profile when every class is large
  /// enough and a proportional scale-down otherwise.
  std::size_t samples = 3140;
  std::size_t features = data::kDefaultFeatures;
  double separation = 1.0;
  std::string csv;     // absolute once parsed
  std::string schema;  // absolute once parsed
  std::size_t reservoir_per_class = 0;
  bool rebalance = true;

  friend bool operator==(const DatasetSource&, const DatasetSource&) = default;
};

struct CompareSpec {
  std::vector<fl::Mode> modes;
  /// Grid axes; empty means "the top-level value".
  std::vector<std::size_t> vus;
  std::vector<double> offload;

  friend bool operator==(const CompareSpec&, const CompareSpec&) = default;
};

// File format (JSON). Every key is optional except "mode"; defaults shown:
//   {
//     "name": "experiment",
//     "mode": "EncFL",                     // CFL | N-EncFL | EncFL
//     "vus": 2, "rsus": 1,
//     "offload": 0.1,                      // or one fraction per VU
//     "max_rounds": 120,
//     "ckks_profile": "desk",              // EncFL only
//     "refresh_mode": "key_holder_interactive",
//     "architecture": "32-16-16-6",
//     "train": {"learning_rate": 0.05, "batch_size": 16, "epochs_per_round": 1,
//               "activation": "poly"},     // analytic | poly | poly_exact_derivative
//     "convergence": {"window": 5, "threshold": 0.001, "stop": true},
//     "seeds": {"data": 1, "protocol": 1},
//     "dataset": {"source": "synthetic", "samples": 3140, "features": 32, "separation": 1.0}
//             or {"source": "csv", "path": "...", "schema": "...", "samples": 0,
//                 "reservoir_per_class": 0, "rebalance": true},
//     "train_fraction": 0.8,
//     "output_dir": "out",
//     "parallel": true,
//     "log_server_loss": true,
//     "compare": {"modes": ["N-EncFL", "EncFL"], "vus": [2, 3], "offload": [0.1, 0.2]}
//   }
// Relative paths resolve against the config file's directory.
struct ExperimentConfig {
  std::string name = "experiment";
  fl::Mode mode = fl::Mode::kEncFl;
  std::size_t vus = 2;
  std::size_t rsus = 1;
  std::vector<double> offload = {0.1};
  std::size_t max_rounds = 120;
  std::string ckks_profile = "desk";
  fl::RefreshMode refresh_mode = fl::RefreshMode::kKeyHolderInteractive;
  std::string architecture = "32-16-16-6";
  double learning_rate = 0.05;
  std::size_t batch_size = 16;
  std::size_t epochs_per_round = 1;
  nn::ActivationMode activation = nn::ActivationMode::kPoly;
  std::size_t convergence_window = 5;
  double convergence_threshold = 0.001;
  bool stop_on_convergence = true;
  std::uint64_t data_seed = 1;
  std::uint64_t protocol_seed = 1;
  DatasetSource dataset;
  double train_fraction = 0.8;
  std::string output_dir = "out";
  bool parallel = true;
  bool log_server_loss = true;
  CompareSpec compare;

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

/// Parses and validates. Throws ConfigIssues listing every problem.
ExperimentConfig parse_config(std::string_view json_text, const std::filesystem::path& base_dir);
ExperimentConfig load_config(const std::filesystem::path& path);
/// Canonical JSON; parse_config(serialize_config(c), any) == c.
std::string serialize_config(const ExperimentConfig& c);

/// Every problem with a config, empty when valid.
std::vector<std::string> config_problems(const ExperimentConfig& c);

/// Protocol settings for one run of `mode` (offload expanded to one fraction per VU).
fl::FlConfig to_fl_config(const ExperimentConfig& c);

std::string_view activation_name(nn::ActivationMode m);

}  // namespace hefl::app
