// Copyright 2026 The hefl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "hefl/app/config.hpp"
#include "hefl/ckks/params.hpp"
#include "hefl/data/dataset.hpp"
#include "hefl/fl/protocol.hpp"
#include "hefl/metrics/metrics.hpp"

namespace hefl::app {

enum ExitCode : int {
  kExitOk = 0,
  kExitConfig = 2,   // bad flags, bad or incomplete config
  kExitRuntime = 3,  // the experiment aborted
  kExitVerify = 4,   // an invariant check failed
};

/// Full command line, e.g. {"hefl", "run", "--config", "x.json"}. Never throws; every failure
/// is reported on `err` as one or more "error: ..." lines and mapped to an exit code.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

struct PreparedData {
  data::DatasetSplit split;
  std::vector<std::vector<data::Sample>> shards;  // one per VU
  std::optional<data::LoadSummary> load;          // CSV sources only
  std::vector<std::string> feature_names;
};

/// Synthetic generation or CSV ingestion + rebalancing, then the stratified 80/20 split,
/// scaling and per-VU partition, all driven by c.data_seed.
PreparedData prepare_data(const ExperimentConfig& c, std::size_t vus);

/// Runs one experiment and writes its artifacts into `dir`:
///   config.json        effective config
///   rounds.jsonl       one line per round, then a summary line (flushed as it goes)
///   timings.jsonl      wall-clock per phase
///   final_model.hefl   plaintext checkpoint (+ .manifest.json)
///   confusion.csv, per_class.csv, metrics.csv, convergence.csv
/// Everything but timings.jsonl is byte-identical across runs with the same config.
fl::RunResult run_experiment(const ExperimentConfig& c, const PreparedData& data, const std::filesystem::path& dir,
                             std::ostream& progress);

/// convergence.csv body from round records.
std::string convergence_csv(const std::vector<fl::RoundRecord>& rounds);

struct CheckResult {
  std::string name;
  enum class Status { kPass, kFail, kSkip } status = Status::kPass;
  std::string detail;
};

/// The invariant suite behind `verify`, against one CKKS parameter set.
std::vector<CheckResult> run_invariant_suite(const ckks::CkksParams& params);

/// A preset name, or a JSON file {"ring_dimension", "modulus_chain", "special_modulus",
/// "scale", "refresh_threshold", "error_stddev"}. Parameters are not validated here.
ckks::CkksParams load_profile(const std::string& name_or_path);

}  // namespace hefl::app
