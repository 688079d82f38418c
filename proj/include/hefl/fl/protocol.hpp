// Copyright 2026 The hefl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hefl/ckks/context.hpp"
#include "hefl/ckks/params.hpp"
#include "hefl/ckks/refresh.hpp"
#include "hefl/ckks/types.hpp"
#include "hefl/data/dataset.hpp"
#include "hefl/fl/bus.hpp"
#include "hefl/metrics/metrics.hpp"
#include "hefl/nn/encrypted.hpp"
#include "hefl/nn/model.hpp"

namespace hefl::fl {

// Three modes share one harness:
//   CFL      no offloading, no encryption; FedAvg over the N vehicles.
//   N-EncFL  offloaded data and all parameters travel in plaintext; the server trains on
//            the offloaded pool and joins FedAvg as an (N+1)th party.
//   EncFL    offloaded data, submissions and global updates are CKKS ciphertexts under one
//            coalition key; the server trains and averages without decrypting.
enum class Mode { kCfl, kNEncFl, kEncFl };

std::string_view mode_name(Mode m);
/// Accepts "CFL", "N-EncFL", "EncFL" (case-insensitive). Throws ConfigError otherwise.
Mode parse_mode(std::string_view text);

enum class RefreshMode { kKeyHolderInteractive, kTestOracle };

std::string_view refresh_mode_name(RefreshMode m);
RefreshMode parse_refresh_mode(std::string_view text);

/// Converged at round t when the mean test accuracy of rounds t-w+1..t differs from that of
/// rounds t-w..t-1 by less than `threshold` (a fraction, 0.001 = 0.1 pp).
struct ConvergenceRule {
  std::size_t window = 5;
  double threshold = 0.001;
  bool stop = true;  // halt at the first round the rule fires
};

/// Whether the rule fires on the accuracy history ending at the latest round.
bool convergence_fires(std::span<const double> accuracy, const ConvergenceRule& rule);
/// Mean of the last `window` entries; nullopt while the history is shorter.
std::optional<double> moving_average(std::span<const double> accuracy, std::size_t window);

struct FlConfig {
  Mode mode = Mode::kEncFl;
  std::size_t rsus = 1;
  /// One fraction per VU; its size is N. Ignored (treated as 0) in CFL mode.
  std::vector<double> offload;
  std::size_t max_rounds = 120;
  std::string ckks_profile = "desk";
  /// Explicit parameters; take precedence over ckks_profile.
  std::optional<ckks::CkksParams> ckks_params;
  std::vector<nn::LayerSpec> architecture = nn::default_architecture();
  nn::TrainConfig train;
  std::uint64_t seed = 1;
  RefreshMode refresh_mode = RefreshMode::kKeyHolderInteractive;
  ConvergenceRule convergence;
  /// Run VU rounds on worker threads alongside the server round.
  bool parallel = true;
  /// Decrypt the server's training loss for the round log (harness-side, EncFL only).
  bool log_server_loss = true;

  std::size_t vus() const { return offload.size(); }
};

/// Throws ConfigError naming the first problem.
void validate(const FlConfig& cfg);

struct TrafficCount {
  std::uint64_t bytes = 0;
  std::uint64_t messages = 0;
};

struct RoundRecord {
  std::size_t round = 0;  // 1-based
  std::vector<double> vu_loss;
  std::optional<double> server_loss;
  bool server_trained = false;
  std::uint64_t global_model_hash = 0;
  metrics::Metrics test;
  std::optional<double> moving_average;
  std::array<TrafficCount, kMessageKinds> traffic{};
  std::vector<std::uint64_t> rsu_bytes;
  std::uint64_t refreshes = 0;
};

struct PhaseTimings {
  std::size_t round = 0;
  double local_ms = 0.0;   // slowest VU
  double server_ms = 0.0;
  double aggregate_ms = 0.0;
  double update_ms = 0.0;  // global update delivery and VU-side decryption
  double eval_ms = 0.0;
};

struct ScanReport {
  bool applicable = false;  // only EncFL promises encrypted server-bound traffic
  std::uint64_t messages = 0;
  std::uint64_t bytes = 0;
  std::size_t patterns = 0;
  std::vector<std::string> violations;

  bool passed() const { return violations.empty(); }
};

struct RunResult {
  nn::PlainModel final_model;
  std::vector<RoundRecord> rounds;
  std::vector<PhaseTimings> timings;
  std::optional<std::size_t> converged_round;
  metrics::ConfusionMatrix final_confusion;
  metrics::Metrics final_metrics;
  ScanReport privacy;
};

struct VuState {
  std::size_t id = 0;
  double offload_fraction = 0.0;
  std::size_t dataset_size = 0;
  std::vector<data::Sample> local;    // DR_n
  std::vector<data::Sample> offload;  // DS_n; emptied once sent
  std::shared_ptr<const ckks::KeySet> keys;  // coalition keys (EncFL)
  nn::PlainModel model;
};

/// The server side. It holds public keys only; there is no field a secret key could live in.
struct ServerState {
  std::shared_ptr<const ckks::PublicKeys> keys;
  std::size_t dataset_size = 0;
  // EncFL
  std::vector<tensor::PackedVector> enc_x;
  std::vector<tensor::PackedVector> enc_y;
  std::optional<nn::EncModel> enc_model;
  std::optional<nn::EncModel> enc_global;
  // N-EncFL
  std::vector<std::vector<double>> plain_x;
  std::vector<std::vector<double>> plain_y;
  // Plaintext M_g from initialisation; in N-EncFL also M_s and the running global model.
  nn::PlainModel plain_model;
  nn::PlainModel plain_global;
  std::size_t round = 0;
};

/// Called after every aggregation with the decrypted inputs (VUs in id order, then the
/// server when it takes part) and the decrypted output.
using AggregateHook =
    std::function<void(std::size_t round, const std::vector<nn::PlainModel>& inputs, const nn::PlainModel& output)>;

/// Offload payload for N-EncFL: "HEFLPOFF" | u32 count | u32 features | per sample u8 label,
/// f64 features. Throws FormatError on anything else.
Bytes encode_plain_offload(std::span<const data::Sample> samples);
std::vector<data::Sample> decode_plain_offload(std::span<const std::uint8_t> bytes);

/// argmax of the plaintext forward pass (ties to the lowest class).
std::size_t classify(const nn::PlainModel& model, const std::vector<double>& x,
                     nn::ActivationMode mode = nn::ActivationMode::kPoly);
/// Encrypted scores; the key holder decrypts and takes the argmax.
tensor::PackedVector classify_enc(const nn::EncEnv& env, const nn::EncModel& model, const tensor::PackedVector& x);

metrics::ConfusionMatrix confusion(const nn::PlainModel& model, std::span<const data::Sample> test,
                                   nn::ActivationMode mode = nn::ActivationMode::kPoly);

/// A full simulated deployment: N vehicles, M RSUs, one server, one message bus.
/// Construction runs the pre-learning phase.
class System {
 public:
  System(FlConfig cfg, std::vector<std::vector<data::Sample>> vu_datasets, std::vector<data::Sample> test);
  ~System();
  System(const System&) = delete;
  System& operator=(const System&) = delete;

  /// One learning round; returns its record (also appended to the run history).
  const RoundRecord& run_round();
  /// Rounds until T_max or convergence. `on_round` sees each record as soon as it exists, so
  /// callers can persist logs that survive a later abort.
  RunResult run(const std::function<void(const RoundRecord&, const PhaseTimings&)>& on_round = {});

  void set_aggregate_hook(AggregateHook hook) { aggregate_hook_ = std::move(hook); }

  struct Submission {
    std::size_t vu = 0;
    Bytes payload;
  };
  /// FedAvg over one submission per VU plus the server model (EncFL, N-EncFL) or over the
  /// VUs alone (CFL). The result becomes the global and the server model. Throws
  /// ProtocolError naming the VU whose submission is missing, duplicated or malformed.
  void aggregate(std::vector<Submission> submissions);

  /// Decrypted (or plaintext) global model as held by VU 0.
  const nn::PlainModel& global_model() const { return vus_.front().model; }
  const FlConfig& config() const { return cfg_; }
  const std::vector<VuState>& vus() const { return vus_; }
  const ServerState& server() const { return server_; }
  Bus& bus() { return *bus_; }
  const std::shared_ptr<const ckks::CkksContext>& context() const { return ctx_; }
  const ScanReport& privacy() const { return scan_report_; }
  const std::vector<RoundRecord>& records() const { return records_; }
  std::optional<std::size_t> converged_round() const { return converged_; }
  bool converged() const { return converged_.has_value(); }
  /// Sum over VUs of |DR_n| plus |DS^|.
  std::size_t sample_count() const;
  std::size_t initial_sample_count() const { return initial_count_; }

  /// Harness access to the coalition secret key (for post-hoc decryption in tests only).
  const ckks::SecretKey& harness_secret_key() const;

 private:
  struct KeyHolder;

  void pre_learning(std::vector<std::vector<data::Sample>> vu_datasets);
  void setup_scan();
  void observe(const Message& m);
  double local_round(VuState& vu);
  std::optional<double> server_round();
  void deliver_global();
  Bytes refresh_transport(Bytes request);

  FlConfig cfg_;
  std::shared_ptr<const ckks::CkksContext> ctx_;
  std::unique_ptr<Bus> bus_;
  std::vector<VuState> vus_;
  ServerState server_;
  std::unique_ptr<KeyHolder> key_holder_;
  std::unique_ptr<ckks::RefreshProvider> refresh_;
  std::mutex transport_mu_;
  std::vector<data::Sample> test_;
  std::size_t initial_count_ = 0;

  ByteScanner scanner_;
  std::mutex scan_mu_;
  ScanReport scan_report_;

  AggregateHook aggregate_hook_;
  std::vector<RoundRecord> records_;
  std::vector<PhaseTimings> timings_;
  std::vector<double> accuracy_history_;
  std::optional<std::size_t> converged_;
  Traffic last_traffic_;
  std::uint64_t last_refreshes_ = 0;
  PhaseTimings pending_timing_;
};

/// pre_learning, then run. Convenience for callers that do not need the System.
RunResult run_protocol(const FlConfig& cfg, std::vector<std::vector<data::Sample>> vu_datasets,
                       std::vector<data::Sample> test,
                       const std::function<void(const RoundRecord&, const PhaseTimings&)>& on_round = {});

/// JSON line for one round record.
std::string round_json(const RoundRecord& r);
/// JSON line for the final summary.
std::string summary_json(const FlConfig& cfg, const RunResult& result);
std::string timings_json(const PhaseTimings& t);

}  // namespace hefl::fl
