// Copyright 2026 The hefl Authors
// SPDX-License-Identifier: Apache-2.0

#include "hefl/fl/protocol.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstring>
#include <future>

#include "hefl/ckks/evaluator.hpp"
#include "hefl/ckks/params.hpp"
#include "hefl/ckks/serialize.hpp"
#include "hefl/error.hpp"
#include "hefl/nn/checkpoint.hpp"
#include "hefl/tensor/packing.hpp"
#include "json.hpp"

namespace hefl::fl {

namespace {

using Clock = std::chrono::steady_clock;
using ordered_json = nlohmann::ordered_json;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

// Seed domains; every random stream in a run is mix(seed, domain, ...).
enum Domain : std::uint64_t {
  kSplit = 1,
  kKeys,
  kRecrypt,
  kOracle,
  kOffloadEnc,
  kInit,
  kModelEnc,
  kVuEpoch,
  kServerEpoch,
  kSubmitEnc,
};

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t mix(std::uint64_t seed, std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = splitmix(seed);
  for (auto p : parts) h = splitmix(h ^ p);
  return h;
}

constexpr char kPlainOffloadMagic[8] = {'H', 'E', 'F', 'L', 'P', 'O', 'F', 'F'};
constexpr char kEncOffloadMagic[8] = {'H', 'E', 'F', 'L', 'E', 'O', 'F', 'F'};

void write_magic(ByteWriter& w, const char (&magic)[8]) {
  w.raw({reinterpret_cast<const std::uint8_t*>(magic), 8});
}

void expect_magic(ByteReader& r, const char (&magic)[8], const char* what) {
  const auto m = r.raw(8);
  if (std::memcmp(m.data(), magic, 8) != 0) throw FormatError(std::string("not ") + what + " (bad magic)");
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string hex64(std::uint64_t v) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = kDigits[v & 15];
  return s;
}

void split_xy(std::span<const data::Sample> samples, std::size_t classes, std::vector<std::vector<double>>& x,
              std::vector<std::vector<double>>& y) {
  x.clear();
  y.clear();
  x.reserve(samples.size());
  y.reserve(samples.size());
  for (const auto& s : samples) {
    x.push_back(s.features);
    y.push_back(nn::one_hot(s.label, classes));
  }
}

ordered_json metrics_json(const metrics::Metrics& m) {
  ordered_json j;
  j["ovr_accuracy"] = m.ovr_accuracy;
  j["micro_accuracy"] = m.micro_accuracy;
  j["macro_precision"] = m.macro_precision;
  j["macro_recall"] = m.macro_recall;
  return j;
}

nn::PlainModel mean_of(const std::vector<nn::PlainModel>& parts) {
  nn::PlainModel out = parts.front();
  const double inv = 1.0 / static_cast<double>(parts.size());
  for (std::size_t l = 0; l < out.layers.size(); ++l) {
    auto& w = out.layers[l].w.data;
    auto& b = out.layers[l].b;
    for (std::size_t k = 1; k < parts.size(); ++k) {
      const auto& pw = parts[k].layers[l].w.data;
      const auto& pb = parts[k].layers[l].b;
      for (std::size_t i = 0; i < w.size(); ++i) w[i] += pw[i];
      for (std::size_t i = 0; i < b.size(); ++i) b[i] += pb[i];
    }
    for (auto& v : w) v *= inv;
    for (auto& v : b) v *= inv;
  }
  return out;
}

}  // namespace

std::string_view mode_name(Mode m) {
  switch (m) {
    case Mode::kCfl: return "CFL";
    case Mode::kNEncFl: return "N-EncFL";
    case Mode::kEncFl: return "EncFL";
  }
  return "unknown";
}

Mode parse_mode(std::string_view text) {
  const auto t = lower(text);
  if (t == "cfl") return Mode::kCfl;
  if (t == "n-encfl") return Mode::kNEncFl;
  if (t == "encfl") return Mode::kEncFl;
  throw ConfigError("unknown mode '" + std::string(text) + "' (expected CFL, N-EncFL or EncFL)");
}

std::string_view refresh_mode_name(RefreshMode m) {
  return m == RefreshMode::kTestOracle ? "test_oracle" : "key_holder_interactive";
}

RefreshMode parse_refresh_mode(std::string_view text) {
  if (text == "key_holder_interactive") return RefreshMode::kKeyHolderInteractive;
  if (text == "test_oracle") return RefreshMode::kTestOracle;
  throw ConfigError("unknown refresh mode '" + std::string(text) + "' (expected key_holder_interactive or test_oracle)");
}

void validate(const FlConfig& cfg) {
  if (cfg.offload.empty()) throw ConfigError("at least one VU is required");
  if (cfg.rsus == 0) throw ConfigError("at least one RSU is required");
  for (std::size_t n = 0; n < cfg.offload.size(); ++n) {
    const double p = cfg.offload[n];
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("offload fraction of vu" + std::to_string(n) + " is outside [0, 1]");
  }
  try {
    nn::validate_specs(cfg.architecture);
  } catch (const ShapeError& e) {
    throw ConfigError(std::string("architecture: ") + e.what());
  }
  if (cfg.train.batch_size == 0) throw ConfigError("batch_size must be positive");
  if (!(cfg.train.learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (cfg.convergence.window == 0) throw ConfigError("convergence window must be positive");
  if (!(cfg.convergence.threshold >= 0.0)) throw ConfigError("convergence threshold must be non-negative");
  if (cfg.mode == Mode::kEncFl && cfg.ckks_params) {
    const auto v = cfg.ckks_params->violations();
    if (!v.empty()) throw ConfigError("ckks parameters: " + v.front());
  } else if (cfg.mode == Mode::kEncFl) {
    const auto names = ckks::preset_names();
    if (std::find(names.begin(), names.end(), cfg.ckks_profile) == names.end()) {
      throw ConfigError("unknown CKKS profile '" + cfg.ckks_profile + "'");
    }
  }
}

std::optional<double> moving_average(std::span<const double> accuracy, std::size_t window) {
  if (window == 0 || accuracy.size() < window) return std::nullopt;
  double s = 0.0;
  for (double a : accuracy.last(window)) s += a;
  return s / static_cast<double>(window);
}

bool convergence_fires(std::span<const double> accuracy, const ConvergenceRule& rule) {
  if (accuracy.size() < rule.window + 1) return false;
  const auto now = moving_average(accuracy, rule.window);
  const auto before = moving_average(accuracy.first(accuracy.size() - 1), rule.window);
  return std::abs(*now - *before) < rule.threshold;
}

// ---- offload payloads -------------------------------------------------------

Bytes encode_plain_offload(std::span<const data::Sample> samples) {
  Bytes out;
  ByteWriter w(out);
  write_magic(w, kPlainOffloadMagic);
  w.u32(static_cast<std::uint32_t>(samples.size()));
  w.u32(static_cast<std::uint32_t>(samples.empty() ? 0 : samples.front().features.size()));
  for (const auto& s : samples) {
    w.u8(static_cast<std::uint8_t>(s.label));
    for (double v : s.features) w.f64(v);
  }
  return out;
}

std::vector<data::Sample> decode_plain_offload(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  expect_magic(r, kPlainOffloadMagic, "a plaintext offload payload");
  const std::uint32_t count = r.u32();
  const std::uint32_t features = r.u32();
  if (r.remaining() != static_cast<std::size_t>(count) * (1 + 8 * static_cast<std::size_t>(features))) {
    throw FormatError("plaintext offload payload has the wrong length");
  }
  std::vector<data::Sample> out(count);
  for (auto& s : out) {
    s.label = r.u8();
    if (s.label >= data::kNumClasses) throw FormatError("plaintext offload label out of range");
    s.features.resize(features);
    for (auto& v : s.features) v = r.f64();
  }
  return out;
}

// ---- classification ---------------------------------------------------------

std::size_t classify(const nn::PlainModel& model, const std::vector<double>& x, nn::ActivationMode mode) {
  if (model.specs.empty() || x.size() != model.specs.front().in_dim) {
    throw ShapeError("classify: input has " + std::to_string(x.size()) + " features, model expects " +
                     std::to_string(model.specs.empty() ? 0 : model.specs.front().in_dim));
  }
  return nn::argmax(nn::forward_plain(model, x, mode));
}

tensor::PackedVector classify_enc(const nn::EncEnv& env, const nn::EncModel& model, const tensor::PackedVector& x) {
  if (model.specs.empty() || x.length != model.specs.front().in_dim) {
    throw ShapeError("classify_enc: input length does not match the model");
  }
  return nn::forward_enc(env, model, x);
}

metrics::ConfusionMatrix confusion(const nn::PlainModel& model, std::span<const data::Sample> test,
                                   nn::ActivationMode mode) {
  metrics::ConfusionMatrix cm;
  for (const auto& s : test) cm.accumulate(s.label, classify(model, s.features, mode));
  return cm;
}

// ---- System -----------------------------------------------------------------

struct System::KeyHolder {
  std::size_t vu = 0;
  ckks::RecryptService service;
};

System::System(FlConfig cfg, std::vector<std::vector<data::Sample>> vu_datasets, std::vector<data::Sample> test)
    : cfg_(std::move(cfg)), test_(std::move(test)) {
  validate(cfg_);
  if (vu_datasets.size() != cfg_.vus()) {
    throw ConfigError("got " + std::to_string(vu_datasets.size()) + " VU datasets for " +
                      std::to_string(cfg_.vus()) + " VUs");
  }
  if (test_.empty()) throw DataError("empty test set");
  pre_learning(std::move(vu_datasets));
}

System::~System() = default;

const ckks::SecretKey& System::harness_secret_key() const {
  if (!vus_.front().keys) throw Error("no coalition key outside EncFL mode");
  return vus_.front().keys->secret;
}

std::size_t System::sample_count() const {
  std::size_t n = server_.dataset_size;
  for (const auto& v : vus_) n += v.local.size() + v.offload.size();
  return n;
}

void System::pre_learning(std::vector<std::vector<data::Sample>> vu_datasets) {
  const bool enc = cfg_.mode == Mode::kEncFl;
  const std::size_t n_vu = cfg_.vus();
  const std::size_t in_dim = cfg_.architecture.front().in_dim;
  const std::size_t classes = cfg_.architecture.back().out_dim;
  for (std::size_t n = 0; n < n_vu; ++n) {
    if (vu_datasets[n].empty()) throw DataError("vu" + std::to_string(n) + " has an empty dataset");
    for (const auto& s : vu_datasets[n]) {
      if (s.features.size() != in_dim) {
        throw DataError("vu" + std::to_string(n) + " samples have " + std::to_string(s.features.size()) +
                        " features, the architecture expects " + std::to_string(in_dim));
      }
      if (s.label >= classes) throw DataError("vu" + std::to_string(n) + " has a label beyond the output layer");
    }
  }
  for (const auto& s : test_) {
    if (s.features.size() != in_dim || s.label >= classes) throw DataError("test set does not match the architecture");
  }

  bus_ = std::make_unique<Bus>(n_vu, cfg_.rsus);

  // Each VU picks p_n and splits D_n into DR_n and DS_n.
  vus_.resize(n_vu);
  for (std::size_t n = 0; n < n_vu; ++n) {
    auto& vu = vus_[n];
    vu.id = n;
    vu.offload_fraction = cfg_.mode == Mode::kCfl ? 0.0 : cfg_.offload[n];
    vu.dataset_size = vu_datasets[n].size();
    auto shard = data::split_offload(vu_datasets[n], vu.offload_fraction, mix(cfg_.seed, {kSplit, n}));
    vu.local = std::move(shard.local);
    vu.offload = std::move(shard.offload);
    initial_count_ += vu.dataset_size;
  }

  // One coalition key pair, generated by VU 0 and shared VU-to-VU (never via the
  // server). The server receives the public and evaluation keys.
  if (enc) {
    ctx_ = ckks::CkksContext::create(cfg_.ckks_params ? *cfg_.ckks_params : ckks::preset(cfg_.ckks_profile));
    nn::check_fits(cfg_.architecture, tensor::SlotGrid::of(*ctx_));
    auto keys = std::make_shared<const ckks::KeySet>(ckks::keygen(*ctx_, mix(cfg_.seed, {kKeys})));
    for (auto& vu : vus_) vu.keys = keys;
    server_.keys = std::make_shared<const ckks::PublicKeys>(keys->pub);
    key_holder_ = std::make_unique<KeyHolder>(
        KeyHolder{0, ckks::RecryptService(ctx_, keys->secret, keys->pub.encryption, mix(cfg_.seed, {kRecrypt}))});
    if (cfg_.refresh_mode == RefreshMode::kTestOracle) {
      refresh_ = std::make_unique<ckks::OracleRefresh>(ctx_, keys->secret, keys->pub.encryption,
                                                       mix(cfg_.seed, {kOracle}));
    } else {
      refresh_ = std::make_unique<ckks::InteractiveRefresh>(ctx_, [this](Bytes b) { return refresh_transport(std::move(b)); });
    }
  }
  setup_scan();

  // Offload DS_n (encrypted in EncFL) and pool it at the server.
  if (cfg_.mode != Mode::kCfl) {
    for (auto& vu : vus_) {
      Bytes payload;
      if (enc) {
        ckks::Rng rng(mix(cfg_.seed, {kOffloadEnc, vu.id}));
        ByteWriter w(payload);
        write_magic(w, kEncOffloadMagic);
        w.u32(static_cast<std::uint32_t>(vu.offload.size()));
        for (const auto& s : vu.offload) {
          tensor::write_packed(w, nn::encrypt_input(*ctx_, s.features, vu.keys->pub.encryption, rng));
          tensor::write_packed(w, nn::encrypt_label(*ctx_, cfg_.architecture, nn::one_hot(s.label, classes),
                                                    vu.keys->pub.encryption, rng));
        }
      } else {
        payload = encode_plain_offload(vu.offload);
      }
      bus_->send({MessageKind::kOffloadData, Endpoint::vu(vu.id), Endpoint::server(), std::move(payload), 0, {}});
      vu.offload.clear();
      vu.offload.shrink_to_fit();
    }
    std::vector<Message> received;
    for (std::size_t n = 0; n < n_vu; ++n) received.push_back(bus_->receive(Endpoint::server(), MessageKind::kOffloadData));
    std::sort(received.begin(), received.end(), [](const Message& a, const Message& b) { return a.sender < b.sender; });
    for (const auto& m : received) {
      if (enc) {
        ByteReader r(m.payload);
        expect_magic(r, kEncOffloadMagic, "an encrypted offload payload");
        const std::uint32_t count = r.u32();
        for (std::uint32_t i = 0; i < count; ++i) {
          server_.enc_x.push_back(tensor::read_packed_vector(r, *ctx_));
          server_.enc_y.push_back(tensor::read_packed_vector(r, *ctx_));
        }
        server_.dataset_size += count;
      } else {
        for (const auto& s : decode_plain_offload(m.payload)) {
          server_.plain_x.push_back(s.features);
          server_.plain_y.push_back(nn::one_hot(s.label, classes));
        }
        server_.dataset_size = server_.plain_x.size();
      }
    }
  }

  // The server initialises M_g = M_s and distributes M_g in plaintext.
  server_.plain_model = nn::init_model(cfg_.architecture, mix(cfg_.seed, {kInit}));
  server_.plain_global = server_.plain_model;
  const Bytes init = nn::serialize_model(server_.plain_model);
  for (const auto& vu : vus_) {
    bus_->send({MessageKind::kDistributeGlobal, Endpoint::server(), Endpoint::vu(vu.id), init, 0, {}});
  }
  for (auto& vu : vus_) {
    vu.model = nn::deserialize_plain_model(bus_->receive(Endpoint::vu(vu.id), MessageKind::kDistributeGlobal).payload);
  }

  // The server encrypts its copies.
  if (enc) {
    ckks::Rng rng(mix(cfg_.seed, {kModelEnc}));
    server_.enc_model = nn::encrypt_model(*ctx_, server_.plain_model, server_.keys->encryption, rng);
    server_.enc_global = server_.enc_model;
  }
  last_traffic_ = bus_->traffic();
}

void System::setup_scan() {
  scan_report_.applicable = cfg_.mode == Mode::kEncFl;
  if (scan_report_.applicable) {
    // Secret-key limbs, sampled every 512 bytes of the serialized key.
    const Bytes sk = ckks::serialize(vus_.front().keys->secret);
    for (std::size_t at = 64; at + ByteScanner::kWindow <= sk.size(); at += 512) {
      scanner_.add(std::span<const std::uint8_t>(sk).subspan(at, ByteScanner::kWindow));
    }
    // Two adjacent raw features of every VU sample. Values a scaler pins to 0, 0.5 or 1 are
    // skipped: their bytes are too regular to identify a sample.
    auto distinctive = [](double v) { return v != 0.0 && v != 0.5 && v != 1.0; };
    for (const auto& vu : vus_) {
      for (const auto* part : {&vu.local, &vu.offload}) {
        for (const auto& s : *part) {
          for (std::size_t i = 0; i + 1 < s.features.size(); ++i) {
            if (distinctive(s.features[i]) && distinctive(s.features[i + 1])) {
              std::array<std::uint8_t, ByteScanner::kWindow> p;
              std::memcpy(p.data(), &s.features[i], 16);
              scanner_.add(p);
              break;
            }
          }
        }
      }
    }
    scan_report_.patterns = scanner_.size();
  }
  bus_->set_observer([this](const Message& m) { observe(m); });
}

void System::observe(const Message& m) {
  if (!scan_report_.applicable || m.receiver.role != Endpoint::Role::kServer) return;
  std::lock_guard lock(scan_mu_);
  scan_report_.messages += 1;
  scan_report_.bytes += m.payload.size();
  const std::string where = std::string(kind_name(m.kind)) + " from " + m.sender.name() + " (round " +
                            std::to_string(m.round) + ")";
  if (m.kind == MessageKind::kOffloadData || m.kind == MessageKind::kSubmitLocalParams) {
    auto parses = [&](auto&& decode) {
      try {
        decode();
        return true;
      } catch (const Error&) {
        return false;
      }
    };
    if (parses([&] { nn::deserialize_plain_model(m.payload); })) {
      scan_report_.violations.push_back(where + ": decodes as a plaintext model");
    }
    if (parses([&] { data::deserialize_split(m.payload); })) {
      scan_report_.violations.push_back(where + ": decodes as a plaintext dataset");
    }
    if (parses([&] { decode_plain_offload(m.payload); })) {
      scan_report_.violations.push_back(where + ": decodes as plaintext offload samples");
    }
  }
  if (scanner_.contains_any(m.payload)) {
    scan_report_.violations.push_back(where + ": contains secret-key or raw feature bytes");
  }
}

Bytes System::refresh_transport(Bytes request) {
  std::lock_guard lock(transport_mu_);
  const auto holder = Endpoint::vu(key_holder_->vu);
  bus_->send({MessageKind::kRefreshRequest, Endpoint::server(), holder, std::move(request), server_.round, {}});
  // The key holder serves its queue.
  while (auto req = bus_->try_receive(holder, MessageKind::kRefreshRequest)) {
    bus_->send({MessageKind::kRefreshResponse, holder, Endpoint::server(), key_holder_->service.handle(req->payload),
                req->round, {}});
  }
  return bus_->receive(Endpoint::server(), MessageKind::kRefreshResponse).payload;
}

double System::local_round(VuState& vu) {
  const std::size_t round = server_.round;
  std::vector<std::vector<double>> x, y;
  split_xy(vu.local, cfg_.architecture.back().out_dim, x, y);
  // An empty DR_n skips training; the VU resubmits the model it received.
  const double loss = x.empty() ? 0.0 : nn::train_plain(vu.model, x, y, cfg_.train, mix(cfg_.seed, {kVuEpoch, vu.id, round}));
  Bytes payload;
  if (cfg_.mode == Mode::kEncFl) {
    ckks::Rng rng(mix(cfg_.seed, {kSubmitEnc, vu.id, round}));
    payload = nn::serialize_model(nn::encrypt_model(*ctx_, vu.model, vu.keys->pub.encryption, rng), ctx_->params_hash());
  } else {
    payload = nn::serialize_model(vu.model);
  }
  bus_->send({MessageKind::kSubmitLocalParams, Endpoint::vu(vu.id), Endpoint::server(), std::move(payload), round, {}});
  return loss;
}

std::optional<double> System::server_round() {
  if (cfg_.mode == Mode::kCfl || server_.dataset_size == 0) return std::nullopt;
  const std::uint64_t epoch_seed = mix(cfg_.seed, {kServerEpoch, server_.round});
  if (cfg_.mode == Mode::kNEncFl) {
    return nn::train_plain(server_.plain_model, server_.plain_x, server_.plain_y, cfg_.train, epoch_seed);
  }
  const nn::EncEnv env{*ctx_, *server_.keys, refresh_.get()};
  std::vector<nn::EncBatchLoss> losses;
  for (int attempt = 0;; ++attempt) {
    nn::EncModel m = *server_.enc_model;
    try {
      losses = nn::train_enc(env, m, server_.enc_x, server_.enc_y, cfg_.train, epoch_seed, cfg_.log_server_loss);
      server_.enc_model = std::move(m);
      break;
    } catch (const Error& e) {
      if (attempt == 1) {
        throw ProtocolError("server round " + std::to_string(server_.round) + " failed twice: " + e.what());
      }
    }
  }
  if (!cfg_.log_server_loss) return std::nullopt;
  // Harness side: the server never sees this value.
  return nn::decrypt_epoch_loss(*ctx_, harness_secret_key(), cfg_.architecture, losses);
}

void System::aggregate(std::vector<Submission> submissions) {
  std::vector<std::size_t> seen(vus_.size(), 0);
  for (const auto& s : submissions) {
    if (s.vu >= vus_.size()) throw ProtocolError("submission from unknown vu" + std::to_string(s.vu));
    if (++seen[s.vu] > 1) throw ProtocolError("duplicate submission from vu" + std::to_string(s.vu));
  }
  for (std::size_t n = 0; n < seen.size(); ++n) {
    if (seen[n] == 0) throw ProtocolError("no submission from vu" + std::to_string(n));
  }
  std::sort(submissions.begin(), submissions.end(), [](const auto& a, const auto& b) { return a.vu < b.vu; });
  const bool with_server = cfg_.mode != Mode::kCfl;
  const auto check_specs = [&](const std::vector<nn::LayerSpec>& specs, std::size_t vu) {
    if (specs != cfg_.architecture) {
      throw ProtocolError("vu" + std::to_string(vu) + " submitted a " + nn::format_architecture(specs) +
                          " model, expected " + nn::format_architecture(cfg_.architecture));
    }
  };

  if (cfg_.mode != Mode::kEncFl) {
    std::vector<nn::PlainModel> parts;
    for (const auto& s : submissions) {
      try {
        parts.push_back(nn::deserialize_plain_model(s.payload));
      } catch (const FormatError& e) {
        throw ProtocolError("submission from vu" + std::to_string(s.vu) + " is malformed: " + e.what());
      }
      check_specs(parts.back().specs, s.vu);
    }
    if (with_server) parts.push_back(server_.plain_model);
    server_.plain_global = mean_of(parts);
    server_.plain_model = server_.plain_global;
    if (aggregate_hook_) aggregate_hook_(server_.round, parts, server_.plain_global);
    return;
  }

  std::vector<nn::EncModel> parts;
  for (const auto& s : submissions) {
    try {
      parts.push_back(nn::deserialize_enc_model(s.payload, *ctx_));
    } catch (const Error& e) {
      throw ProtocolError("submission from vu" + std::to_string(s.vu) + " is malformed: " + e.what());
    }
    check_specs(parts.back().specs, s.vu);
  }
  parts.push_back(*server_.enc_model);

  // phi_g = (1 / (N+1)) * (sum_n phi_n + phi_s), slot-wise, per tensor. The constant is folded
  // into the padding mask so padding slots come out as exact zeros.
  const auto grid = tensor::SlotGrid::of(*ctx_);
  const double inv = 1.0 / static_cast<double>(parts.size());
  auto average = [&](std::vector<const ckks::Ciphertext*> cts, std::vector<double> mask) {
    std::size_t level = cts.front()->level();
    for (const auto* c : cts) level = std::min(level, c->level());
    ckks::Ciphertext acc = ckks::drop_to_level(*ctx_, *cts.front(), level);
    for (std::size_t i = 1; i < cts.size(); ++i) {
      const auto& c = *cts[i];
      ckks::he_add_inplace(*ctx_, acc, c.level() == level ? c : ckks::drop_to_level(*ctx_, c, level));
    }
    for (auto& v : mask) v *= inv;
    return refresh_->refresh(ckks::mul_plain(*ctx_, acc, mask));
  };
  nn::EncModel out = parts.front();
  for (std::size_t l = 0; l < out.layers.size(); ++l) {
    std::vector<const ckks::Ciphertext*> ws, bs;
    for (const auto& p : parts) {
      const auto& w = p.layers[l].w;
      const auto& b = p.layers[l].b;
      const auto& ref = parts.front().layers[l];
      if (w.rows != ref.w.rows || w.cols != ref.w.cols || w.orientation != ref.w.orientation ||
          b.length != ref.b.length || b.replication != ref.b.replication || !w.encrypted() || !b.encrypted()) {
        throw ProtocolError("layer " + std::to_string(l) + " packing differs between parties");
      }
      ws.push_back(&*w.cipher);
      bs.push_back(&*b.cipher);
    }
    auto& w = out.layers[l].w;
    auto& b = out.layers[l].b;
    w.cipher = average(ws, tensor::matrix_mask(w.rows, w.cols, grid, w.orientation));
    b.cipher = average(bs, tensor::vector_mask(b.length, grid, b.replication));
  }
  if (aggregate_hook_) {
    const auto& sk = harness_secret_key();
    std::vector<nn::PlainModel> plain;
    for (const auto& p : parts) plain.push_back(nn::decrypt_model(*ctx_, p, sk));
    aggregate_hook_(server_.round, plain, nn::decrypt_model(*ctx_, out, sk));
  }
  // The aggregate replaces both the server model and the global model.
  server_.enc_global = out;
  server_.enc_model = std::move(out);
}

void System::deliver_global() {
  const bool enc = cfg_.mode == Mode::kEncFl;
  const Bytes payload = enc ? nn::serialize_model(*server_.enc_global, ctx_->params_hash())
                            : nn::serialize_model(server_.plain_global);
  for (const auto& vu : vus_) {
    bus_->send({MessageKind::kGlobalUpdate, Endpoint::server(), Endpoint::vu(vu.id), payload, server_.round, {}});
  }
  // Each VU decrypts the new global model.
  for (auto& vu : vus_) {
    const auto msg = bus_->receive(Endpoint::vu(vu.id), MessageKind::kGlobalUpdate);
    vu.model = enc ? nn::decrypt_model(*ctx_, nn::deserialize_enc_model(msg.payload, *ctx_), vu.keys->secret)
                   : nn::deserialize_plain_model(msg.payload);
  }
}

const RoundRecord& System::run_round() {
  server_.round += 1;
  RoundRecord rec;
  PhaseTimings tm;
  rec.round = tm.round = server_.round;

  // Local rounds run alongside the server round; the aggregation is a barrier.
  rec.vu_loss.assign(vus_.size(), 0.0);
  std::vector<double> vu_ms(vus_.size(), 0.0);
  auto run_vu = [&](std::size_t n) {
    const auto t0 = Clock::now();
    rec.vu_loss[n] = local_round(vus_[n]);
    vu_ms[n] = ms_since(t0);
  };
  std::optional<double> server_loss;
  if (cfg_.parallel && vus_.size() > 0) {
    std::vector<std::future<void>> jobs;
    for (std::size_t n = 0; n < vus_.size(); ++n) jobs.push_back(std::async(std::launch::async, run_vu, n));
    std::exception_ptr failure;
    const auto t0 = Clock::now();
    try {
      server_loss = server_round();
    } catch (...) {
      failure = std::current_exception();
    }
    tm.server_ms = ms_since(t0);
    for (auto& j : jobs) {
      try {
        j.get();
      } catch (...) {
        if (!failure) failure = std::current_exception();
      }
    }
    if (failure) std::rethrow_exception(failure);
  } else {
    for (std::size_t n = 0; n < vus_.size(); ++n) run_vu(n);
    const auto t0 = Clock::now();
    server_loss = server_round();
    tm.server_ms = ms_since(t0);
  }
  tm.local_ms = *std::max_element(vu_ms.begin(), vu_ms.end());
  rec.server_trained = cfg_.mode != Mode::kCfl && server_.dataset_size > 0;
  rec.server_loss = server_loss;

  // Encrypted FedAvg.
  auto t0 = Clock::now();
  std::vector<Submission> subs;
  while (auto m = bus_->try_receive(Endpoint::server(), MessageKind::kSubmitLocalParams)) {
    subs.push_back({m->sender.id, std::move(m->payload)});
  }
  aggregate(std::move(subs));
  tm.aggregate_ms = ms_since(t0);

  // Global update, decrypted by every VU.
  t0 = Clock::now();
  deliver_global();
  tm.update_ms = ms_since(t0);

  t0 = Clock::now();
  rec.global_model_hash = fnv1a(nn::serialize_model(global_model()));
  rec.test = metrics::evaluate(confusion(global_model(), test_, cfg_.train.activation));
  accuracy_history_.push_back(rec.test.micro_accuracy);
  rec.moving_average = moving_average(accuracy_history_, cfg_.convergence.window);
  if (!converged_ && convergence_fires(accuracy_history_, cfg_.convergence)) converged_ = accuracy_history_.size();
  tm.eval_ms = ms_since(t0);

  const Traffic now = bus_->traffic();
  const Traffic delta = now - last_traffic_;
  last_traffic_ = now;
  for (std::size_t k = 0; k < kMessageKinds; ++k) rec.traffic[k] = {delta.bytes[k], delta.messages[k]};
  rec.rsu_bytes = delta.rsu_bytes;
  if (refresh_) {
    rec.refreshes = refresh_->count() - last_refreshes_;
    last_refreshes_ = refresh_->count();
  }
  records_.push_back(std::move(rec));
  timings_.push_back(tm);
  return records_.back();
}

RunResult System::run(const std::function<void(const RoundRecord&, const PhaseTimings&)>& on_round) {
  while (records_.size() < cfg_.max_rounds && !(converged_ && cfg_.convergence.stop)) {
    const auto& rec = run_round();
    if (on_round) on_round(rec, timings_.back());
  }
  RunResult out;
  out.final_model = global_model();
  out.rounds = records_;
  out.timings = timings_;
  out.converged_round = converged_;
  out.final_confusion = confusion(out.final_model, test_, cfg_.train.activation);
  out.final_metrics = metrics::evaluate(out.final_confusion);
  {
    std::lock_guard lock(scan_mu_);
    out.privacy = scan_report_;
  }
  return out;
}

RunResult run_protocol(const FlConfig& cfg, std::vector<std::vector<data::Sample>> vu_datasets,
                       std::vector<data::Sample> test,
                       const std::function<void(const RoundRecord&, const PhaseTimings&)>& on_round) {
  System system(cfg, std::move(vu_datasets), std::move(test));
  return system.run(on_round);
}

// ---- logs -------------------------------------------------------------------

std::string round_json(const RoundRecord& r) {
  ordered_json j;
  j["type"] = "round";
  j["round"] = r.round;
  j["vu_loss"] = r.vu_loss;
  j["server_loss"] = r.server_loss ? ordered_json(*r.server_loss) : ordered_json(nullptr);
  j["server_trained"] = r.server_trained;
  j["global_model_hash"] = hex64(r.global_model_hash);
  j["test"] = metrics_json(r.test);
  j["moving_average"] = r.moving_average ? ordered_json(*r.moving_average) : ordered_json(nullptr);
  ordered_json traffic = ordered_json::object();
  for (std::size_t k = 0; k < kMessageKinds; ++k) {
    traffic[std::string(kind_name(static_cast<MessageKind>(k)))] = {{"bytes", r.traffic[k].bytes},
                                                                    {"messages", r.traffic[k].messages}};
  }
  j["traffic"] = traffic;
  j["rsu_bytes"] = r.rsu_bytes;
  j["refreshes"] = r.refreshes;
  return j.dump();
}

std::string summary_json(const FlConfig& cfg, const RunResult& result) {
  ordered_json j;
  j["type"] = "summary";
  j["mode"] = std::string(mode_name(cfg.mode));
  j["vus"] = cfg.vus();
  j["rsus"] = cfg.rsus;
  j["offload"] = cfg.offload;
  j["rounds"] = result.rounds.size();
  j["converged_round"] = result.converged_round ? ordered_json(*result.converged_round) : ordered_json(nullptr);
  j["final_model_hash"] = hex64(fnv1a(nn::serialize_model(result.final_model)));
  auto test = metrics_json(result.final_metrics);
  test["precision"] = result.final_metrics.precision;
  test["recall"] = result.final_metrics.recall;
  j["test"] = test;
  ordered_json rows = ordered_json::array();
  for (std::size_t t = 0; t < result.final_confusion.classes(); ++t) {
    ordered_json row = ordered_json::array();
    for (std::size_t p = 0; p < result.final_confusion.classes(); ++p) row.push_back(result.final_confusion(t, p));
    rows.push_back(row);
  }
  j["confusion"] = rows;
  j["privacy_scan"] = {{"applicable", result.privacy.applicable},
                       {"passed", result.privacy.passed()},
                       {"messages", result.privacy.messages},
                       {"bytes", result.privacy.bytes},
                       {"patterns", result.privacy.patterns},
                       {"violations", result.privacy.violations}};
  return j.dump();
}

std::string timings_json(const PhaseTimings& t) {
  ordered_json j;
  j["round"] = t.round;
  j["local_ms"] = t.local_ms;
  j["server_ms"] = t.server_ms;
  j["aggregate_ms"] = t.aggregate_ms;
  j["update_ms"] = t.update_ms;
  j["eval_ms"] = t.eval_ms;
  return j.dump();
}

}  // namespace hefl::fl
