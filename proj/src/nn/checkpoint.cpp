// Copyright 2026 The hefl Authors
// SPDX-License-Identifier: Apache-2.0

#include "hefl/nn/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <iterator>

#include "hefl/error.hpp"
#include "hefl/tensor/packing.hpp"
#include "json.hpp"

namespace hefl::nn {

namespace {

constexpr char kMagic[8] = {'H', 'E', 'F', 'L', 'M', 'O', 'D', 'L'};
constexpr std::uint8_t kPlain = 0;
constexpr std::uint8_t kEncrypted = 1;
constexpr std::uint32_t kMaxLayers = 1024;
constexpr std::uint32_t kMaxDim = 1u << 16;

void write_header(ByteWriter& w, std::uint8_t kind, const std::vector<LayerSpec>& specs) {
  w.raw({reinterpret_cast<const std::uint8_t*>(kMagic), sizeof kMagic});
  w.u16(kCheckpointVersion);
  w.u8(kind);
  w.u32(static_cast<std::uint32_t>(specs.size()));
  for (const auto& s : specs) {
    w.u32(static_cast<std::uint32_t>(s.in_dim));
    w.u32(static_cast<std::uint32_t>(s.out_dim));
    w.u8(s.activation == Activation::kSilu ? 1 : 0);
  }
}

void seal(Bytes& out) {
  const std::uint64_t sum = fnv1a(out);
  ByteWriter(out).u64(sum);
}

/// Verifies the trailing checksum and header; returns a reader positioned after the specs.
std::vector<LayerSpec> open(std::span<const std::uint8_t> bytes, std::uint8_t want_kind, ByteReader& r) {
  if (bytes.size() < sizeof kMagic + 8 || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw FormatError("not a model checkpoint (bad magic)");
  }
  const auto body = bytes.first(bytes.size() - 8);
  ByteReader tail(bytes.subspan(bytes.size() - 8));
  if (tail.u64() != fnv1a(body)) throw FormatError("model checkpoint checksum mismatch");
  r = ByteReader(body);
  r.raw(sizeof kMagic);
  if (const auto v = r.u16(); v != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(v));
  }
  const std::uint8_t kind = r.u8();
  if (kind != want_kind) {
    throw FormatError(std::string("checkpoint holds a ") + (kind == kPlain ? "plaintext" : "encrypted") + " model");
  }
  const std::uint32_t n = r.u32();
  if (n == 0 || n > kMaxLayers) throw FormatError("checkpoint layer count out of range");
  std::vector<LayerSpec> specs;
  for (std::uint32_t i = 0; i < n; ++i) {
    LayerSpec s;
    s.in_dim = r.u32();
    s.out_dim = r.u32();
    const std::uint8_t act = r.u8();
    if (act > 1 || s.in_dim > kMaxDim || s.out_dim > kMaxDim) throw FormatError("checkpoint layer spec out of range");
    s.activation = act == 1 ? Activation::kSilu : Activation::kNone;
    specs.push_back(s);
  }
  try {
    validate_specs(specs);
  } catch (const ShapeError& e) {
    throw FormatError(std::string("checkpoint: ") + e.what());
  }
  return specs;
}

const char* mode_name(ActivationMode m) {
  switch (m) {
    case ActivationMode::kAnalytic: return "analytic";
    case ActivationMode::kPoly: return "poly";
    case ActivationMode::kPolyExactDerivative: return "poly_exact_derivative";
  }
  return "poly";
}

}  // namespace

Bytes serialize_model(const PlainModel& m) {
  validate_specs(m.specs);
  Bytes out;
  ByteWriter w(out);
  write_header(w, kPlain, m.specs);
  for (const auto& l : m.layers) {
    for (double v : l.w.data) w.f64(v);
    for (double v : l.b) w.f64(v);
  }
  seal(out);
  return out;
}

Bytes serialize_model(const EncModel& m, std::uint64_t params_hash) {
  validate_specs(m.specs);
  Bytes out;
  ByteWriter w(out);
  write_header(w, kEncrypted, m.specs);
  w.u64(params_hash);
  for (const auto& l : m.layers) {
    tensor::write_packed(w, l.w);
    tensor::write_packed(w, l.b);
  }
  seal(out);
  return out;
}

PlainModel deserialize_plain_model(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  PlainModel m;
  m.specs = open(bytes, kPlain, r);
  for (const auto& s : m.specs) {
    Layer l{tensor::Matrix(s.in_dim, s.out_dim), std::vector<double>(s.out_dim)};
    for (auto& v : l.w.data) v = r.f64();
    for (auto& v : l.b) v = r.f64();
    m.layers.push_back(std::move(l));
  }
  if (r.remaining() != 0) throw FormatError("trailing bytes after model checkpoint");
  return m;
}

EncModel deserialize_enc_model(std::span<const std::uint8_t> bytes, const ckks::CkksContext& ctx) {
  ByteReader r(bytes);
  EncModel m;
  m.specs = open(bytes, kEncrypted, r);
  if (r.u64() != ctx.params_hash()) throw KeyError("encrypted checkpoint was made under different CKKS parameters");
  for (std::size_t i = 0; i < m.specs.size(); ++i) {
    EncLayer l;
    l.w = tensor::read_packed_matrix(r, ctx);
    l.b = tensor::read_packed_vector(r, ctx);
    if (l.w.rows != m.specs[i].in_dim || l.w.cols != m.specs[i].out_dim || l.b.length != m.specs[i].out_dim ||
        l.w.orientation != weight_orientation(i) || l.b.replication != output_replication(i)) {
      throw FormatError("encrypted checkpoint layer " + std::to_string(i) + " disagrees with its spec");
    }
    m.layers.push_back(std::move(l));
  }
  if (r.remaining() != 0) throw FormatError("trailing bytes after model checkpoint");
  return m;
}

std::string manifest_text(const CheckpointManifest& m) {
  nlohmann::ordered_json j;
  j["format"] = "hefl-model";
  j["version"] = kCheckpointVersion;
  j["kind"] = m.kind;
  j["architecture"] = m.architecture;
  j["params_hash"] = m.params_hash;
  j["train"] = {{"learning_rate", m.train.learning_rate},
                {"batch_size", m.train.batch_size},
                {"epochs_per_round", m.train.epochs_per_round},
                {"seed", m.train.seed},
                {"activation", mode_name(m.train.activation)},
                {"loss", "squared_error_one_hot"}};
  if (!m.note.empty()) j["note"] = m.note;
  return j.dump(2) + "\n";
}

void save_checkpoint(const std::filesystem::path& path, const PlainModel& m, const CheckpointManifest& manifest) {
  write_file(path, serialize_model(m));
  write_text(std::filesystem::path(path.string() + ".manifest.json"), manifest_text(manifest));
}

PlainModel load_checkpoint(const std::filesystem::path& path) { return deserialize_plain_model(read_file(path)); }

Bytes read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("write failed for " + path.string());
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  write_file(path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

}  // namespace hefl::nn
