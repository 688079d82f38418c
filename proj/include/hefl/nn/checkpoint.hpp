// Copyright 2026 The hefl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>

#include "hefl/bytes.hpp"
#include "hefl/ckks/context.hpp"
#include "hefl/nn/encrypted.hpp"
#include "hefl/nn/model.hpp"

namespace hefl::nn {

// Checkpoint container:
//   "HEFLMODL" | u16 version | u8 kind (0 plain, 1 encrypted) | u32 layer count
//   per layer: u32 in_dim | u32 out_dim | u8 activation
//   plain:     per layer W row-major then b, little-endian f64
//   encrypted: u64 params hash, then per layer the packed W and b (he-tensor wire form)
//   u64 FNV-1a of everything before it

inline constexpr std::uint16_t kCheckpointVersion = 1;

Bytes serialize_model(const PlainModel& m);
Bytes serialize_model(const EncModel& m, std::uint64_t params_hash);
PlainModel deserialize_plain_model(std::span<const std::uint8_t> bytes);
EncModel deserialize_enc_model(std::span<const std::uint8_t> bytes, const ckks::CkksContext& ctx);

/// Human-readable companion written next to a checkpoint.
struct CheckpointManifest {
  std::string architecture;
  std::string kind;  // "plain" or "encrypted"
  std::uint64_t params_hash = 0;
  TrainConfig train;
  std::string note;
};

std::string manifest_text(const CheckpointManifest& m);

/// Writes `path` and `path` + ".manifest.json".
void save_checkpoint(const std::filesystem::path& path, const PlainModel& m, const CheckpointManifest& manifest);
PlainModel load_checkpoint(const std::filesystem::path& path);

Bytes read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace hefl::nn
