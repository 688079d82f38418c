// Copyright 2026 The hefl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>

#include "hefl/bytes.hpp"
#include "hefl/ckks/context.hpp"
#include "hefl/ckks/types.hpp"

namespace hefl::ckks {

// Wire layout shared by every object:
//   "CKKS" | u16 version | u16 kind | u64 payload length | u64 params hash |
//   u32 level | f64 scale | f64 noise budget | payload
// The payload length counts every byte after the length field itself.
// Polynomials are u32 limb count followed by little-endian u64 residues (NTT form).

inline constexpr std::uint16_t kFormatVersion = 1;

enum class BlobKind : std::uint16_t {
  kCiphertext = 1,
  kPlaintext = 2,
  kSecretKey = 3,
  kPublicKey = 4,
  kRelinKey = 5,
  kGaloisKeys = 6,
};

Bytes serialize(const Ciphertext& ct);
Bytes serialize(const Plaintext& pt);
Bytes serialize(const SecretKey& sk);
Bytes serialize(const PublicKey& pk);
Bytes serialize(const RelinKey& rk);
Bytes serialize(const GaloisKeys& gk);

void write(ByteWriter& w, const Ciphertext& ct);

// Readers validate magic, version, kind, params hash against `ctx`, limb counts and that
// every residue is reduced; any violation raises FormatError (KeyError for a params mismatch).
Ciphertext read_ciphertext(ByteReader& r, const CkksContext& ctx);
Ciphertext deserialize_ciphertext(std::span<const std::uint8_t> bytes, const CkksContext& ctx);
Plaintext deserialize_plaintext(std::span<const std::uint8_t> bytes, const CkksContext& ctx);
SecretKey deserialize_secret_key(std::span<const std::uint8_t> bytes, const CkksContext& ctx);
PublicKey deserialize_public_key(std::span<const std::uint8_t> bytes, const CkksContext& ctx);
RelinKey deserialize_relin_key(std::span<const std::uint8_t> bytes, const CkksContext& ctx);
GaloisKeys deserialize_galois_keys(std::span<const std::uint8_t> bytes, const CkksContext& ctx);

/// Reads just the kind field of a blob, or throws FormatError if the header is not ours.
BlobKind peek_kind(std::span<const std::uint8_t> bytes);

}  // namespace hefl::ckks
