// Copyright 2026 The hefl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <string_view>

#include "hefl/bytes.hpp"
#include "hefl/ckks/context.hpp"
#include "hefl/ckks/types.hpp"

namespace hefl::ckks {

/// Restores a ciphertext to the top level and configured scale. Stands in for bootstrapping:
/// implementations go through a party that holds the secret key.
class RefreshProvider {
 public:
  virtual ~RefreshProvider() = default;
  Ciphertext refresh(const Ciphertext& ct) { return refresh_to(ct, kTopLevel); }
  /// Fresh encryption at `level` (kTopLevel for the top) carrying that level's ladder scale.
  /// Asking for a lower level skips the rescales a caller would otherwise spend dropping.
  virtual Ciphertext refresh_to(const Ciphertext& ct, std::size_t level) = 0;
  virtual std::string_view mode() const = 0;
  /// Number of refreshes served so far.
  std::uint64_t count() const { return count_.load(); }

 protected:
  std::atomic<std::uint64_t> count_{0};
};

/// Answers recrypt requests: decrypt, re-encode at the top level with scale delta, encrypt.
/// The encryption randomness is derived from the request bytes and the service seed, so the
/// response does not depend on the order in which concurrent requests arrive.
class RecryptService {
 public:
  RecryptService(std::shared_ptr<const CkksContext> ctx, SecretKey sk, PublicKey pk,
                 std::uint64_t seed);

  Ciphertext recrypt(const Ciphertext& ct, std::size_t level = kTopLevel) const;
  /// Wire entry point. Request: u32 target level (0xffffffff for the top) followed by the
  /// serialized ciphertext. Reply: the serialized fresh ciphertext.
  Bytes handle(std::span<const std::uint8_t> request) const;

  static Bytes make_request(const Ciphertext& ct, std::size_t level);

 private:
  Ciphertext recrypt_seeded(const Ciphertext& ct, std::size_t level, std::uint64_t seed) const;

  std::shared_ptr<const CkksContext> ctx_;
  SecretKey sk_;
  PublicKey pk_;
  std::uint64_t seed_;
};

/// Test-only provider: the harness decrypts and re-encrypts in place.
class OracleRefresh final : public RefreshProvider {
 public:
  OracleRefresh(std::shared_ptr<const CkksContext> ctx, SecretKey sk, PublicKey pk,
                std::uint64_t seed = 0x7e57);
  Ciphertext refresh_to(const Ciphertext& ct, std::size_t level) override;
  std::string_view mode() const override { return "test_oracle"; }

 private:
  RecryptService service_;
};

/// Sends each ciphertext over `transport` to a key holder running a RecryptService and
/// decodes the reply. The transport must be safe to call concurrently.
class InteractiveRefresh final : public RefreshProvider {
 public:
  using Transport = std::function<Bytes(Bytes)>;

  InteractiveRefresh(std::shared_ptr<const CkksContext> ctx, Transport transport);
  Ciphertext refresh_to(const Ciphertext& ct, std::size_t level) override;
  std::string_view mode() const override { return "key_holder_interactive"; }

 private:
  std::shared_ptr<const CkksContext> ctx_;
  Transport transport_;
};

}  // namespace hefl::ckks
