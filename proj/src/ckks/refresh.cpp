// Copyright 2026 The hefl Authors
// SPDX-License-Identifier: Apache-2.0

#include "hefl/ckks/refresh.hpp"

#include <utility>

#include "hefl/ckks/evaluator.hpp"
#include "hefl/ckks/serialize.hpp"
#include "hefl/error.hpp"

namespace hefl::ckks {

RecryptService::RecryptService(std::shared_ptr<const CkksContext> ctx, SecretKey sk,
                               PublicKey pk, std::uint64_t seed)
    : ctx_(std::move(ctx)), sk_(std::move(sk)), pk_(std::move(pk)), seed_(seed) {}

Ciphertext RecryptService::recrypt_seeded(const Ciphertext& ct, std::size_t level,
                                          std::uint64_t seed) const {
  const std::size_t top = ctx_->max_level();
  if (level == kTopLevel) level = top;
  if (level > top) throw LevelError("recrypt: target level " + std::to_string(level) + " above the chain");
  const auto values = decrypt(*ctx_, ct, sk_);
  return encrypt(*ctx_, encode(*ctx_, values, level, ctx_->ladder_scale(level)), pk_, seed);
}

Ciphertext RecryptService::recrypt(const Ciphertext& ct, std::size_t level) const {
  return recrypt_seeded(ct, level, fnv1a(make_request(ct, level), seed_));
}

Bytes RecryptService::make_request(const Ciphertext& ct, std::size_t level) {
  Bytes req;
  ByteWriter w(req);
  w.u32(level == kTopLevel ? 0xffffffffu : static_cast<std::uint32_t>(level));
  write(w, ct);
  return req;
}

Bytes RecryptService::handle(std::span<const std::uint8_t> request) const {
  ByteReader r(request);
  const std::uint32_t level = r.u32();
  const Ciphertext ct = read_ciphertext(r, *ctx_);
  if (r.remaining() != 0) throw FormatError("recrypt request has trailing bytes");
  return serialize(recrypt_seeded(ct, level == 0xffffffffu ? kTopLevel : level, fnv1a(request, seed_)));
}

OracleRefresh::OracleRefresh(std::shared_ptr<const CkksContext> ctx, SecretKey sk, PublicKey pk,
                             std::uint64_t seed)
    : service_(std::move(ctx), std::move(sk), std::move(pk), seed) {}

Ciphertext OracleRefresh::refresh_to(const Ciphertext& ct, std::size_t level) {
  ++count_;
  return service_.recrypt(ct, level);
}

InteractiveRefresh::InteractiveRefresh(std::shared_ptr<const CkksContext> ctx,
                                       Transport transport)
    : ctx_(std::move(ctx)), transport_(std::move(transport)) {}

Ciphertext InteractiveRefresh::refresh_to(const Ciphertext& ct, std::size_t level) {
  if (!transport_) throw ProtocolError("refresh provider unavailable");
  ++count_;
  Bytes reply = transport_(RecryptService::make_request(ct, level));
  if (reply.empty()) throw ProtocolError("refresh provider returned no response");
  return deserialize_ciphertext(reply, *ctx_);
}

}  // namespace hefl::ckks
