// Copyright 2026 The hefl Authors
// SPDX-License-Identifier: Apache-2.0

#include "hefl/ckks/serialize.hpp"

#include <algorithm>
#include <string>

#include "hefl/error.hpp"

namespace hefl::ckks {

namespace {

constexpr std::uint8_t kMagic[4] = {'C', 'K', 'K', 'S'};

struct Header {
  BlobKind kind;
  std::uint64_t params_hash = 0;
  std::uint32_t level = 0;
  double scale = 0.0;
  double noise = 0.0;
};

/// Writes the header and returns the offset of the payload-length field for patching.
std::size_t begin(ByteWriter& w, const Header& h) {
  w.raw(kMagic);
  w.u16(kFormatVersion);
  w.u16(static_cast<std::uint16_t>(h.kind));
  const std::size_t at = w.size();
  w.u64(0);
  w.u64(h.params_hash);
  w.u32(h.level);
  w.f64(h.scale);
  w.f64(h.noise);
  return at;
}

void finish(ByteWriter& w, std::size_t at) { w.patch_u64(at, w.size() - at - 8); }

void write_poly(ByteWriter& w, const RingPoly& p) {
  w.u32(static_cast<std::uint32_t>(p.limb_count()));
  w.u64s(p.data());
}

void write_ksk(ByteWriter& w, const KeySwitchKey& k) {
  w.u32(static_cast<std::uint32_t>(k.digits.size()));
  for (const auto& d : k.digits) {
    write_poly(w, d[0]);
    write_poly(w, d[1]);
  }
}

Header read_header(ByteReader& r, BlobKind expected, const CkksContext& ctx) {
  auto magic = r.raw(4);
  if (!std::equal(magic.begin(), magic.end(), kMagic)) throw FormatError("bad magic: not a CKKS blob");
  const auto version = r.u16();
  if (version != kFormatVersion) {
    throw FormatError("unsupported CKKS blob version " + std::to_string(version));
  }
  const auto kind = static_cast<BlobKind>(r.u16());
  if (kind != expected) {
    throw FormatError("unexpected CKKS blob kind " + std::to_string(static_cast<int>(kind)));
  }
  const std::uint64_t length = r.u64();
  if (length > r.remaining()) throw FormatError("CKKS blob length exceeds input");
  Header h{kind};
  h.params_hash = r.u64();
  if (h.params_hash != ctx.params_hash()) throw KeyError("CKKS blob: parameter set mismatch");
  h.level = r.u32();
  h.scale = r.f64();
  h.noise = r.f64();
  return h;
}

RingPoly read_poly(ByteReader& r, const CkksContext& ctx, std::size_t max_limbs) {
  const std::uint32_t limbs = r.u32();
  if (limbs == 0 || limbs > max_limbs) throw FormatError("invalid limb count");
  const std::size_t n = ctx.ring_dimension();
  RingPoly p(n, limbs);
  r.u64s(p.data());
  const bool keyed = limbs == ctx.max_level() + 2;
  for (std::size_t i = 0; i < limbs; ++i) {
    const std::size_t mi = (keyed && i == limbs - 1) ? ctx.special_index() : i;
    const u64 q = ctx.modulus(mi).value();
    for (u64 v : p.limb(i)) {
      if (v >= q) throw FormatError("residue out of range");
    }
  }
  return p;
}

KeySwitchKey read_ksk(ByteReader& r, const CkksContext& ctx) {
  const std::uint32_t count = r.u32();
  if (count != ctx.max_level() + 1) throw FormatError("invalid key-switching digit count");
  KeySwitchKey k;
  for (std::uint32_t i = 0; i < count; ++i) {
    RingPoly b = read_poly(r, ctx, ctx.max_level() + 2);
    RingPoly a = read_poly(r, ctx, ctx.max_level() + 2);
    k.digits.push_back({std::move(b), std::move(a)});
  }
  return k;
}

void expect_end(const ByteReader& r) {
  if (r.remaining() != 0) throw FormatError("trailing bytes after CKKS blob");
}

}  // namespace

void write(ByteWriter& w, const Ciphertext& ct) {
  const auto at = begin(w, {BlobKind::kCiphertext, ct.params_hash,
                            static_cast<std::uint32_t>(ct.level()), ct.scale,
                            ct.noise_budget_estimate});
  write_poly(w, ct.c0);
  write_poly(w, ct.c1);
  finish(w, at);
}

Bytes serialize(const Ciphertext& ct) {
  Bytes out;
  ByteWriter w(out);
  write(w, ct);
  return out;
}

Bytes serialize(const Plaintext& pt) {
  Bytes out;
  ByteWriter w(out);
  const auto at = begin(w, {BlobKind::kPlaintext, pt.params_hash,
                            static_cast<std::uint32_t>(pt.level()), pt.scale, 0.0});
  write_poly(w, pt.poly);
  finish(w, at);
  return out;
}

Bytes serialize(const SecretKey& sk) {
  Bytes out;
  ByteWriter w(out);
  const auto at = begin(w, {BlobKind::kSecretKey, sk.params_hash,
                            static_cast<std::uint32_t>(sk.s.level()), 0.0, 0.0});
  write_poly(w, sk.s);
  finish(w, at);
  return out;
}

Bytes serialize(const PublicKey& pk) {
  Bytes out;
  ByteWriter w(out);
  const auto at = begin(w, {BlobKind::kPublicKey, pk.params_hash,
                            static_cast<std::uint32_t>(pk.b.level()), 0.0, 0.0});
  write_poly(w, pk.b);
  write_poly(w, pk.a);
  finish(w, at);
  return out;
}

Bytes serialize(const RelinKey& rk) {
  Bytes out;
  ByteWriter w(out);
  const auto at = begin(w, {BlobKind::kRelinKey, rk.params_hash, 0, 0.0, 0.0});
  write_ksk(w, rk.key);
  finish(w, at);
  return out;
}

Bytes serialize(const GaloisKeys& gk) {
  Bytes out;
  ByteWriter w(out);
  const auto at = begin(w, {BlobKind::kGaloisKeys, gk.params_hash, 0, 0.0, 0.0});
  w.u32(static_cast<std::uint32_t>(gk.keys.size()));
  for (const auto& [step, key] : gk.keys) {
    w.u64(step);
    write_ksk(w, key);
  }
  finish(w, at);
  return out;
}

Ciphertext read_ciphertext(ByteReader& r, const CkksContext& ctx) {
  const Header h = read_header(r, BlobKind::kCiphertext, ctx);
  Ciphertext ct;
  ct.params_hash = h.params_hash;
  ct.scale = h.scale;
  ct.noise_budget_estimate = h.noise;
  ct.c0 = read_poly(r, ctx, ctx.max_level() + 1);
  ct.c1 = read_poly(r, ctx, ctx.max_level() + 1);
  if (ct.c0.limb_count() != ct.c1.limb_count() || ct.level() != h.level) {
    throw FormatError("ciphertext components disagree on level");
  }
  if (!(ct.scale > 0.0)) throw FormatError("ciphertext scale must be positive");
  return ct;
}

Ciphertext deserialize_ciphertext(std::span<const std::uint8_t> bytes, const CkksContext& ctx) {
  ByteReader r(bytes);
  Ciphertext ct = read_ciphertext(r, ctx);
  expect_end(r);
  return ct;
}

Plaintext deserialize_plaintext(std::span<const std::uint8_t> bytes, const CkksContext& ctx) {
  ByteReader r(bytes);
  const Header h = read_header(r, BlobKind::kPlaintext, ctx);
  Plaintext pt;
  pt.params_hash = h.params_hash;
  pt.scale = h.scale;
  pt.poly = read_poly(r, ctx, ctx.max_level() + 1);
  if (pt.level() != h.level) throw FormatError("plaintext level mismatch");
  expect_end(r);
  return pt;
}

SecretKey deserialize_secret_key(std::span<const std::uint8_t> bytes, const CkksContext& ctx) {
  ByteReader r(bytes);
  const Header h = read_header(r, BlobKind::kSecretKey, ctx);
  SecretKey sk;
  sk.params_hash = h.params_hash;
  sk.s = read_poly(r, ctx, ctx.max_level() + 2);
  if (sk.s.limb_count() != ctx.max_level() + 2) throw FormatError("secret key limb count");
  expect_end(r);
  return sk;
}

PublicKey deserialize_public_key(std::span<const std::uint8_t> bytes, const CkksContext& ctx) {
  ByteReader r(bytes);
  const Header h = read_header(r, BlobKind::kPublicKey, ctx);
  PublicKey pk;
  pk.params_hash = h.params_hash;
  pk.b = read_poly(r, ctx, ctx.max_level() + 1);
  pk.a = read_poly(r, ctx, ctx.max_level() + 1);
  if (pk.b.limb_count() != ctx.max_level() + 1 || pk.a.limb_count() != pk.b.limb_count()) {
    throw FormatError("public key limb count");
  }
  expect_end(r);
  return pk;
}

RelinKey deserialize_relin_key(std::span<const std::uint8_t> bytes, const CkksContext& ctx) {
  ByteReader r(bytes);
  const Header h = read_header(r, BlobKind::kRelinKey, ctx);
  RelinKey rk;
  rk.params_hash = h.params_hash;
  rk.key = read_ksk(r, ctx);
  expect_end(r);
  return rk;
}

GaloisKeys deserialize_galois_keys(std::span<const std::uint8_t> bytes, const CkksContext& ctx) {
  ByteReader r(bytes);
  const Header h = read_header(r, BlobKind::kGaloisKeys, ctx);
  GaloisKeys gk;
  gk.params_hash = h.params_hash;
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint64_t step = r.u64();
    if (step == 0 || step >= ctx.slot_count()) throw FormatError("invalid rotation step");
    gk.keys.emplace(step, read_ksk(r, ctx));
  }
  expect_end(r);
  return gk;
}

BlobKind peek_kind(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  auto magic = r.raw(4);
  if (!std::equal(magic.begin(), magic.end(), kMagic)) throw FormatError("bad magic: not a CKKS blob");
  r.u16();
  return static_cast<BlobKind>(r.u16());
}

}  // namespace hefl::ckks
