// Copyright 2026 The hefl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "hefl/ckks/modarith.hpp"

namespace hefl::ckks {

/// Stands for "the top of the modulus chain" wherever a level is requested.
inline constexpr std::size_t kTopLevel = static_cast<std::size_t>(-1);

/// Polynomial of Z[X]/(X^R + 1) in residue-number-system form: one limb of R residues per
/// active modulus, always kept in NTT (evaluation) form. Limb i belongs to modulus i of the
/// context; key material carries one extra trailing limb for the special modulus.
class RingPoly {
 public:
  RingPoly() = default;
  RingPoly(std::size_t n, std::size_t limbs) : n_(n), limbs_(limbs), data_(n * limbs, 0) {}

  std::size_t n() const { return n_; }
  std::size_t limb_count() const { return limbs_; }
  std::size_t level() const { return limbs_ - 1; }
  bool empty() const { return limbs_ == 0; }

  std::span<u64> limb(std::size_t i) { return {data_.data() + i * n_, n_}; }
  std::span<const u64> limb(std::size_t i) const { return {data_.data() + i * n_, n_}; }
  std::span<u64> data() { return data_; }
  std::span<const u64> data() const { return data_; }

  /// Keeps only the first `limbs` limbs.
  void truncate(std::size_t limbs) {
    limbs_ = limbs;
    data_.resize(n_ * limbs);
  }

  friend bool operator==(const RingPoly&, const RingPoly&) = default;

 private:
  std::size_t n_ = 0;
  std::size_t limbs_ = 0;
  std::vector<u64> data_;
};

struct Plaintext {
  RingPoly poly;
  double scale = 0.0;
  std::uint64_t params_hash = 0;

  std::size_t level() const { return poly.level(); }
};

/// Two-component ciphertext (c0, c1) decrypting as c0 + c1*s.
struct Ciphertext {
  RingPoly c0;
  RingPoly c1;
  double scale = 0.0;
  /// Heuristic bits of precision left: -log2(estimated error / scale).
  double noise_budget_estimate = 0.0;
  std::uint64_t params_hash = 0;

  std::size_t level() const { return c0.level(); }
  friend bool operator==(const Ciphertext&, const Ciphertext&) = default;
};

struct SecretKey {
  RingPoly s;  // chain limbs plus the special limb
  std::uint64_t params_hash = 0;
};

struct PublicKey {
  RingPoly b;  // b = -a*s + e over the chain
  RingPoly a;
  std::uint64_t params_hash = 0;
};

/// Key-switching key with one (b_i, a_i) pair per chain modulus (RNS digit decomposition).
struct KeySwitchKey {
  std::vector<std::array<RingPoly, 2>> digits;
};

struct RelinKey {
  KeySwitchKey key;
  std::uint64_t params_hash = 0;
};

/// Rotation keys indexed by the left-rotation step, normalized into [0, slot_count).
struct GaloisKeys {
  std::map<std::size_t, KeySwitchKey> keys;
  std::uint64_t params_hash = 0;

  bool has_step(std::size_t step) const { return keys.contains(step); }
};

/// Everything the public (non-decrypting) side needs.
struct PublicKeys {
  PublicKey encryption;
  RelinKey relin;
  GaloisKeys galois;
};

struct KeySet {
  SecretKey secret;
  PublicKeys pub;
};

}  // namespace hefl::ckks
