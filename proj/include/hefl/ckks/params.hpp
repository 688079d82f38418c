// Copyright 2026 The hefl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "hefl/ckks/modarith.hpp"

namespace hefl::ckks {

/// Ring-LWE parameter ledger.
///
/// `modulus_chain[l]` is the modulus removed when a level-l ciphertext is rescaled;
/// `modulus_chain[0]` is the base modulus that survives to level 0. A fresh ciphertext
/// lives at `max_level() == modulus_chain.size() - 1`. The special modulus only appears
/// inside key-switching keys.
struct CkksParams {
  std::size_t ring_dimension = 0;
  std::vector<u64> modulus_chain;
  u64 special_modulus = 0;
  double scale = 0.0;
  int refresh_threshold = 0;
  double error_stddev = 3.2;

  std::size_t max_level() const { return modulus_chain.empty() ? 0 : modulus_chain.size() - 1; }
  std::size_t slot_count() const { return ring_dimension / 2; }

  /// Every violated invariant, each as a short named diagnostic. Empty when valid.
  std::vector<std::string> violations() const;

  /// Throws ParameterError naming the first violated invariant.
  void validate() const;

  /// Stable 64-bit digest (FNV-1a over the canonical little-endian encoding).
  std::uint64_t hash() const;

  friend bool operator==(const CkksParams&, const CkksParams&) = default;
};

/// Builds a parameter set: one `base_bits` base prime, `levels` rescale primes near
/// 2^scale_bits and a `special_bits` key-switching prime, all = 1 (mod 2R).
CkksParams make_params(std::size_t ring_dimension, int base_bits, int scale_bits,
                       std::size_t levels, int special_bits, int refresh_threshold = 0);

/// Named presets:
///   "desk"   R = 2048, scale 2^40, 6-prime chain (60-bit base + five ~40-bit).
///            Slot count 1024 = 32^2. NOT a secure parameter set.
///   "small"  R = 512, same chain shape; fast unit-test profile (16x16 grid).
///   "toy"    R = 8, scale 2^30, 3-prime chain.
///   "secure" R = 32768, 14-prime chain; about 128-bit security by the usual tables.
CkksParams preset(std::string_view name);

std::vector<std::string> preset_names();

}  // namespace hefl::ckks
