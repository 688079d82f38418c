// Copyright 2026 The hefl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "hefl/ckks/context.hpp"
#include "hefl/ckks/types.hpp"

namespace hefl::ckks {

using Rng = std::mt19937_64;

// ---- encoding -------------------------------------------------------------

/// Encodes up to slot_count() reals at the top level with the configured scale.
Plaintext encode(const CkksContext& ctx, std::span<const double> values);
Plaintext encode(const CkksContext& ctx, std::span<const double> values, std::size_t level,
                 double scale);
std::vector<double> decode(const CkksContext& ctx, const Plaintext& pt);

/// Encodes `values` so that mul_plain with a ciphertext shaped like `target` lands the
/// product exactly on the scale ladder of the next level down.
Plaintext encode_for_product(const CkksContext& ctx, std::span<const double> values,
                             const Ciphertext& target);

// ---- keys -----------------------------------------------------------------

SecretKey sk_gen(const CkksContext& ctx, std::uint64_t seed);

/// Left-rotation steps generated by default: +/- every power of two below slot_count().
std::vector<std::size_t> default_rotation_steps(const CkksContext& ctx);

PublicKeys pk_gen(const CkksContext& ctx, const SecretKey& sk, std::uint64_t seed);
PublicKeys pk_gen(const CkksContext& ctx, const SecretKey& sk, std::uint64_t seed,
                  std::span<const std::size_t> rotation_steps);

KeySet keygen(const CkksContext& ctx, std::uint64_t seed);

// ---- encryption -----------------------------------------------------------

Ciphertext encrypt(const CkksContext& ctx, const Plaintext& pt, const PublicKey& pk, Rng& rng);
Ciphertext encrypt(const CkksContext& ctx, const Plaintext& pt, const PublicKey& pk,
                   std::uint64_t seed);
/// Decrypts and decodes. Throws NoiseBudgetError when the budget estimate is exhausted.
std::vector<double> decrypt(const CkksContext& ctx, const Ciphertext& ct, const SecretKey& sk);

// ---- homomorphic arithmetic ----------------------------------------------

Ciphertext he_add(const CkksContext& ctx, const Ciphertext& a, const Ciphertext& b);
Ciphertext he_sub(const CkksContext& ctx, const Ciphertext& a, const Ciphertext& b);
Ciphertext he_negate(const CkksContext& ctx, const Ciphertext& a);
void he_add_inplace(const CkksContext& ctx, Ciphertext& acc, const Ciphertext& b);

Ciphertext he_mul(const CkksContext& ctx, const Ciphertext& a, const Ciphertext& b,
                  const RelinKey& relin);
Ciphertext mul_plain(const CkksContext& ctx, const Ciphertext& a, const Plaintext& p);
/// Slot-wise product with a public vector, encoded to stay on the scale ladder.
Ciphertext mul_plain(const CkksContext& ctx, const Ciphertext& a, std::span<const double> values);
/// Product with a public real constant (one level, no FFT).
Ciphertext mul_scalar(const CkksContext& ctx, const Ciphertext& a, double c);
/// sum_i coeffs[i] * cts[i] with a single rescale. Every input must share one level and scale.
Ciphertext linear_combination(const CkksContext& ctx, std::span<const Ciphertext* const> cts,
                              std::span<const double> coeffs);

Ciphertext add_plain(const CkksContext& ctx, const Ciphertext& a, const Plaintext& p);
Ciphertext add_plain(const CkksContext& ctx, const Ciphertext& a, std::span<const double> values);
Ciphertext add_scalar(const CkksContext& ctx, const Ciphertext& a, double c);

/// Cyclic left rotation of the slots by `step` (negative steps rotate right).
Ciphertext rotate(const CkksContext& ctx, const Ciphertext& a, std::int64_t step,
                  const GaloisKeys& keys);

/// Lowers a ciphertext to `level`, landing on that level's ladder scale.
Ciphertext drop_to_level(const CkksContext& ctx, const Ciphertext& a, std::size_t level);

/// True when `ct` sits at or below the refresh threshold and may no longer be multiplied.
bool needs_refresh(const CkksContext& ctx, const Ciphertext& ct);

/// Relative tolerance used when matching scales of two operands.
inline constexpr double kScaleTolerance = 1e-9;

}  // namespace hefl::ckks
