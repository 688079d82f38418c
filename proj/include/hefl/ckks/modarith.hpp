// Copyright 2026 The hefl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

namespace hefl::ckks {

using u64 = std::uint64_t;
using u128 = unsigned __int128;

/// Word-sized prime modulus with a precomputed Barrett constant floor(2^128 / q).
/// Values must stay below 2^61 so that sums of two residues never overflow.
class Modulus {
 public:
  Modulus() = default;
  explicit Modulus(u64 value);

  u64 value() const { return value_; }
  int bit_count() const { return bits_; }

  /// Reduces a full 128-bit product.
  u64 reduce(u128 x) const {
    const u64 lo = static_cast<u64>(x);
    const u64 hi = static_cast<u64>(x >> 64);
    // floor(x * ratio / 2^128), accumulated from the four 64x64 partials.
    u128 t = static_cast<u128>(lo) * ratio_lo_;
    u128 mid = (t >> 64) + static_cast<u128>(lo) * ratio_hi_;
    u128 mid2 = static_cast<u128>(hi) * ratio_lo_ + static_cast<u64>(mid);
    u64 q_est = hi * ratio_hi_ + static_cast<u64>(mid >> 64) + static_cast<u64>(mid2 >> 64);
    u64 r = lo - q_est * value_;
    return r >= value_ ? r - value_ : r;
  }

  u64 reduce(u64 x) const { return x >= value_ ? reduce(static_cast<u128>(x)) : x; }

  u64 mul(u64 a, u64 b) const { return reduce(static_cast<u128>(a) * b); }
  u64 add(u64 a, u64 b) const {
    u64 s = a + b;
    return s >= value_ ? s - value_ : s;
  }
  u64 sub(u64 a, u64 b) const { return a >= b ? a - b : a + value_ - b; }
  u64 neg(u64 a) const { return a == 0 ? 0 : value_ - a; }

  /// Maps a signed integer into [0, q).
  u64 from_signed(std::int64_t v) const {
    if (v >= 0) return static_cast<u64>(v) % value_;
    u64 r = static_cast<u64>(-(v + 1)) % value_;
    return value_ - 1 - r;
  }

  /// Centered lift of a residue into (-q/2, q/2].
  std::int64_t centered(u64 a) const {
    return a > (value_ >> 1) ? -static_cast<std::int64_t>(value_ - a)
                             : static_cast<std::int64_t>(a);
  }

  u64 pow(u64 base, u64 exp) const;
  u64 inv(u64 a) const;

  friend bool operator==(const Modulus& a, const Modulus& b) { return a.value_ == b.value_; }

 private:
  u64 value_ = 0;
  int bits_ = 0;
  u64 ratio_lo_ = 0;
  u64 ratio_hi_ = 0;
};

/// Operand with a Shoup companion floor(w * 2^64 / q) for fast fixed-multiplier products.
struct ShoupOperand {
  u64 operand = 0;
  u64 quotient = 0;

  ShoupOperand() = default;
  ShoupOperand(u64 w, const Modulus& q)
      : operand(w), quotient(static_cast<u64>((static_cast<u128>(w) << 64) / q.value())) {}
};

/// Returns a * w mod q using the precomputed Shoup quotient; a may be any 64-bit value.
inline u64 mul_shoup(u64 a, const ShoupOperand& w, u64 q) {
  u64 hi = static_cast<u64>((static_cast<u128>(a) * w.quotient) >> 64);
  u64 r = a * w.operand - hi * q;
  return r >= q ? r - q : r;
}

bool is_prime(u64 n);

/// Deterministically collects `count` primes p with p = 1 (mod step), starting near 2^bits.
/// When `alternate` is set the search zig-zags above and below 2^bits so the chosen
/// primes average out close to the target (keeps the rescale ladder near a power of two).
std::vector<u64> find_ntt_primes(int bits, u64 step, std::size_t count, bool alternate,
                                 const std::vector<u64>& exclude = {});

/// Smallest generator of the order-`order` subgroup's primitive root: returns psi with
/// psi^order = 1 and psi^(order/2) = -1.
u64 primitive_root(const Modulus& q, u64 order);

}  // namespace hefl::ckks
