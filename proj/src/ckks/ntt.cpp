// Copyright 2026 The hefl Authors
// SPDX-License-Identifier: Apache-2.0

#include "hefl/ckks/ntt.hpp"

#include <bit>

#include "hefl/error.hpp"

namespace hefl::ckks {

std::size_t bit_reverse(std::size_t x, int bits) {
  std::size_t r = 0;
  for (int i = 0; i < bits; ++i) {
    r = (r << 1) | (x & 1);
    x >>= 1;
  }
  return r;
}

NttTables::NttTables(std::size_t n, const Modulus& q) : n_(n), q_(q) {
  if (n < 2 || !std::has_single_bit(n)) throw ParameterError("NTT size must be a power of two");
  log_n_ = std::countr_zero(n);
  psi_ = primitive_root(q, 2 * n);
  const u64 psi_inv = q.inv(psi_);
  psi_rev_.resize(n);
  psi_inv_rev_.resize(n);
  u64 pw = 1, pw_inv = 1;
  std::vector<u64> powers(n), inv_powers(n);
  for (std::size_t i = 0; i < n; ++i) {
    powers[i] = pw;
    inv_powers[i] = pw_inv;
    pw = q.mul(pw, psi_);
    pw_inv = q.mul(pw_inv, psi_inv);
  }
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t r = bit_reverse(i, log_n_);
    psi_rev_[i] = ShoupOperand(powers[r], q);
    psi_inv_rev_[i] = ShoupOperand(inv_powers[r], q);
  }
  n_inv_ = ShoupOperand(q.inv(n), q);
}

void NttTables::forward(std::span<u64> a) const {
  // Harvey's lazy butterflies: values stay in [0, 4q) until the final pass (q < 2^62).
  const u64 q = q_.value();
  const u64 two_q = 2 * q;
  std::size_t t = n_;
  for (std::size_t m = 1; m < n_; m <<= 1) {
    t >>= 1;
    for (std::size_t i = 0; i < m; ++i) {
      const u64 w = psi_rev_[m + i].operand;
      const u64 wq = psi_rev_[m + i].quotient;
      u64* __restrict x = a.data() + 2 * i * t;
      u64* __restrict y = x + t;
      for (std::size_t j = 0; j < t; ++j) {
        u64 u = x[j];
        u = u >= two_q ? u - two_q : u;
        const u64 hi = static_cast<u64>((static_cast<u128>(y[j]) * wq) >> 64);
        const u64 v = y[j] * w - hi * q;
        x[j] = u + v;
        y[j] = u - v + two_q;
      }
    }
  }
  for (auto& v : a) {
    v = v >= two_q ? v - two_q : v;
    v = v >= q ? v - q : v;
  }
}

void NttTables::inverse(std::span<u64> a) const {
  // Lazy Gentleman-Sande butterflies, values kept in [0, 2q).
  const u64 q = q_.value();
  const u64 two_q = 2 * q;
  std::size_t t = 1;
  for (std::size_t m = n_; m > 1; m >>= 1) {
    const std::size_t h = m >> 1;
    for (std::size_t i = 0; i < h; ++i) {
      const u64 w = psi_inv_rev_[h + i].operand;
      const u64 wq = psi_inv_rev_[h + i].quotient;
      u64* __restrict x = a.data() + 2 * i * t;
      u64* __restrict y = x + t;
      for (std::size_t j = 0; j < t; ++j) {
        const u64 u = x[j];
        const u64 v = y[j];
        const u64 sum = u + v;
        x[j] = sum >= two_q ? sum - two_q : sum;
        const u64 diff = u - v + two_q;
        const u64 hi = static_cast<u64>((static_cast<u128>(diff) * wq) >> 64);
        y[j] = diff * w - hi * q;
      }
    }
    t <<= 1;
  }
  const ShoupOperand n_inv = n_inv_;
  for (auto& v : a) v = mul_shoup(v, n_inv, q);
}

u64 NttTables::evaluation_exponent(std::size_t k) const {
  return 2 * bit_reverse(k, log_n_) + 1;
}

}  // namespace hefl::ckks
