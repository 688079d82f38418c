// Copyright 2026 The hefl Authors
// SPDX-License-Identifier: Apache-2.0

#include "hefl/ckks/modarith.hpp"

#include <algorithm>
#include <bit>

#include "hefl/error.hpp"

namespace hefl::ckks {

Modulus::Modulus(u64 value) : value_(value) {
  if (value < 2 || value >= (u64{1} << 61)) {
    throw ParameterError("modulus must lie in [2, 2^61)");
  }
  bits_ = 64 - std::countl_zero(value);
  // floor(2^128 / q) = floor((2^128 - 1) / q) for any q that is not a power of two.
  const u128 all_ones = ~u128{0};
  u128 ratio = all_ones / value;
  if ((value & (value - 1)) == 0) ratio += 1;
  ratio_lo_ = static_cast<u64>(ratio);
  ratio_hi_ = static_cast<u64>(ratio >> 64);
}

u64 Modulus::pow(u64 base, u64 exp) const {
  u64 result = 1 % value_;
  base = reduce(base);
  while (exp > 0) {
    if (exp & 1) result = mul(result, base);
    base = mul(base, base);
    exp >>= 1;
  }
  return result;
}

u64 Modulus::inv(u64 a) const {
  a = reduce(a);
  if (a == 0) throw DomainError("zero has no modular inverse");
  // Extended Euclid over signed 128-bit to avoid relying on primality.
  __int128 t = 0, new_t = 1;
  __int128 r = value_, new_r = a;
  while (new_r != 0) {
    __int128 q = r / new_r;
    __int128 tmp = t - q * new_t;
    t = new_t;
    new_t = tmp;
    tmp = r - q * new_r;
    r = new_r;
    new_r = tmp;
  }
  if (r != 1) throw DomainError("value not invertible modulo q");
  if (t < 0) t += value_;
  return static_cast<u64>(t);
}

bool is_prime(u64 n) {
  if (n < 2) return false;
  for (u64 p : {2ULL, 3ULL, 5ULL, 7ULL, 11ULL, 13ULL, 17ULL, 19ULL, 23ULL, 29ULL, 31ULL, 37ULL}) {
    if (n % p == 0) return n == p;
  }
  u64 d = n - 1;
  int s = 0;
  while ((d & 1) == 0) {
    d >>= 1;
    ++s;
  }
  auto mulmod = [n](u64 a, u64 b) { return static_cast<u64>(static_cast<u128>(a) * b % n); };
  auto powmod = [&](u64 b, u64 e) {
    u64 r = 1;
    while (e) {
      if (e & 1) r = mulmod(r, b);
      b = mulmod(b, b);
      e >>= 1;
    }
    return r;
  };
  // This witness set is deterministic for all 64-bit inputs.
  for (u64 a : {2ULL, 3ULL, 5ULL, 7ULL, 11ULL, 13ULL, 17ULL, 19ULL, 23ULL, 29ULL, 31ULL, 37ULL}) {
    u64 x = powmod(a, d);
    if (x == 1 || x == n - 1) continue;
    bool composite = true;
    for (int i = 1; i < s; ++i) {
      x = mulmod(x, x);
      if (x == n - 1) {
        composite = false;
        break;
      }
    }
    if (composite) return false;
  }
  return true;
}

std::vector<u64> find_ntt_primes(int bits, u64 step, std::size_t count, bool alternate,
                                 const std::vector<u64>& exclude) {
  if (bits < 4 || bits > 61) throw ParameterError("prime bit size must be in [4, 61]");
  std::vector<u64> out;
  const u64 target = u64{1} << bits;
  auto usable = [&](u64 c) {
    return c < (u64{1} << 61) && is_prime(c) &&
           std::find(exclude.begin(), exclude.end(), c) == exclude.end() &&
           std::find(out.begin(), out.end(), c) == out.end();
  };
  // Candidates are target + 1 +/- k*step, which are all = 1 (mod step).
  u64 down = target + 1 - step;
  u64 up = target + 1 + step;
  bool take_up = false;
  if (!alternate || bits >= 61) {
    while (out.size() < count) {
      if (down < step) throw ParameterError("ran out of NTT-friendly primes");
      if (usable(down)) out.push_back(down);
      down -= step;
    }
    return out;
  }
  while (out.size() < count) {
    if (take_up) {
      while (!usable(up)) up += step;
      out.push_back(up);
      up += step;
    } else {
      while (!usable(down)) {
        if (down < step) throw ParameterError("ran out of NTT-friendly primes");
        down -= step;
      }
      out.push_back(down);
      down -= step;
    }
    take_up = !take_up;
  }
  return out;
}

u64 primitive_root(const Modulus& q, u64 order) {
  const u64 p = q.value();
  if ((p - 1) % order != 0) throw ParameterError("modulus is not 1 mod the requested order");
  const u64 cofactor = (p - 1) / order;
  for (u64 g = 2; g < p; ++g) {
    u64 cand = q.pow(g, cofactor);
    if (q.pow(cand, order / 2) == p - 1) return cand;
  }
  throw ParameterError("no primitive root found");
}

}  // namespace hefl::ckks
