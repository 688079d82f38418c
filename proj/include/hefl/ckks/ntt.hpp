// Copyright 2026 The hefl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "hefl/ckks/modarith.hpp"

namespace hefl::ckks {

/// Negacyclic number-theoretic transform over Z_q[X]/(X^n + 1).
///
/// The forward transform takes coefficients in natural order and produces
/// evaluations in bit-reversed order: output index k holds a(psi^(2*bitrev(k)+1)).
/// Pointwise products in that domain are negacyclic convolutions.
class NttTables {
 public:
  NttTables(std::size_t n, const Modulus& q);

  std::size_t size() const { return n_; }
  const Modulus& modulus() const { return q_; }
  u64 psi() const { return psi_; }

  void forward(std::span<u64> a) const;
  void inverse(std::span<u64> a) const;

  /// Exponent e_k (odd, in [1, 2n)) with forward(a)[k] = a(psi^e_k).
  u64 evaluation_exponent(std::size_t k) const;

 private:
  std::size_t n_;
  int log_n_;
  Modulus q_;
  u64 psi_;
  std::vector<ShoupOperand> psi_rev_;
  std::vector<ShoupOperand> psi_inv_rev_;
  ShoupOperand n_inv_;
};

std::size_t bit_reverse(std::size_t x, int bits);

}  // namespace hefl::ckks
