// Copyright 2026 The hefl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "hefl/ckks/modarith.hpp"
#include "hefl/ckks/ntt.hpp"
#include "hefl/ckks/params.hpp"

namespace hefl::ckks {

/// Immutable precomputation shared by every CKKS operation: NTT tables per modulus,
/// canonical-embedding roots, rescale constants and the per-level scale ladder.
/// Safe to share across threads.
class CkksContext {
 public:
  explicit CkksContext(CkksParams params);

  static std::shared_ptr<const CkksContext> create(CkksParams params) {
    return std::make_shared<const CkksContext>(std::move(params));
  }

  const CkksParams& params() const { return params_; }
  std::uint64_t params_hash() const { return hash_; }
  std::size_t ring_dimension() const { return params_.ring_dimension; }
  std::size_t slot_count() const { return params_.ring_dimension / 2; }
  std::size_t max_level() const { return params_.max_level(); }
  double scale() const { return params_.scale; }

  const Modulus& modulus(std::size_t i) const { return moduli_[i]; }
  const NttTables& ntt(std::size_t i) const { return ntts_[i]; }
  /// Index of the special prime inside modulus()/ntt() (one past the chain).
  std::size_t special_index() const { return moduli_.size() - 1; }

  /// Scale that every ciphertext at `level` carries by convention. The top level carries
  /// the configured scale; each lower entry is s_{l-1} = s_l^2 / q_l, so the product of two
  /// level-l ciphertexts lands exactly on s_{l-1} after rescaling.
  double ladder_scale(std::size_t level) const { return ladder_[level]; }

  /// q_top^{-1} mod q_j, for rescaling from `level` (j < level).
  const ShoupOperand& rescale_inverse(std::size_t level, std::size_t j) const {
    return rescale_inv_[level][j];
  }
  const ShoupOperand& special_inverse(std::size_t j) const { return special_inv_[j]; }
  /// P mod q_j.
  u64 special_mod(std::size_t j) const { return special_mod_[j]; }

  /// Galois element 5^step mod 2R for a left rotation by `step` slots.
  u64 galois_element(std::size_t step) const;
  /// Applies X -> X^g to a polynomial in NTT form (a slot permutation of the evaluations).
  void apply_galois(std::span<const u64> in, std::span<u64> out, u64 g) const;

  // Canonical-embedding FFT (real slots packed into the first half, imaginary into second).
  void embed_inverse(std::vector<std::complex<double>>& values) const;
  void embed_forward(std::vector<std::complex<double>>& values) const;

 private:
  CkksParams params_;
  std::uint64_t hash_ = 0;
  std::vector<Modulus> moduli_;
  std::vector<NttTables> ntts_;
  std::vector<double> ladder_;
  std::vector<std::vector<ShoupOperand>> rescale_inv_;
  std::vector<ShoupOperand> special_inv_;
  std::vector<u64> special_mod_;
  std::vector<u64> exponent_;        // exponent_[k]: evaluation exponent of NTT index k
  std::vector<std::uint32_t> index_of_exponent_;
  std::vector<std::complex<double>> roots_;  // e^{2 pi i k / 2R}
  std::vector<u64> rot_group_;               // 5^j mod 2R
};

}  // namespace hefl::ckks
