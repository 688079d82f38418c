// Copyright 2026 The hefl Authors
// SPDX-License-Identifier: Apache-2.0

#include "hefl/ckks/context.hpp"

#include <bit>
#include <cmath>
#include <numbers>
#include <utility>

#include "hefl/error.hpp"

namespace hefl::ckks {

namespace {

void bit_reverse_permute(std::vector<std::complex<double>>& v) {
  const std::size_t n = v.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j >= bit; bit >>= 1) j -= bit;
    j += bit;
    if (i < j) std::swap(v[i], v[j]);
  }
}

}  // namespace

CkksContext::CkksContext(CkksParams params) : params_(std::move(params)) {
  params_.validate();
  hash_ = params_.hash();
  const std::size_t n = params_.ring_dimension;
  for (u64 q : params_.modulus_chain) moduli_.emplace_back(q);
  moduli_.emplace_back(params_.special_modulus);
  ntts_.reserve(moduli_.size());
  for (const auto& q : moduli_) ntts_.emplace_back(n, q);

  const std::size_t top = params_.max_level();
  ladder_.assign(top + 1, params_.scale);
  for (std::size_t l = top; l > 0; --l) {
    ladder_[l - 1] = ladder_[l] * ladder_[l] / static_cast<double>(params_.modulus_chain[l]);
  }

  rescale_inv_.resize(top + 1);
  for (std::size_t l = 1; l <= top; ++l) {
    for (std::size_t j = 0; j < l; ++j) {
      const Modulus& qj = moduli_[j];
      rescale_inv_[l].emplace_back(qj.inv(qj.reduce(params_.modulus_chain[l])), qj);
    }
  }
  for (std::size_t j = 0; j <= top; ++j) {
    const Modulus& qj = moduli_[j];
    const u64 p_mod = qj.reduce(params_.special_modulus);
    special_mod_.push_back(p_mod);
    special_inv_.emplace_back(qj.inv(p_mod), qj);
  }

  const int log_n = std::countr_zero(n);
  exponent_.resize(n);
  index_of_exponent_.assign(2 * n, 0);
  for (std::size_t k = 0; k < n; ++k) {
    exponent_[k] = 2 * bit_reverse(k, log_n) + 1;
    index_of_exponent_[exponent_[k]] = static_cast<std::uint32_t>(k);
  }

  const std::size_t m = 2 * n;
  roots_.resize(m + 1);
  for (std::size_t k = 0; k <= m; ++k) {
    const double angle = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(m);
    roots_[k] = {std::cos(angle), std::sin(angle)};
  }
  rot_group_.resize(n / 2);
  u64 five = 1;
  for (std::size_t j = 0; j < n / 2; ++j) {
    rot_group_[j] = five;
    five = (five * 5) % m;
  }
}

u64 CkksContext::galois_element(std::size_t step) const {
  const u64 m = 2 * params_.ring_dimension;
  step %= slot_count();
  u64 g = 1;
  u64 base = 5;
  while (step) {
    if (step & 1) g = g * base % m;
    base = base * base % m;
    step >>= 1;
  }
  return g;
}

void CkksContext::apply_galois(std::span<const u64> in, std::span<u64> out, u64 g) const {
  const std::size_t n = params_.ring_dimension;
  const u64 mask = 2 * n - 1;
  for (std::size_t k = 0; k < n; ++k) {
    out[k] = in[index_of_exponent_[(exponent_[k] * g) & mask]];
  }
}

void CkksContext::embed_inverse(std::vector<std::complex<double>>& vals) const {
  const std::size_t size = vals.size();
  const std::size_t m = 2 * params_.ring_dimension;
  for (std::size_t len = size; len >= 1; len >>= 1) {
    for (std::size_t i = 0; i < size; i += len) {
      const std::size_t lenh = len >> 1;
      const std::size_t lenq = len << 2;
      const std::size_t gap = m / lenq;
      for (std::size_t j = 0; j < lenh; ++j) {
        const std::size_t idx = (lenq - (rot_group_[j] % lenq)) * gap;
        auto u = vals[i + j] + vals[i + j + lenh];
        auto v = vals[i + j] - vals[i + j + lenh];
        v *= roots_[idx];
        vals[i + j] = u;
        vals[i + j + lenh] = v;
      }
    }
  }
  bit_reverse_permute(vals);
  const double inv = 1.0 / static_cast<double>(size);
  for (auto& v : vals) v *= inv;
}

void CkksContext::embed_forward(std::vector<std::complex<double>>& vals) const {
  const std::size_t size = vals.size();
  const std::size_t m = 2 * params_.ring_dimension;
  bit_reverse_permute(vals);
  for (std::size_t len = 2; len <= size; len <<= 1) {
    for (std::size_t i = 0; i < size; i += len) {
      const std::size_t lenh = len >> 1;
      const std::size_t lenq = len << 2;
      const std::size_t gap = m / lenq;
      for (std::size_t j = 0; j < lenh; ++j) {
        const std::size_t idx = (rot_group_[j] % lenq) * gap;
        auto u = vals[i + j];
        auto v = vals[i + j + lenh] * roots_[idx];
        vals[i + j] = u + v;
        vals[i + j + lenh] = u - v;
      }
    }
  }
}

}  // namespace hefl::ckks
