// Copyright 2026 The hefl Authors
// SPDX-License-Identifier: Apache-2.0

#include "hefl/ckks/params.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>

#include "hefl/error.hpp"

namespace hefl::ckks {

std::vector<std::string> CkksParams::violations() const {
  std::vector<std::string> out;
  const std::size_t n = ring_dimension;
  if (n == 0 || !std::has_single_bit(n)) {
    out.emplace_back("ring_dimension not a power of two");
  } else if (n < 8) {
    out.emplace_back("ring_dimension below 8");
  }
  if (modulus_chain.size() < 2) out.emplace_back("modulus_chain needs at least 2 moduli");
  const u64 two_n = 2 * static_cast<u64>(n);
  auto check_modulus = [&](u64 q, const std::string& what) {
    if (q < 3 || q >= (u64{1} << 61)) {
      out.push_back(what + " outside [3, 2^61)");
      return;
    }
    if (!is_prime(q)) out.push_back(what + " not prime");
    if (two_n != 0 && q % two_n != 1) out.push_back(what + " not 1 mod 2R");
  };
  for (std::size_t i = 0; i < modulus_chain.size(); ++i) {
    check_modulus(modulus_chain[i], "modulus_chain[" + std::to_string(i) + "]");
  }
  check_modulus(special_modulus, "special_modulus");
  std::vector<u64> all = modulus_chain;
  all.push_back(special_modulus);
  std::sort(all.begin(), all.end());
  if (std::adjacent_find(all.begin(), all.end()) != all.end()) {
    out.emplace_back("moduli not pairwise coprime (duplicate prime)");
  }
  if (!modulus_chain.empty() &&
      special_modulus < *std::max_element(modulus_chain.begin(), modulus_chain.end())) {
    out.emplace_back("special_modulus smaller than a chain modulus");
  }
  if (!(scale > 1.0) || !std::isfinite(scale)) {
    out.emplace_back("scale must be a finite real above 1");
  } else if (!modulus_chain.empty()) {
    if (scale > static_cast<double>(modulus_chain[0]) / 4.0) {
      out.emplace_back("scale exceeds base modulus / 4");
    }
    for (std::size_t i = 1; i < modulus_chain.size(); ++i) {
      const double q = static_cast<double>(modulus_chain[i]);
      if (q < scale / 2.0 || q > scale * 2.0) {
        out.push_back("modulus_chain[" + std::to_string(i) +
                      "] not within a factor 2 of scale (rescale drift)");
      }
    }
  }
  if (refresh_threshold < 0 || static_cast<std::size_t>(refresh_threshold) > max_level()) {
    out.emplace_back("refresh_threshold outside [0, max_level]");
  }
  if (!(error_stddev > 0.0)) out.emplace_back("error_stddev must be positive");
  return out;
}

void CkksParams::validate() const {
  auto v = violations();
  if (!v.empty()) throw ParameterError(v.front());
}

std::uint64_t CkksParams::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](std::uint64_t word) {
    for (int i = 0; i < 8; ++i) {
      h ^= (word >> (8 * i)) & 0xff;
      h *= 0x100000001b3ULL;
    }
  };
  mix(ring_dimension);
  mix(modulus_chain.size());
  for (u64 q : modulus_chain) mix(q);
  mix(special_modulus);
  mix(std::bit_cast<std::uint64_t>(scale));
  mix(static_cast<std::uint64_t>(refresh_threshold));
  mix(std::bit_cast<std::uint64_t>(error_stddev));
  return h;
}

CkksParams make_params(std::size_t ring_dimension, int base_bits, int scale_bits,
                       std::size_t levels, int special_bits, int refresh_threshold) {
  if (ring_dimension == 0 || !std::has_single_bit(ring_dimension)) {
    throw ParameterError("ring_dimension not a power of two");
  }
  const u64 step = 2 * static_cast<u64>(ring_dimension);
  CkksParams p;
  p.ring_dimension = ring_dimension;
  p.scale = std::ldexp(1.0, scale_bits);
  p.refresh_threshold = refresh_threshold;
  auto base = find_ntt_primes(base_bits, step, 1, false);
  auto middle = find_ntt_primes(scale_bits, step, levels, true, base);
  std::vector<u64> used = base;
  used.insert(used.end(), middle.begin(), middle.end());
  p.special_modulus = find_ntt_primes(special_bits, step, 1, false, used).front();
  p.modulus_chain.push_back(base.front());
  p.modulus_chain.insert(p.modulus_chain.end(), middle.begin(), middle.end());
  return p;
}

CkksParams preset(std::string_view name) {
  if (name == "desk") return make_params(2048, 60, 40, 5, 61);
  if (name == "small") return make_params(512, 60, 40, 5, 61);
  if (name == "toy") return make_params(8, 50, 30, 2, 55);
  if (name == "secure") return make_params(32768, 60, 40, 13, 61);
  throw ParameterError("unknown CKKS profile '" + std::string(name) + "'");
}

std::vector<std::string> preset_names() { return {"desk", "small", "toy", "secure"}; }

}  // namespace hefl::ckks
