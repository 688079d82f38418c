// Copyright 2026 The hefl Authors
// SPDX-License-Identifier: Apache-2.0

#include "hefl/ckks/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <string>

#include "hefl/error.hpp"

namespace hefl::ckks {

namespace {

constexpr double kMaxCoefficient = 4611686018427387904.0;  // 2^62

// ---- analytic noise model --------------------------------------------------
//
// The budget is -log2(relative error) under the assumption that slot values are roughly
// unit-bounded. Bounds follow the usual canonical-embedding heuristics for CKKS.

double fresh_noise(const CkksContext& ctx) {
  const double n = static_cast<double>(ctx.ring_dimension());
  const double sigma = ctx.params().error_stddev;
  const double h = 2.0 * n / 3.0;
  return 8.0 * std::sqrt(2.0) * sigma * n + 6.0 * sigma * std::sqrt(n) +
         16.0 * sigma * std::sqrt(h * n);
}

double rescale_noise(const CkksContext& ctx) {
  const double n = static_cast<double>(ctx.ring_dimension());
  return std::sqrt(n / 3.0) * (3.0 + 8.0 * std::sqrt(2.0 * n / 3.0));
}

double keyswitch_noise(const CkksContext& ctx, std::size_t level) {
  const double n = static_cast<double>(ctx.ring_dimension());
  double qmax = 0.0;
  for (std::size_t i = 0; i <= level; ++i) {
    qmax = std::max(qmax, static_cast<double>(ctx.modulus(i).value()));
  }
  const double p = static_cast<double>(ctx.params().special_modulus);
  return 8.0 * ctx.params().error_stddev * n * static_cast<double>(level + 1) * qmax /
             (std::sqrt(3.0) * p) +
         rescale_noise(ctx);
}

double rel_error(const Ciphertext& ct) { return std::exp2(-ct.noise_budget_estimate); }
double budget_from(double rel) { return -std::log2(std::max(rel, 1e-300)); }

// ---- sampling ---------------------------------------------------------------

std::vector<std::int64_t> sample_ternary(std::size_t n, Rng& rng) {
  std::vector<std::int64_t> out(n);
  for (auto& v : out) v = static_cast<std::int64_t>(rng() % 3) - 1;
  return out;
}

std::vector<std::int64_t> sample_gaussian(std::size_t n, double sigma, Rng& rng) {
  std::normal_distribution<double> dist(0.0, sigma);
  std::vector<std::int64_t> out(n);
  const double bound = 6.0 * sigma;
  for (auto& v : out) {
    double x;
    do {
      x = dist(rng);
    } while (std::abs(x) > bound);
    v = std::llround(x);
  }
  return out;
}

/// Lifts signed coefficients into NTT form over moduli [0, limbs) of the context, plus the
/// special modulus when `with_special` is set.
RingPoly ntt_from_signed(const CkksContext& ctx, std::span<const std::int64_t> coeffs,
                         std::size_t limbs, bool with_special) {
  const std::size_t n = ctx.ring_dimension();
  RingPoly p(n, limbs + (with_special ? 1 : 0));
  for (std::size_t i = 0; i < p.limb_count(); ++i) {
    const std::size_t mi = (with_special && i == limbs) ? ctx.special_index() : i;
    const Modulus& q = ctx.modulus(mi);
    auto limb = p.limb(i);
    for (std::size_t k = 0; k < n; ++k) limb[k] = q.from_signed(coeffs[k]);
    ctx.ntt(mi).forward(limb);
  }
  return p;
}

RingPoly sample_uniform(const CkksContext& ctx, std::size_t limbs, bool with_special, Rng& rng) {
  const std::size_t n = ctx.ring_dimension();
  RingPoly p(n, limbs + (with_special ? 1 : 0));
  for (std::size_t i = 0; i < p.limb_count(); ++i) {
    const std::size_t mi = (with_special && i == limbs) ? ctx.special_index() : i;
    std::uniform_int_distribution<u64> dist(0, ctx.modulus(mi).value() - 1);
    for (auto& v : p.limb(i)) v = dist(rng);
  }
  return p;
}

/// Context modulus index for limb i of a polynomial with `limbs` limbs; key material has one
/// more limb than max_level + 1 and its last limb is the special modulus.
std::size_t modulus_index(const CkksContext& ctx, std::size_t i, std::size_t limbs) {
  return (limbs == ctx.max_level() + 2 && i == limbs - 1) ? ctx.special_index() : i;
}

void poly_add_inplace(const CkksContext& ctx, RingPoly& a, const RingPoly& b) {
  for (std::size_t i = 0; i < a.limb_count(); ++i) {
    const Modulus& q = ctx.modulus(modulus_index(ctx, i, a.limb_count()));
    auto x = a.limb(i);
    auto y = b.limb(i);
    for (std::size_t k = 0; k < x.size(); ++k) x[k] = q.add(x[k], y[k]);
  }
}

void poly_sub_inplace(const CkksContext& ctx, RingPoly& a, const RingPoly& b) {
  for (std::size_t i = 0; i < a.limb_count(); ++i) {
    const Modulus& q = ctx.modulus(modulus_index(ctx, i, a.limb_count()));
    auto x = a.limb(i);
    auto y = b.limb(i);
    for (std::size_t k = 0; k < x.size(); ++k) x[k] = q.sub(x[k], y[k]);
  }
}

RingPoly poly_mul(const CkksContext& ctx, const RingPoly& a, const RingPoly& b) {
  RingPoly out(a.n(), a.limb_count());
  for (std::size_t i = 0; i < a.limb_count(); ++i) {
    const Modulus& q = ctx.modulus(modulus_index(ctx, i, a.limb_count()));
    auto x = a.limb(i);
    auto y = b.limb(i);
    auto z = out.limb(i);
    for (std::size_t k = 0; k < x.size(); ++k) z[k] = q.mul(x[k], y[k]);
  }
  return out;
}

void poly_negate_inplace(const CkksContext& ctx, RingPoly& a) {
  for (std::size_t i = 0; i < a.limb_count(); ++i) {
    const Modulus& q = ctx.modulus(modulus_index(ctx, i, a.limb_count()));
    for (auto& v : a.limb(i)) v = q.neg(v);
  }
}

/// Multiplies every limb by the integer k (given as a signed value).
void poly_mul_integer_inplace(const CkksContext& ctx, RingPoly& a, std::int64_t k) {
  for (std::size_t i = 0; i < a.limb_count(); ++i) {
    const Modulus& q = ctx.modulus(i);
    const ShoupOperand w(q.from_signed(k), q);
    for (auto& v : a.limb(i)) v = mul_shoup(v, w, q.value());
  }
}

/// Reduces a residue of q_src, lifted to its centered representative, modulo q_dst.
inline u64 centered_to(u64 v, u64 half_src, u64 q_src, const Modulus& q_dst) {
  if (v <= half_src) return q_dst.reduce(v);
  const u64 r = q_dst.reduce(q_src - v);
  return r == 0 ? 0 : q_dst.value() - r;
}

/// Divides by the top modulus with rounding and drops its limb.
void rescale_poly_inplace(const CkksContext& ctx, RingPoly& a) {
  const std::size_t l = a.level();
  const std::size_t n = a.n();
  std::vector<u64> last(a.limb(l).begin(), a.limb(l).end());
  ctx.ntt(l).inverse(last);
  const u64 ql = ctx.modulus(l).value();
  const u64 half = ql >> 1;
  std::vector<u64> tmp(n);
  for (std::size_t j = 0; j < l; ++j) {
    const Modulus& qj = ctx.modulus(j);
    for (std::size_t k = 0; k < n; ++k) tmp[k] = centered_to(last[k], half, ql, qj);
    ctx.ntt(j).forward(tmp);
    const ShoupOperand& inv = ctx.rescale_inverse(l, j);
    auto x = a.limb(j);
    for (std::size_t k = 0; k < n; ++k) x[k] = mul_shoup(qj.sub(x[k], tmp[k]), inv, qj.value());
  }
  a.truncate(l);
}

void check_params(const CkksContext& ctx, std::uint64_t hash, const char* what) {
  if (hash != ctx.params_hash()) {
    throw KeyError(std::string(what) + ": parameter set mismatch");
  }
}

void check_multipliable(const CkksContext& ctx, const Ciphertext& a, const char* op) {
  if (a.level() == 0 || a.level() <= static_cast<std::size_t>(ctx.params().refresh_threshold)) {
    throw LevelError(std::string(op) + ": level exhausted, refresh required");
  }
}

void check_scales(const Ciphertext& a, double other_scale, const char* op) {
  if (std::abs(a.scale / other_scale - 1.0) > kScaleTolerance) {
    throw ScaleMismatchError(std::string(op) + ": scale mismatch (" + std::to_string(a.scale) +
                             " vs " + std::to_string(other_scale) + ")");
  }
}

/// Brings both operands to the lower of their two levels.
std::pair<Ciphertext, Ciphertext> aligned(const CkksContext& ctx, const Ciphertext& a,
                                          const Ciphertext& b) {
  if (a.level() == b.level()) return {a, b};
  if (a.level() > b.level()) return {drop_to_level(ctx, a, b.level()), b};
  return {a, drop_to_level(ctx, b, a.level())};
}

/// Switches a polynomial from secret s' to s with the RNS-digit key, returning (k0, k1) so
/// that k0 + k1*s ~ d*s'.
std::array<RingPoly, 2> key_switch(const CkksContext& ctx, const RingPoly& d,
                                   const KeySwitchKey& ksk) {
  const std::size_t l = d.level();
  const std::size_t n = d.n();
  const std::size_t sp = ctx.special_index();
  const std::size_t targets = l + 2;
  if (ksk.digits.size() < l + 1) throw KeyError("key-switching key has too few digits");

  std::vector<u128> acc0(targets * n, 0), acc1(targets * n, 0);
  std::vector<u64> coeff(n), tmp(n);
  for (std::size_t i = 0; i <= l; ++i) {
    std::copy(d.limb(i).begin(), d.limb(i).end(), coeff.begin());
    ctx.ntt(i).inverse(coeff);
    const auto& key = ksk.digits[i];
    for (std::size_t t = 0; t < targets; ++t) {
      const std::size_t mi = t <= l ? t : sp;
      const u64* digit;
      if (t == i) {
        digit = d.limb(i).data();
      } else {
        const Modulus& qt = ctx.modulus(mi);
        for (std::size_t k = 0; k < n; ++k) tmp[k] = qt.reduce(coeff[k]);
        ctx.ntt(mi).forward(tmp);
        digit = tmp.data();
      }
      const u64* kb = key[0].limb(mi).data();
      const u64* ka = key[1].limb(mi).data();
      u128* a0 = acc0.data() + t * n;
      u128* a1 = acc1.data() + t * n;
      for (std::size_t k = 0; k < n; ++k) {
        a0[k] += static_cast<u128>(digit[k]) * kb[k];
        a1[k] += static_cast<u128>(digit[k]) * ka[k];
      }
    }
  }

  std::array<RingPoly, 2> out{RingPoly(n, l + 1), RingPoly(n, l + 1)};
  const Modulus& p = ctx.modulus(sp);
  const u64 half_p = p.value() >> 1;
  std::vector<u64> special(n);
  for (int c = 0; c < 2; ++c) {
    const auto& acc = c == 0 ? acc0 : acc1;
    const u128* spec_acc = acc.data() + (l + 1) * n;
    for (std::size_t k = 0; k < n; ++k) special[k] = p.reduce(spec_acc[k]);
    ctx.ntt(sp).inverse(special);
    for (std::size_t j = 0; j <= l; ++j) {
      const Modulus& qj = ctx.modulus(j);
      for (std::size_t k = 0; k < n; ++k) tmp[k] = centered_to(special[k], half_p, p.value(), qj);
      ctx.ntt(j).forward(tmp);
      const ShoupOperand& pinv = ctx.special_inverse(j);
      auto dst = out[c].limb(j);
      const u128* src = acc.data() + j * n;
      for (std::size_t k = 0; k < n; ++k) {
        dst[k] = mul_shoup(qj.sub(qj.reduce(src[k]), tmp[k]), pinv, qj.value());
      }
    }
  }
  return out;
}

KeySwitchKey make_switch_key(const CkksContext& ctx, const SecretKey& sk, const RingPoly& from,
                             Rng& rng) {
  const std::size_t L = ctx.max_level();
  const std::size_t n = ctx.ring_dimension();
  KeySwitchKey ksk;
  ksk.digits.reserve(L + 1);
  for (std::size_t i = 0; i <= L; ++i) {
    RingPoly a = sample_uniform(ctx, L + 1, true, rng);
    auto e = sample_gaussian(n, ctx.params().error_stddev, rng);
    RingPoly b = ntt_from_signed(ctx, e, L + 1, true);
    poly_sub_inplace(ctx, b, poly_mul(ctx, a, sk.s));
    // Add P * s' on the digit's own modulus.
    const Modulus& qi = ctx.modulus(i);
    const ShoupOperand p_mod(ctx.special_mod(i), qi);
    auto bl = b.limb(i);
    auto fl = from.limb(i);
    for (std::size_t k = 0; k < n; ++k) bl[k] = qi.add(bl[k], mul_shoup(fl[k], p_mod, qi.value()));
    ksk.digits.push_back({std::move(b), std::move(a)});
  }
  return ksk;
}

Ciphertext rotate_once(const CkksContext& ctx, const Ciphertext& a, std::size_t step,
                       const KeySwitchKey& key) {
  const u64 g = ctx.galois_element(step);
  const std::size_t n = ctx.ring_dimension();
  RingPoly c0(n, a.c0.limb_count()), c1(n, a.c1.limb_count());
  for (std::size_t i = 0; i < a.c0.limb_count(); ++i) {
    ctx.apply_galois(a.c0.limb(i), c0.limb(i), g);
    ctx.apply_galois(a.c1.limb(i), c1.limb(i), g);
  }
  auto [k0, k1] = key_switch(ctx, c1, key);
  poly_add_inplace(ctx, c0, k0);
  Ciphertext out;
  out.c0 = std::move(c0);
  out.c1 = std::move(k1);
  out.scale = a.scale;
  out.params_hash = a.params_hash;
  out.noise_budget_estimate =
      budget_from(rel_error(a) + keyswitch_noise(ctx, a.level()) / a.scale);
  return out;
}

}  // namespace

// ---- encoding -------------------------------------------------------------

Plaintext encode(const CkksContext& ctx, std::span<const double> values) {
  return encode(ctx, values, ctx.max_level(), ctx.scale());
}

Plaintext encode(const CkksContext& ctx, std::span<const double> values, std::size_t level,
                 double scale) {
  const std::size_t slots = ctx.slot_count();
  if (values.size() > slots) {
    throw CapacityError("encode: " + std::to_string(values.size()) +
                        " values exceed slot capacity " + std::to_string(slots));
  }
  if (level > ctx.max_level()) throw ParameterError("encode: level above max_level");
  if (!(scale > 0.0) || !std::isfinite(scale)) throw DomainError("encode: invalid scale");
  for (double v : values) {
    if (!std::isfinite(v)) throw DomainError("encode: non-finite input");
  }
  const std::size_t n = ctx.ring_dimension();
  std::vector<std::int64_t> coeffs(n, 0);
  const bool all_zero = std::all_of(values.begin(), values.end(), [](double v) { return v == 0.0; });
  if (!all_zero) {
    std::vector<std::complex<double>> vals(slots);
    for (std::size_t i = 0; i < values.size(); ++i) vals[i] = values[i];
    ctx.embed_inverse(vals);
    for (std::size_t i = 0; i < slots; ++i) {
      const double re = vals[i].real() * scale;
      const double im = vals[i].imag() * scale;
      if (std::abs(re) >= kMaxCoefficient || std::abs(im) >= kMaxCoefficient) {
        throw DomainError("encode: value too large for the coefficient range at this scale");
      }
      coeffs[i] = std::llround(re);
      coeffs[i + slots] = std::llround(im);
    }
  }
  Plaintext pt;
  pt.poly = ntt_from_signed(ctx, coeffs, level + 1, false);
  pt.scale = scale;
  pt.params_hash = ctx.params_hash();
  return pt;
}

namespace {

std::vector<double> decode_limb0(const CkksContext& ctx, std::span<const u64> limb0_ntt,
                                 double scale) {
  const std::size_t n = ctx.ring_dimension();
  const std::size_t slots = ctx.slot_count();
  std::vector<u64> c(limb0_ntt.begin(), limb0_ntt.end());
  ctx.ntt(0).inverse(c);
  const Modulus& q0 = ctx.modulus(0);
  std::vector<std::complex<double>> vals(slots);
  for (std::size_t i = 0; i < slots; ++i) {
    vals[i] = {static_cast<double>(q0.centered(c[i])) / scale,
               static_cast<double>(q0.centered(c[i + slots])) / scale};
  }
  (void)n;
  ctx.embed_forward(vals);
  std::vector<double> out(slots);
  for (std::size_t i = 0; i < slots; ++i) out[i] = vals[i].real();
  return out;
}

}  // namespace

std::vector<double> decode(const CkksContext& ctx, const Plaintext& pt) {
  check_params(ctx, pt.params_hash, "decode");
  if (pt.poly.empty()) throw FormatError("decode: empty plaintext");
  return decode_limb0(ctx, pt.poly.limb(0), pt.scale);
}

Plaintext encode_for_product(const CkksContext& ctx, std::span<const double> values,
                             const Ciphertext& target) {
  const std::size_t l = target.level();
  if (l == 0) throw LevelError("encode_for_product: level exhausted, refresh required");
  const double ql = static_cast<double>(ctx.modulus(l).value());
  const double s = ctx.ladder_scale(l - 1) * ql / target.scale;
  return encode(ctx, values, l, s);
}

// ---- keys -----------------------------------------------------------------

SecretKey sk_gen(const CkksContext& ctx, std::uint64_t seed) {
  Rng rng(seed);
  auto s = sample_ternary(ctx.ring_dimension(), rng);
  SecretKey sk;
  sk.s = ntt_from_signed(ctx, s, ctx.max_level() + 1, true);
  sk.params_hash = ctx.params_hash();
  return sk;
}

std::vector<std::size_t> default_rotation_steps(const CkksContext& ctx) {
  const std::size_t slots = ctx.slot_count();
  std::vector<std::size_t> steps;
  for (std::size_t s = 1; s < slots; s <<= 1) {
    steps.push_back(s);
    if (slots - s != s) steps.push_back(slots - s);
  }
  std::sort(steps.begin(), steps.end());
  steps.erase(std::unique(steps.begin(), steps.end()), steps.end());
  return steps;
}

PublicKeys pk_gen(const CkksContext& ctx, const SecretKey& sk, std::uint64_t seed) {
  const auto steps = default_rotation_steps(ctx);
  return pk_gen(ctx, sk, seed, steps);
}

PublicKeys pk_gen(const CkksContext& ctx, const SecretKey& sk, std::uint64_t seed,
                  std::span<const std::size_t> rotation_steps) {
  check_params(ctx, sk.params_hash, "pk_gen");
  Rng rng(seed);
  const std::size_t L = ctx.max_level();
  const std::size_t n = ctx.ring_dimension();
  PublicKeys out;

  RingPoly s_chain = sk.s;
  s_chain.truncate(L + 1);
  RingPoly a = sample_uniform(ctx, L + 1, false, rng);
  auto e = sample_gaussian(n, ctx.params().error_stddev, rng);
  RingPoly b = ntt_from_signed(ctx, e, L + 1, false);
  poly_sub_inplace(ctx, b, poly_mul(ctx, a, s_chain));
  out.encryption = PublicKey{std::move(b), std::move(a), ctx.params_hash()};

  RingPoly s_sq = poly_mul(ctx, sk.s, sk.s);
  out.relin.key = make_switch_key(ctx, sk, s_sq, rng);
  out.relin.params_hash = ctx.params_hash();

  out.galois.params_hash = ctx.params_hash();
  for (std::size_t raw : rotation_steps) {
    const std::size_t step = raw % ctx.slot_count();
    if (step == 0 || out.galois.has_step(step)) continue;
    const u64 g = ctx.galois_element(step);
    RingPoly s_rot(n, sk.s.limb_count());
    for (std::size_t i = 0; i < sk.s.limb_count(); ++i) {
      ctx.apply_galois(sk.s.limb(i), s_rot.limb(i), g);
    }
    out.galois.keys.emplace(step, make_switch_key(ctx, sk, s_rot, rng));
  }
  return out;
}

KeySet keygen(const CkksContext& ctx, std::uint64_t seed) {
  KeySet ks;
  ks.secret = sk_gen(ctx, seed);
  ks.pub = pk_gen(ctx, ks.secret, seed ^ 0x9e3779b97f4a7c15ULL);
  return ks;
}

// ---- encryption -----------------------------------------------------------

Ciphertext encrypt(const CkksContext& ctx, const Plaintext& pt, const PublicKey& pk, Rng& rng) {
  check_params(ctx, pt.params_hash, "encrypt");
  check_params(ctx, pk.params_hash, "encrypt");
  const std::size_t n = ctx.ring_dimension();
  const std::size_t limbs = pt.poly.limb_count();
  const double sigma = ctx.params().error_stddev;
  auto u = sample_ternary(n, rng);
  auto e0 = sample_gaussian(n, sigma, rng);
  auto e1 = sample_gaussian(n, sigma, rng);
  RingPoly u_ntt = ntt_from_signed(ctx, u, limbs, false);
  RingPoly b = pk.b;
  RingPoly a = pk.a;
  b.truncate(limbs);
  a.truncate(limbs);
  Ciphertext ct;
  ct.c0 = poly_mul(ctx, u_ntt, b);
  ct.c1 = poly_mul(ctx, u_ntt, a);
  poly_add_inplace(ctx, ct.c0, ntt_from_signed(ctx, e0, limbs, false));
  poly_add_inplace(ctx, ct.c1, ntt_from_signed(ctx, e1, limbs, false));
  poly_add_inplace(ctx, ct.c0, pt.poly);
  ct.scale = pt.scale;
  ct.params_hash = ctx.params_hash();
  ct.noise_budget_estimate = budget_from(fresh_noise(ctx) / pt.scale);
  return ct;
}

Ciphertext encrypt(const CkksContext& ctx, const Plaintext& pt, const PublicKey& pk,
                   std::uint64_t seed) {
  Rng rng(seed);
  return encrypt(ctx, pt, pk, rng);
}

std::vector<double> decrypt(const CkksContext& ctx, const Ciphertext& ct, const SecretKey& sk) {
  check_params(ctx, ct.params_hash, "decrypt");
  check_params(ctx, sk.params_hash, "decrypt");
  if (ct.noise_budget_estimate <= 0.0) throw NoiseBudgetError("decrypt: noise budget exhausted");
  const Modulus& q0 = ctx.modulus(0);
  const std::size_t n = ctx.ring_dimension();
  std::vector<u64> m(n);
  auto c0 = ct.c0.limb(0);
  auto c1 = ct.c1.limb(0);
  auto s = sk.s.limb(0);
  for (std::size_t k = 0; k < n; ++k) m[k] = q0.add(c0[k], q0.mul(c1[k], s[k]));
  return decode_limb0(ctx, m, ct.scale);
}

// ---- arithmetic -----------------------------------------------------------

Ciphertext he_add(const CkksContext& ctx, const Ciphertext& a, const Ciphertext& b) {
  Ciphertext out = a;
  he_add_inplace(ctx, out, b);
  return out;
}

void he_add_inplace(const CkksContext& ctx, Ciphertext& acc, const Ciphertext& b) {
  check_params(ctx, acc.params_hash, "he_add");
  check_params(ctx, b.params_hash, "he_add");
  if (acc.level() > b.level()) acc = drop_to_level(ctx, acc, b.level());
  if (b.level() > acc.level()) {
    he_add_inplace(ctx, acc, drop_to_level(ctx, b, acc.level()));
    return;
  }
  check_scales(acc, b.scale, "he_add");
  poly_add_inplace(ctx, acc.c0, b.c0);
  poly_add_inplace(ctx, acc.c1, b.c1);
  acc.noise_budget_estimate = budget_from(rel_error(acc) + rel_error(b));
}

Ciphertext he_sub(const CkksContext& ctx, const Ciphertext& a, const Ciphertext& b) {
  check_params(ctx, a.params_hash, "he_sub");
  check_params(ctx, b.params_hash, "he_sub");
  auto [x, y] = aligned(ctx, a, b);
  check_scales(x, y.scale, "he_sub");
  poly_sub_inplace(ctx, x.c0, y.c0);
  poly_sub_inplace(ctx, x.c1, y.c1);
  x.noise_budget_estimate = budget_from(rel_error(x) + rel_error(y));
  return x;
}

Ciphertext he_negate(const CkksContext& ctx, const Ciphertext& a) {
  Ciphertext out = a;
  poly_negate_inplace(ctx, out.c0);
  poly_negate_inplace(ctx, out.c1);
  return out;
}

Ciphertext he_mul(const CkksContext& ctx, const Ciphertext& a, const Ciphertext& b,
                  const RelinKey& relin) {
  check_params(ctx, a.params_hash, "he_mul");
  check_params(ctx, b.params_hash, "he_mul");
  check_params(ctx, relin.params_hash, "he_mul");
  check_multipliable(ctx, a, "he_mul");
  check_multipliable(ctx, b, "he_mul");
  auto [x, y] = aligned(ctx, a, b);
  RingPoly d0 = poly_mul(ctx, x.c0, y.c0);
  RingPoly d1 = poly_mul(ctx, x.c0, y.c1);
  poly_add_inplace(ctx, d1, poly_mul(ctx, x.c1, y.c0));
  RingPoly d2 = poly_mul(ctx, x.c1, y.c1);
  auto [k0, k1] = key_switch(ctx, d2, relin.key);
  poly_add_inplace(ctx, d0, k0);
  poly_add_inplace(ctx, d1, k1);
  const std::size_t l = x.level();
  rescale_poly_inplace(ctx, d0);
  rescale_poly_inplace(ctx, d1);
  Ciphertext out;
  out.c0 = std::move(d0);
  out.c1 = std::move(d1);
  out.params_hash = ctx.params_hash();
  out.scale = x.scale * y.scale / static_cast<double>(ctx.modulus(l).value());
  const double ra = rel_error(x), rb = rel_error(y);
  out.noise_budget_estimate =
      budget_from(ra + rb + ra * rb + keyswitch_noise(ctx, l) / (x.scale * y.scale) +
                  rescale_noise(ctx) / out.scale);
  return out;
}

Ciphertext mul_plain(const CkksContext& ctx, const Ciphertext& a, const Plaintext& p) {
  check_params(ctx, a.params_hash, "mul_plain");
  check_params(ctx, p.params_hash, "mul_plain");
  check_multipliable(ctx, a, "mul_plain");
  if (p.level() < a.level()) throw LevelError("mul_plain: plaintext encoded below operand level");
  const std::size_t l = a.level();
  RingPoly pp = p.poly;
  pp.truncate(l + 1);
  Ciphertext out;
  out.c0 = poly_mul(ctx, a.c0, pp);
  out.c1 = poly_mul(ctx, a.c1, pp);
  rescale_poly_inplace(ctx, out.c0);
  rescale_poly_inplace(ctx, out.c1);
  out.params_hash = a.params_hash;
  out.scale = a.scale * p.scale / static_cast<double>(ctx.modulus(l).value());
  const double n = static_cast<double>(ctx.ring_dimension());
  out.noise_budget_estimate = budget_from(rel_error(a) + std::sqrt(n) / (2.0 * p.scale) +
                                          rescale_noise(ctx) / out.scale);
  return out;
}

Ciphertext mul_plain(const CkksContext& ctx, const Ciphertext& a, std::span<const double> values) {
  check_multipliable(ctx, a, "mul_plain");
  return mul_plain(ctx, a, encode_for_product(ctx, values, a));
}

Ciphertext mul_scalar(const CkksContext& ctx, const Ciphertext& a, double c) {
  check_params(ctx, a.params_hash, "mul_scalar");
  check_multipliable(ctx, a, "mul_scalar");
  if (!std::isfinite(c)) throw DomainError("mul_scalar: non-finite constant");
  const std::size_t l = a.level();
  const double ql = static_cast<double>(ctx.modulus(l).value());
  const double s = ctx.ladder_scale(l - 1) * ql / a.scale;
  const double scaled = c * s;
  if (std::abs(scaled) >= kMaxCoefficient) throw DomainError("mul_scalar: constant too large");
  Ciphertext out = a;
  const std::int64_t k = std::llround(scaled);
  poly_mul_integer_inplace(ctx, out.c0, k);
  poly_mul_integer_inplace(ctx, out.c1, k);
  rescale_poly_inplace(ctx, out.c0);
  rescale_poly_inplace(ctx, out.c1);
  out.scale = a.scale * s / ql;
  out.noise_budget_estimate =
      budget_from(rel_error(a) + 0.5 / s + rescale_noise(ctx) / out.scale);
  return out;
}

Ciphertext linear_combination(const CkksContext& ctx, std::span<const Ciphertext* const> cts,
                              std::span<const double> coeffs) {
  if (cts.empty() || cts.size() != coeffs.size()) {
    throw DomainError("linear_combination: need one coefficient per ciphertext");
  }
  const Ciphertext& first = *cts[0];
  for (const Ciphertext* c : cts) {
    check_params(ctx, c->params_hash, "linear_combination");
    if (c->level() != first.level()) throw LevelError("linear_combination: operands at different levels");
    check_scales(*c, first.scale, "linear_combination");
  }
  check_multipliable(ctx, first, "linear_combination");
  const std::size_t l = first.level();
  const double ql = static_cast<double>(ctx.modulus(l).value());
  const double s = ctx.ladder_scale(l - 1) * ql / first.scale;
  Ciphertext out;
  out.params_hash = ctx.params_hash();
  out.c0 = RingPoly(first.c0.n(), l + 1);
  out.c1 = RingPoly(first.c1.n(), l + 1);
  double rel = 0.0;
  for (std::size_t t = 0; t < cts.size(); ++t) {
    if (!std::isfinite(coeffs[t])) throw DomainError("linear_combination: non-finite coefficient");
    const double scaled = coeffs[t] * s;
    if (std::abs(scaled) >= kMaxCoefficient) throw DomainError("linear_combination: coefficient too large");
    const std::int64_t k = std::llround(scaled);
    rel = std::max(rel, rel_error(*cts[t]));
    if (k == 0) continue;
    for (std::size_t i = 0; i <= l; ++i) {
      const Modulus& q = ctx.modulus(i);
      const ShoupOperand w(q.from_signed(k), q);
      for (int c = 0; c < 2; ++c) {
        auto src = (c == 0 ? cts[t]->c0 : cts[t]->c1).limb(i);
        auto dst = (c == 0 ? out.c0 : out.c1).limb(i);
        for (std::size_t j = 0; j < dst.size(); ++j) dst[j] = q.add(dst[j], mul_shoup(src[j], w, q.value()));
      }
    }
  }
  rescale_poly_inplace(ctx, out.c0);
  rescale_poly_inplace(ctx, out.c1);
  out.scale = first.scale * s / ql;
  out.noise_budget_estimate = budget_from(rel + 0.5 / s + rescale_noise(ctx) / out.scale);
  return out;
}

Ciphertext add_plain(const CkksContext& ctx, const Ciphertext& a, const Plaintext& p) {
  check_params(ctx, a.params_hash, "add_plain");
  check_params(ctx, p.params_hash, "add_plain");
  check_scales(a, p.scale, "add_plain");
  if (p.level() < a.level()) throw LevelError("add_plain: plaintext encoded below operand level");
  RingPoly pp = p.poly;
  pp.truncate(a.level() + 1);
  Ciphertext out = a;
  poly_add_inplace(ctx, out.c0, pp);
  return out;
}

Ciphertext add_plain(const CkksContext& ctx, const Ciphertext& a, std::span<const double> values) {
  return add_plain(ctx, a, encode(ctx, values, a.level(), a.scale));
}

Ciphertext add_scalar(const CkksContext& ctx, const Ciphertext& a, double c) {
  check_params(ctx, a.params_hash, "add_scalar");
  if (!std::isfinite(c)) throw DomainError("add_scalar: non-finite constant");
  const double scaled = c * a.scale;
  if (std::abs(scaled) >= kMaxCoefficient) throw DomainError("add_scalar: constant too large");
  const std::int64_t k = std::llround(scaled);
  Ciphertext out = a;
  // A constant polynomial evaluates to the same value at every root.
  for (std::size_t i = 0; i < out.c0.limb_count(); ++i) {
    const Modulus& q = ctx.modulus(i);
    const u64 r = q.from_signed(k);
    for (auto& v : out.c0.limb(i)) v = q.add(v, r);
  }
  return out;
}

Ciphertext rotate(const CkksContext& ctx, const Ciphertext& a, std::int64_t step,
                  const GaloisKeys& keys) {
  check_params(ctx, a.params_hash, "rotate");
  const auto slots = static_cast<std::int64_t>(ctx.slot_count());
  const auto k = static_cast<std::size_t>(((step % slots) + slots) % slots);
  if (k == 0) return a;
  if (auto it = keys.keys.find(k); it != keys.keys.end()) {
    check_params(ctx, keys.params_hash, "rotate");
    return rotate_once(ctx, a, k, it->second);
  }
  // Fall back to the binary decomposition over power-of-two keys.
  for (std::size_t bit = 1; bit < ctx.slot_count(); bit <<= 1) {
    if ((k & bit) && !keys.has_step(bit)) {
      throw KeyError("missing rotation key for step " + std::to_string(k));
    }
  }
  Ciphertext out = a;
  for (std::size_t bit = 1; bit < ctx.slot_count(); bit <<= 1) {
    if (k & bit) out = rotate_once(ctx, out, bit, keys.keys.at(bit));
  }
  return out;
}

Ciphertext drop_to_level(const CkksContext& ctx, const Ciphertext& a, std::size_t level) {
  if (level > a.level()) throw LevelError("drop_to_level: target above current level");
  Ciphertext out = a;
  while (out.level() > level) {
    const std::size_t l = out.level();
    const double ql = static_cast<double>(ctx.modulus(l).value());
    const double target = ctx.ladder_scale(l - 1);
    const std::int64_t k = std::llround(target * ql / out.scale);
    poly_mul_integer_inplace(ctx, out.c0, k);
    poly_mul_integer_inplace(ctx, out.c1, k);
    rescale_poly_inplace(ctx, out.c0);
    rescale_poly_inplace(ctx, out.c1);
    out.scale = out.scale * static_cast<double>(k) / ql;
    out.noise_budget_estimate = budget_from(rel_error(out) + rescale_noise(ctx) / out.scale);
  }
  return out;
}

bool needs_refresh(const CkksContext& ctx, const Ciphertext& ct) {
  return ct.level() <= static_cast<std::size_t>(ctx.params().refresh_threshold);
}

}  // namespace hefl::ckks
