// Copyright 2026 The hefl Authors
// SPDX-License-Identifier: Apache-2.0

#include "hefl/tensor/chebyshev.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <map>
#include <numbers>
#include <optional>

#include "hefl/ckks/evaluator.hpp"
#include "hefl/error.hpp"

namespace hefl::tensor {

double ChebApprox::operator()(double x) const {
  const double t = (2.0 * x - (a + b)) / (b - a);
  double b1 = 0.0, b2 = 0.0;
  for (std::size_t k = coeffs.size(); k-- > 1;) {
    const double b0 = 2.0 * t * b1 - b2 + coeffs[k];
    b2 = b1;
    b1 = b0;
  }
  return t * b1 - b2 + (coeffs.empty() ? 0.0 : coeffs[0]);
}

ChebApprox ChebApprox::derivative() const {
  ChebApprox d;
  d.name = name + "'";
  d.a = a;
  d.b = b;
  const std::size_t n = coeffs.size();
  if (n <= 1) {
    d.coeffs = {0.0};
    return d;
  }
  std::vector<double> c(n + 1, 0.0);  // c[k] holds the coefficient of T_k before halving c[0]
  for (std::size_t k = n - 1; k >= 1; --k) {
    c[k - 1] = c[k + 1] + 2.0 * static_cast<double>(k) * coeffs[k];
  }
  c[0] *= 0.5;
  const double chain = 2.0 / (b - a);
  d.coeffs.assign(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(n - 1));
  for (auto& v : d.coeffs) v *= chain;
  return d;
}

ChebApprox cheb_fit(const std::function<double(double)>& f, double a, double b,
                    std::size_t degree, std::string name) {
  if (!(b > a) || !std::isfinite(a) || !std::isfinite(b)) throw DomainError("cheb_fit: empty interval");
  if (degree < 1) throw DomainError("cheb_fit: degree must be at least 1");
  const std::size_t n = degree + 1;
  std::vector<double> fx(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double t = std::cos(std::numbers::pi * (static_cast<double>(k) + 0.5) / static_cast<double>(n));
    fx[k] = f(0.5 * (b - a) * t + 0.5 * (a + b));
    if (!std::isfinite(fx[k])) throw DomainError("cheb_fit: function not finite on the interval");
  }
  ChebApprox c;
  c.name = std::move(name);
  c.a = a;
  c.b = b;
  c.coeffs.resize(n);
  for (std::size_t j = 0; j < n; ++j) {
    double s = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      s += fx[k] * std::cos(std::numbers::pi * static_cast<double>(j) * (static_cast<double>(k) + 0.5) /
                            static_cast<double>(n));
    }
    c.coeffs[j] = 2.0 * s / static_cast<double>(n);
  }
  c.coeffs[0] *= 0.5;

  const std::size_t samples = std::max<std::size_t>(10 * degree, 20000);
  double worst = 0.0;
  for (std::size_t i = 0; i <= samples; ++i) {
    const double x = a + (b - a) * static_cast<double>(i) / static_cast<double>(samples);
    worst = std::max(worst, std::abs(c(x) - f(x)));
  }
  c.declared_error = worst;
  return c;
}

double silu(double x) { return x / (1.0 + std::exp(-x)); }

double silu_derivative(double x) {
  const double s = 1.0 / (1.0 + std::exp(-x));
  return s * (1.0 + x * (1.0 - s));
}

const ChebApprox& silu_approx() {
  static const ChebApprox c = cheb_fit(silu, -8.0, 8.0, 15, "silu");
  return c;
}

const ChebApprox& silu_derivative_approx() {
  static const ChebApprox c = cheb_fit(silu_derivative, -8.0, 8.0, 15, "silu'");
  return c;
}

// ---- evaluation -------------------------------------------------------------
//
// p = q * T_m + r splits at the largest power of two m <= deg(p) (using
// T_{m+j} = 2 T_m T_j - T_{m-j}) until the pieces have degree <= 3. Those leaves are
// rewritten in the power basis of x itself, so the affine map to [-1, 1] costs nothing
// extra. Giant steps: T_2 from x^2 by scalars, then T_{2m} = T_m * (T_m + T_m) - 1.

namespace {

/// Level bookkeeping only; used to predict depth.
struct DepthBackend {
  using Value = int;
  static constexpr int kStart = 1 << 20;
  Value x() const { return kStart; }
  Value mul(Value p, Value q) const { return std::min(p, q) - 1; }
  Value scalar(Value p, double) const { return p - 1; }
  Value add(Value p, Value q) const { return std::min(p, q); }
  Value add_const(Value p, double) const { return p; }
  Value constant(double) const { return kStart; }
  Value align(Value p, Value to) const { return std::min(p, to); }
  Value lincomb(const std::vector<const Value*>& v, const std::vector<double>&) const { return *v[0] - 1; }
};

struct CipherBackend {
  using Value = ckks::Ciphertext;
  const ckks::CkksContext& ctx;
  const ckks::RelinKey& relin;
  const ckks::Ciphertext& input;

  Value x() const { return input; }
  Value mul(const Value& p, const Value& q) const { return ckks::he_mul(ctx, p, q, relin); }
  Value scalar(const Value& p, double c) const { return ckks::mul_scalar(ctx, p, c); }
  Value add(const Value& p, const Value& q) const { return ckks::he_add(ctx, p, q); }
  Value add_const(const Value& p, double c) const { return ckks::add_scalar(ctx, p, c); }
  Value constant(double c) const { return ckks::add_scalar(ctx, ckks::he_sub(ctx, input, input), c); }
  Value align(const Value& p, const Value& to) const {
    return p.level() > to.level() ? ckks::drop_to_level(ctx, p, to.level()) : p;
  }
  Value lincomb(const std::vector<const Value*>& v, const std::vector<double>& c) const {
    return ckks::linear_combination(ctx, v, c);
  }
};

template <class Backend>
class Evaluator {
 public:
  using Value = typename Backend::Value;

  Evaluator(const Backend& be, double a, double b)
      : be_(be), alpha_(2.0 / (b - a)), beta_(-(a + b) / (b - a)), input_(be.x()) {}

  Value eval(std::vector<double> c) {
    std::size_t deg = c.size();
    while (deg > 0 && c[deg - 1] == 0.0) --deg;
    if (deg == 0) return be_.constant(0.0);
    c.resize(deg);
    // Above degree 3 every leaf is later multiplied by T_4 or a higher giant, which sits at
    // depth 3 or more, so leaves may take depth 3 themselves and skip relinearization.
    combined_leaves_ = deg > 4;
    return eval_trimmed(c);
  }

 private:
  Value eval_inner(std::vector<double> c) {
    std::size_t deg = c.size();
    while (deg > 0 && c[deg - 1] == 0.0) --deg;
    if (deg == 0) return be_.constant(0.0);
    c.resize(deg);
    return eval_trimmed(c);
  }

  Value eval_trimmed(const std::vector<double>& c) {
    const std::size_t deg = c.size() - 1;
    if (deg <= 3) return leaf(c);
    const std::size_t m = std::bit_floor(deg);
    std::vector<double> q(deg - m + 1, 0.0), r(m, 0.0);
    for (std::size_t k = 0; k < m; ++k) r[k] = c[k];
    q[0] = c[m];
    for (std::size_t k = m + 1; k <= deg; ++k) {
      q[k - m] = 2.0 * c[k];
      r[2 * m - k] -= c[k];
    }
    std::size_t qdeg = q.size();
    while (qdeg > 0 && q[qdeg - 1] == 0.0) --qdeg;
    q.resize(qdeg);
    const Value& tm = giant(m);
    Value out = qdeg == 1 ? be_.scalar(tm, q[0]) : be_.mul(tm, eval_inner(q));
    std::size_t rdeg = r.size();
    while (rdeg > 0 && r[rdeg - 1] == 0.0) --rdeg;
    if (rdeg == 0) return out;
    r.resize(rdeg);
    if (rdeg == 1) return be_.add_const(out, r[0]);
    return be_.add(out, eval_trimmed(r));
  }

  /// Chebyshev leaf of degree <= 3 in t, evaluated in the power basis of x.
  Value leaf(const std::vector<double>& c) {
    std::array<double, 4> ct{};
    for (std::size_t k = 0; k < c.size(); ++k) ct[k] = c[k];
    // Power basis in t.
    const std::array<double, 4> pt = {ct[0] - ct[2], ct[1] - 3.0 * ct[3], 2.0 * ct[2], 4.0 * ct[3]};
    // Substitute t = alpha x + beta.
    std::array<double, 4> px{};
    static constexpr double kBinom[4][4] = {{1, 0, 0, 0}, {1, 1, 0, 0}, {1, 2, 1, 0}, {1, 3, 3, 1}};
    for (int k = 0; k < 4; ++k) {
      for (int j = 0; j <= k; ++j) {
        px[j] += pt[k] * kBinom[k][j] * std::pow(alpha_, j) * std::pow(beta_, k - j);
      }
    }
    if (combined_leaves_) return combined_leaf(px);
    std::optional<Value> acc;
    auto accumulate = [&](Value v) { acc = acc ? be_.add(*acc, v) : std::move(v); };
    if (px[3] != 0.0) {
      accumulate(be_.mul(be_.add_const(be_.scalar(be_.x(), px[3]), px[2]), square()));
    } else if (px[2] != 0.0) {
      accumulate(be_.scalar(square(), px[2]));
    }
    if (px[1] != 0.0) accumulate(be_.scalar(be_.x(), px[1]));
    if (!acc) return be_.constant(px[0]);
    return px[0] != 0.0 ? be_.add_const(*acc, px[0]) : *acc;
  }

  /// Leaf as one linear combination of x, x^2, x^3 aligned to the deepest power used.
  Value combined_leaf(const std::array<double, 4>& px) {
    std::size_t top = 0;
    for (std::size_t k = 1; k <= 3; ++k) {
      if (px[k] != 0.0) top = k;
    }
    if (top == 0) return be_.constant(px[0]);
    std::vector<const Value*> terms;
    std::vector<double> coeffs;
    for (std::size_t k = 1; k <= top; ++k) {
      if (px[k] == 0.0) continue;
      terms.push_back(&aligned_power(k, top));
      coeffs.push_back(px[k]);
    }
    Value out = be_.lincomb(terms, coeffs);
    return px[0] != 0.0 ? be_.add_const(out, px[0]) : out;
  }

  const Value& power(std::size_t k) {
    if (k == 1) return input_;
    if (k == 2) return square();
    if (!x3_) x3_ = be_.mul(be_.x(), square());
    return *x3_;
  }

  const Value& aligned_power(std::size_t k, std::size_t top) {
    auto& slot = aligned_[k][top];
    if (!slot) slot = be_.align(power(k), power(top));
    return *slot;
  }

  const Value& square() {
    if (!x2_) x2_ = be_.mul(be_.x(), be_.x());
    return *x2_;
  }

  const Value& giant(std::size_t m) {
    if (auto it = giants_.find(m); it != giants_.end()) return it->second;
    Value v = [&] {
      if (m == 2) {
        // T_2(t) = 2 alpha^2 x^2 + 4 alpha beta x + 2 beta^2 - 1
        Value out = be_.scalar(square(), 2.0 * alpha_ * alpha_);
        if (beta_ != 0.0) out = be_.add(out, be_.scalar(be_.x(), 4.0 * alpha_ * beta_));
        return be_.add_const(out, 2.0 * beta_ * beta_ - 1.0);
      }
      const Value& h = giant(m / 2);
      return be_.add_const(be_.mul(h, be_.add(h, h)), -1.0);
    }();
    return giants_.emplace(m, std::move(v)).first->second;
  }

  const Backend& be_;
  double alpha_;
  double beta_;
  Value input_;
  bool combined_leaves_ = false;
  std::optional<Value> x2_;
  std::optional<Value> x3_;
  std::optional<Value> aligned_[4][4];
  std::map<std::size_t, Value> giants_;
};

}  // namespace

std::size_t cheb_depth(const ChebApprox& c) {
  DepthBackend be;
  Evaluator<DepthBackend> ev(be, c.a, c.b);
  return static_cast<std::size_t>(DepthBackend::kStart - ev.eval(c.coeffs));
}

std::size_t cheb_depth(std::size_t degree) {
  ChebApprox c;
  c.coeffs.assign(degree + 1, 1.0);
  return cheb_depth(c);
}

std::vector<ckks::Ciphertext> cheb_eval_encrypted(const ckks::CkksContext& ctx,
                                                  std::span<const ChebApprox* const> approx,
                                                  const ckks::Ciphertext& x,
                                                  const ckks::RelinKey& relin) {
  std::vector<ckks::Ciphertext> out;
  if (approx.empty()) return out;
  for (const ChebApprox* c : approx) {
    if (c->a != approx[0]->a || c->b != approx[0]->b) {
      throw DomainError("cheb_eval_encrypted: approximations must share one interval");
    }
  }
  CipherBackend be{ctx, relin, x};
  Evaluator<CipherBackend> ev(be, approx[0]->a, approx[0]->b);
  for (const ChebApprox* c : approx) {
    if (x.level() < cheb_depth(*c)) {
      throw LevelError("cheb_eval_encrypted: level exhausted, refresh required (needs " +
                       std::to_string(cheb_depth(*c)) + " levels, have " +
                       std::to_string(x.level()) + ")");
    }
    out.push_back(ev.eval(c->coeffs));
  }
  return out;
}

ckks::Ciphertext cheb_eval_encrypted(const ckks::CkksContext& ctx, const ChebApprox& approx,
                                     const ckks::Ciphertext& x, const ckks::RelinKey& relin) {
  const ChebApprox* one[] = {&approx};
  return std::move(cheb_eval_encrypted(ctx, one, x, relin).front());
}

}  // namespace hefl::tensor
