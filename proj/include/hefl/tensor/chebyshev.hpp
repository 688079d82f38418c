// Copyright 2026 The hefl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "hefl/ckks/context.hpp"
#include "hefl/ckks/types.hpp"

namespace hefl::tensor {

/// Polynomial sum_k coeffs[k] T_k(t) with t = (2x - (a + b)) / (b - a).
struct ChebApprox {
  std::string name;
  double a = -1.0;
  double b = 1.0;
  std::vector<double> coeffs;
  /// Sup-error against the fitted function, measured by dense sampling on [a, b].
  double declared_error = 0.0;

  std::size_t degree() const { return coeffs.empty() ? 0 : coeffs.size() - 1; }
  /// Clenshaw evaluation; inputs outside [a, b] are extrapolated, not clipped.
  double operator()(double x) const;
  /// Exact derivative polynomial (declared_error is not carried over).
  ChebApprox derivative() const;
};

/// Interpolates f at the degree+1 Chebyshev nodes of [a, b]. The declared error is the
/// maximum deviation over max(10 * degree, 20000) + 1 evenly spaced points.
ChebApprox cheb_fit(const std::function<double(double)>& f, double a, double b,
                    std::size_t degree, std::string name = {});

double silu(double x);
double silu_derivative(double x);

/// The activation pair used throughout: SiLU and its derivative on [-8, 8], degree 15.
const ChebApprox& silu_approx();
const ChebApprox& silu_derivative_approx();

/// Levels consumed by cheb_eval_encrypted for this polynomial (depends on which
/// coefficients are zero). For dense coefficients of degree d >= 4 this is
/// ceil(log2(d + 1)) + 1; degree 0 costs nothing, 1 costs one level, 2 and 3 cost two.
std::size_t cheb_depth(const ChebApprox& c);
std::size_t cheb_depth(std::size_t degree);

/// Evaluates each approximation slot-wise on `x`. All approximations must share one
/// interval; the Chebyshev basis ciphertexts are computed once and reused.
std::vector<ckks::Ciphertext> cheb_eval_encrypted(const ckks::CkksContext& ctx,
                                                  std::span<const ChebApprox* const> approx,
                                                  const ckks::Ciphertext& x,
                                                  const ckks::RelinKey& relin);
ckks::Ciphertext cheb_eval_encrypted(const ckks::CkksContext& ctx, const ChebApprox& approx,
                                     const ckks::Ciphertext& x, const ckks::RelinKey& relin);

}  // namespace hefl::tensor
