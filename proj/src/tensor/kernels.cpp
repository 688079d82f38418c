// Copyright 2026 The hefl Authors
// SPDX-License-Identifier: Apache-2.0

#include "hefl/tensor/kernels.hpp"

#include <string>

#include "hefl/ckks/evaluator.hpp"
#include "hefl/error.hpp"

namespace hefl::tensor {

namespace {

using ckks::Ciphertext;

void require_encrypted(const PackedMatrix& w, const PackedVector& x, const char* op) {
  if (!w.encrypted() || !x.encrypted()) throw DomainError(std::string(op) + ": operands must be encrypted");
  if (w.mu != x.mu) throw ShapeError(std::string(op) + ": grid mismatch");
}

SlotGrid grid_for(const ckks::CkksContext& ctx, const char* op) {
  const SlotGrid g = SlotGrid::of(ctx);
  if (!g.kernels_supported()) {
    throw ParameterError(std::string(op) + ": slot count " + std::to_string(g.slots) +
                         " is not the square of a power of two");
  }
  return g;
}

Ciphertext sum_within_blocks(const ckks::CkksContext& ctx, const ckks::PublicKeys& keys,
                             Ciphertext acc, std::size_t mu) {
  for (std::size_t step = 1; step < mu; step <<= 1) {
    ckks::he_add_inplace(ctx, acc, ckks::rotate(ctx, acc, static_cast<std::int64_t>(step), keys.galois));
  }
  return acc;
}

Ciphertext sum_across_blocks(const ckks::CkksContext& ctx, const ckks::PublicKeys& keys,
                             Ciphertext acc, std::size_t mu) {
  for (std::size_t step = mu; step < mu * mu; step <<= 1) {
    ckks::he_add_inplace(ctx, acc, ckks::rotate(ctx, acc, static_cast<std::int64_t>(step), keys.galois));
  }
  return acc;
}

/// Copies each block head across its block; every other slot must already be zero.
Ciphertext spread_heads(const ckks::CkksContext& ctx, const ckks::PublicKeys& keys,
                        Ciphertext acc, std::size_t mu) {
  for (std::size_t step = 1; step < mu; step <<= 1) {
    ckks::he_add_inplace(ctx, acc, ckks::rotate(ctx, acc, -static_cast<std::int64_t>(step), keys.galois));
  }
  return acc;
}

PackedVector within_kernel(const ckks::CkksContext& ctx, const ckks::PublicKeys& keys,
                           const PackedMatrix& w, const PackedVector& x, std::size_t out_len) {
  const SlotGrid g = grid_for(ctx, "matvec");
  Ciphertext prod = ckks::he_mul(ctx, *w.cipher, *x.cipher, keys.relin);
  prod = sum_within_blocks(ctx, keys, std::move(prod), g.mu);
  prod = ckks::mul_plain(ctx, prod, vector_mask(out_len, g, Replication::kStrided));
  PackedVector y;
  y.length = out_len;
  y.mu = g.mu;
  y.replication = Replication::kColumnReplicated;
  y.cipher = spread_heads(ctx, keys, std::move(prod), g.mu);
  return y;
}

PackedVector across_kernel(const ckks::CkksContext& ctx, const ckks::PublicKeys& keys,
                           const PackedMatrix& w, const PackedVector& x, std::size_t out_len) {
  const SlotGrid g = grid_for(ctx, "matvec");
  Ciphertext prod = ckks::he_mul(ctx, *w.cipher, *x.cipher, keys.relin);
  PackedVector y;
  y.length = out_len;
  y.mu = g.mu;
  y.replication = Replication::kRowReplicated;
  y.cipher = sum_across_blocks(ctx, keys, std::move(prod), g.mu);
  return y;
}

void require_same_shape(const PackedVector& a, const PackedVector& b, const char* op) {
  if (a.length != b.length || a.replication != b.replication || a.mu != b.mu) {
    throw ShapeError(std::string(op) + ": packed vectors differ in shape or layout");
  }
  if (!a.encrypted() || !b.encrypted()) throw DomainError(std::string(op) + ": operands must be encrypted");
}

}  // namespace

PackedVector matvec(const ckks::CkksContext& ctx, const ckks::PublicKeys& keys,
                    const PackedMatrix& w, const PackedVector& x) {
  require_encrypted(w, x, "matvec");
  if (x.length != w.rows) {
    throw ShapeError("matvec: vector length " + std::to_string(x.length) + " does not match " +
                     std::to_string(w.rows) + " matrix rows");
  }
  if (x.replication == Replication::kRowReplicated && w.orientation == Orientation::kTransposed) {
    return within_kernel(ctx, keys, w, x, w.cols);
  }
  if (x.replication == Replication::kColumnReplicated && w.orientation == Orientation::kRowMajor) {
    return across_kernel(ctx, keys, w, x, w.cols);
  }
  throw ShapeError("matvec: vector replication does not match matrix orientation");
}

PackedVector matvec_transposed(const ckks::CkksContext& ctx, const ckks::PublicKeys& keys,
                               const PackedMatrix& w, const PackedVector& d) {
  require_encrypted(w, d, "matvec_transposed");
  if (d.length != w.cols) {
    throw ShapeError("matvec_transposed: vector length " + std::to_string(d.length) +
                     " does not match " + std::to_string(w.cols) + " matrix cols");
  }
  if (d.replication == Replication::kRowReplicated && w.orientation == Orientation::kRowMajor) {
    return within_kernel(ctx, keys, w, d, w.rows);
  }
  if (d.replication == Replication::kColumnReplicated && w.orientation == Orientation::kTransposed) {
    return across_kernel(ctx, keys, w, d, w.rows);
  }
  throw ShapeError("matvec_transposed: vector replication does not match matrix orientation");
}

PackedMatrix outer(const ckks::CkksContext& ctx, const ckks::PublicKeys& keys,
                   const PackedVector& a, const PackedVector& d) {
  if (!a.encrypted() || !d.encrypted()) throw DomainError("outer: operands must be encrypted");
  PackedMatrix g;
  g.rows = a.length;
  g.cols = d.length;
  g.mu = a.mu;
  if (a.replication == Replication::kRowReplicated && d.replication == Replication::kColumnReplicated) {
    g.orientation = Orientation::kTransposed;
  } else if (a.replication == Replication::kColumnReplicated &&
             d.replication == Replication::kRowReplicated) {
    g.orientation = Orientation::kRowMajor;
  } else {
    throw ShapeError("outer: operands need complementary replication");
  }
  g.cipher = ckks::he_mul(ctx, *a.cipher, *d.cipher, keys.relin);
  return g;
}

PackedVector add(const ckks::CkksContext& ctx, const PackedVector& a, const PackedVector& b) {
  require_same_shape(a, b, "add");
  PackedVector out = a;
  out.cipher = ckks::he_add(ctx, *a.cipher, *b.cipher);
  return out;
}

PackedVector sub(const ckks::CkksContext& ctx, const PackedVector& a, const PackedVector& b) {
  require_same_shape(a, b, "sub");
  PackedVector out = a;
  out.cipher = ckks::he_sub(ctx, *a.cipher, *b.cipher);
  return out;
}

PackedVector hadamard(const ckks::CkksContext& ctx, const ckks::PublicKeys& keys,
                      const PackedVector& a, const PackedVector& b) {
  require_same_shape(a, b, "hadamard");
  PackedVector out = a;
  out.cipher = ckks::he_mul(ctx, *a.cipher, *b.cipher, keys.relin);
  return out;
}

Ciphertext sum_slots(const ckks::CkksContext& ctx, const ckks::PublicKeys& keys,
                     const Ciphertext& a) {
  Ciphertext acc = a;
  for (std::size_t step = 1; step < ctx.slot_count(); step <<= 1) {
    ckks::he_add_inplace(ctx, acc, ckks::rotate(ctx, acc, static_cast<std::int64_t>(step), keys.galois));
  }
  return acc;
}

}  // namespace hefl::tensor
