// Copyright 2026 The hefl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "hefl/ckks/context.hpp"
#include "hefl/ckks/types.hpp"
#include "hefl/tensor/packing.hpp"

namespace hefl::tensor {

// Encrypted linear algebra over the mu x mu grid. Two kernels cover every product the MLP
// needs, without ever transposing a ciphertext:
//
//   within-block: multiply, sum each block with rotations 1, 2, ..., mu/2, mask the block
//                 heads, then spread each head across its block with right rotations.
//                 Output is column-replicated. Costs two levels.
//   across-block: multiply, sum matching cells of all blocks with rotations mu, 2mu, ...
//                 Output is row-replicated. Costs one level.
//
// Which kernel runs is decided by the vector's replication; the matrix orientation must
// agree with it (checked).

/// y = x W. x row-replicated needs W transposed; x column-replicated needs W row-major.
PackedVector matvec(const ckks::CkksContext& ctx, const ckks::PublicKeys& keys,
                    const PackedMatrix& w, const PackedVector& x);

/// g = W d. d row-replicated needs W row-major; d column-replicated needs W transposed.
PackedVector matvec_transposed(const ckks::CkksContext& ctx, const ckks::PublicKeys& keys,
                               const PackedMatrix& w, const PackedVector& d);

/// G = a^T d as a (a.length x d.length) matrix. a row-replicated with d column-replicated
/// gives a transposed matrix; a column-replicated with d row-replicated gives row-major.
PackedMatrix outer(const ckks::CkksContext& ctx, const ckks::PublicKeys& keys,
                   const PackedVector& a, const PackedVector& d);

/// Slot-wise lifts; both operands must share length and replication.
PackedVector add(const ckks::CkksContext& ctx, const PackedVector& a, const PackedVector& b);
PackedVector sub(const ckks::CkksContext& ctx, const PackedVector& a, const PackedVector& b);
PackedVector hadamard(const ckks::CkksContext& ctx, const ckks::PublicKeys& keys,
                      const PackedVector& a, const PackedVector& b);

/// Sum of every slot, left in slot 0 (and, by symmetry, in every slot).
ckks::Ciphertext sum_slots(const ckks::CkksContext& ctx, const ckks::PublicKeys& keys,
                           const ckks::Ciphertext& a);

}  // namespace hefl::tensor
