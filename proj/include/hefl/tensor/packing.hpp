// Copyright 2026 The hefl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "hefl/bytes.hpp"
#include "hefl/ckks/context.hpp"
#include "hefl/ckks/evaluator.hpp"
#include "hefl/ckks/types.hpp"
#include "hefl/tensor/matrix.hpp"

namespace hefl::tensor {

/// The mu x mu slot grid: slot r*mu + c is cell (r, c); "block" r is slots [r*mu, (r+1)*mu).
struct SlotGrid {
  std::size_t slots = 0;
  std::size_t mu = 0;

  static SlotGrid of(const ckks::CkksContext& ctx);
  static SlotGrid of_slots(std::size_t slots);

  /// The rotate-and-sum kernels need mu to be a power of two and mu^2 == slots.
  bool kernels_supported() const;
};

enum class Orientation : std::uint8_t {
  kRowMajor = 0,    // cell (r, c) holds W[r][c]
  kTransposed = 1,  // cell (r, c) holds W[c][r]
};

enum class Replication : std::uint8_t {
  kSingle = 0,             // slot i holds x[i]
  kRowReplicated = 1,      // cell (r, c) holds x[c] for every block r
  kColumnReplicated = 2,   // cell (r, c) holds x[r]
  kStrided = 3,            // cell (r, 0) holds x[r], every other slot zero
};

struct PackedMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t mu = 0;
  Orientation orientation = Orientation::kRowMajor;
  std::vector<double> slots;               // plaintext payload
  std::optional<ckks::Ciphertext> cipher;  // encrypted payload

  bool encrypted() const { return cipher.has_value(); }
};

struct PackedVector {
  std::size_t length = 0;
  std::size_t mu = 0;
  Replication replication = Replication::kSingle;
  std::vector<double> slots;
  std::optional<ckks::Ciphertext> cipher;

  bool encrypted() const { return cipher.has_value(); }
};

/// Zero-pads W to mu x mu and flattens it row by row (or transposed) into the slot vector.
PackedMatrix encode_matrix(const Matrix& w, const SlotGrid& grid,
                           Orientation orientation = Orientation::kRowMajor);
Matrix unpack_matrix(const PackedMatrix& p);

PackedVector encode_vector(std::span<const double> x, const SlotGrid& grid,
                           Replication replication);
std::vector<double> unpack_vector(const PackedVector& p);

/// Slot pattern that keeps exactly the logical cells of a (rows x cols) matrix packed with
/// `orientation`; used to pin padding to zero after noisy updates.
std::vector<double> matrix_mask(std::size_t rows, std::size_t cols, const SlotGrid& grid,
                                Orientation orientation);
std::vector<double> vector_mask(std::size_t length, const SlotGrid& grid, Replication replication);

/// Encrypts at `level` (the top by default) with that level's ladder scale.
PackedMatrix encrypt_packed(const ckks::CkksContext& ctx, const PackedMatrix& p,
                            const ckks::PublicKey& pk, ckks::Rng& rng,
                            std::size_t level = ckks::kTopLevel);
PackedVector encrypt_packed(const ckks::CkksContext& ctx, const PackedVector& p,
                            const ckks::PublicKey& pk, ckks::Rng& rng,
                            std::size_t level = ckks::kTopLevel);
PackedMatrix decrypt_packed(const ckks::CkksContext& ctx, const PackedMatrix& p,
                            const ckks::SecretKey& sk);
PackedVector decrypt_packed(const ckks::CkksContext& ctx, const PackedVector& p,
                            const ckks::SecretKey& sk);

// Wire form: 16-byte shape header (u32 rows, u32 cols, u32 mu, u32 flag) then the
// ciphertext blob. Flag bit 8 marks a matrix; the low byte is the orientation or replication.
void write_packed(ByteWriter& w, const PackedMatrix& p);
void write_packed(ByteWriter& w, const PackedVector& p);
PackedMatrix read_packed_matrix(ByteReader& r, const ckks::CkksContext& ctx);
PackedVector read_packed_vector(ByteReader& r, const ckks::CkksContext& ctx);

}  // namespace hefl::tensor
