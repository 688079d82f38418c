// Copyright 2026 The hefl Authors
// SPDX-License-Identifier: Apache-2.0

#include "hefl/tensor/packing.hpp"

#include <bit>
#include <cmath>
#include <string>

#include "hefl/ckks/serialize.hpp"
#include "hefl/error.hpp"

namespace hefl::tensor {

namespace {

constexpr std::uint32_t kMatrixFlag = 0x100;

void check_finite(std::span<const double> v, const char* what) {
  for (double x : v) {
    if (!std::isfinite(x)) throw DomainError(std::string(what) + ": non-finite entry");
  }
}

std::size_t cell(const SlotGrid& g, std::size_t r, std::size_t c) { return r * g.mu + c; }

}  // namespace

// ---- dense helpers ----------------------------------------------------------

std::vector<double> vec_mat(const std::vector<double>& x, const Matrix& w) {
  if (x.size() != w.rows) throw ShapeError("vec_mat: length " + std::to_string(x.size()) +
                                           " does not match " + std::to_string(w.rows) + " rows");
  std::vector<double> y(w.cols, 0.0);
  for (std::size_t i = 0; i < w.rows; ++i) {
    for (std::size_t j = 0; j < w.cols; ++j) y[j] += x[i] * w(i, j);
  }
  return y;
}

std::vector<double> mat_vec(const Matrix& w, const std::vector<double>& d) {
  if (d.size() != w.cols) throw ShapeError("mat_vec: length " + std::to_string(d.size()) +
                                           " does not match " + std::to_string(w.cols) + " cols");
  std::vector<double> g(w.rows, 0.0);
  for (std::size_t i = 0; i < w.rows; ++i) {
    for (std::size_t j = 0; j < w.cols; ++j) g[i] += w(i, j) * d[j];
  }
  return g;
}

// ---- grid -------------------------------------------------------------------

SlotGrid SlotGrid::of_slots(std::size_t slots) {
  SlotGrid g;
  g.slots = slots;
  g.mu = static_cast<std::size_t>(std::sqrt(static_cast<double>(slots)));
  while (g.mu * g.mu > slots) --g.mu;
  while ((g.mu + 1) * (g.mu + 1) <= slots) ++g.mu;
  return g;
}

SlotGrid SlotGrid::of(const ckks::CkksContext& ctx) { return of_slots(ctx.slot_count()); }

bool SlotGrid::kernels_supported() const { return std::has_single_bit(mu) && mu * mu == slots; }

// ---- packing ----------------------------------------------------------------

PackedMatrix encode_matrix(const Matrix& w, const SlotGrid& grid, Orientation orientation) {
  if (w.rows == 0 || w.cols == 0) throw ShapeError("encode_matrix: empty matrix");
  if (w.rows > grid.mu || w.cols > grid.mu) {
    throw CapacityError("encode_matrix: " + std::to_string(w.rows) + "x" +
                        std::to_string(w.cols) + " matrix exceeds the pad dimension mu=" +
                        std::to_string(grid.mu));
  }
  check_finite(w.data, "encode_matrix");
  PackedMatrix p;
  p.rows = w.rows;
  p.cols = w.cols;
  p.mu = grid.mu;
  p.orientation = orientation;
  p.slots.assign(grid.slots, 0.0);
  for (std::size_t r = 0; r < w.rows; ++r) {
    for (std::size_t c = 0; c < w.cols; ++c) {
      const std::size_t s = orientation == Orientation::kRowMajor ? cell(grid, r, c) : cell(grid, c, r);
      p.slots[s] = w(r, c);
    }
  }
  return p;
}

Matrix unpack_matrix(const PackedMatrix& p) {
  if (p.encrypted()) throw DomainError("unpack_matrix: payload is encrypted");
  Matrix w(p.rows, p.cols);
  for (std::size_t r = 0; r < p.rows; ++r) {
    for (std::size_t c = 0; c < p.cols; ++c) {
      w(r, c) = p.orientation == Orientation::kRowMajor ? p.slots[r * p.mu + c] : p.slots[c * p.mu + r];
    }
  }
  return w;
}

PackedVector encode_vector(std::span<const double> x, const SlotGrid& grid,
                           Replication replication) {
  const std::size_t limit = replication == Replication::kSingle ? grid.slots : grid.mu;
  if (x.size() > limit) {
    throw CapacityError("encode_vector: length " + std::to_string(x.size()) +
                        " exceeds the pad dimension mu=" + std::to_string(grid.mu));
  }
  check_finite(x, "encode_vector");
  PackedVector p;
  p.length = x.size();
  p.mu = grid.mu;
  p.replication = replication;
  p.slots.assign(grid.slots, 0.0);
  switch (replication) {
    case Replication::kSingle:
      for (std::size_t i = 0; i < x.size(); ++i) p.slots[i] = x[i];
      break;
    case Replication::kRowReplicated:
      for (std::size_t r = 0; r < grid.mu; ++r) {
        for (std::size_t c = 0; c < x.size(); ++c) p.slots[cell(grid, r, c)] = x[c];
      }
      break;
    case Replication::kColumnReplicated:
      for (std::size_t r = 0; r < x.size(); ++r) {
        for (std::size_t c = 0; c < grid.mu; ++c) p.slots[cell(grid, r, c)] = x[r];
      }
      break;
    case Replication::kStrided:
      for (std::size_t r = 0; r < x.size(); ++r) p.slots[cell(grid, r, 0)] = x[r];
      break;
  }
  return p;
}

std::vector<double> unpack_vector(const PackedVector& p) {
  if (p.encrypted()) throw DomainError("unpack_vector: payload is encrypted");
  std::vector<double> x(p.length);
  for (std::size_t i = 0; i < p.length; ++i) {
    switch (p.replication) {
      case Replication::kSingle:
      case Replication::kRowReplicated:
        x[i] = p.slots[i];
        break;
      case Replication::kColumnReplicated:
      case Replication::kStrided:
        x[i] = p.slots[i * p.mu];
        break;
    }
  }
  return x;
}

std::vector<double> matrix_mask(std::size_t rows, std::size_t cols, const SlotGrid& grid,
                                Orientation orientation) {
  return encode_matrix(Matrix(rows, cols, 1.0), grid, orientation).slots;
}

std::vector<double> vector_mask(std::size_t length, const SlotGrid& grid, Replication replication) {
  return encode_vector(std::vector<double>(length, 1.0), grid, replication).slots;
}

// ---- encryption -------------------------------------------------------------

namespace {

ckks::Ciphertext encrypt_slots(const ckks::CkksContext& ctx, const std::vector<double>& slots,
                               const ckks::PublicKey& pk, ckks::Rng& rng, std::size_t level) {
  if (level == ckks::kTopLevel) return ckks::encrypt(ctx, ckks::encode(ctx, slots), pk, rng);
  if (level > ctx.max_level()) throw LevelError("encrypt_packed: level above the chain");
  return ckks::encrypt(ctx, ckks::encode(ctx, slots, level, ctx.ladder_scale(level)), pk, rng);
}

}  // namespace

PackedMatrix encrypt_packed(const ckks::CkksContext& ctx, const PackedMatrix& p,
                            const ckks::PublicKey& pk, ckks::Rng& rng, std::size_t level) {
  if (p.encrypted()) throw DomainError("encrypt_packed: payload is already encrypted");
  PackedMatrix out = p;
  out.cipher = encrypt_slots(ctx, p.slots, pk, rng, level);
  out.slots.clear();
  return out;
}

PackedVector encrypt_packed(const ckks::CkksContext& ctx, const PackedVector& p,
                            const ckks::PublicKey& pk, ckks::Rng& rng, std::size_t level) {
  if (p.encrypted()) throw DomainError("encrypt_packed: payload is already encrypted");
  PackedVector out = p;
  out.cipher = encrypt_slots(ctx, p.slots, pk, rng, level);
  out.slots.clear();
  return out;
}

PackedMatrix decrypt_packed(const ckks::CkksContext& ctx, const PackedMatrix& p,
                            const ckks::SecretKey& sk) {
  if (!p.encrypted()) throw DomainError("decrypt_packed: payload is not encrypted");
  PackedMatrix out = p;
  out.slots = ckks::decrypt(ctx, *p.cipher, sk);
  out.cipher.reset();
  return out;
}

PackedVector decrypt_packed(const ckks::CkksContext& ctx, const PackedVector& p,
                            const ckks::SecretKey& sk) {
  if (!p.encrypted()) throw DomainError("decrypt_packed: payload is not encrypted");
  PackedVector out = p;
  out.slots = ckks::decrypt(ctx, *p.cipher, sk);
  out.cipher.reset();
  return out;
}

// ---- wire form --------------------------------------------------------------

void write_packed(ByteWriter& w, const PackedMatrix& p) {
  if (!p.encrypted()) throw DomainError("write_packed: only encrypted payloads travel");
  w.u32(static_cast<std::uint32_t>(p.rows));
  w.u32(static_cast<std::uint32_t>(p.cols));
  w.u32(static_cast<std::uint32_t>(p.mu));
  w.u32(kMatrixFlag | static_cast<std::uint32_t>(p.orientation));
  ckks::write(w, *p.cipher);
}

void write_packed(ByteWriter& w, const PackedVector& p) {
  if (!p.encrypted()) throw DomainError("write_packed: only encrypted payloads travel");
  w.u32(static_cast<std::uint32_t>(p.length));
  w.u32(1);
  w.u32(static_cast<std::uint32_t>(p.mu));
  w.u32(static_cast<std::uint32_t>(p.replication));
  ckks::write(w, *p.cipher);
}

PackedMatrix read_packed_matrix(ByteReader& r, const ckks::CkksContext& ctx) {
  PackedMatrix p;
  p.rows = r.u32();
  p.cols = r.u32();
  p.mu = r.u32();
  const std::uint32_t flag = r.u32();
  if ((flag & kMatrixFlag) == 0 || (flag & 0xff) > 1) throw FormatError("not a packed matrix header");
  if (p.mu != SlotGrid::of(ctx).mu || p.rows > p.mu || p.cols > p.mu || p.rows == 0 || p.cols == 0) {
    throw FormatError("packed matrix shape does not fit the slot grid");
  }
  p.orientation = static_cast<Orientation>(flag & 0xff);
  p.cipher = ckks::read_ciphertext(r, ctx);
  return p;
}

PackedVector read_packed_vector(ByteReader& r, const ckks::CkksContext& ctx) {
  PackedVector p;
  p.length = r.u32();
  const std::uint32_t cols = r.u32();
  p.mu = r.u32();
  const std::uint32_t flag = r.u32();
  if ((flag & kMatrixFlag) != 0 || flag > 3 || cols != 1) throw FormatError("not a packed vector header");
  if (p.mu != SlotGrid::of(ctx).mu) throw FormatError("packed vector grid mismatch");
  p.replication = static_cast<Replication>(flag);
  p.cipher = ckks::read_ciphertext(r, ctx);
  return p;
}

}  // namespace hefl::tensor
