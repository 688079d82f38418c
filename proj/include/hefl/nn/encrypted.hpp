// Copyright 2026 The hefl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "hefl/ckks/context.hpp"
#include "hefl/ckks/refresh.hpp"
#include "hefl/ckks/types.hpp"
#include "hefl/nn/model.hpp"
#include "hefl/tensor/packing.hpp"

namespace hefl::nn {

// Encrypted MLP. Layers alternate between two layouts so no ciphertext is ever transposed:
//
//   even layer  W transposed, b column-replicated; takes a row-replicated activation and
//               returns a column-replicated one (within-block kernel, two levels)
//   odd layer   W row-major, b row-replicated; takes a column-replicated activation and
//               returns a row-replicated one (across-block kernel, one level)
//
// Backpropagation reuses the same orientation: matvec_transposed flips the replication back,
// and outer(a_i, delta_i) comes out in exactly the orientation W_i is stored in.

struct EncLayer {
  tensor::PackedMatrix w;
  tensor::PackedVector b;
};

struct EncModel {
  std::vector<LayerSpec> specs;
  std::vector<EncLayer> layers;
};

/// Evaluation context for encrypted training and inference. `refresh` may be null, in
/// which case any operation that runs out of levels throws LevelError.
struct EncEnv {
  const ckks::CkksContext& ctx;
  const ckks::PublicKeys& keys;
  ckks::RefreshProvider* refresh = nullptr;
};

tensor::Orientation weight_orientation(std::size_t layer);
tensor::Replication input_replication(std::size_t layer);
tensor::Replication output_replication(std::size_t layer);
/// Replication of the final output (and so of encrypted labels).
tensor::Replication label_replication(const std::vector<LayerSpec>& specs);

/// Throws CapacityError when some layer does not fit the mu x mu grid.
void check_fits(const std::vector<LayerSpec>& specs, const tensor::SlotGrid& grid);

EncModel encrypt_model(const ckks::CkksContext& ctx, const PlainModel& m,
                       const ckks::PublicKey& pk, ckks::Rng& rng);
PlainModel decrypt_model(const ckks::CkksContext& ctx, const EncModel& m, const ckks::SecretKey& sk);

/// Level at which samples are encrypted by default: inputs at the level the first layer
/// consumes them at, labels at the level the output activation leaves the logits at. Pass
/// ckks::kTopLevel (or any level) to override.
inline constexpr std::size_t kInputLevel = static_cast<std::size_t>(-2);

tensor::PackedVector encrypt_input(const ckks::CkksContext& ctx, const std::vector<double>& x,
                                   const ckks::PublicKey& pk, ckks::Rng& rng,
                                   std::size_t level = kInputLevel);
tensor::PackedVector encrypt_label(const ckks::CkksContext& ctx, const std::vector<LayerSpec>& specs,
                                   const std::vector<double>& y, const ckks::PublicKey& pk,
                                   ckks::Rng& rng, std::size_t level = kInputLevel);

/// Encrypted forward pass with the Chebyshev SiLU; output in label_replication(specs).
tensor::PackedVector forward_enc(const EncEnv& env, const EncModel& m, const tensor::PackedVector& x);

struct EncGradients {
  std::vector<tensor::PackedMatrix> dw;
  std::vector<tensor::PackedVector> db;
};

struct EncLossAndGrads {
  EncGradients grads;  // averaged over the batch
  /// Sum over the batch of r (.) r with r = logits - y, in the output layout. Only the
  /// logical slots are meaningful; see decrypt_loss.
  std::optional<ckks::Ciphertext> squared_residual;
  std::size_t batch = 0;
};

/// Gradients of the mean squared loss over an encrypted batch, computed entirely under
/// encryption with the Chebyshev SiLU and the fitted Chebyshev SiLU'.
EncLossAndGrads loss_and_grads_enc(const EncEnv& env, const EncModel& m,
                                   const std::vector<tensor::PackedVector>& x,
                                   const std::vector<tensor::PackedVector>& y, bool with_loss = false);

/// W <- W - lr * dW, b <- b - lr * db, with padding slots masked to zero. Updated parameters
/// are refreshed to the top level when a refresh provider is available.
EncModel sgd_update_enc(const EncEnv& env, const EncModel& m, const EncGradients& g,
                        double learning_rate);

/// Loss value (mean of 0.5 ||r||^2) from an encrypted squared residual.
double decrypt_loss(const ckks::CkksContext& ctx, const ckks::SecretKey& sk,
                    const std::vector<LayerSpec>& specs, const EncLossAndGrads& lg);

struct EncBatchLoss {
  ckks::Ciphertext squared_residual;
  std::size_t batch = 0;
};

/// Mini-batch SGD over encrypted samples; batch order from make_batches(n, batch, seed),
/// identical to train_plain so both paths see the same sequence. With `with_loss`, returns
/// the encrypted squared residuals of every batch of the last epoch.
std::vector<EncBatchLoss> train_enc(const EncEnv& env, EncModel& m, const std::vector<tensor::PackedVector>& x,
                                    const std::vector<tensor::PackedVector>& y, const TrainConfig& cfg,
                                    std::uint64_t epoch_seed, bool with_loss = false);

/// Mean batch loss of an epoch, matching the value train_plain reports.
double decrypt_epoch_loss(const ckks::CkksContext& ctx, const ckks::SecretKey& sk,
                          const std::vector<LayerSpec>& specs, const std::vector<EncBatchLoss>& losses);

}  // namespace hefl::nn
