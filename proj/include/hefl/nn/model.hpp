// Copyright 2026 The hefl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hefl/tensor/matrix.hpp"

namespace hefl::nn {

enum class Activation { kSilu, kNone };

struct LayerSpec {
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
  Activation activation = Activation::kSilu;

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// 32-16-16-6 with SiLU after every layer, the output layer included. No softmax.
std::vector<LayerSpec> default_architecture();
/// Parses "32-16-16-6" into chained SiLU layers.
std::vector<LayerSpec> parse_architecture(const std::string& text);
std::string format_architecture(const std::vector<LayerSpec>& specs);
/// Throws ShapeError when adjacent dimensions do not chain or a dimension is zero.
void validate_specs(const std::vector<LayerSpec>& specs);

struct Layer {
  tensor::Matrix w;  // in_dim x out_dim; z = a W + b
  std::vector<double> b;

  friend bool operator==(const Layer&, const Layer&) = default;
};

struct PlainModel {
  std::vector<LayerSpec> specs;
  std::vector<Layer> layers;

  friend bool operator==(const PlainModel&, const PlainModel&) = default;
};

/// Weights uniform in +-sqrt(6 / (in + out)), biases zero.
PlainModel init_model(const std::vector<LayerSpec>& specs, std::uint64_t seed);

/// Which activation the plaintext path uses.
///   kAnalytic           exact SiLU and SiLU'
///   kPoly               the Chebyshev SiLU and the separately fitted Chebyshev SiLU'
///                       (same functions the encrypted path evaluates)
///   kPolyExactDerivative the Chebyshev SiLU and its exact derivative polynomial
enum class ActivationMode { kAnalytic, kPoly, kPolyExactDerivative };

std::vector<double> forward_plain(const PlainModel& m, const std::vector<double>& x,
                                  ActivationMode mode = ActivationMode::kPoly);

struct Gradients {
  std::vector<tensor::Matrix> dw;
  std::vector<std::vector<double>> db;
};

struct LossAndGrads {
  double loss = 0.0;  // (1 / batch) * sum of 0.5 * ||logits - y||^2
  Gradients grads;    // averaged over the batch
};

LossAndGrads loss_and_grads_plain(const PlainModel& m, const std::vector<std::vector<double>>& x,
                                  const std::vector<std::vector<double>>& y, ActivationMode mode);

PlainModel sgd_update_plain(const PlainModel& m, const Gradients& g, double learning_rate);

struct TrainConfig {
  double learning_rate = 0.05;
  std::size_t batch_size = 16;
  std::size_t epochs_per_round = 1;
  std::uint64_t seed = 1;
  ActivationMode activation = ActivationMode::kPoly;
};

/// Seeded Fisher-Yates permutation of [0, n); identical on every platform.
std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed);

/// Mini-batch order for one epoch: consecutive chunks of the shuffled index list.
std::vector<std::vector<std::size_t>> make_batches(std::size_t n, std::size_t batch_size,
                                                   std::uint64_t seed);

/// Runs cfg.epochs_per_round epochs of mini-batch SGD; returns the mean batch loss of the
/// last epoch (0 when there is no data). `epoch_seed` drives the shuffles.
double train_plain(PlainModel& m, const std::vector<std::vector<double>>& x,
                   const std::vector<std::vector<double>>& y, const TrainConfig& cfg,
                   std::uint64_t epoch_seed);

/// Index of the largest score; ties go to the lowest index.
std::size_t argmax(const std::vector<double>& scores);

std::vector<double> one_hot(std::size_t label, std::size_t classes);

}  // namespace hefl::nn
