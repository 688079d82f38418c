// Copyright 2026 The hefl Authors
// SPDX-License-Identifier: Apache-2.0

#include "hefl/nn/encrypted.hpp"

#include <string>

#include "hefl/ckks/evaluator.hpp"
#include "hefl/error.hpp"
#include "hefl/tensor/chebyshev.hpp"
#include "hefl/tensor/kernels.hpp"

namespace hefl::nn {

namespace {

using ckks::Ciphertext;
using tensor::Orientation;
using tensor::PackedMatrix;
using tensor::PackedVector;
using tensor::Replication;
using tensor::SlotGrid;

std::size_t threshold_of(const ckks::CkksContext& ctx) {
  return static_cast<std::size_t>(ctx.params().refresh_threshold);
}

/// Levels a forward matvec consumes for `layer`.
std::size_t matvec_cost(std::size_t layer) { return layer % 2 == 0 ? 2 : 1; }
/// matvec_transposed with W_layer: d arrives in output_replication(layer).
std::size_t matvec_t_cost(std::size_t layer) {
  return output_replication(layer) == Replication::kRowReplicated ? 2 : 1;
}

std::size_t threshold(const EncEnv& env) { return static_cast<std::size_t>(env.ctx.params().refresh_threshold); }

/// Brings `ct` to exactly the level that leaves `need` multiplications before the refresh
/// threshold: higher ciphertexts are dropped (cheaper key switching downstream), lower ones
/// are refreshed straight to that level. Without a provider a low ciphertext is passed
/// through and the next operation reports the exhaustion.
Ciphertext fit(const EncEnv& env, const Ciphertext& ct, std::size_t need) {
  const std::size_t target = need + threshold(env);
  if (ct.level() == target) return ct;
  if (ct.level() > target) return ckks::drop_to_level(env.ctx, ct, target);
  if (env.refresh == nullptr) return ct;
  if (env.ctx.max_level() < target) {
    throw LevelError("operation needs " + std::to_string(target) + " levels but the chain has only " +
                     std::to_string(env.ctx.max_level()));
  }
  return env.refresh->refresh_to(ct, target);
}

template <class Packed>
Packed fit(const EncEnv& env, const Packed& v, std::size_t need) {
  Packed out = v;
  out.cipher = fit(env, *v.cipher, need);
  return out;
}

/// Layer parameters pre-positioned at the levels the kernels consume them at.
struct Staged {
  std::vector<PackedMatrix> w_fwd;
  std::vector<PackedMatrix> w_bwd;
  std::vector<PackedVector> b;
};

Staged stage(const EncEnv& env, const EncModel& m, bool backward) {
  Staged s;
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    s.w_fwd.push_back(fit(env, m.layers[i].w, matvec_cost(i)));
    if (backward && i > 0) s.w_bwd.push_back(fit(env, m.layers[i].w, matvec_t_cost(i)));
    if (backward && i == 0) s.w_bwd.push_back(m.layers[i].w);
    s.b.push_back(fit(env, m.layers[i].b, 0));
  }
  return s;
}

std::size_t act_depth() { return tensor::cheb_depth(tensor::silu_approx()); }

struct Activated {
  PackedVector value;
  std::optional<PackedVector> derivative;
};

Activated activate(const EncEnv& env, const LayerSpec& spec, const PackedVector& z, bool want_derivative) {
  if (spec.activation == Activation::kNone) return {z, std::nullopt};
  const std::size_t depth = std::max(act_depth(), tensor::cheb_depth(tensor::silu_derivative_approx()));
  const Ciphertext zr = fit(env, *z.cipher, depth);
  Activated out{z, std::nullopt};
  if (want_derivative) {
    const tensor::ChebApprox* both[] = {&tensor::silu_approx(), &tensor::silu_derivative_approx()};
    auto r = tensor::cheb_eval_encrypted(env.ctx, both, zr, env.keys.relin);
    out.value.cipher = std::move(r[0]);
    out.derivative = z;
    out.derivative->cipher = std::move(r[1]);
  } else {
    out.value.cipher = tensor::cheb_eval_encrypted(env.ctx, tensor::silu_approx(), zr, env.keys.relin);
  }
  return out;
}

/// z = a W + b. Returns the staged input alongside, since backpropagation reuses it.
PackedVector affine(const EncEnv& env, const Staged& st, std::size_t i, const PackedVector& a,
                    PackedVector* staged_input = nullptr) {
  PackedVector ar = fit(env, a, matvec_cost(i));
  PackedVector z = tensor::add(env.ctx, tensor::matvec(env.ctx, env.keys, st.w_fwd[i], ar), st.b[i]);
  if (staged_input != nullptr) *staged_input = std::move(ar);
  return z;
}

void check_model(const EncModel& m) {
  if (m.layers.empty() || m.layers.size() != m.specs.size()) throw ShapeError("encrypted model is malformed");
  for (const auto& l : m.layers) {
    if (!l.w.encrypted() || !l.b.encrypted()) throw DomainError("encrypted model holds plaintext parameters");
  }
}

void check_sample(const EncModel& m, const PackedVector& x, const PackedVector& y) {
  if (!x.encrypted() || x.length != m.specs.front().in_dim || x.replication != input_replication(0)) {
    throw ShapeError("encrypted input does not match the model's input layout");
  }
  if (!y.encrypted() || y.length != m.specs.back().out_dim || y.replication != label_replication(m.specs)) {
    throw ShapeError("encrypted label does not match the model's output layout");
  }
}

Ciphertext scaled_masked(const EncEnv& env, const Ciphertext& ct, std::vector<double> mask, double factor) {
  for (auto& v : mask) v *= factor;
  return ckks::mul_plain(env.ctx, fit(env, ct, 1), mask);
}

}  // namespace

Orientation weight_orientation(std::size_t layer) {
  return layer % 2 == 0 ? Orientation::kTransposed : Orientation::kRowMajor;
}
Replication input_replication(std::size_t layer) {
  return layer % 2 == 0 ? Replication::kRowReplicated : Replication::kColumnReplicated;
}
Replication output_replication(std::size_t layer) {
  return layer % 2 == 0 ? Replication::kColumnReplicated : Replication::kRowReplicated;
}
Replication label_replication(const std::vector<LayerSpec>& specs) {
  if (specs.empty()) throw ShapeError("architecture has no layers");
  return output_replication(specs.size() - 1);
}

void check_fits(const std::vector<LayerSpec>& specs, const SlotGrid& grid) {
  validate_specs(specs);
  for (std::size_t i = 0; i < specs.size(); ++i) {
    if (specs[i].in_dim > grid.mu || specs[i].out_dim > grid.mu) {
      throw CapacityError("layer " + std::to_string(i) + " (" + std::to_string(specs[i].in_dim) + "x" +
                          std::to_string(specs[i].out_dim) + ") does not fit the slot grid mu=" +
                          std::to_string(grid.mu));
    }
  }
}

EncModel encrypt_model(const ckks::CkksContext& ctx, const PlainModel& m, const ckks::PublicKey& pk,
                       ckks::Rng& rng) {
  const SlotGrid grid = SlotGrid::of(ctx);
  check_fits(m.specs, grid);
  EncModel out;
  out.specs = m.specs;
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    EncLayer l;
    l.w = tensor::encrypt_packed(ctx, tensor::encode_matrix(m.layers[i].w, grid, weight_orientation(i)), pk, rng);
    l.b = tensor::encrypt_packed(ctx, tensor::encode_vector(m.layers[i].b, grid, output_replication(i)), pk, rng);
    out.layers.push_back(std::move(l));
  }
  return out;
}

PlainModel decrypt_model(const ckks::CkksContext& ctx, const EncModel& m, const ckks::SecretKey& sk) {
  check_model(m);
  PlainModel out;
  out.specs = m.specs;
  for (const auto& l : m.layers) {
    out.layers.push_back({tensor::unpack_matrix(tensor::decrypt_packed(ctx, l.w, sk)),
                          tensor::unpack_vector(tensor::decrypt_packed(ctx, l.b, sk))});
  }
  return out;
}

PackedVector encrypt_input(const ckks::CkksContext& ctx, const std::vector<double>& x,
                           const ckks::PublicKey& pk, ckks::Rng& rng, std::size_t level) {
  if (level == kInputLevel) level = std::min(ctx.max_level(), matvec_cost(0) + threshold_of(ctx));
  return tensor::encrypt_packed(ctx, tensor::encode_vector(x, SlotGrid::of(ctx), input_replication(0)), pk, rng, level);
}

PackedVector encrypt_label(const ckks::CkksContext& ctx, const std::vector<LayerSpec>& specs,
                           const std::vector<double>& y, const ckks::PublicKey& pk, ckks::Rng& rng,
                           std::size_t level) {
  if (y.size() != specs.back().out_dim) throw ShapeError("label width does not match output layer");
  if (level == kInputLevel) level = std::min(ctx.max_level(), threshold_of(ctx));
  return tensor::encrypt_packed(ctx, tensor::encode_vector(y, SlotGrid::of(ctx), label_replication(specs)), pk, rng,
                                level);
}

PackedVector forward_enc(const EncEnv& env, const EncModel& m, const PackedVector& x) {
  check_model(m);
  if (!x.encrypted() || x.length != m.specs.front().in_dim || x.replication != input_replication(0)) {
    throw ShapeError("encrypted input does not match the model's input layout");
  }
  const Staged st = stage(env, m, false);
  PackedVector a = x;
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    a = activate(env, m.specs[i], affine(env, st, i, a), false).value;
  }
  return a;
}

EncLossAndGrads loss_and_grads_enc(const EncEnv& env, const EncModel& m, const std::vector<PackedVector>& x,
                                   const std::vector<PackedVector>& y, bool with_loss) {
  check_model(m);
  if (x.empty()) throw ShapeError("loss_and_grads_enc: empty batch");
  if (x.size() != y.size()) throw ShapeError("loss_and_grads_enc: batch and label counts differ");
  const std::size_t depth = m.layers.size();
  EncLossAndGrads out;
  out.batch = x.size();
  std::vector<std::optional<PackedMatrix>> dw(depth);
  std::vector<std::optional<PackedVector>> db(depth);

  const Staged st = stage(env, m, true);
  for (std::size_t s = 0; s < x.size(); ++s) {
    check_sample(m, x[s], y[s]);
    std::vector<PackedVector> inputs(depth);  // a_i as staged for layer i
    std::vector<std::optional<PackedVector>> derivs;
    PackedVector a = x[s];
    for (std::size_t i = 0; i < depth; ++i) {
      Activated act = activate(env, m.specs[i], affine(env, st, i, a, &inputs[i]), true);
      a = std::move(act.value);
      derivs.push_back(std::move(act.derivative));
    }

    PackedVector delta = tensor::sub(env.ctx, a, y[s]);
    if (with_loss) {
      const PackedVector r = fit(env, delta, 1);
      Ciphertext sq = ckks::he_mul(env.ctx, *r.cipher, *r.cipher, env.keys.relin);
      if (out.squared_residual) {
        ckks::he_add_inplace(env.ctx, *out.squared_residual, sq);
      } else {
        out.squared_residual = std::move(sq);
      }
    }
    for (std::size_t i = depth; i-- > 0;) {
      if (derivs[i]) delta = tensor::hadamard(env.ctx, env.keys, fit(env, delta, 1), fit(env, *derivs[i], 1));
      // delta feeds the outer product and, below the first layer, the transposed product.
      delta = fit(env, delta, i > 0 ? matvec_t_cost(i) : 1);
      PackedMatrix g = tensor::outer(env.ctx, env.keys, fit(env, inputs[i], delta.cipher->level() - threshold(env)), delta);
      if (dw[i]) {
        ckks::he_add_inplace(env.ctx, *dw[i]->cipher, *g.cipher);
        ckks::he_add_inplace(env.ctx, *db[i]->cipher, *delta.cipher);
      } else {
        dw[i] = std::move(g);
        db[i] = delta;
      }
      if (i > 0) delta = tensor::matvec_transposed(env.ctx, env.keys, st.w_bwd[i], delta);
    }
  }

  // Average and pin the padding slots to zero.
  const SlotGrid grid = SlotGrid::of(env.ctx);
  const double inv = 1.0 / static_cast<double>(x.size());
  for (std::size_t i = 0; i < depth; ++i) {
    const auto& s = m.specs[i];
    dw[i]->cipher = scaled_masked(env, *dw[i]->cipher,
                                  tensor::matrix_mask(s.in_dim, s.out_dim, grid, dw[i]->orientation), inv);
    db[i]->cipher = scaled_masked(env, *db[i]->cipher, tensor::vector_mask(s.out_dim, grid, db[i]->replication), inv);
    out.grads.dw.push_back(std::move(*dw[i]));
    out.grads.db.push_back(std::move(*db[i]));
  }
  return out;
}

EncModel sgd_update_enc(const EncEnv& env, const EncModel& m, const EncGradients& g, double learning_rate) {
  check_model(m);
  if (g.dw.size() != m.layers.size() || g.db.size() != m.layers.size()) {
    throw ShapeError("sgd_update_enc: gradient layer count differs from model");
  }
  const SlotGrid grid = SlotGrid::of(env.ctx);
  EncModel out = m;
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    const auto& s = m.specs[i];
    auto& l = out.layers[i];
    if (g.dw[i].orientation != l.w.orientation || g.dw[i].rows != l.w.rows || g.dw[i].cols != l.w.cols ||
        g.db[i].replication != l.b.replication || g.db[i].length != l.b.length) {
      throw ShapeError("sgd_update_enc: gradient layout differs in layer " + std::to_string(i));
    }
    const Ciphertext step_w =
        scaled_masked(env, *g.dw[i].cipher, tensor::matrix_mask(s.in_dim, s.out_dim, grid, l.w.orientation), learning_rate);
    const Ciphertext step_b =
        scaled_masked(env, *g.db[i].cipher, tensor::vector_mask(s.out_dim, grid, l.b.replication), learning_rate);
    l.w.cipher = ckks::he_sub(env.ctx, *l.w.cipher, step_w);
    l.b.cipher = ckks::he_sub(env.ctx, *l.b.cipher, step_b);
    if (env.refresh != nullptr) {
      l.w.cipher = env.refresh->refresh(*l.w.cipher);
      l.b.cipher = env.refresh->refresh(*l.b.cipher);
    }
  }
  return out;
}

double decrypt_loss(const ckks::CkksContext& ctx, const ckks::SecretKey& sk, const std::vector<LayerSpec>& specs,
                    const EncLossAndGrads& lg) {
  if (!lg.squared_residual || lg.batch == 0) throw DomainError("decrypt_loss: no encrypted residual");
  PackedVector v;
  v.length = specs.back().out_dim;
  v.mu = SlotGrid::of(ctx).mu;
  v.replication = label_replication(specs);
  v.cipher = *lg.squared_residual;
  double total = 0.0;
  for (double r2 : tensor::unpack_vector(tensor::decrypt_packed(ctx, v, sk))) total += r2;
  return 0.5 * total / static_cast<double>(lg.batch);
}

std::vector<EncBatchLoss> train_enc(const EncEnv& env, EncModel& m, const std::vector<PackedVector>& x,
                                    const std::vector<PackedVector>& y, const TrainConfig& cfg,
                                    std::uint64_t epoch_seed, bool with_loss) {
  if (x.size() != y.size()) throw ShapeError("train_enc: sample and label counts differ");
  std::vector<EncBatchLoss> losses;
  for (std::size_t e = 0; e < cfg.epochs_per_round; ++e) {
    losses.clear();
    const bool track = with_loss && e + 1 == cfg.epochs_per_round;
    for (const auto& batch : make_batches(x.size(), cfg.batch_size, epoch_seed + e)) {
      std::vector<PackedVector> bx, by;
      for (std::size_t i : batch) {
        bx.push_back(x[i]);
        by.push_back(y[i]);
      }
      auto lg = loss_and_grads_enc(env, m, bx, by, track);
      m = sgd_update_enc(env, m, lg.grads, cfg.learning_rate);
      if (track) losses.push_back({std::move(*lg.squared_residual), lg.batch});
    }
  }
  return losses;
}

double decrypt_epoch_loss(const ckks::CkksContext& ctx, const ckks::SecretKey& sk, const std::vector<LayerSpec>& specs,
                          const std::vector<EncBatchLoss>& losses) {
  if (losses.empty()) return 0.0;
  double total = 0.0;
  for (const auto& l : losses) {
    EncLossAndGrads lg;
    lg.squared_residual = l.squared_residual;
    lg.batch = l.batch;
    total += decrypt_loss(ctx, sk, specs, lg);
  }
  return total / static_cast<double>(losses.size());
}

}  // namespace hefl::nn
