// Copyright 2026 The hefl Authors
// SPDX-License-Identifier: Apache-2.0

#include "hefl/nn/model.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include "hefl/error.hpp"
#include "hefl/tensor/chebyshev.hpp"

namespace hefl::nn {

namespace {

struct ActFns {
  double (*fwd)(double);
  double (*deriv)(double);
};

double poly_fwd(double x) { return tensor::silu_approx()(x); }
double poly_fitted_deriv(double x) { return tensor::silu_derivative_approx()(x); }
double poly_exact_deriv(double x) {
  static const tensor::ChebApprox d = tensor::silu_approx().derivative();
  return d(x);
}

ActFns act_fns(ActivationMode mode) {
  switch (mode) {
    case ActivationMode::kAnalytic:
      return {tensor::silu, tensor::silu_derivative};
    case ActivationMode::kPoly:
      return {poly_fwd, poly_fitted_deriv};
    case ActivationMode::kPolyExactDerivative:
      return {poly_fwd, poly_exact_deriv};
  }
  return {tensor::silu, tensor::silu_derivative};
}

void check_input(const PlainModel& m, const std::vector<double>& x) {
  if (m.layers.empty()) throw ShapeError("model has no layers");
  if (x.size() != m.specs.front().in_dim) {
    throw ShapeError("input length " + std::to_string(x.size()) + " does not match input layer " +
                     std::to_string(m.specs.front().in_dim));
  }
}

}  // namespace

std::vector<LayerSpec> default_architecture() { return parse_architecture("32-16-16-6"); }

std::vector<LayerSpec> parse_architecture(const std::string& text) {
  std::vector<std::size_t> dims;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, '-')) {
    try {
      std::size_t pos = 0;
      const long v = std::stol(tok, &pos);
      if (pos != tok.size() || v <= 0) throw std::invalid_argument(tok);
      dims.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      throw ConfigError("architecture '" + text + "': bad layer width '" + tok + "'");
    }
  }
  if (dims.size() < 2) throw ConfigError("architecture '" + text + "' needs at least two widths");
  std::vector<LayerSpec> specs;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) specs.push_back({dims[i], dims[i + 1], Activation::kSilu});
  return specs;
}

std::string format_architecture(const std::vector<LayerSpec>& specs) {
  std::string out;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    if (i == 0) out += std::to_string(specs[i].in_dim);
    out += "-" + std::to_string(specs[i].out_dim);
  }
  return out;
}

void validate_specs(const std::vector<LayerSpec>& specs) {
  if (specs.empty()) throw ShapeError("architecture has no layers");
  for (std::size_t i = 0; i < specs.size(); ++i) {
    if (specs[i].in_dim == 0 || specs[i].out_dim == 0) throw ShapeError("layer " + std::to_string(i) + " has a zero dimension");
    if (i > 0 && specs[i].in_dim != specs[i - 1].out_dim) {
      throw ShapeError("layer " + std::to_string(i) + " input " + std::to_string(specs[i].in_dim) +
                       " does not chain with previous output " + std::to_string(specs[i - 1].out_dim));
    }
  }
}

PlainModel init_model(const std::vector<LayerSpec>& specs, std::uint64_t seed) {
  validate_specs(specs);
  std::mt19937_64 rng(seed);
  PlainModel m;
  m.specs = specs;
  for (const auto& s : specs) {
    const double bound = std::sqrt(6.0 / static_cast<double>(s.in_dim + s.out_dim));
    Layer l{tensor::Matrix(s.in_dim, s.out_dim), std::vector<double>(s.out_dim, 0.0)};
    // Uniform in [-bound, bound] from 53 random bits; platform-independent.
    for (auto& w : l.w.data) {
      const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
      w = (2.0 * u - 1.0) * bound;
    }
    m.layers.push_back(std::move(l));
  }
  return m;
}

std::vector<double> forward_plain(const PlainModel& m, const std::vector<double>& x,
                                  ActivationMode mode) {
  check_input(m, x);
  const ActFns f = act_fns(mode);
  std::vector<double> a = x;
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    std::vector<double> z = tensor::vec_mat(a, m.layers[i].w);
    for (std::size_t j = 0; j < z.size(); ++j) z[j] += m.layers[i].b[j];
    if (m.specs[i].activation == Activation::kSilu) {
      for (auto& v : z) v = f.fwd(v);
    }
    a = std::move(z);
  }
  return a;
}

LossAndGrads loss_and_grads_plain(const PlainModel& m, const std::vector<std::vector<double>>& x,
                                  const std::vector<std::vector<double>>& y, ActivationMode mode) {
  if (x.empty()) throw ShapeError("loss_and_grads_plain: empty batch");
  if (x.size() != y.size()) throw ShapeError("loss_and_grads_plain: batch and label counts differ");
  const ActFns f = act_fns(mode);
  const std::size_t depth = m.layers.size();
  LossAndGrads out;
  for (std::size_t i = 0; i < depth; ++i) {
    out.grads.dw.emplace_back(m.specs[i].in_dim, m.specs[i].out_dim);
    out.grads.db.emplace_back(m.specs[i].out_dim, 0.0);
  }
  const double inv = 1.0 / static_cast<double>(x.size());
  for (std::size_t s = 0; s < x.size(); ++s) {
    check_input(m, x[s]);
    if (y[s].size() != m.specs.back().out_dim) throw ShapeError("label width does not match output layer");
    std::vector<std::vector<double>> acts{x[s]}, zs;
    for (std::size_t i = 0; i < depth; ++i) {
      std::vector<double> z = tensor::vec_mat(acts.back(), m.layers[i].w);
      for (std::size_t j = 0; j < z.size(); ++j) z[j] += m.layers[i].b[j];
      std::vector<double> a = z;
      if (m.specs[i].activation == Activation::kSilu) {
        for (auto& v : a) v = f.fwd(v);
      }
      zs.push_back(std::move(z));
      acts.push_back(std::move(a));
    }
    std::vector<double> delta(acts.back().size());
    for (std::size_t j = 0; j < delta.size(); ++j) {
      const double r = acts.back()[j] - y[s][j];
      out.loss += 0.5 * r * r * inv;
      delta[j] = r * inv;
    }
    for (std::size_t i = depth; i-- > 0;) {
      if (m.specs[i].activation == Activation::kSilu) {
        for (std::size_t j = 0; j < delta.size(); ++j) delta[j] *= f.deriv(zs[i][j]);
      }
      auto& dw = out.grads.dw[i];
      for (std::size_t p = 0; p < dw.rows; ++p) {
        for (std::size_t q = 0; q < dw.cols; ++q) dw(p, q) += acts[i][p] * delta[q];
      }
      for (std::size_t q = 0; q < delta.size(); ++q) out.grads.db[i][q] += delta[q];
      if (i > 0) delta = tensor::mat_vec(m.layers[i].w, delta);
    }
  }
  return out;
}

PlainModel sgd_update_plain(const PlainModel& m, const Gradients& g, double learning_rate) {
  if (g.dw.size() != m.layers.size() || g.db.size() != m.layers.size()) {
    throw ShapeError("sgd_update_plain: gradient layer count differs from model");
  }
  PlainModel out = m;
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    auto& w = out.layers[i].w.data;
    if (g.dw[i].data.size() != w.size() || g.db[i].size() != out.layers[i].b.size()) {
      throw ShapeError("sgd_update_plain: gradient shape differs in layer " + std::to_string(i));
    }
    for (std::size_t k = 0; k < w.size(); ++k) w[k] -= learning_rate * g.dw[i].data[k];
    for (std::size_t k = 0; k < g.db[i].size(); ++k) out.layers[i].b[k] -= learning_rate * g.db[i][k];
  }
  return out;
}

std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  std::mt19937_64 rng(seed);
  for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng() % i]);
  return idx;
}

std::vector<std::vector<std::size_t>> make_batches(std::size_t n, std::size_t batch_size,
                                                   std::uint64_t seed) {
  if (batch_size == 0) throw ConfigError("batch_size must be at least 1");
  const auto idx = shuffled_indices(n, seed);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t at = 0; at < n; at += batch_size) {
    batches.emplace_back(idx.begin() + static_cast<std::ptrdiff_t>(at),
                         idx.begin() + static_cast<std::ptrdiff_t>(std::min(n, at + batch_size)));
  }
  return batches;
}

double train_plain(PlainModel& m, const std::vector<std::vector<double>>& x,
                   const std::vector<std::vector<double>>& y, const TrainConfig& cfg,
                   std::uint64_t epoch_seed) {
  double last = 0.0;
  for (std::size_t e = 0; e < cfg.epochs_per_round; ++e) {
    double total = 0.0;
    const auto batches = make_batches(x.size(), cfg.batch_size, epoch_seed + e);
    for (const auto& batch : batches) {
      std::vector<std::vector<double>> bx, by;
      for (std::size_t i : batch) {
        bx.push_back(x[i]);
        by.push_back(y[i]);
      }
      const auto lg = loss_and_grads_plain(m, bx, by, cfg.activation);
      total += lg.loss;
      m = sgd_update_plain(m, lg.grads, cfg.learning_rate);
    }
    last = batches.empty() ? 0.0 : total / static_cast<double>(batches.size());
  }
  return last;
}

std::size_t argmax(const std::vector<double>& scores) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (scores[i] > scores[best]) best = i;
  }
  return best;
}

std::vector<double> one_hot(std::size_t label, std::size_t classes) {
  if (label >= classes) throw DataError("label " + std::to_string(label) + " outside class range");
  std::vector<double> v(classes, 0.0);
  v[label] = 1.0;
  return v;
}

}  // namespace hefl::nn
