// Copyright 2026 The hefl Authors
// SPDX-License-Identifier: Apache-2.0

// End-to-end acceptance run. Prints one PASS/FAIL line per criterion on stdout (progress goes
// to stderr) and exits non-zero if any criterion fails. Pass criterion numbers as arguments
// to run a subset, e.g. `acceptance 1 2 8`.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "hefl/app/commands.hpp"
#include "hefl/app/config.hpp"
#include "hefl/ckks/context.hpp"
#include "hefl/ckks/evaluator.hpp"
#include "hefl/ckks/refresh.hpp"
#include "hefl/fl/protocol.hpp"
#include "hefl/metrics/metrics.hpp"
#include "hefl/nn/checkpoint.hpp"
#include "hefl/nn/encrypted.hpp"
#include "hefl/tensor/chebyshev.hpp"
#include "hefl/tensor/kernels.hpp"

namespace {

using namespace hefl;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

// Tolerances.
constexpr double kEps0 = 1e-6;       // fresh encryption round trip
constexpr double kEps1 = 1e-4;       // one multiplicative level
constexpr double kChebBound = 1e-2;  // degree-15 SiLU on [-8, 8]
constexpr double kFdBound = 1e-4;    // relative, central differences
constexpr double kEncGradBound = 5e-2;
constexpr double kGapBoundPp = 1.0;
constexpr double kAccuracyFloor = 0.90;
constexpr double kRoundsRatio = 1.3;
constexpr double kHeMinutes = 2.0;
constexpr double kEncRunMinutes = 60.0;

struct Verdict {
  bool pass = true;
  std::vector<std::string> notes;

  void require(bool ok, const std::string& note) {
    if (!ok) pass = false;
    notes.push_back((ok ? "" : "FAILED: ") + note);
  }
  void note(const std::string& n) { notes.push_back(n); }
};

std::string fmt(double v, int prec = 3) {
  std::ostringstream o;
  o.precision(prec);
  o << v;
  return o.str();
}

double minutes_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count() / 60.0;
}

void progress(const std::string& s) { std::cerr << "  .. " << s << std::endl; }

std::vector<double> uniform(std::size_t n, std::mt19937_64& g, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = d(g);
  return v;
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

std::shared_ptr<const ckks::CkksContext> desk_ptr() {
  static const auto ctx = ckks::CkksContext::create(ckks::preset("desk"));
  return ctx;
}
const ckks::KeySet& desk_keys() {
  static const ckks::KeySet ks = ckks::keygen(*desk_ptr(), 20260);
  return ks;
}

// ---- 1: HE correctness ----------------------------------------------------------------

Verdict he_correctness() {
  Verdict v;
  const auto t0 = Clock::now();
  const auto& ctx = *desk_ptr();
  const auto& keys = desk_keys();
  const std::size_t slots = ctx.slot_count();
  std::mt19937_64 g(1);
  const int trials = 1000;
  auto enc = [&](const std::vector<double>& x, std::size_t level) {
    return ckks::encrypt(ctx, ckks::encode(ctx, x, level, ctx.ladder_scale(level)), keys.pub.encryption, g);
  };
  auto dec = [&](const ckks::Ciphertext& c) { return ckks::decrypt(ctx, c, keys.secret); };
  const std::size_t top = ctx.max_level();
  v.require(ctx.scale() == std::ldexp(1.0, 40), "profile scale is 2^40");

  double rt = 0.0, add = 0.0, mul = 0.0;
  for (int t = 0; t < trials; ++t) {
    const auto x = uniform(slots, g), y = uniform(slots, g);
    const auto cx = enc(x, top), cy = enc(y, top);
    rt = std::max(rt, max_abs_diff(dec(cx), x));
    std::vector<double> s(slots), p(slots);
    for (std::size_t i = 0; i < slots; ++i) {
      s[i] = x[i] + y[i];
      p[i] = x[i] * y[i];
    }
    add = std::max(add, max_abs_diff(dec(ckks::he_add(ctx, cx, cy)), s));
    mul = std::max(mul, max_abs_diff(dec(ckks::he_mul(ctx, cx, cy, keys.pub.relin)), p));
  }
  v.require(rt < kEps0, "round trip max error " + fmt(rt) + " < " + fmt(kEps0) + " over " + std::to_string(trials) + " trials");
  v.require(add < 2 * kEps0, "add max error " + fmt(add) + " < " + fmt(2 * kEps0));
  v.require(mul < kEps1, "multiply max error " + fmt(mul) + " < " + fmt(kEps1));

  // Depth-d chains: x_0 * x_1 * ... * x_d, every factor unit-bounded.
  const int per_depth = (trials + static_cast<int>(top) - 1) / static_cast<int>(top);
  for (std::size_t d = 1; d <= top; ++d) {
    double worst = 0.0;
    for (int t = 0; t < per_depth; ++t) {
      auto want = uniform(slots, g);
      auto c = enc(want, top);
      for (std::size_t k = 0; k < d; ++k) {
        const auto f = uniform(slots, g);
        c = ckks::he_mul(ctx, c, enc(f, c.level()), keys.pub.relin);
        for (std::size_t i = 0; i < slots; ++i) want[i] *= f[i];
      }
      worst = std::max(worst, max_abs_diff(dec(c), want));
    }
    v.require(worst < static_cast<double>(d) * kEps1,
              "depth " + std::to_string(d) + " chain max error " + fmt(worst) + " < " + fmt(d * kEps1) + " (" +
                  std::to_string(per_depth) + " trials)");
  }
  const double mins = minutes_since(t0);
  v.require(mins < kHeMinutes, "runtime " + fmt(mins * 60, 3) + " s < 120 s");
  return v;
}

// ---- 2: encrypted linear algebra ---------------------------------------------------------

Verdict linear_algebra() {
  Verdict v;
  const auto& ctx = *desk_ptr();
  const auto& keys = desk_keys();
  const auto grid = tensor::SlotGrid::of(ctx);
  std::mt19937_64 g(2);
  const double tol = static_cast<double>(grid.mu) * kEps1;
  double worst = 0.0;
  const int shapes = 500;
  for (int t = 0; t < shapes; ++t) {
    const std::size_t u = 1 + g() % grid.mu, w_cols = 1 + g() % grid.mu;
    tensor::Matrix w(u, w_cols);
    for (auto& x : w.data) x = std::uniform_real_distribution<double>(-1, 1)(g);
    const auto x = uniform(u, g);
    std::vector<double> want(w_cols, 0.0);
    for (std::size_t j = 0; j < w_cols; ++j) {
      for (std::size_t i = 0; i < u; ++i) want[j] += x[i] * w(i, j);
    }
    // Alternate the two kernel layouts.
    const bool within = t % 2 == 0;
    const auto o = within ? tensor::Orientation::kTransposed : tensor::Orientation::kRowMajor;
    const auto rep = within ? tensor::Replication::kRowReplicated : tensor::Replication::kColumnReplicated;
    const auto pw = tensor::encrypt_packed(ctx, tensor::encode_matrix(w, grid, o), keys.pub.encryption, g);
    const auto px = tensor::encrypt_packed(ctx, tensor::encode_vector(x, grid, rep), keys.pub.encryption, g);
    const auto y = tensor::unpack_vector(tensor::decrypt_packed(ctx, tensor::matvec(ctx, keys.pub, pw, px), keys.secret));
    if (y.size() != w_cols) {
      v.require(false, "matvec returned length " + std::to_string(y.size()));
      return v;
    }
    worst = std::max(worst, max_abs_diff(y, want));
  }
  v.require(worst < tol, "matvec max error " + fmt(worst) + " < mu*1e-4 = " + fmt(tol) + " over " +
                             std::to_string(shapes) + " random shapes");

  const auto nine = tensor::SlotGrid::of_slots(9);
  tensor::Matrix m(3, 3);
  for (std::size_t r = 0; r < 3; ++r) {
    for (std::size_t c = 0; c < 3; ++c) m(r, c) = static_cast<double>(10 * r + c);
  }
  const auto packed = tensor::encode_matrix(m, nine);
  const std::vector<double> order = {0, 1, 2, 10, 11, 12, 20, 21, 22};  // W00 W01 W02 W10 ... W22
  v.require(nine.mu == 3 && packed.slots == order, "3x3 matrix on a 9-slot grid flattens row by row");
  return v;
}

// ---- 3: activation approximation ---------------------------------------------------------

Verdict activation() {
  Verdict v;
  const auto& s = tensor::silu_approx();
  v.require(s.degree() == 15 && s.a == -8.0 && s.b == 8.0, "SiLU approximation is degree 15 on [-8, 8]");
  const std::size_t n = 200001;
  double sup = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = -8.0 + 16.0 * static_cast<double>(i) / static_cast<double>(n - 1);
    sup = std::max(sup, std::abs(s(x) - tensor::silu(x)));
  }
  v.require(sup < kChebBound, "dense sup error " + fmt(sup) + " < 1e-2 (" + std::to_string(n) + " points)");

  const auto& ctx = *desk_ptr();
  const auto& keys = desk_keys();
  std::mt19937_64 g(3);
  const double bound = kChebBound + static_cast<double>(tensor::cheb_depth(s)) * kEps1;
  double worst = 0.0;
  for (int t = 0; t < 10; ++t) {
    const auto x = uniform(ctx.slot_count(), g, -8.0, 8.0);
    const auto ct = ckks::encrypt(ctx, ckks::encode(ctx, x), keys.pub.encryption, g);
    const auto y = ckks::decrypt(ctx, tensor::cheb_eval_encrypted(ctx, s, ct, keys.pub.relin), keys.secret);
    for (std::size_t i = 0; i < x.size(); ++i) worst = std::max(worst, std::abs(y[i] - tensor::silu(x[i])));
  }
  v.require(worst < bound, "encrypted SiLU max error " + fmt(worst) + " < 1e-2 + depth*1e-4 = " + fmt(bound, 4));
  return v;
}

// ---- 4: gradient soundness ----------------------------------------------------------------

nn::PlainModel random_model(const std::vector<nn::LayerSpec>& specs, std::uint64_t seed) {
  nn::PlainModel m = nn::init_model(specs, seed);
  std::mt19937_64 g(seed ^ 0xb1a5);
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  for (auto& l : m.layers) {
    for (auto& b : l.b) b = u(g);
  }
  return m;
}

std::vector<nn::LayerSpec> chain(std::initializer_list<std::size_t> dims) {
  std::vector<nn::LayerSpec> out;
  for (auto it = dims.begin(); std::next(it) != dims.end(); ++it) out.push_back({*it, *std::next(it), nn::Activation::kSilu});
  return out;
}

Verdict gradients() {
  Verdict v;
  std::mt19937_64 g(4);
  double fd_worst = 0.0;
  std::size_t probes = 0;
  for (const auto& specs : {chain({4, 3, 2}), chain({3, 5, 4, 2}), chain({6, 6})}) {
    for (auto mode : {nn::ActivationMode::kAnalytic, nn::ActivationMode::kPolyExactDerivative}) {
      nn::PlainModel m = random_model(specs, g());
      std::vector<std::vector<double>> x, y;
      for (int b = 0; b < 3; ++b) {
        x.push_back(uniform(specs.front().in_dim, g));
        y.push_back(nn::one_hot(g() % specs.back().out_dim, specs.back().out_dim));
      }
      const auto lg = nn::loss_and_grads_plain(m, x, y, mode);
      const double h = 1e-5;
      auto probe = [&](double& p, double analytic) {
        const double keep = p;
        p = keep + h;
        const double up = nn::loss_and_grads_plain(m, x, y, mode).loss;
        p = keep - h;
        const double down = nn::loss_and_grads_plain(m, x, y, mode).loss;
        p = keep;
        const double fd = (up - down) / (2 * h);
        fd_worst = std::max(fd_worst, std::abs(fd - analytic) / std::max(1e-6, std::max(std::abs(fd), std::abs(analytic))));
        ++probes;
      };
      for (std::size_t l = 0; l < m.layers.size(); ++l) {
        for (std::size_t k = 0; k < m.layers[l].w.data.size(); ++k) probe(m.layers[l].w.data[k], lg.grads.dw[l].data[k]);
        for (std::size_t k = 0; k < m.layers[l].b.size(); ++k) probe(m.layers[l].b[k], lg.grads.db[l][k]);
      }
    }
  }
  v.require(fd_worst < kFdBound,
            "finite differences max relative error " + fmt(fd_worst) + " < 1e-4 (" + std::to_string(probes) + " parameters)");

  const auto ctx = desk_ptr();
  const auto& keys = desk_keys();
  ckks::OracleRefresh refresh(ctx, keys.secret, keys.pub.encryption);
  const nn::EncEnv env{*ctx, keys.pub, &refresh};
  const auto toy = chain({4, 3, 2});
  double enc_worst = 0.0;
  for (int t = 0; t < 5; ++t) {
    const auto m = random_model(toy, 100 + t);
    std::vector<std::vector<double>> x, y;
    std::vector<tensor::PackedVector> ex, ey;
    for (int b = 0; b < 1 + t % 4; ++b) {
      x.push_back(uniform(4, g, 0.0, 1.0));
      y.push_back(nn::one_hot(g() % 2, 2));
      ex.push_back(nn::encrypt_input(*ctx, x.back(), keys.pub.encryption, g));
      ey.push_back(nn::encrypt_label(*ctx, toy, y.back(), keys.pub.encryption, g));
    }
    const auto em = nn::encrypt_model(*ctx, m, keys.pub.encryption, g);
    const auto enc = nn::loss_and_grads_enc(env, em, ex, ey);
    const auto plain = nn::loss_and_grads_plain(m, x, y, nn::ActivationMode::kPoly);
    for (std::size_t l = 0; l < toy.size(); ++l) {
      const auto dw = tensor::unpack_matrix(tensor::decrypt_packed(*ctx, enc.grads.dw[l], keys.secret));
      const auto db = tensor::unpack_vector(tensor::decrypt_packed(*ctx, enc.grads.db[l], keys.secret));
      enc_worst = std::max({enc_worst, max_abs_diff(dw.data, plain.grads.dw[l].data), max_abs_diff(db, plain.grads.db[l])});
    }
  }
  v.require(enc_worst < kEncGradBound, "encrypted 4-3-2 gradients max element error " + fmt(enc_worst) + " < 5e-2");
  return v;
}

// ---- 5 and 7: FedAvg oracle, privacy ---------------------------------------------------------

struct PrivacyLog {
  std::size_t encfl_runs = 0;
  std::vector<std::string> failures;
  std::uint64_t messages = 0;

  void add(const std::string& run, const fl::ScanReport& r) {
    if (!r.applicable) {
      failures.push_back(run + ": scan not applied");
      return;
    }
    ++encfl_runs;
    messages += r.messages;
    if (!r.passed()) failures.push_back(run + ": " + r.violations.front());
  }
};

PrivacyLog g_privacy;

nn::PlainModel plain_mean(const std::vector<nn::PlainModel>& parts) {
  nn::PlainModel out = parts.front();
  const double n = static_cast<double>(parts.size());
  for (std::size_t l = 0; l < out.layers.size(); ++l) {
    for (std::size_t i = 0; i < out.layers[l].w.data.size(); ++i) {
      double s = 0.0;
      for (const auto& p : parts) s += p.layers[l].w.data[i];
      out.layers[l].w.data[i] = s / n;
    }
    for (std::size_t i = 0; i < out.layers[l].b.size(); ++i) {
      double s = 0.0;
      for (const auto& p : parts) s += p.layers[l].b[i];
      out.layers[l].b[i] = s / n;
    }
  }
  return out;
}

double model_diff(const nn::PlainModel& a, const nn::PlainModel& b) {
  double d = 0.0;
  for (std::size_t l = 0; l < a.layers.size(); ++l) {
    d = std::max({d, max_abs_diff(a.layers[l].w.data, b.layers[l].w.data), max_abs_diff(a.layers[l].b, b.layers[l].b)});
  }
  return d;
}

Verdict fedavg_oracle() {
  Verdict v;
  const double bound = 3 * kEps0 + kEps1;
  for (std::size_t n : {2u, 3u}) {
    app::ExperimentConfig c;
    c.mode = fl::Mode::kEncFl;
    c.vus = n;
    c.max_rounds = 20;
    c.stop_on_convergence = false;
    c.dataset.samples = 600;
    const auto data = app::prepare_data(c, n);
    fl::System sys(app::to_fl_config(c), data.shards, data.split.test);
    std::size_t calls = 0, inputs = 0;
    double worst = 0.0;
    sys.set_aggregate_hook([&](std::size_t, const std::vector<nn::PlainModel>& in, const nn::PlainModel& out) {
      ++calls;
      inputs = in.size();
      worst = std::max(worst, model_diff(out, plain_mean(in)));
    });
    const auto t0 = Clock::now();
    const auto r = sys.run();
    progress("FedAvg oracle N=" + std::to_string(n) + ": " + fmt(minutes_since(t0) * 60, 3) + " s");
    g_privacy.add("oracle N=" + std::to_string(n), r.privacy);
    v.require(calls == 20 && inputs == n + 1, "N=" + std::to_string(n) + ": " + std::to_string(calls) +
                                                  " aggregations over " + std::to_string(inputs) + " models");
    v.require(worst < bound, "N=" + std::to_string(n) + ": max elementwise error " + fmt(worst) + " < 3*eps0 + eps1 = " +
                                 fmt(bound, 4) + " in every round");
  }
  return v;
}

// ---- 6: end-to-end comparison --------------------------------------------------------------

fs::path scratch_root() {
  static const fs::path p = [] {
    auto d = fs::temp_directory_path() / "hefl_acceptance";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return p;
}

Verdict end_to_end() {
  Verdict v;
  for (std::size_t n : {2u, 3u}) {
    app::ExperimentConfig base;  // desk profile, 32-16-16-6, 3140 synthetic samples, shared seeds
    base.vus = n;
    const auto data = app::prepare_data(base, n);
    for (double p : {0.1, 0.2}) {
      base.offload = {p};
      const std::string group = "N=" + std::to_string(n) + " p=" + fmt(p * 100) + "%";
      std::map<fl::Mode, fl::RunResult> res;
      double enc_minutes = 0.0;
      for (auto mode : {fl::Mode::kNEncFl, fl::Mode::kEncFl}) {
        auto c = base;
        c.mode = mode;
        const auto dir = scratch_root() / ("n" + std::to_string(n) + "_p" + fmt(p * 100)) / std::string(fl::mode_name(mode));
        c.output_dir = dir.string();
        std::ostringstream sink;
        const auto t0 = Clock::now();
        res[mode] = app::run_experiment(c, data, dir, sink);
        const double mins = minutes_since(t0);
        if (mode == fl::Mode::kEncFl) {
          enc_minutes = mins;
          g_privacy.add(group, res[mode].privacy);
        }
        progress(group + " " + std::string(fl::mode_name(mode)) + ": " + std::to_string(res[mode].rounds.size()) +
                 " rounds, ovr " + fmt(res[mode].final_metrics.ovr_accuracy, 5) + ", micro " +
                 fmt(res[mode].final_metrics.micro_accuracy, 5) + ", " + fmt(mins, 3) + " min");
      }
      const auto& plain = res[fl::Mode::kNEncFl];
      const auto& enc = res[fl::Mode::kEncFl];
      const double gap = std::abs(enc.final_metrics.ovr_accuracy - plain.final_metrics.ovr_accuracy) * 100.0;
      const double micro_gap = std::abs(enc.final_metrics.micro_accuracy - plain.final_metrics.micro_accuracy) * 100.0;
      v.require(gap < kGapBoundPp, group + ": ovr accuracy gap " + fmt(gap) + " pp < 1.0 (micro gap " + fmt(micro_gap) + " pp)");
      const double lo = std::min({plain.final_metrics.ovr_accuracy, enc.final_metrics.ovr_accuracy,
                                  plain.final_metrics.micro_accuracy, enc.final_metrics.micro_accuracy});
      v.require(lo > kAccuracyFloor, group + ": lowest of ovr and micro accuracy over both modes " + fmt(lo, 4) + " > 0.90");
      if (plain.converged_round && enc.converged_round) {
        const double ratio = static_cast<double>(*enc.converged_round) / static_cast<double>(*plain.converged_round);
        v.require(ratio <= kRoundsRatio, group + ": EncFL converged at round " + std::to_string(*enc.converged_round) +
                                             ", N-EncFL at " + std::to_string(*plain.converged_round) + " (ratio " +
                                             fmt(ratio) + " <= 1.3)");
      } else {
        v.require(false, group + ": a mode did not converge within " + std::to_string(base.max_rounds) + " rounds");
      }
      v.require(enc_minutes < kEncRunMinutes, group + ": EncFL run took " + fmt(enc_minutes, 3) + " min < 60");
    }
  }
  return v;
}

Verdict privacy() {
  Verdict v;
  if (g_privacy.encfl_runs == 0 && g_privacy.failures.empty()) {
    v.require(false, "no EncFL run was executed (criteria 5 and 6 supply them)");
    return v;
  }
  for (const auto& f : g_privacy.failures) v.require(false, f);
  v.require(g_privacy.failures.empty(), "message scan passed on " + std::to_string(g_privacy.encfl_runs) +
                                            " EncFL runs (" + std::to_string(g_privacy.messages) +
                                            " server-bound messages)");
  return v;
}

// ---- 8: metrics worked examples ----------------------------------------------------------------

Verdict metrics_examples() {
  Verdict v;
  using metrics::ConfusionMatrix;
  auto cm = [](std::vector<std::vector<std::uint64_t>> rows) {
    return ConfusionMatrix::from_counts(std::move(rows), {"a", "b"});
  };
  const auto perfect = metrics::evaluate(cm({{3, 0}, {0, 5}}));
  v.require(perfect.ovr_accuracy == 1.0 && perfect.micro_accuracy == 1.0 && perfect.macro_precision == 1.0 &&
                perfect.macro_recall == 1.0,
            "perfect diagonal: every metric 1.0");
  // Each class TP=1, TN=1, FP=1, FN=1: (1/2)(2/4 + 2/4).
  const auto ones = metrics::evaluate(cm({{1, 1}, {1, 1}}));
  v.require(ones.ovr_accuracy == (2.0 / 4.0 + 2.0 / 4.0) / 2.0, "[[1,1],[1,1]]: one-vs-rest accuracy 0.5");
  const auto wrong = metrics::evaluate(cm({{0, 2}, {2, 0}}));
  v.require(wrong.micro_accuracy == 0.0 && wrong.ovr_accuracy == 0.0, "all wrong: micro and one-vs-rest accuracy 0.0");
  const auto m = metrics::evaluate(cm({{2, 0}, {1, 1}}));
  v.require(m.macro_precision == (2.0 / 3.0 + 1.0 / 1.0) / 2.0, "[[2,0],[1,1]]: macro precision 5/6");
  v.require(m.macro_recall == (2.0 / 2.0 + 1.0 / 2.0) / 2.0, "[[2,0],[1,1]]: macro recall 0.75");
  const auto never = metrics::evaluate(cm({{2, 0}, {1, 0}}));
  v.require(never.precision_undefined[1] && never.precision[1] == 0.0 && !never.precision_undefined[0],
            "never-predicted class: precision term 0 and flagged");
  return v;
}

// ---- 9: determinism ---------------------------------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Verdict determinism() {
  Verdict v;
  const auto dir = scratch_root() / "determinism";
  fs::create_directories(dir);
  const auto cfg = dir / "config.json";
  std::ofstream(cfg) << R"({"name": "determinism", "mode": "EncFL", "vus": 2, "offload": 0.1, "max_rounds": 5,
    "ckks_profile": "desk", "dataset": {"source": "synthetic", "samples": 600}})";
  std::map<std::string, std::string> first;
  for (const char* run : {"a", "b"}) {
    std::ostringstream out, err;
    const int code = app::run_cli({"hefl", "run", "--config", cfg.string(), "--out", (dir / run).string(), "--quiet"}, out, err);
    v.require(code == 0, std::string("run ") + run + " exit code " + std::to_string(code) + err.str());
  }
  for (const char* f : {"rounds.jsonl", "final_model.hefl", "confusion.csv", "convergence.csv", "metrics.csv"}) {
    const auto a = slurp(dir / "a" / f), b = slurp(dir / "b" / f);
    v.require(!a.empty() && a == b, std::string(f) + " byte-identical (" + std::to_string(a.size()) + " bytes)");
  }
  return v;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
      {"HE correctness suite", he_correctness},
      {"encrypted linear algebra", linear_algebra},
      {"activation approximation", activation},
      {"gradient soundness", gradients},
      {"encrypted FedAvg equals plaintext FedAvg", fedavg_oracle},
      {"EncFL vs N-EncFL end to end", end_to_end},
      {"privacy invariant", privacy},
      {"metrics worked examples", metrics_examples},
      {"determinism", determinism},
  };
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));
  // 7 audits the EncFL runs of 5 and 6, so it runs last.
  const int order[] = {8, 1, 2, 3, 4, 9, 5, 6, 7};
  std::map<int, Verdict> results;
  for (int k : order) {
    if (!wanted.empty() && !wanted.contains(k)) continue;
    std::cerr << "criterion " << k << ": " << criteria[k - 1].first << std::endl;
    const auto t0 = Clock::now();
    try {
      results[k] = criteria[k - 1].second();
    } catch (const std::exception& e) {
      results[k].require(false, std::string("exception: ") + e.what());
    }
    std::cerr << "  .. " << fmt(minutes_since(t0) * 60, 4) << " s" << std::endl;
  }
  bool all = true;
  std::cout << "\nacceptance results\n";
  for (const auto& [k, r] : results) {
    all = all && r.pass;
    std::cout << (r.pass ? "PASS" : "FAIL") << "  " << k << "  " << criteria[k - 1].first << '\n';
    for (const auto& n : r.notes) std::cout << "        " << n << '\n';
  }
  std::cout << (all ? "all criteria passed" : "some criteria FAILED") << std::endl;
  return all ? 0 : 1;
}
