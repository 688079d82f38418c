// Copyright 2026 The hefl Authors
// SPDX-License-Identifier: Apache-2.0

#include "hefl/app/commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include "CLI11.hpp"
#include "hefl/ckks/context.hpp"
#include "hefl/ckks/evaluator.hpp"
#include "hefl/ckks/refresh.hpp"
#include "hefl/ckks/serialize.hpp"
#include "hefl/nn/checkpoint.hpp"
#include "hefl/nn/encrypted.hpp"
#include "hefl/tensor/chebyshev.hpp"
#include "hefl/tensor/kernels.hpp"
#include "json.hpp"

namespace hefl::app {

namespace fs = std::filesystem;
using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;
using metrics::format_number;

namespace {

constexpr double kEps0 = 1e-6;  // fresh encrypt, add, serialization
constexpr double kEps1 = 1e-4;  // after a multiply or key switch

std::string error_kind(const std::exception& e) {
  if (dynamic_cast<const ParameterError*>(&e)) return "ParameterError";
  if (dynamic_cast<const CapacityError*>(&e)) return "CapacityError";
  if (dynamic_cast<const DomainError*>(&e)) return "DomainError";
  if (dynamic_cast<const LevelError*>(&e)) return "LevelError";
  if (dynamic_cast<const ScaleMismatchError*>(&e)) return "ScaleMismatchError";
  if (dynamic_cast<const KeyError*>(&e)) return "KeyError";
  if (dynamic_cast<const NoiseBudgetError*>(&e)) return "NoiseBudgetError";
  if (dynamic_cast<const ShapeError*>(&e)) return "ShapeError";
  if (dynamic_cast<const FormatError*>(&e)) return "FormatError";
  if (dynamic_cast<const ProtocolError*>(&e)) return "ProtocolError";
  if (dynamic_cast<const DataError*>(&e)) return "DataError";
  if (dynamic_cast<const ConfigError*>(&e)) return "ConfigError";
  return "InternalError";
}

void append_line(std::ofstream& f, const std::string& line) {
  f << line << '\n';
  f.flush();
}

std::string mode_slug(fl::Mode m) {
  std::string s(fl::mode_name(m));
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char ch) { return std::tolower(ch); });
  return s;
}

std::string percent(double p) { return format_number(std::round(p * 1e6) / 1e4); }

std::string metrics_csv(const fl::RunResult& r) {
  std::ostringstream o;
  o << "metric,value\n";
  o << "ovr_accuracy," << format_number(r.final_metrics.ovr_accuracy) << '\n';
  o << "micro_accuracy," << format_number(r.final_metrics.micro_accuracy) << '\n';
  o << "macro_precision," << format_number(r.final_metrics.macro_precision) << '\n';
  o << "macro_recall," << format_number(r.final_metrics.macro_recall) << '\n';
  o << "rounds," << r.rounds.size() << '\n';
  o << "converged_round," << (r.converged_round ? std::to_string(*r.converged_round) : "") << '\n';
  return o.str();
}

std::string dataset_note(const ExperimentConfig& c, const PreparedData& d) {
  std::string note;
  if (c.dataset.kind == DatasetSource::Kind::kSynthetic) {
    note = "synthetic dataset, " + std::to_string(c.dataset.samples) + " samples, separation " +
           format_number(c.dataset.separation);
  } else {
    note = "csv dataset " + c.dataset.csv;
  }
  note += ", data seed " + std::to_string(c.data_seed) + "; features:";
  for (const auto& f : d.feature_names) note += " " + f;
  return note;
}

std::string resolve_out(const std::string& flag, const ExperimentConfig& c) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("HEFL_OUT"); env != nullptr && *env != '\0') return env;
  return c.output_dir;
}

struct Overrides {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::string profile;
  std::string mode;
};

ExperimentConfig effective_config(const Overrides& o) {
  ExperimentConfig c = load_config(o.config);
  if (o.seed) c.data_seed = c.protocol_seed = *o.seed;
  if (!o.profile.empty()) c.ckks_profile = o.profile;
  if (!o.mode.empty()) c.mode = fl::parse_mode(o.mode);
  c.output_dir = resolve_out(o.out, c);
  auto problems = config_problems(c);
  if (!problems.empty()) throw ConfigIssues(std::move(problems));
  return c;
}

void add_common(CLI::App* cmd, Overrides& o, bool with_mode) {
  cmd->add_option("--config", o.config, "experiment config (JSON)")->required();
  cmd->add_option("--out", o.out, "output directory (overrides HEFL_OUT and the config)");
  cmd->add_option("--seed-override", o.seed, "replace both the data and the protocol seed");
  cmd->add_option("--profile", o.profile, "CKKS profile for EncFL runs");
  if (with_mode) cmd->add_option("--mode", o.mode, "CFL, N-EncFL or EncFL");
}

// ---- commands ------------------------------------------------------------------

int cmd_run(const Overrides& o, bool quiet, std::ostream& out) {
  const ExperimentConfig c = effective_config(o);
  const PreparedData d = prepare_data(c, c.vus);
  std::ostringstream sink;
  const auto r = run_experiment(c, d, c.output_dir, quiet ? static_cast<std::ostream&>(sink) : out);
  out << fl::mode_name(c.mode) << ": " << r.rounds.size() << " rounds, "
      << (r.converged_round ? "converged at round " + std::to_string(*r.converged_round) : "not converged")
      << ", micro accuracy " << format_number(r.final_metrics.micro_accuracy) << ", ovr accuracy "
      << format_number(r.final_metrics.ovr_accuracy) << '\n';
  if (r.privacy.applicable) out << "privacy scan: " << (r.privacy.passed() ? "passed" : "FAILED") << '\n';
  out << "artifacts in " << c.output_dir << '\n';
  return kExitOk;
}

int cmd_compare(const Overrides& o, bool quiet, std::ostream& out, std::ostream& err) {
  const ExperimentConfig base = effective_config(o);
  if (base.compare.modes.size() < 2) {
    err << "error: compare needs at least two modes in compare.modes, e.g. "
           "\"compare\": {\"modes\": [\"N-EncFL\", \"EncFL\"]}\n";
    return kExitConfig;
  }
  // The plaintext baseline leads each group so the gap column is measured against it.
  auto rank = [](fl::Mode m) { return m == fl::Mode::kNEncFl ? 0 : m == fl::Mode::kEncFl ? 1 : 2; };
  auto modes = base.compare.modes;
  std::stable_sort(modes.begin(), modes.end(), [&](fl::Mode a, fl::Mode b) { return rank(a) < rank(b); });
  const auto vus = base.compare.vus.empty() ? std::vector<std::size_t>{base.vus} : base.compare.vus;
  const bool uniform = base.offload.size() == 1;
  const auto offloads = base.compare.offload.empty() ? std::vector<double>{base.offload.front()} : base.compare.offload;

  std::ostringstream sink;
  std::ostream& progress = quiet ? static_cast<std::ostream&>(sink) : out;
  std::vector<metrics::RunSummary> rows;
  for (std::size_t n : vus) {
    ExperimentConfig cn = base;
    cn.vus = n;
    const PreparedData d = prepare_data(cn, n);
    for (double p : offloads) {
      if (uniform || !base.compare.offload.empty()) cn.offload = {p};
      const std::string group = "n" + std::to_string(n) + "_p" + percent(p);
      for (auto m : modes) {
        ExperimentConfig run = cn;
        run.mode = m;
        const fs::path dir = fs::path(base.output_dir) / group / mode_slug(m);
        run.output_dir = dir.string();
        progress << "== " << group << " " << fl::mode_name(m) << '\n';
        const auto r = run_experiment(run, d, dir, progress);
        metrics::RunSummary s;
        s.mode = std::string(fl::mode_name(m));
        s.group = group;
        s.vus = n;
        s.offload = m == fl::Mode::kCfl ? 0.0 : p;
        s.rounds = r.rounds.size();
        s.converged_round = r.converged_round;
        s.cm = r.final_confusion;
        s.metrics = r.final_metrics;
        rows.push_back(std::move(s));
      }
    }
  }
  nn::write_text(fs::path(base.output_dir) / "comparison.csv", metrics::comparison_csv(rows));
  const std::string table = metrics::comparison_text(rows);
  nn::write_text(fs::path(base.output_dir) / "comparison.txt", table);
  out << table;
  return kExitOk;
}

int cmd_verify(const std::string& profile, std::ostream& out) {
  const auto params = load_profile(profile);
  const auto results = run_invariant_suite(params);
  std::size_t pass = 0, fail = 0, skip = 0;
  for (const auto& r : results) {
    const char* tag = "PASS";
    if (r.status == CheckResult::Status::kFail) {
      tag = "FAIL";
      ++fail;
    } else if (r.status == CheckResult::Status::kSkip) {
      tag = "SKIP";
      ++skip;
    } else {
      ++pass;
    }
    out << tag << "  " << r.name;
    if (!r.detail.empty()) out << "  (" << r.detail << ")";
    out << '\n';
  }
  out << pass << " passed, " << fail << " failed, " << skip << " skipped\n";
  return fail == 0 ? kExitOk : kExitVerify;
}

int cmd_plot_data(const std::string& dir, std::ostream& out) {
  if (!fs::is_directory(dir)) throw ConfigError("not a directory: " + dir);
  std::vector<fs::path> logs;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().filename() == "rounds.jsonl") logs.push_back(e.path());
  }
  if (logs.empty()) throw ConfigError("no rounds.jsonl found under " + dir);
  std::sort(logs.begin(), logs.end());
  std::ostringstream csv;
  csv << "run,mode,round,ovr_accuracy,micro_accuracy,macro_precision,macro_recall,moving_average,mean_vu_loss,"
         "server_loss\n";
  std::size_t points = 0;
  for (const auto& path : logs) {
    std::string run = fs::relative(path.parent_path(), dir).generic_string();
    std::string mode;
    std::vector<json> rounds;
    std::ifstream in(path);
    for (std::string line; std::getline(in, line);) {
      if (line.empty()) continue;
      json j;
      try {
        j = json::parse(line);
      } catch (const json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
      }
      const auto type = j.value("type", "");
      if (type == "round") rounds.push_back(std::move(j));
      if (type == "summary") mode = j.value("mode", "");
    }
    auto num = [](const json& v) { return v.is_number() ? format_number(v.get<double>()) : std::string(); };
    for (const auto& j : rounds) {
      double loss = 0.0;
      const auto& vl = j.at("vu_loss");
      for (const auto& v : vl) loss += v.get<double>();
      if (!vl.empty()) loss /= static_cast<double>(vl.size());
      const auto& t = j.at("test");
      csv << run << ',' << mode << ',' << j.at("round").get<std::size_t>() << ',' << num(t.at("ovr_accuracy")) << ','
          << num(t.at("micro_accuracy")) << ',' << num(t.at("macro_precision")) << ',' << num(t.at("macro_recall"))
          << ',' << num(j.at("moving_average")) << ',' << (vl.empty() ? "" : format_number(loss)) << ','
          << num(j.at("server_loss")) << '\n';
      ++points;
    }
  }
  const fs::path target = fs::path(dir) / "curves.csv";
  nn::write_text(target, csv.str());
  out << "wrote " << points << " points from " << logs.size() << " runs to " << target.string() << '\n';
  return kExitOk;
}

int cmd_export(const Overrides& o, std::ostream& out) {
  const ExperimentConfig c = effective_config(o);
  const PreparedData d = prepare_data(c, c.vus);
  const fs::path dir = c.output_dir;
  fs::create_directories(dir);
  nn::write_text(dir / "train.csv", data::to_csv(d.split.train));
  nn::write_text(dir / "test.csv", data::to_csv(d.split.test));
  nn::write_file(dir / "dataset.bin", data::serialize_split(d.split));

  auto counts = [](std::span<const data::Sample> s) {
    ordered_json j;
    const auto cc = data::count_classes(s);
    for (std::size_t k = 0; k < data::kNumClasses; ++k) j[std::string(data::kClassNames[k])] = cc[k];
    return j;
  };
  ordered_json j;
  j["source"] = c.dataset.kind == DatasetSource::Kind::kSynthetic ? "synthetic" : "csv";
  j["features"] = d.feature_names;
  j["data_seed"] = c.data_seed;
  j["train"] = {{"samples", d.split.train.size()}, {"classes", counts(d.split.train)}};
  j["test"] = {{"samples", d.split.test.size()}, {"classes", counts(d.split.test)}};
  ordered_json shards = ordered_json::array();
  for (const auto& s : d.shards) shards.push_back(s.size());
  j["vu_shards"] = shards;
  if (d.load) {
    j["load"] = {{"rows", d.load->rows},
                 {"loaded", d.load->loaded},
                 {"skipped_numeric", d.load->skipped_numeric},
                 {"skipped_label", d.load->skipped_label},
                 {"skipped_shape", d.load->skipped_shape},
                 {"dropped_reservoir", d.load->dropped_reservoir}};
  }
  nn::write_text(dir / "dataset_summary.json", j.dump(2) + "\n");
  out << "exported " << d.split.train.size() << " train and " << d.split.test.size() << " test samples to "
      << dir.string() << '\n';
  return kExitOk;
}

// ---- invariant suite helpers ---------------------------------------------------------

using Check = std::function<std::string()>;  // returns a detail string; throws or fails via Failed

struct Failed {
  std::string why;
};

void record(std::vector<CheckResult>& out, const std::string& name, const Check& fn) {
  CheckResult r{name, CheckResult::Status::kPass, {}};
  try {
    r.detail = fn();
  } catch (const Failed& f) {
    r.status = CheckResult::Status::kFail;
    r.detail = f.why;
  } catch (const std::exception& e) {
    r.status = CheckResult::Status::kFail;
    r.detail = error_kind(e) + ": " + e.what();
  }
  out.push_back(std::move(r));
}

void skip(std::vector<CheckResult>& out, const std::string& name, const std::string& why) {
  out.push_back({name, CheckResult::Status::kSkip, why});
}

std::string bound_detail(double err, double tol) {
  std::ostringstream o;
  o.precision(3);
  o << "max error " << err << ", bound " << tol;
  if (!(err < tol)) throw Failed{o.str()};
  return o.str();
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

std::vector<double> uniform(std::size_t n, std::mt19937_64& g, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = d(g);
  return v;
}

nn::PlainModel random_model(const std::vector<nn::LayerSpec>& specs, std::uint64_t seed) {
  nn::PlainModel m = nn::init_model(specs, seed);
  std::mt19937_64 g(seed ^ 0xb1a5);
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  for (auto& l : m.layers) {
    for (auto& b : l.b) b = u(g);
  }
  return m;
}

double model_diff(const nn::PlainModel& a, const nn::PlainModel& b) {
  double d = 0.0;
  for (std::size_t l = 0; l < a.layers.size(); ++l) {
    d = std::max(d, max_abs_diff(a.layers[l].w.data, b.layers[l].w.data));
    d = std::max(d, max_abs_diff(a.layers[l].b, b.layers[l].b));
  }
  return d;
}

nn::PlainModel mean_model(const std::vector<nn::PlainModel>& parts) {
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

void he_checks(std::vector<CheckResult>& out, const ckks::CkksParams& params) {
  const auto ctx = ckks::CkksContext::create(params);
  const auto keys = ckks::keygen(*ctx, 4242);
  const std::size_t slots = ctx->slot_count();
  std::mt19937_64 g(17);
  const auto x = uniform(slots, g), y = uniform(slots, g);
  auto enc = [&](const std::vector<double>& v) {
    return ckks::encrypt(*ctx, ckks::encode(*ctx, v), keys.pub.encryption, g());
  };
  auto dec = [&](const ckks::Ciphertext& ct) { return ckks::decrypt(*ctx, ct, keys.secret); };
  const auto cx = enc(x), cy = enc(y);

  record(out, "he.encrypt_decrypt", [&] { return bound_detail(max_abs_diff(dec(cx), x), kEps0); });
  record(out, "he.add", [&] {
    std::vector<double> want(slots);
    for (std::size_t i = 0; i < slots; ++i) want[i] = x[i] + y[i];
    return bound_detail(max_abs_diff(dec(ckks::he_add(*ctx, cx, cy)), want), 2 * kEps0);
  });
  record(out, "he.mul", [&] {
    std::vector<double> want(slots);
    for (std::size_t i = 0; i < slots; ++i) want[i] = x[i] * y[i];
    const auto prod = ckks::he_mul(*ctx, cx, cy, keys.pub.relin);
    if (prod.level() + 1 != cx.level()) throw Failed{"product did not drop exactly one level"};
    return bound_detail(max_abs_diff(dec(prod), want), kEps1);
  });
  record(out, "he.rotate", [&] {
    std::vector<double> want(slots);
    for (std::size_t i = 0; i < slots; ++i) want[i] = x[(i + 1) % slots];
    return bound_detail(max_abs_diff(dec(ckks::rotate(*ctx, cx, 1, keys.pub.galois)), want), kEps1);
  });
  record(out, "he.serialize", [&] {
    const auto bytes = ckks::serialize(cx);
    const auto back = ckks::deserialize_ciphertext(bytes, *ctx);
    if (!(back == cx)) throw Failed{"ciphertext changed across a serialization round trip"};
    if (ckks::serialize(back) != bytes) throw Failed{"re-serialization is not byte-identical"};
    return std::to_string(bytes.size()) + " bytes";
  });

  const auto grid = tensor::SlotGrid::of(*ctx);
  if (!grid.kernels_supported()) {
    skip(out, "tensor.matvec", "slot count is not a square grid");
  } else {
    record(out, "tensor.matvec", [&] {
      const std::size_t u = std::min<std::size_t>(grid.mu, 5), v = std::min<std::size_t>(grid.mu, 3);
      tensor::Matrix w(u, v);
      for (auto& t : w.data) t = std::uniform_real_distribution<double>(-1, 1)(g);
      const auto a = uniform(u, g);
      std::vector<double> want(v, 0.0);
      for (std::size_t j = 0; j < v; ++j) {
        for (std::size_t i = 0; i < u; ++i) want[j] += a[i] * w(i, j);
      }
      double worst = 0.0;
      for (auto [o, rep] : {std::pair{tensor::Orientation::kTransposed, tensor::Replication::kRowReplicated},
                            std::pair{tensor::Orientation::kRowMajor, tensor::Replication::kColumnReplicated}}) {
        const auto pw = tensor::encrypt_packed(*ctx, tensor::encode_matrix(w, grid, o), keys.pub.encryption, g);
        const auto pa = tensor::encrypt_packed(*ctx, tensor::encode_vector(a, grid, rep), keys.pub.encryption, g);
        const auto r = tensor::matvec(*ctx, keys.pub, pw, pa);
        worst = std::max(worst, max_abs_diff(tensor::unpack_vector(tensor::decrypt_packed(*ctx, r, keys.secret)), want));
      }
      return bound_detail(worst, static_cast<double>(grid.mu) * kEps1);
    });
  }

  const std::vector<nn::LayerSpec> toy = {{4, 3, nn::Activation::kSilu}, {3, 2, nn::Activation::kSilu}};
  bool fits = grid.kernels_supported();
  try {
    if (fits) nn::check_fits(toy, grid);
  } catch (const Error&) {
    fits = false;
  }
  if (!fits) {
    skip(out, "nn.encrypted_gradients", "a 4-3-2 network does not fit the slot grid");
    return;
  }
  record(out, "nn.encrypted_gradients", [&] {
    ckks::OracleRefresh refresh(ctx, keys.secret, keys.pub.encryption);
    const nn::EncEnv env{*ctx, keys.pub, &refresh};
    const auto m = random_model(toy, 7);
    const std::vector<std::vector<double>> xs = {uniform(4, g, 0, 1), uniform(4, g, 0, 1)};
    const std::vector<std::vector<double>> ys = {{1, 0}, {0, 1}};
    const auto em = nn::encrypt_model(*ctx, m, keys.pub.encryption, g);
    std::vector<tensor::PackedVector> ex, ey;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      ex.push_back(nn::encrypt_input(*ctx, xs[i], keys.pub.encryption, g));
      ey.push_back(nn::encrypt_label(*ctx, toy, ys[i], keys.pub.encryption, g));
    }
    const auto enc = nn::loss_and_grads_enc(env, em, ex, ey);
    const auto plain = nn::loss_and_grads_plain(m, xs, ys, nn::ActivationMode::kPoly);
    double worst = 0.0;
    for (std::size_t l = 0; l < toy.size(); ++l) {
      const auto dw = tensor::unpack_matrix(tensor::decrypt_packed(*ctx, enc.grads.dw[l], keys.secret));
      const auto db = tensor::unpack_vector(tensor::decrypt_packed(*ctx, enc.grads.db[l], keys.secret));
      worst = std::max({worst, max_abs_diff(dw.data, plain.grads.dw[l].data), max_abs_diff(db, plain.grads.db[l])});
    }
    return bound_detail(worst, 5e-2);
  });
}

void fl_checks(std::vector<CheckResult>& out, const ckks::CkksParams& params) {
  const char* names[] = {"fl.aggregation", "fl.privacy_scan", "fl.sample_conservation"};
  fl::FlConfig cfg;
  cfg.mode = fl::Mode::kEncFl;
  cfg.offload = {0.1, 0.1};
  cfg.max_rounds = 2;
  cfg.ckks_params = params;
  cfg.architecture = nn::parse_architecture("8-8-6");
  cfg.train.batch_size = 8;
  cfg.train.learning_rate = 0.1;
  cfg.seed = 11;
  cfg.convergence.stop = false;
  cfg.parallel = false;
  try {
    const ckks::CkksContext probe(params);
    const auto grid = tensor::SlotGrid::of(probe);
    if (!grid.kernels_supported()) throw CapacityError("slot count is not a square grid");
    nn::check_fits(cfg.architecture, grid);
  } catch (const Error& e) {
    for (const char* n : names) skip(out, n, std::string("an 8-8-6 network does not fit: ") + e.what());
    return;
  }
  const auto all = data::synth_generate({8, 1.0}, data::scaled_table_counts(300), 5);
  auto split = data::scale_and_split(all, 0.8, 6);
  std::optional<fl::System> sys;
  double worst = 0.0;
  std::size_t calls = 0;
  std::string failure;
  try {
    sys.emplace(cfg, data::partition_for_vus(split.train, 2, 7), split.test);
    sys->set_aggregate_hook([&](std::size_t, const std::vector<nn::PlainModel>& in, const nn::PlainModel& o) {
      ++calls;
      worst = std::max(worst, model_diff(o, mean_model(in)));
    });
    sys->run();
  } catch (const std::exception& e) {
    failure = error_kind(e) + ": " + e.what();
  }
  if (!failure.empty()) {
    for (const char* n : names) out.push_back({n, CheckResult::Status::kFail, failure});
    return;
  }
  record(out, names[0], [&] {
    if (calls != cfg.max_rounds) throw Failed{"aggregate ran " + std::to_string(calls) + " times"};
    return bound_detail(worst, 3 * kEps0 + kEps1);
  });
  record(out, names[1], [&] {
    const auto& p = sys->privacy();
    if (!p.passed()) throw Failed{p.violations.front()};
    return std::to_string(p.messages) + " messages, " + std::to_string(p.patterns) + " patterns";
  });
  record(out, names[2], [&] {
    if (sys->sample_count() != sys->initial_sample_count()) {
      throw Failed{std::to_string(sys->sample_count()) + " samples held, " +
                   std::to_string(sys->initial_sample_count()) + " at start"};
    }
    return std::to_string(sys->sample_count()) + " samples";
  });
}

void plain_checks(std::vector<CheckResult>& out) {
  record(out, "chebyshev.sup_error", [] {
    double worst = 0.0;
    for (auto [approx, f] : {std::pair{&tensor::silu_approx(), &tensor::silu},
                             std::pair{&tensor::silu_derivative_approx(), &tensor::silu_derivative}}) {
      const std::size_t n = 20001;
      for (std::size_t i = 0; i < n; ++i) {
        const double t = approx->a + (approx->b - approx->a) * static_cast<double>(i) / (n - 1);
        worst = std::max(worst, std::abs((*approx)(t) - f(t)));
      }
    }
    return bound_detail(worst, 1e-2);
  });

  for (auto [mode, label] : {std::pair{nn::ActivationMode::kAnalytic, "nn.finite_differences.analytic"},
                             std::pair{nn::ActivationMode::kPolyExactDerivative, "nn.finite_differences.polynomial"}}) {
    record(out, label, [mode] {
      const std::vector<nn::LayerSpec> specs = {{4, 3, nn::Activation::kSilu}, {3, 2, nn::Activation::kSilu}};
      nn::PlainModel m = random_model(specs, 31);
      std::mt19937_64 g(5);
      const std::vector<std::vector<double>> x = {uniform(4, g), uniform(4, g), uniform(4, g)};
      const std::vector<std::vector<double>> y = {{1, 0}, {0, 1}, {1, 0}};
      const auto lg = nn::loss_and_grads_plain(m, x, y, mode);
      const double h = 1e-5;
      double worst = 0.0;
      auto probe = [&](double& param, double analytic) {
        const double keep = param;
        param = keep + h;
        const double up = nn::loss_and_grads_plain(m, x, y, mode).loss;
        param = keep - h;
        const double down = nn::loss_and_grads_plain(m, x, y, mode).loss;
        param = keep;
        const double fd = (up - down) / (2 * h);
        worst = std::max(worst, std::abs(fd - analytic) / std::max(1e-6, std::max(std::abs(fd), std::abs(analytic))));
      };
      for (std::size_t l = 0; l < m.layers.size(); ++l) {
        for (std::size_t k = 0; k < m.layers[l].w.data.size(); ++k) probe(m.layers[l].w.data[k], lg.grads.dw[l].data[k]);
        for (std::size_t k = 0; k < m.layers[l].b.size(); ++k) probe(m.layers[l].b[k], lg.grads.db[l][k]);
      }
      return bound_detail(worst, 1e-4);
    });
  }

  record(out, "data.split_and_partition", [] {
    const auto counts = data::scaled_table_counts(600);
    if (data::total(counts) != 600) throw Failed{"scaled class counts do not sum to 600"};
    const auto all = data::synth_generate({6, 1.0}, counts, 3);
    const auto split = data::scale_and_split(all, 0.8, 4);
    if (split.train.size() + split.test.size() != all.size()) throw Failed{"split lost samples"};
    const auto tc = data::count_classes(split.train);
    for (std::size_t k = 0; k < data::kNumClasses; ++k) {
      const auto want = static_cast<std::size_t>(std::llround(0.8 * static_cast<double>(counts[k])));
      if (tc[k] != want) throw Failed{"class " + std::to_string(k) + " is not split 80/20"};
    }
    for (const auto* part : {&split.train, &split.test}) {
      for (const auto& s : *part) {
        for (double v : s.features) {
          if (v < 0.0 || v > 1.0) throw Failed{"scaled feature outside [0, 1]"};
        }
      }
    }
    const auto shards = data::partition_for_vus(split.train, 3, 5);
    std::size_t sum = 0;
    for (std::size_t k = 0; k < data::kNumClasses; ++k) {
      std::size_t lo = SIZE_MAX, hi = 0;
      for (const auto& s : shards) {
        const auto c = data::count_classes(s)[k];
        lo = std::min(lo, c);
        hi = std::max(hi, c);
      }
      if (hi - lo > 1) throw Failed{"shards differ by more than one sample of a class"};
    }
    for (const auto& s : shards) sum += s.size();
    if (sum != split.train.size()) throw Failed{"partition lost samples"};
    const auto shard = data::split_offload(shards[0], 0.2, 6);
    const auto want = static_cast<std::size_t>(std::llround(0.2 * static_cast<double>(shards[0].size())));
    if (shard.offload.size() != want || shard.offload.size() + shard.local.size() != shards[0].size()) {
      throw Failed{"offload split has the wrong size"};
    }
    const auto back = data::deserialize_split(data::serialize_split(split));
    if (back.train != split.train || back.test != split.test || back.scaler.min != split.scaler.min ||
        back.scaler.max != split.scaler.max) {
      throw Failed{"dataset container round trip changed the data"};
    }
    return std::to_string(all.size()) + " samples";
  });

  record(out, "metrics.worked_examples", [] {
    // 2 classes, rows = truth: [[3, 1], [2, 4]]. By hand: accuracy 7/10, precision 3/5 and 4/5,
    // recall 3/4 and 4/6, one-vs-rest accuracy 7/10 for both classes.
    const auto m = metrics::evaluate(metrics::ConfusionMatrix::from_counts({{3, 1}, {2, 4}}, {"a", "b"}));
    const double want[] = {0.7, 0.7, 0.7, (0.75 + 4.0 / 6.0) / 2};
    const double got[] = {m.micro_accuracy, m.ovr_accuracy, m.macro_precision, m.macro_recall};
    for (int i = 0; i < 4; ++i) {
      if (std::abs(got[i] - want[i]) > 1e-12) throw Failed{"2-class example disagrees with the hand computation"};
    }
    // Nothing predicted as b: its precision term is undefined, counts as 0 and is flagged.
    const auto z = metrics::evaluate(metrics::ConfusionMatrix::from_counts({{2, 0}, {1, 0}}, {"a", "b"}));
    if (!z.precision_undefined[1] || z.precision_undefined[0] || std::abs(z.macro_precision - (2.0 / 3.0) / 2) > 1e-12) {
      throw Failed{"zero-denominator precision is not handled as 0 and flagged"};
    }
    return std::string();
  });

  record(out, "config.round_trip", [] {
    ExperimentConfig c;
    c.offload = {0.1, 0.25};
    c.compare.modes = {fl::Mode::kNEncFl, fl::Mode::kEncFl};
    c.compare.offload = {0.1, 0.2};
    const auto text = serialize_config(c);
    const auto back = parse_config(text, ".");
    if (!(back == c)) throw Failed{"parse(serialize(config)) differs from config"};
    if (serialize_config(back) != text) throw Failed{"serialization is not canonical"};
    return std::string();
  });
}

}  // namespace

// ---- public API ----------------------------------------------------------------------

PreparedData prepare_data(const ExperimentConfig& c, std::size_t vus) {
  PreparedData d;
  std::vector<data::Sample> samples;
  const std::uint64_t seed = c.data_seed;
  if (c.dataset.kind == DatasetSource::Kind::kSynthetic) {
    samples = data::synth_generate({c.dataset.features, c.dataset.separation},
                                   data::scaled_table_counts(c.dataset.samples), seed);
    for (std::size_t i = 0; i < c.dataset.features; ++i) d.feature_names.push_back("f" + std::to_string(i));
  } else {
    const auto schema = data::load_schema(c.dataset.schema);
    data::LoadOptions opts;
    opts.reservoir_per_class = c.dataset.reservoir_per_class;
    opts.seed = seed + 4;
    auto loaded = data::load_csv(c.dataset.csv, schema, opts);
    d.load = loaded.summary;
    d.feature_names = schema.features;
    if (c.dataset.rebalance) {
      data::ClassCounts targets;
      if (c.dataset.samples > 0) {
        targets = data::scaled_table_counts(c.dataset.samples);
      } else {
        const auto have = data::count_classes(loaded.samples);
        bool enough = true;
        for (std::size_t k = 0; k < data::kNumClasses; ++k) enough = enough && have[k] >= data::kTableCounts[k];
        targets = enough ? data::kTableCounts : data::scaled_table_counts(loaded.samples.size());
      }
      samples = data::rebalance(loaded.samples, targets, seed + 3);
    } else {
      samples = std::move(loaded.samples);
    }
  }
  d.split = data::scale_and_split(samples, c.train_fraction, seed + 1);
  d.shards = data::partition_for_vus(d.split.train, vus, seed + 2);
  return d;
}

std::string convergence_csv(const std::vector<fl::RoundRecord>& rounds) {
  std::ostringstream o;
  o << "round,ovr_accuracy,micro_accuracy,macro_precision,macro_recall,moving_average\n";
  for (const auto& r : rounds) {
    o << r.round << ',' << format_number(r.test.ovr_accuracy) << ',' << format_number(r.test.micro_accuracy) << ','
      << format_number(r.test.macro_precision) << ',' << format_number(r.test.macro_recall) << ','
      << (r.moving_average ? format_number(*r.moving_average) : "") << '\n';
  }
  return o.str();
}

fl::RunResult run_experiment(const ExperimentConfig& c, const PreparedData& data, const fs::path& dir,
                             std::ostream& progress) {
  fs::create_directories(dir);
  nn::write_text(dir / "config.json", serialize_config(c));
  const fl::FlConfig cfg = to_fl_config(c);
  std::ofstream rounds(dir / "rounds.jsonl", std::ios::binary | std::ios::trunc);
  std::ofstream timings(dir / "timings.jsonl", std::ios::binary | std::ios::trunc);
  if (!rounds || !timings) throw DataError("cannot write logs in " + dir.string());

  fl::RunResult result;
  std::uint64_t params_hash = 0;
  try {
    fl::System sys(cfg, data.shards, data.split.test);
    if (sys.context()) params_hash = sys.context()->params_hash();
    result = sys.run([&](const fl::RoundRecord& r, const fl::PhaseTimings& t) {
      append_line(rounds, fl::round_json(r));
      append_line(timings, fl::timings_json(t));
      progress << "round " << r.round << "  micro " << format_number(std::round(r.test.micro_accuracy * 1e4) / 1e4)
               << "  ovr " << format_number(std::round(r.test.ovr_accuracy * 1e4) / 1e4) << '\n';
    });
  } catch (const std::exception& e) {
    ordered_json j;
    j["type"] = "abort";
    j["error"] = error_kind(e);
    j["message"] = e.what();
    append_line(rounds, j.dump());
    throw;
  }
  append_line(rounds, fl::summary_json(cfg, result));

  nn::CheckpointManifest manifest;
  manifest.architecture = c.architecture;
  manifest.kind = "plain";
  manifest.params_hash = params_hash;
  manifest.train = cfg.train;
  manifest.note = std::string(fl::mode_name(c.mode)) + " global model; " + dataset_note(c, data);
  nn::save_checkpoint(dir / "final_model.hefl", result.final_model, manifest);
  nn::write_text(dir / "confusion.csv", metrics::confusion_csv(result.final_confusion));
  nn::write_text(dir / "per_class.csv", metrics::per_class_csv(result.final_confusion));
  nn::write_text(dir / "metrics.csv", metrics_csv(result));
  nn::write_text(dir / "convergence.csv", convergence_csv(result.rounds));
  return result;
}

std::vector<CheckResult> run_invariant_suite(const ckks::CkksParams& params) {
  std::vector<CheckResult> out;
  const auto violations = params.violations();
  if (violations.empty()) {
    out.push_back({"params.invariants", CheckResult::Status::kPass,
                   "R = " + std::to_string(params.ring_dimension) + ", " +
                       std::to_string(params.modulus_chain.size()) + " chain moduli"});
  } else {
    for (const auto& v : violations) out.push_back({"params.invariants", CheckResult::Status::kFail, v});
  }
  if (violations.empty()) {
    he_checks(out, params);
    fl_checks(out, params);
  } else {
    for (const char* n : {"he.encrypt_decrypt", "he.add", "he.mul", "he.rotate", "he.serialize", "tensor.matvec",
                          "nn.encrypted_gradients", "fl.aggregation", "fl.privacy_scan", "fl.sample_conservation"}) {
      skip(out, n, "invalid parameters");
    }
  }
  plain_checks(out);
  return out;
}

ckks::CkksParams load_profile(const std::string& name_or_path) {
  const auto names = ckks::preset_names();
  if (std::find(names.begin(), names.end(), name_or_path) != names.end()) return ckks::preset(name_or_path);
  if (!fs::is_regular_file(name_or_path)) {
    std::string known;
    for (const auto& n : names) known += (known.empty() ? "" : ", ") + n;
    throw ConfigError("unknown profile '" + name_or_path + "' (presets: " + known + "; or a parameter JSON file)");
  }
  json j;
  try {
    std::ifstream in(name_or_path);
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(name_or_path + ": " + e.what());
  }
  ckks::CkksParams p;
  try {
    p.ring_dimension = j.at("ring_dimension").get<std::size_t>();
    p.modulus_chain = j.at("modulus_chain").get<std::vector<ckks::u64>>();
    p.special_modulus = j.at("special_modulus").get<ckks::u64>();
    p.scale = j.at("scale").get<double>();
    p.refresh_threshold = j.value("refresh_threshold", 0);
    p.error_stddev = j.value("error_stddev", 3.2);
  } catch (const json::exception& e) {
    throw ConfigError(name_or_path + ": " + e.what());
  }
  return p;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"hefl: federated intrusion detection with homomorphically encrypted offloading", "hefl"};
  app.require_subcommand(1);

  Overrides run_o, cmp_o, exp_o;
  bool quiet = false;
  auto* run = app.add_subcommand("run", "run one experiment");
  add_common(run, run_o, true);
  run->add_flag("--quiet", quiet, "no per-round progress");
  auto* cmp = app.add_subcommand("compare", "run every mode in compare.modes over the vus x offload grid");
  add_common(cmp, cmp_o, false);
  cmp->add_flag("--quiet", quiet, "no per-round progress");
  std::string profile = "desk";
  auto* ver = app.add_subcommand("verify", "check the library invariants against a CKKS parameter set");
  ver->add_option("--profile", profile, "preset name or parameter JSON file")->capture_default_str();
  std::string plot_dir;
  auto* plot = app.add_subcommand("plot-data", "collect round logs under a directory into curves.csv");
  plot->add_option("--out", plot_dir, "directory holding run outputs")->required();
  auto* exp = app.add_subcommand("export", "write the prepared dataset (CSV, binary container, summary)");
  add_common(exp, exp_o, false);

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*run) return cmd_run(run_o, quiet, out);
    if (*cmp) return cmd_compare(cmp_o, quiet, out, err);
    if (*ver) return cmd_verify(profile, out);
    if (*plot) return cmd_plot_data(plot_dir, out);
    if (*exp) return cmd_export(exp_o, out);
  } catch (const ConfigIssues& e) {
    for (const auto& issue : e.issues()) err << "error: " << issue << '\n';
    return kExitConfig;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << error_kind(e) << ": " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitConfig;
}

}  // namespace hefl::app
