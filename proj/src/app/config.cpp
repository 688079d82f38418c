// Copyright 2026 The hefl Authors
// SPDX-License-Identifier: Apache-2.0

#include "hefl/app/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "hefl/ckks/params.hpp"
#include "json.hpp"

namespace hefl::app {

namespace {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& s : items) out += (out.empty() ? "" : "; ") + s;
  return out;
}

/// Pulls typed fields out of one JSON object, recording type errors and unknown keys.
class Fields {
 public:
  Fields(const json& obj, std::string where, std::vector<std::string>& issues)
      : obj_(obj), where_(std::move(where)), issues_(issues) {
    if (!obj_.is_object()) issues_.push_back(where_ + " must be an object");
  }

  ~Fields() {
    if (!obj_.is_object()) return;
    for (const auto& [key, value] : obj_.items()) {
      if (!seen_.contains(key)) issues_.push_back("unknown key " + prefix() + key);
    }
  }

  const json* get(const std::string& key) {
    seen_.insert(key);
    if (!obj_.is_object() || !obj_.contains(key)) return nullptr;
    return &obj_.at(key);
  }

  void str(const std::string& key, std::string& out) {
    if (const auto* v = get(key)) {
      if (v->is_string()) {
        out = v->get<std::string>();
      } else {
        bad(key, "a string");
      }
    }
  }
  void count(const std::string& key, std::size_t& out) {
    if (const auto* v = get(key)) {
      if (v->is_number_unsigned()) {
        out = v->get<std::size_t>();
      } else {
        bad(key, "a non-negative integer");
      }
    }
  }
  void u64(const std::string& key, std::uint64_t& out) {
    if (const auto* v = get(key)) {
      if (v->is_number_unsigned()) {
        out = v->get<std::uint64_t>();
      } else {
        bad(key, "a non-negative integer");
      }
    }
  }
  void real(const std::string& key, double& out) {
    if (const auto* v = get(key)) {
      if (v->is_number()) {
        out = v->get<double>();
      } else {
        bad(key, "a number");
      }
    }
  }
  void flag(const std::string& key, bool& out) {
    if (const auto* v = get(key)) {
      if (v->is_boolean()) {
        out = v->get<bool>();
      } else {
        bad(key, "true or false");
      }
    }
  }
  template <typename Parse, typename T>
  void parsed(const std::string& key, T& out, Parse parse) {
    std::string text;
    if (get(key) == nullptr) return;
    const auto before = issues_.size();
    str(key, text);
    if (issues_.size() != before) return;
    try {
      out = parse(text);
    } catch (const Error& e) {
      issues_.push_back(prefix() + key + ": " + e.what());
    }
  }

  void bad(const std::string& key, const char* want) { issues_.push_back(prefix() + key + " must be " + want); }
  std::string prefix() const { return where_.empty() ? "" : where_ + "."; }

 private:
  const json& obj_;
  std::string where_;
  std::vector<std::string>& issues_;
  std::set<std::string> seen_;
};

nn::ActivationMode parse_activation(std::string_view s) {
  if (s == "analytic") return nn::ActivationMode::kAnalytic;
  if (s == "poly") return nn::ActivationMode::kPoly;
  if (s == "poly_exact_derivative") return nn::ActivationMode::kPolyExactDerivative;
  throw ConfigError("unknown activation '" + std::string(s) + "' (expected analytic, poly or poly_exact_derivative)");
}

std::string resolve(const std::string& p, const std::filesystem::path& base) {
  if (p.empty()) return p;
  return std::filesystem::absolute(base / p).lexically_normal().string();
}

}  // namespace

ConfigIssues::ConfigIssues(std::vector<std::string> issues)
    : ConfigError("invalid config: " + join(issues)), issues_(std::move(issues)) {}

std::string_view activation_name(nn::ActivationMode m) {
  switch (m) {
    case nn::ActivationMode::kAnalytic: return "analytic";
    case nn::ActivationMode::kPoly: return "poly";
    case nn::ActivationMode::kPolyExactDerivative: return "poly_exact_derivative";
  }
  return "poly";
}

ExperimentConfig parse_config(std::string_view json_text, const std::filesystem::path& base_dir) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigIssues({std::string("config is not valid JSON: ") + e.what()});
  }
  ExperimentConfig c;
  std::vector<std::string> issues;
  {
    Fields f(root, "", issues);
    f.str("name", c.name);
    if (f.get("mode") == nullptr) issues.push_back("missing key mode");
    f.parsed("mode", c.mode, fl::parse_mode);
    f.count("vus", c.vus);
    f.count("rsus", c.rsus);
    if (const auto* v = f.get("offload")) {
      if (v->is_number()) {
        c.offload = {v->get<double>()};
      } else if (v->is_array() && std::all_of(v->begin(), v->end(), [](const json& x) { return x.is_number(); })) {
        c.offload = v->get<std::vector<double>>();
      } else {
        f.bad("offload", "a number or an array of numbers");
      }
    }
    f.count("max_rounds", c.max_rounds);
    f.str("ckks_profile", c.ckks_profile);
    f.parsed("refresh_mode", c.refresh_mode, fl::parse_refresh_mode);
    f.str("architecture", c.architecture);
    if (const auto* t = f.get("train")) {
      Fields g(*t, "train", issues);
      g.real("learning_rate", c.learning_rate);
      g.count("batch_size", c.batch_size);
      g.count("epochs_per_round", c.epochs_per_round);
      g.parsed("activation", c.activation, parse_activation);
    }
    if (const auto* t = f.get("convergence")) {
      Fields g(*t, "convergence", issues);
      g.count("window", c.convergence_window);
      g.real("threshold", c.convergence_threshold);
      g.flag("stop", c.stop_on_convergence);
    }
    if (const auto* t = f.get("seeds")) {
      Fields g(*t, "seeds", issues);
      g.u64("data", c.data_seed);
      g.u64("protocol", c.protocol_seed);
    }
    if (const auto* t = f.get("dataset")) {
      Fields g(*t, "dataset", issues);
      std::string source = "synthetic";
      g.str("source", source);
      if (source == "synthetic") {
        c.dataset.kind = DatasetSource::Kind::kSynthetic;
        g.count("samples", c.dataset.samples);
        g.count("features", c.dataset.features);
        g.real("separation", c.dataset.separation);
      } else if (source == "csv") {
        c.dataset.kind = DatasetSource::Kind::kCsv;
        c.dataset.samples = 0;
        if (g.get("path") == nullptr) issues.push_back("dataset.path is required for a csv source");
        if (g.get("schema") == nullptr) issues.push_back("dataset.schema is required for a csv source");
        g.str("path", c.dataset.csv);
        g.str("schema", c.dataset.schema);
        g.count("samples", c.dataset.samples);
        g.count("reservoir_per_class", c.dataset.reservoir_per_class);
        g.flag("rebalance", c.dataset.rebalance);
        c.dataset.csv = resolve(c.dataset.csv, base_dir);
        c.dataset.schema = resolve(c.dataset.schema, base_dir);
      } else {
        issues.push_back("dataset.source must be synthetic or csv");
      }
    }
    f.real("train_fraction", c.train_fraction);
    f.str("output_dir", c.output_dir);
    f.flag("parallel", c.parallel);
    f.flag("log_server_loss", c.log_server_loss);
    if (const auto* t = f.get("compare")) {
      Fields g(*t, "compare", issues);
      if (const auto* m = g.get("modes")) {
        if (!m->is_array()) {
          g.bad("modes", "an array of mode names");
        } else {
          for (const auto& x : *m) {
            try {
              c.compare.modes.push_back(fl::parse_mode(x.is_string() ? x.get<std::string>() : x.dump()));
            } catch (const ConfigError& e) {
              issues.push_back(std::string("compare.modes: ") + e.what());
            }
          }
        }
      }
      if (const auto* v = g.get("vus")) {
        if (v->is_array() && std::all_of(v->begin(), v->end(), [](const json& x) { return x.is_number_unsigned(); })) {
          c.compare.vus = v->get<std::vector<std::size_t>>();
        } else {
          g.bad("vus", "an array of non-negative integers");
        }
      }
      if (const auto* v = g.get("offload")) {
        if (v->is_array() && std::all_of(v->begin(), v->end(), [](const json& x) { return x.is_number(); })) {
          c.compare.offload = v->get<std::vector<double>>();
        } else {
          g.bad("offload", "an array of numbers");
        }
      }
    }
  }
  // Fields with type errors kept their defaults, so the semantic checks still apply.
  for (auto& p : config_problems(c)) issues.push_back(std::move(p));
  if (!issues.empty()) throw ConfigIssues(std::move(issues));
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigIssues({"config file not found: " + path.string()});
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.has_parent_path() ? path.parent_path() : std::filesystem::path("."));
}

std::string serialize_config(const ExperimentConfig& c) {
  ordered_json j;
  j["name"] = c.name;
  j["mode"] = std::string(fl::mode_name(c.mode));
  j["vus"] = c.vus;
  j["rsus"] = c.rsus;
  j["offload"] = c.offload.size() == 1 ? ordered_json(c.offload.front()) : ordered_json(c.offload);
  j["max_rounds"] = c.max_rounds;
  j["ckks_profile"] = c.ckks_profile;
  j["refresh_mode"] = std::string(fl::refresh_mode_name(c.refresh_mode));
  j["architecture"] = c.architecture;
  j["train"] = {{"learning_rate", c.learning_rate},
                {"batch_size", c.batch_size},
                {"epochs_per_round", c.epochs_per_round},
                {"activation", std::string(activation_name(c.activation))}};
  j["convergence"] = {{"window", c.convergence_window},
                      {"threshold", c.convergence_threshold},
                      {"stop", c.stop_on_convergence}};
  j["seeds"] = {{"data", c.data_seed}, {"protocol", c.protocol_seed}};
  ordered_json d;
  if (c.dataset.kind == DatasetSource::Kind::kSynthetic) {
    d["source"] = "synthetic";
    d["samples"] = c.dataset.samples;
    d["features"] = c.dataset.features;
    d["separation"] = c.dataset.separation;
  } else {
    d["source"] = "csv";
    d["path"] = c.dataset.csv;
    d["schema"] = c.dataset.schema;
    d["samples"] = c.dataset.samples;
    d["reservoir_per_class"] = c.dataset.reservoir_per_class;
    d["rebalance"] = c.dataset.rebalance;
  }
  j["dataset"] = d;
  j["train_fraction"] = c.train_fraction;
  j["output_dir"] = c.output_dir;
  j["parallel"] = c.parallel;
  j["log_server_loss"] = c.log_server_loss;
  ordered_json modes = ordered_json::array();
  for (auto m : c.compare.modes) modes.push_back(std::string(fl::mode_name(m)));
  j["compare"] = {{"modes", modes}, {"vus", c.compare.vus}, {"offload", c.compare.offload}};
  return j.dump(2) + "\n";
}

std::vector<std::string> config_problems(const ExperimentConfig& c) {
  std::vector<std::string> out;
  if (c.vus == 0) out.push_back("vus must be at least 1");
  if (c.rsus == 0) out.push_back("rsus must be at least 1");
  if (c.offload.empty() || (c.offload.size() != 1 && c.offload.size() != c.vus)) {
    out.push_back("offload must be one fraction or one per VU (" + std::to_string(c.vus) + ")");
  }
  auto fraction = [](double p) { return p >= 0.0 && p <= 1.0; };
  for (double p : c.offload) {
    if (!fraction(p)) out.push_back("offload fraction " + std::to_string(p) + " is outside [0, 1]");
  }
  std::vector<nn::LayerSpec> arch;
  try {
    arch = nn::parse_architecture(c.architecture);
  } catch (const Error& e) {
    out.push_back(std::string("architecture: ") + e.what());
  }
  if (!arch.empty() && arch.back().out_dim != data::kNumClasses) {
    out.push_back("architecture must end in " + std::to_string(data::kNumClasses) + " outputs");
  }
  const bool needs_ckks = c.mode == fl::Mode::kEncFl ||
                          std::find(c.compare.modes.begin(), c.compare.modes.end(), fl::Mode::kEncFl) != c.compare.modes.end();
  if (needs_ckks) {
    const auto names = ckks::preset_names();
    if (std::find(names.begin(), names.end(), c.ckks_profile) == names.end()) {
      out.push_back("unknown ckks_profile '" + c.ckks_profile + "'");
    }
  }
  if (!(c.learning_rate > 0.0)) out.push_back("train.learning_rate must be positive");
  if (c.batch_size == 0) out.push_back("train.batch_size must be at least 1");
  if (c.convergence_window == 0) out.push_back("convergence.window must be at least 1");
  if (!(c.convergence_threshold >= 0.0)) out.push_back("convergence.threshold must be non-negative");
  if (!(c.train_fraction > 0.0 && c.train_fraction < 1.0)) out.push_back("train_fraction must lie strictly between 0 and 1");
  if (c.output_dir.empty()) out.push_back("output_dir must not be empty");

  std::size_t features = 0;
  if (c.dataset.kind == DatasetSource::Kind::kSynthetic) {
    if (c.dataset.samples < 2 * data::kNumClasses) out.push_back("dataset.samples must be at least 12");
    if (c.dataset.features == 0) out.push_back("dataset.features must be at least 1");
    if (!(c.dataset.separation >= 0.0)) out.push_back("dataset.separation must be non-negative");
    features = c.dataset.features;
  } else {
    if (!std::filesystem::is_regular_file(c.dataset.csv)) out.push_back("dataset file not found: " + c.dataset.csv);
    if (!std::filesystem::is_regular_file(c.dataset.schema)) {
      out.push_back("schema file not found: " + c.dataset.schema);
    } else {
      try {
        features = data::load_schema(c.dataset.schema).features.size();
      } catch (const Error& e) {
        out.push_back(std::string("dataset.schema: ") + e.what());
      }
    }
  }
  if (!arch.empty() && features != 0 && arch.front().in_dim != features) {
    out.push_back("architecture expects " + std::to_string(arch.front().in_dim) + " inputs but the dataset has " +
                  std::to_string(features) + " features");
  }
  std::set<fl::Mode> seen;
  for (auto m : c.compare.modes) {
    if (!seen.insert(m).second) out.push_back("compare.modes lists " + std::string(fl::mode_name(m)) + " twice");
  }
  for (auto n : c.compare.vus) {
    if (n == 0) out.push_back("compare.vus entries must be at least 1");
  }
  for (double p : c.compare.offload) {
    if (!fraction(p)) out.push_back("compare.offload fraction " + std::to_string(p) + " is outside [0, 1]");
  }
  if (!c.compare.vus.empty() && c.offload.size() > 1) {
    out.push_back("compare.vus needs a single uniform offload fraction");
  }
  return out;
}

fl::FlConfig to_fl_config(const ExperimentConfig& c) {
  fl::FlConfig f;
  f.mode = c.mode;
  f.rsus = c.rsus;
  f.offload = c.offload.size() == 1 ? std::vector<double>(c.vus, c.offload.front()) : c.offload;
  f.max_rounds = c.max_rounds;
  f.ckks_profile = c.ckks_profile;
  f.architecture = nn::parse_architecture(c.architecture);
  f.train.learning_rate = c.learning_rate;
  f.train.batch_size = c.batch_size;
  f.train.epochs_per_round = c.epochs_per_round;
  f.train.activation = c.activation;
  f.train.seed = c.protocol_seed;
  f.seed = c.protocol_seed;
  f.refresh_mode = c.refresh_mode;
  f.convergence = {c.convergence_window, c.convergence_threshold, c.stop_on_convergence};
  f.parallel = c.parallel;
  f.log_server_loss = c.log_server_loss;
  return f;
}

}  // namespace hefl::app
