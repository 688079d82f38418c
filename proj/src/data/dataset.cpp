// Copyright 2026 The hefl Authors
// SPDX-License-Identifier: Apache-2.0

#include "hefl/data/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "hefl/error.hpp"
#include "json.hpp"

namespace hefl::data {

namespace {

// Bit-reproducible helpers; the <random> distributions are not portable across libraries.
double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

double gaussian(std::mt19937_64& rng) {
  double u = uniform01(rng);
  while (u <= 0.0) u = uniform01(rng);
  const double v = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u)) * std::cos(2.0 * std::numbers::pi * v);
}

template <typename T>
void shuffle(std::vector<T>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng() % i]);
}

std::array<std::vector<std::size_t>, kNumClasses> by_class(std::span<const Sample> samples) {
  std::array<std::vector<std::size_t>, kNumClasses> out;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].label >= kNumClasses) throw DataError("sample label out of range");
    out[samples[i].label].push_back(i);
  }
  return out;
}

/// Splits `total` into parts proportional to `weights` with largest-remainder rounding.
/// Ties go to the lower index.
std::vector<std::size_t> apportion(std::size_t total, std::span<const double> weights) {
  double sum = 0.0;
  for (double w : weights) sum += w;
  std::vector<std::size_t> out(weights.size(), 0);
  if (sum <= 0.0 || total == 0) return out;
  std::vector<std::pair<double, std::size_t>> rem;
  std::size_t used = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double exact = static_cast<double>(total) * weights[i] / sum;
    out[i] = static_cast<std::size_t>(std::floor(exact));
    used += out[i];
    rem.emplace_back(exact - std::floor(exact), i);
  }
  std::stable_sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t k = 0; used < total; ++k, ++used) out[rem[k % rem.size()].second] += 1;
  return out;
}

std::size_t feature_count(std::span<const Sample> samples) {
  if (samples.empty()) return 0;
  const std::size_t k = samples.front().features.size();
  for (const auto& s : samples) {
    if (s.features.size() != k) throw DataError("samples disagree on feature count");
  }
  return k;
}

bool parse_double(std::string_view field, double& out) {
  while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) field.remove_prefix(1);
  while (!field.empty() && (field.back() == ' ' || field.back() == '\t' || field.back() == '\r')) {
    field.remove_suffix(1);
  }
  if (field.empty()) return false;
  if (field.front() == '+') field.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), out);
  return ec == std::errc() && ptr == field.data() + field.size() && std::isfinite(out);
}

std::string trim(std::string s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.pop_back();
  std::size_t a = 0;
  while (a < s.size() && s[a] == ' ') ++a;
  return s.substr(a);
}

}  // namespace

std::optional<std::size_t> class_index(std::string_view name) {
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    if (kClassNames[c] == name) return c;
  }
  return std::nullopt;
}

ClassCounts count_classes(std::span<const Sample> samples) {
  ClassCounts c{};
  for (const auto& s : samples) {
    if (s.label >= kNumClasses) throw DataError("sample label out of range");
    ++c[s.label];
  }
  return c;
}

std::size_t total(const ClassCounts& c) {
  std::size_t t = 0;
  for (auto v : c) t += v;
  return t;
}

ClassCounts scaled_table_counts(std::size_t n) {
  std::array<double, kNumClasses> w{};
  for (std::size_t c = 0; c < kNumClasses; ++c) w[c] = static_cast<double>(kTableCounts[c]);
  const auto parts = apportion(n, w);
  ClassCounts out{};
  std::copy(parts.begin(), parts.end(), out.begin());
  return out;
}

// ---- CSV --------------------------------------------------------------------

std::optional<std::size_t> Schema::map_label(std::string_view raw) const {
  std::optional<std::size_t> best;
  std::size_t best_len = 0;
  for (const auto& [key, cls] : label_map) {
    if (!key.empty() && key.back() == '*') {
      const std::string_view prefix(key.data(), key.size() - 1);
      if (raw.starts_with(prefix) && (!best || prefix.size() + 1 > best_len)) {
        best = cls;
        best_len = prefix.size() + 1;
      }
    } else if (raw == key) {
      return cls;
    }
  }
  return best;
}

Schema parse_schema(std::string_view json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("schema: ") + e.what());
  }
  Schema s;
  try {
    s.label_column = j.at("label_column").get<std::string>();
    s.features = j.at("features").get<std::vector<std::string>>();
    for (const auto& [key, value] : j.at("label_map").items()) {
      const auto name = value.get<std::string>();
      const auto cls = class_index(name);
      if (!cls) throw ConfigError("schema: label_map target \"" + name + "\" is not a class");
      s.label_map.emplace_back(key, *cls);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("schema: ") + e.what());
  }
  if (s.features.empty()) throw ConfigError("schema: no feature columns");
  if (s.label_map.empty()) throw ConfigError("schema: empty label_map");
  return s;
}

Schema load_schema(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("schema file not found: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_schema(ss.str());
}

std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(ch);
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else if (ch != '\r' && ch != '\n') {
      cur.push_back(ch);
    }
  }
  out.push_back(std::move(cur));
  return out;
}

LoadResult load_csv(const std::filesystem::path& path, const Schema& schema, const LoadOptions& opts) {
  std::ifstream in(path);
  if (!in) throw DataError("dataset file not found: " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError("dataset file is empty: " + path.string());
  auto header = split_csv_line(line);
  for (auto& h : header) h = trim(std::move(h));
  if (!header.empty() && header[0].starts_with("\xEF\xBB\xBF")) header[0].erase(0, 3);

  auto column = [&](const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw DataError("dataset is missing mapped column \"" + name + "\"");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t label_col = column(schema.label_column);
  std::vector<std::size_t> feature_cols;
  for (const auto& f : schema.features) feature_cols.push_back(column(f));

  LoadResult res;
  std::mt19937_64 rng(opts.seed);
  std::array<std::vector<Sample>, kNumClasses> reservoir;
  std::array<std::size_t, kNumClasses> seen{};

  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    ++res.summary.rows;
    const auto fields = split_csv_line(line);
    if (fields.size() != header.size()) {
      ++res.summary.skipped_shape;
      continue;
    }
    const auto cls = schema.map_label(trim(fields[label_col]));
    if (!cls) {
      ++res.summary.skipped_label;
      continue;
    }
    Sample s;
    s.label = *cls;
    s.features.resize(feature_cols.size());
    bool ok = true;
    for (std::size_t k = 0; k < feature_cols.size() && ok; ++k) ok = parse_double(fields[feature_cols[k]], s.features[k]);
    if (!ok) {
      ++res.summary.skipped_numeric;
      continue;
    }
    if (opts.reservoir_per_class == 0) {
      res.samples.push_back(std::move(s));
      continue;
    }
    auto& r = reservoir[*cls];
    const std::size_t n = ++seen[*cls];
    if (r.size() < opts.reservoir_per_class) {
      r.push_back(std::move(s));
    } else {
      const std::size_t j = rng() % n;
      if (j < opts.reservoir_per_class) r[j] = std::move(s);
      ++res.summary.dropped_reservoir;
    }
  }
  if (opts.reservoir_per_class != 0) {
    for (auto& r : reservoir) {
      for (auto& s : r) res.samples.push_back(std::move(s));
    }
  }
  res.summary.loaded = res.samples.size();
  if (res.samples.empty()) throw DataError("no parseable rows in " + path.string());
  return res;
}

// ---- Transformations --------------------------------------------------------

std::vector<Sample> rebalance(std::span<const Sample> samples, const ClassCounts& targets, std::uint64_t seed) {
  const auto groups = by_class(samples);
  std::mt19937_64 rng(seed);
  std::vector<Sample> out;
  out.reserve(total(targets));
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    const std::size_t want = targets[c];
    if (want == 0) continue;
    auto idx = groups[c];
    if (idx.empty()) {
      throw DataError("rebalance: class " + std::string(kClassNames[c]) + " has a target but no samples");
    }
    shuffle(idx, rng);
    if (idx.size() >= want) {
      for (std::size_t k = 0; k < want; ++k) out.push_back(samples[idx[k]]);
    } else {
      for (std::size_t i : idx) out.push_back(samples[i]);
      for (std::size_t k = idx.size(); k < want; ++k) out.push_back(samples[idx[rng() % idx.size()]]);
    }
  }
  shuffle(out, rng);
  return out;
}

Scaler Scaler::fit(std::span<const Sample> samples) {
  const std::size_t k = feature_count(samples);
  Scaler s;
  s.min.assign(k, 0.0);
  s.max.assign(k, 0.0);
  if (samples.empty()) return s;
  s.min = samples.front().features;
  s.max = samples.front().features;
  for (const auto& x : samples) {
    for (std::size_t f = 0; f < k; ++f) {
      s.min[f] = std::min(s.min[f], x.features[f]);
      s.max[f] = std::max(s.max[f], x.features[f]);
    }
  }
  return s;
}

std::vector<double> Scaler::apply(std::span<const double> x) const {
  if (x.size() != min.size()) throw DataError("scaler: feature count mismatch");
  std::vector<double> out(x.size());
  for (std::size_t f = 0; f < x.size(); ++f) {
    const double range = max[f] - min[f];
    out[f] = range > 0.0 ? std::clamp((x[f] - min[f]) / range, 0.0, 1.0) : 0.5;
  }
  return out;
}

std::vector<double> Scaler::inverse(std::span<const double> x) const {
  if (x.size() != min.size()) throw DataError("scaler: feature count mismatch");
  std::vector<double> out(x.size());
  for (std::size_t f = 0; f < x.size(); ++f) {
    const double range = max[f] - min[f];
    out[f] = range > 0.0 ? min[f] + x[f] * range : min[f];
  }
  return out;
}

DatasetSplit scale_and_split(std::span<const Sample> samples, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw DataError("train_fraction must lie in (0, 1)");
  feature_count(samples);
  const auto groups = by_class(samples);
  std::mt19937_64 rng(seed);
  DatasetSplit split;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    auto idx = groups[c];
    if (idx.empty()) continue;
    if (idx.size() < 2) {
      throw DataError("scale_and_split: class " + std::string(kClassNames[c]) + " has fewer than 2 samples");
    }
    shuffle(idx, rng);
    auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(idx.size())));
    n_train = std::clamp<std::size_t>(n_train, 1, idx.size() - 1);
    for (std::size_t k = 0; k < idx.size(); ++k) (k < n_train ? split.train : split.test).push_back(samples[idx[k]]);
  }
  if (split.train.empty()) throw DataError("scale_and_split: no samples");
  shuffle(split.train, rng);
  shuffle(split.test, rng);
  split.scaler = Scaler::fit(split.train);
  for (auto& s : split.train) s.features = split.scaler.apply(s.features);
  for (auto& s : split.test) s.features = split.scaler.apply(s.features);
  return split;
}

std::vector<std::vector<Sample>> partition_for_vus(std::span<const Sample> train, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw DataError("partition_for_vus: need at least one VU");
  const auto groups = by_class(train);
  std::mt19937_64 rng(seed);
  // The shards receiving a class's leftover samples rotate with the class so sizes stay level.
  std::vector<std::vector<Sample>> out(n);
  std::size_t rotate = 0;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    auto idx = groups[c];
    if (idx.empty()) continue;
    if (idx.size() < n) {
      throw DataError("partition_for_vus: " + std::to_string(n) + " VUs but class " + std::string(kClassNames[c]) +
                      " has only " + std::to_string(idx.size()) + " samples");
    }
    shuffle(idx, rng);
    const std::size_t base = idx.size() / n, extra = idx.size() % n;
    std::size_t at = 0;
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t take = base + (k < extra ? 1 : 0);
      auto& shard = out[(k + rotate) % n];
      for (std::size_t j = at; j < at + take; ++j) shard.push_back(train[idx[j]]);
      at += take;
    }
    rotate = (rotate + extra) % n;
  }
  for (auto& shard : out) shuffle(shard, rng);
  return out;
}

VuShard split_offload(std::span<const Sample> data, double p, std::uint64_t seed) {
  if (!(p >= 0.0 && p <= 1.0)) throw DataError("offload fraction outside [0, 1]");
  auto groups = by_class(data);
  std::mt19937_64 rng(seed);
  std::array<double, kNumClasses> w{};
  for (std::size_t c = 0; c < kNumClasses; ++c) w[c] = static_cast<double>(groups[c].size());
  const auto n_off = static_cast<std::size_t>(std::llround(p * static_cast<double>(data.size())));
  const auto per_class = apportion(n_off, w);
  VuShard out;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    shuffle(groups[c], rng);
    for (std::size_t k = 0; k < groups[c].size(); ++k) {
      (k < per_class[c] ? out.offload : out.local).push_back(data[groups[c][k]]);
    }
  }
  shuffle(out.local, rng);
  shuffle(out.offload, rng);
  return out;
}

std::vector<VuShard> shard_for_vus(std::span<const Sample> train, std::span<const double> offload, std::uint64_t seed) {
  for (double p : offload) {
    if (!(p >= 0.0 && p <= 1.0)) throw DataError("shard_for_vus: offload fraction outside [0, 1]");
  }
  const auto parts = partition_for_vus(train, offload.size(), seed);
  std::vector<VuShard> out;
  for (std::size_t v = 0; v < parts.size(); ++v) out.push_back(split_offload(parts[v], offload[v], seed + 1 + v));
  return out;
}

// ---- Synthetic --------------------------------------------------------------

std::vector<Sample> synth_generate(const SynthSpec& spec, const ClassCounts& counts, std::uint64_t seed) {
  if (spec.features == 0) throw DataError("synth_generate: zero features");
  if (!(spec.separation >= 0.0) || !std::isfinite(spec.separation)) {
    throw DataError("synth_generate: separation must be finite and non-negative");
  }
  std::mt19937_64 rng(seed);
  std::array<std::vector<double>, kNumClasses> centre;
  for (auto& c : centre) {
    c.resize(spec.features);
    for (auto& v : c) v = spec.separation * gaussian(rng);
  }
  std::vector<Sample> out;
  out.reserve(total(counts));
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    for (std::size_t k = 0; k < counts[c]; ++k) {
      Sample s;
      s.label = c;
      s.features.resize(spec.features);
      for (std::size_t f = 0; f < spec.features; ++f) s.features[f] = centre[c][f] + gaussian(rng);
      out.push_back(std::move(s));
    }
  }
  shuffle(out, rng);
  return out;
}

// ---- Persistence ------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'H', 'E', 'F', 'L', 'D', 'A', 'T', 'A'};

void write_samples(ByteWriter& w, std::span<const Sample> samples) {
  for (const auto& s : samples) {
    w.u8(static_cast<std::uint8_t>(s.label));
    for (double v : s.features) w.f64(v);
  }
}

std::vector<Sample> read_samples(ByteReader& r, std::uint64_t count, std::size_t k) {
  if (count > r.remaining() / (1 + 8 * k)) throw FormatError("dataset sample count exceeds blob size");
  std::vector<Sample> out(count);
  for (auto& s : out) {
    s.label = r.u8();
    if (s.label >= kNumClasses) throw FormatError("dataset label out of range");
    s.features.resize(k);
    for (auto& v : s.features) v = r.f64();
  }
  return out;
}

}  // namespace

Bytes serialize_split(const DatasetSplit& split) {
  std::size_t k = feature_count(split.train);
  if (k == 0) k = split.scaler.min.size();
  if (feature_count(split.test) != 0 && feature_count(split.test) != k) throw DataError("train and test disagree on features");
  Bytes out;
  ByteWriter w(out);
  w.raw({reinterpret_cast<const std::uint8_t*>(kMagic), sizeof kMagic});
  w.u16(kDatasetVersion);
  w.u32(static_cast<std::uint32_t>(k));
  w.u64(split.train.size());
  w.u64(split.test.size());
  write_samples(w, split.train);
  write_samples(w, split.test);
  if (split.scaler.min.size() != k || split.scaler.max.size() != k) throw DataError("scaler does not match features");
  for (double v : split.scaler.min) w.f64(v);
  for (double v : split.scaler.max) w.f64(v);
  const std::uint64_t sum = fnv1a(out);
  w.u64(sum);
  return out;
}

DatasetSplit deserialize_split(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < sizeof kMagic + 8 || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw FormatError("not a dataset blob (bad magic)");
  }
  const auto body = bytes.first(bytes.size() - 8);
  ByteReader tail(bytes.subspan(bytes.size() - 8));
  if (tail.u64() != fnv1a(body)) throw FormatError("dataset checksum mismatch");
  ByteReader r(body);
  r.raw(sizeof kMagic);
  if (const auto v = r.u16(); v != kDatasetVersion) throw FormatError("unsupported dataset version " + std::to_string(v));
  const std::size_t k = r.u32();
  const std::uint64_t n_train = r.u64(), n_test = r.u64();
  DatasetSplit split;
  split.train = read_samples(r, n_train, k);
  split.test = read_samples(r, n_test, k);
  split.scaler.min.resize(k);
  split.scaler.max.resize(k);
  for (auto& v : split.scaler.min) v = r.f64();
  for (auto& v : split.scaler.max) v = r.f64();
  if (r.remaining() != 0) throw FormatError("trailing bytes in dataset blob");
  return split;
}

std::string to_csv(std::span<const Sample> samples) {
  const std::size_t k = feature_count(samples);
  std::string out;
  for (std::size_t f = 0; f < k; ++f) out += "f" + std::to_string(f) + ",";
  out += "label\n";
  char buf[32];
  for (const auto& s : samples) {
    for (double v : s.features) {
      const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
      out.append(buf, end);
      out.push_back(',');
    }
    out += kClassNames[s.label];
    out.push_back('\n');
  }
  return out;
}

}  // namespace hefl::data
