// Copyright 2026 The hefl Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>

#include "hefl/data/dataset.hpp"
#include "hefl/error.hpp"
#include "hefl/nn/model.hpp"

namespace hefl::data {
namespace {

namespace fs = std::filesystem;

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() / ("hefl_data_test_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
                                         "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  fs::path file(const std::string& name, const std::string& text) const {
    const auto p = path_ / name;
    std::ofstream(p) << text;
    return p;
  }

 private:
  fs::path path_;
};

Schema two_feature_schema() {
  return parse_schema(R"({
    "label_column": "Attack_type",
    "features": ["a", "b"],
    "label_map": {"Normal": "Normal", "DDoS_*": "DDoS", "MITM": "MitM", "SQL_injection": "Injection",
                  "XSS": "Injection", "Ransomware": "Malware", "Port_Scanning": "Reconnaissance"}
  })");
}

std::multiset<std::pair<std::size_t, std::vector<double>>> as_multiset(std::span<const Sample> s) {
  std::multiset<std::pair<std::size_t, std::vector<double>>> out;
  for (const auto& x : s) out.emplace(x.label, x.features);
  return out;
}

ClassCounts uniform(std::size_t n) {
  ClassCounts c{};
  c.fill(n);
  return c;
}

// ---- CSV --------------------------------------------------------------------

TEST(LoadCsv, WellFormedFixture) {
  TempDir dir;
  std::string text = "a,ignored,b,Attack_type\n";
  const char* labels[] = {"Normal", "DDoS_UDP", "DDoS_TCP", "MITM", "SQL_injection",
                          "XSS", "Ransomware", "Port_Scanning", "Normal", "Normal"};
  for (int i = 0; i < 10; ++i) text += std::to_string(i) + ",x," + std::to_string(0.5 * i) + "," + labels[i] + "\n";
  const auto res = load_csv(dir.file("d.csv", text), two_feature_schema());
  EXPECT_EQ(res.samples.size(), 10u);
  EXPECT_EQ(res.summary.rows, 10u);
  EXPECT_EQ(res.summary.skipped(), 0u);
  EXPECT_EQ(res.samples[1].label, 1u);  // DDoS_UDP -> DDoS
  EXPECT_EQ(res.samples[5].label, 3u);  // XSS -> Injection
  EXPECT_EQ(res.samples[3].features, (std::vector<double>{3.0, 1.5}));
}

TEST(LoadCsv, SkipsBadRowsAndCountsThem) {
  TempDir dir;
  const auto p = dir.file("d.csv",
                          "a,b,Attack_type\n"
                          "1,2,Normal\n"
                          "1,oops,Normal\n"
                          "1,2,Backdoor\n"
                          "1,2\n"
                          "3,4,DDoS_ICMP\n"
                          "inf,4,Normal\n");
  const auto res = load_csv(p, two_feature_schema());
  EXPECT_EQ(res.samples.size(), 2u);
  EXPECT_EQ(res.summary.skipped_numeric, 2u);
  EXPECT_EQ(res.summary.skipped_label, 1u);
  EXPECT_EQ(res.summary.skipped_shape, 1u);
}

TEST(LoadCsv, QuotedFieldsAndCrLf) {
  TempDir dir;
  const auto p = dir.file("d.csv", "\"a\",b,Attack_type,note\r\n\"1.5\",2,\"Normal\",\"x, \"\"y\"\"\"\r\n");
  const auto res = load_csv(p, two_feature_schema());
  ASSERT_EQ(res.samples.size(), 1u);
  EXPECT_EQ(res.samples[0].features[0], 1.5);
  EXPECT_EQ(split_csv_line("x,\"a,b\",\"c\"\"d\""), (std::vector<std::string>{"x", "a,b", "c\"d"}));
}

TEST(LoadCsv, Errors) {
  TempDir dir;
  const auto missing = dir.file("unused", "").parent_path() / "missing.csv";
  try {
    load_csv(missing, two_feature_schema());
    ADD_FAILURE() << "missing file accepted";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("dataset file not found"), std::string::npos);
  }
  EXPECT_THROW(load_csv(dir.file("c.csv", "a,Attack_type\n1,Normal\n"), two_feature_schema()), DataError);
  EXPECT_THROW(load_csv(dir.file("z.csv", "a,b,Attack_type\nq,r,Normal\n"), two_feature_schema()), DataError);
}

TEST(LoadCsv, ReservoirBoundsEveryClass) {
  TempDir dir;
  std::string text = "a,b,Attack_type\n";
  for (int i = 0; i < 500; ++i) text += std::to_string(i) + ",0," + (i % 2 ? "Normal" : "MITM") + "\n";
  LoadOptions opts;
  opts.reservoir_per_class = 20;
  opts.seed = 9;
  const auto res = load_csv(dir.file("d.csv", text), two_feature_schema(), opts);
  const auto counts = count_classes(res.samples);
  EXPECT_EQ(counts[0], 20u);
  EXPECT_EQ(counts[2], 20u);
  EXPECT_EQ(res.summary.dropped_reservoir, 460u);
  EXPECT_EQ(load_csv(dir.file("d.csv", text), two_feature_schema(), opts).samples, res.samples);
}

TEST(Schema, MappingRules) {
  const auto s = parse_schema(R"({"label_column": "y", "features": ["f"],
      "label_map": {"DDoS_*": "DDoS", "DDoS_HTTP": "Injection", "D*": "Malware"}})");
  EXPECT_EQ(s.map_label("DDoS_HTTP"), 3u);
  EXPECT_EQ(s.map_label("DDoS_UDP"), 1u);
  EXPECT_EQ(s.map_label("Dx"), 4u);
  EXPECT_FALSE(s.map_label("Normal").has_value());
  EXPECT_THROW(parse_schema("{"), ConfigError);
  EXPECT_THROW(parse_schema(R"({"label_column": "y", "features": ["f"], "label_map": {"a": "Worm"}})"), ConfigError);
  EXPECT_THROW(parse_schema(R"({"label_column": "y", "features": [], "label_map": {"a": "Normal"}})"), ConfigError);
}

// ---- Rebalance --------------------------------------------------------------

TEST(Rebalance, HitsTableCountsExactly) {
  const auto raw = synth_generate({}, uniform(4000), 3);
  const auto out = rebalance(raw, kTableCounts, 5);
  EXPECT_EQ(count_classes(out), kTableCounts);
  EXPECT_EQ(out.size(), 31400u);
}

TEST(Rebalance, UniformTargets) {
  const auto raw = synth_generate({}, {30, 5, 12, 40, 10, 11}, 3);
  const auto out = rebalance(raw, uniform(10), 1);
  EXPECT_EQ(out.size(), 60u);
  EXPECT_EQ(count_classes(out), uniform(10));
}

TEST(Rebalance, MatchingInputIsAPermutation) {
  const auto raw = synth_generate({}, {7, 3, 5, 2, 4, 6}, 11);
  const auto out = rebalance(raw, count_classes(raw), 2);
  EXPECT_EQ(as_multiset(out), as_multiset(raw));
}

TEST(Rebalance, MissingClassIsAnError) {
  const auto raw = synth_generate({}, {5, 5, 0, 5, 5, 5}, 1);
  EXPECT_THROW(rebalance(raw, uniform(3), 1), DataError);
  ClassCounts t = uniform(3);
  t[2] = 0;
  EXPECT_EQ(rebalance(raw, t, 1).size(), 15u);
}

TEST(Rebalance, DownsamplesWithoutReplacement) {
  const auto raw = synth_generate({}, uniform(50), 4);
  const auto out = rebalance(raw, uniform(20), 8);
  const auto set = as_multiset(out);
  for (const auto& x : set) EXPECT_EQ(set.count(x), 1u);
}

TEST(TableCounts, ScaledProfiles) {
  EXPECT_EQ(total(kTableCounts), 31400u);
  EXPECT_EQ(scaled_table_counts(31400), kTableCounts);
  const auto tenth = scaled_table_counts(3140);
  EXPECT_EQ(total(tenth), 3140u);
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    EXPECT_LE(std::abs(static_cast<double>(tenth[c]) - kTableCounts[c] / 10.0), 1.0);
  }
}

// ---- Scaling and split ------------------------------------------------------

TEST(Scaler, MinMaxDefinitionClampAndConstant) {
  std::vector<Sample> train{{{0.0, 3.0}, 0}, {{5.0, 3.0}, 0}, {{10.0, 3.0}, 0}};
  const auto s = Scaler::fit(train);
  EXPECT_EQ(s.apply(train[0].features)[0], 0.0);
  EXPECT_EQ(s.apply(train[1].features)[0], 0.5);
  EXPECT_EQ(s.apply(train[2].features)[0], 1.0);
  EXPECT_EQ(s.apply(train[1].features)[1], 0.5);  // constant column
  EXPECT_EQ(s.apply(std::vector<double>{-4.0, 9.0})[0], 0.0);
  EXPECT_EQ(s.apply(std::vector<double>{12.0, 9.0})[0], 1.0);
}

TEST(Split, StratifiedBoundedAndInvertible) {
  const auto raw = synth_generate({}, {101, 57, 33, 80, 12, 9}, 21);
  const auto split = scale_and_split(raw, 0.8, 4);
  const auto all = count_classes(raw), tr = count_classes(split.train), te = count_classes(split.test);
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    EXPECT_EQ(tr[c] + te[c], all[c]);
    EXPECT_LE(std::abs(static_cast<double>(tr[c]) - 0.8 * all[c]), 1.0) << c;
  }
  for (const auto* part : {&split.train, &split.test}) {
    for (const auto& s : *part) {
      for (double v : s.features) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
      }
    }
  }
  // Inverse transform recovers the raw training features.
  const auto raw_set = as_multiset(raw);
  for (const auto& s : split.train) {
    const auto back = split.scaler.inverse(s.features);
    bool found = false;
    for (const auto& r : raw) {
      if (r.label != s.label) continue;
      double worst = 0.0;
      for (std::size_t f = 0; f < back.size(); ++f) worst = std::max(worst, std::abs(back[f] - r.features[f]));
      if (worst < 1e-9) {
        found = true;
        break;
      }
    }
    ASSERT_TRUE(found);
  }
}

TEST(Split, DeterministicAndValidated) {
  const auto raw = synth_generate({}, uniform(20), 2);
  const auto a = scale_and_split(raw, 0.8, 7), b = scale_and_split(raw, 0.8, 7), c = scale_and_split(raw, 0.8, 8);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.test, b.test);
  EXPECT_NE(a.train, c.train);
  std::vector<Sample> lonely{{{1.0}, 0}, {{2.0}, 0}, {{3.0}, 1}};
  EXPECT_THROW(scale_and_split(lonely, 0.8, 1), DataError);
  EXPECT_THROW(scale_and_split(raw, 1.0, 1), DataError);
}

// ---- Sharding ---------------------------------------------------------------

TEST(Shard, TwoVusHalveEveryClass) {
  const auto raw = synth_generate({}, scaled_table_counts(3140), 6);
  const auto split = scale_and_split(raw, 0.8, 6);
  const std::vector<double> p{0.0, 0.0};
  const auto shards = shard_for_vus(split.train, p, 3);
  ASSERT_EQ(shards.size(), 2u);
  const auto all = count_classes(split.train);
  for (const auto& s : shards) {
    EXPECT_TRUE(s.offload.empty());
    const auto c = count_classes(s.local);
    for (std::size_t k = 0; k < kNumClasses; ++k) EXPECT_LE(std::abs(2.0 * c[k] - all[k]), 1.0);
  }
}

TEST(Shard, OffloadSizesConservationAndProfile) {
  const auto raw = synth_generate({}, scaled_table_counts(3140), 6);
  const auto split = scale_and_split(raw, 0.8, 6);
  for (std::size_t n : {2u, 3u}) {
    for (double p : {0.1, 0.2}) {
      const std::vector<double> fr(n, p);
      const auto shards = shard_for_vus(split.train, fr, 17);
      std::vector<Sample> back;
      const auto global = count_classes(split.train);
      for (const auto& s : shards) {
        const std::size_t size = s.local.size() + s.offload.size();
        EXPECT_EQ(s.offload.size(), static_cast<std::size_t>(std::llround(p * size)));
        std::vector<Sample> whole = s.local;
        whole.insert(whole.end(), s.offload.begin(), s.offload.end());
        const auto c = count_classes(whole);
        for (std::size_t k = 0; k < kNumClasses; ++k) {
          const double share = static_cast<double>(c[k]) / size;
          const double want = static_cast<double>(global[k]) / split.train.size();
          EXPECT_LT(std::abs(share - want), 1.0 / size);
        }
        back.insert(back.end(), whole.begin(), whole.end());
      }
      EXPECT_EQ(as_multiset(back), as_multiset(split.train));
    }
  }
}

TEST(Shard, SingleVuAndErrors) {
  const auto raw = synth_generate({}, uniform(10), 1);
  const std::vector<double> zero{0.0};
  const auto one = shard_for_vus(raw, zero, 1);
  EXPECT_EQ(as_multiset(one[0].local), as_multiset(raw));
  EXPECT_TRUE(one[0].offload.empty());
  const std::vector<double> all{1.0};
  EXPECT_TRUE(shard_for_vus(raw, all, 1)[0].local.empty());
  const std::vector<double> bad{1.5};
  EXPECT_THROW(shard_for_vus(raw, bad, 1), DataError);
  const std::vector<double> many(11, 0.1);
  EXPECT_THROW(shard_for_vus(raw, many, 1), DataError);
}

// ---- Synthetic --------------------------------------------------------------

TEST(Synth, CountsAndDeterminism) {
  const auto a = synth_generate({}, kTableCounts, 42);
  EXPECT_EQ(a.size(), 31400u);
  EXPECT_EQ(count_classes(a), kTableCounts);
  EXPECT_EQ(a.front().features.size(), kDefaultFeatures);
  EXPECT_EQ(synth_generate({}, kTableCounts, 42), a);
  EXPECT_NE(synth_generate({}, kTableCounts, 43), a);
}

double trained_accuracy(const SynthSpec& spec, std::uint64_t seed, std::size_t epochs) {
  const auto split = scale_and_split(synth_generate(spec, scaled_table_counts(3140), seed), 0.8, seed);
  std::vector<std::vector<double>> x, y;
  for (const auto& s : split.train) {
    x.push_back(s.features);
    y.push_back(nn::one_hot(s.label, kNumClasses));
  }
  auto m = nn::init_model(nn::default_architecture(), seed);
  nn::TrainConfig cfg;
  cfg.epochs_per_round = epochs;
  nn::train_plain(m, x, y, cfg, seed);
  std::size_t correct = 0;
  for (const auto& s : split.test) correct += nn::argmax(nn::forward_plain(m, s.features)) == s.label;
  return static_cast<double>(correct) / split.test.size();
}

TEST(Synth, DefaultSeparationIsLearnable) { EXPECT_GE(trained_accuracy({}, 5, 30), 0.95); }

TEST(Synth, ZeroSeparationIsChance) {
  SynthSpec flat;
  flat.separation = 0.0;
  const double acc = trained_accuracy(flat, 5, 10);
  EXPECT_LT(acc, 0.30);
}

// ---- Persistence ------------------------------------------------------------

TEST(Blob, RoundTripAndCorruption) {
  const auto split = scale_and_split(synth_generate({}, uniform(12), 3), 0.75, 3);
  const auto bytes = serialize_split(split);
  const auto back = deserialize_split(bytes);
  EXPECT_EQ(back.train, split.train);
  EXPECT_EQ(back.test, split.test);
  EXPECT_EQ(back.scaler.min, split.scaler.min);
  auto bad = bytes;
  bad[40] ^= 1;
  EXPECT_THROW(deserialize_split(bad), FormatError);
  bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(deserialize_split(bad), FormatError);
  EXPECT_THROW(deserialize_split(std::span(bytes).first(bytes.size() - 9)), FormatError);
}

TEST(Export, CsvShape) {
  std::vector<Sample> s{{{0.25, 1.0}, 1}, {{0.0, 0.5}, 5}};
  EXPECT_EQ(to_csv(s), "f0,f1,label\n0.25,1,DDoS\n0,0.5,Reconnaissance\n");
}

}  // namespace
}  // namespace hefl::data
