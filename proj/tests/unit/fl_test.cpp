// Copyright 2026 The hefl Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <random>
#include <set>

#include "hefl/ckks/evaluator.hpp"
#include "hefl/error.hpp"
#include "hefl/fl/bus.hpp"
#include "hefl/fl/protocol.hpp"
#include "hefl/nn/checkpoint.hpp"
#include "json.hpp"

namespace hefl::fl {
namespace {

constexpr double kEps0 = 1e-6;
constexpr double kEps1 = 1e-4;
constexpr double kTrajectoryBound = 0.1;

struct World {
  std::vector<std::vector<data::Sample>> shards;
  std::vector<data::Sample> test;
};

World world(std::size_t vus, std::size_t total, std::uint64_t seed = 5) {
  const auto all = data::synth_generate({8, 1.0}, data::scaled_table_counts(total), seed);
  auto split = data::scale_and_split(all, 0.8, seed + 1);
  return {data::partition_for_vus(split.train, vus, seed + 2), std::move(split.test)};
}

FlConfig config(Mode mode, std::size_t vus, double p, std::size_t rounds = 3) {
  FlConfig cfg;
  cfg.mode = mode;
  cfg.offload.assign(vus, p);
  cfg.max_rounds = rounds;
  cfg.ckks_profile = "small";
  cfg.architecture = nn::parse_architecture("8-8-6");
  cfg.train.batch_size = 8;
  cfg.train.learning_rate = 0.1;
  cfg.seed = 11;
  cfg.convergence.stop = false;
  return cfg;
}

double max_diff(const nn::PlainModel& a, const nn::PlainModel& b) {
  double d = 0.0;
  for (std::size_t l = 0; l < a.layers.size(); ++l) {
    for (std::size_t i = 0; i < a.layers[l].w.data.size(); ++i) {
      d = std::max(d, std::abs(a.layers[l].w.data[i] - b.layers[l].w.data[i]));
    }
    for (std::size_t i = 0; i < a.layers[l].b.size(); ++i) d = std::max(d, std::abs(a.layers[l].b[i] - b.layers[l].b[i]));
  }
  return d;
}

/// Plaintext FedAvg computed independently of the library.
nn::PlainModel plain_mean(const std::vector<nn::PlainModel>& parts) {
  nn::PlainModel out = parts.front();
  for (std::size_t l = 0; l < out.layers.size(); ++l) {
    for (std::size_t i = 0; i < out.layers[l].w.data.size(); ++i) {
      double s = 0.0;
      for (const auto& p : parts) s += p.layers[l].w.data[i];
      out.layers[l].w.data[i] = s / static_cast<double>(parts.size());
    }
    for (std::size_t i = 0; i < out.layers[l].b.size(); ++i) {
      double s = 0.0;
      for (const auto& p : parts) s += p.layers[l].b[i];
      out.layers[l].b[i] = s / static_cast<double>(parts.size());
    }
  }
  return out;
}

// ---- bus and scanner ----------------------------------------------------------

TEST(Bus, RelaysThroughRsusAndCountsBytes) {
  Bus bus(3, 2);
  bus.send({MessageKind::kSubmitLocalParams, Endpoint::vu(2), Endpoint::server(), Bytes(10, 1), 1, {}});
  bus.send({MessageKind::kSubmitLocalParams, Endpoint::vu(1), Endpoint::server(), Bytes(7, 2), 1, {}});
  bus.send({MessageKind::kGlobalUpdate, Endpoint::server(), Endpoint::vu(0), Bytes(5, 3), 1, {}});
  const auto t = bus.traffic();
  EXPECT_EQ(t.bytes[static_cast<std::size_t>(MessageKind::kSubmitLocalParams)], 17u);
  EXPECT_EQ(t.messages[static_cast<std::size_t>(MessageKind::kSubmitLocalParams)], 2u);
  EXPECT_EQ(t.rsu_bytes[0], 15u);  // vu2 and vu0 go through RSU 0
  EXPECT_EQ(t.rsu_bytes[1], 7u);
  const auto first = bus.try_receive(Endpoint::server(), MessageKind::kSubmitLocalParams);
  ASSERT_TRUE(first);
  EXPECT_EQ(first->sender, Endpoint::vu(2));
  EXPECT_EQ(first->rsu, 0u);
  EXPECT_FALSE(bus.try_receive(Endpoint::server(), MessageKind::kOffloadData));
  EXPECT_EQ(bus.receive(Endpoint::vu(0), MessageKind::kGlobalUpdate).payload.size(), 5u);
  EXPECT_THROW(bus.send({MessageKind::kGlobalUpdate, Endpoint::vu(0), Endpoint::vu(1), {}, 0, {}}), ProtocolError);
  EXPECT_THROW(bus.send({MessageKind::kGlobalUpdate, Endpoint::server(), Endpoint::vu(3), {}, 0, {}}), ProtocolError);
}

TEST(ByteScanner, FindsPatternsAtEveryOffset) {
  std::mt19937_64 rng(4);
  ByteScanner scan;
  std::vector<std::array<std::uint8_t, 16>> patterns(50);
  for (auto& p : patterns) {
    for (auto& b : p) b = static_cast<std::uint8_t>(rng());
    scan.add(p);
  }
  Bytes hay(4096);
  for (auto& b : hay) b = static_cast<std::uint8_t>(rng());
  EXPECT_FALSE(scan.contains_any(hay));
  for (std::size_t off = 0; off < 40; ++off) {
    Bytes h = hay;
    std::memcpy(h.data() + 1000 + off, patterns[off % patterns.size()].data(), 16);
    EXPECT_TRUE(scan.contains_any(h)) << off;
  }
  Bytes edge = hay;
  std::memcpy(edge.data() + edge.size() - 16, patterns[3].data(), 16);
  EXPECT_TRUE(scan.contains_any(edge));
  Bytes start = hay;
  std::memcpy(start.data(), patterns[7].data(), 16);
  EXPECT_TRUE(scan.contains_any(start));
  // A 15-byte prefix is not a match.
  Bytes partial = hay;
  std::memcpy(partial.data() + 77, patterns[9].data(), 15);
  partial[77 + 15] = static_cast<std::uint8_t>(patterns[9][15] ^ 0xff);
  EXPECT_FALSE(scan.contains_any(partial));
}

// ---- convergence rule -------------------------------------------------------

TEST(Convergence, MovingAverageRule) {
  const ConvergenceRule rule{5, 0.001, true};
  const std::vector<double> rising = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7};
  EXPECT_FALSE(convergence_fires(rising, rule));
  EXPECT_NEAR(*moving_average(rising, 5), 0.5, 1e-12);
  EXPECT_FALSE(moving_average(std::vector<double>{0.1, 0.2}, 5));
  // Needs window + 1 rounds.
  EXPECT_FALSE(convergence_fires(std::vector<double>(5, 0.9), rule));
  EXPECT_TRUE(convergence_fires(std::vector<double>(6, 0.9), rule));
  // Means of the last two windows differ by (a_t - a_{t-5}) / 5.
  EXPECT_TRUE(convergence_fires(std::vector<double>{0.900, 0.95, 0.95, 0.95, 0.95, 0.904}, rule));
  EXPECT_FALSE(convergence_fires(std::vector<double>{0.900, 0.95, 0.95, 0.95, 0.95, 0.906}, rule));
}

// ---- pre-learning -----------------------------------------------------------

TEST(PreLearning, OffloadSplitMatchesFractions) {
  std::vector<std::vector<data::Sample>> d;
  const auto all = data::synth_generate({8, 1.0}, data::scaled_table_counts(2000), 3);
  d.emplace_back(all.begin(), all.begin() + 1000);
  d.emplace_back(all.begin() + 1000, all.end());
  auto cfg = config(Mode::kNEncFl, 2, 0.10);
  System sys(cfg, d, world(1, 100).test);
  EXPECT_EQ(sys.server().dataset_size, 200u);
  EXPECT_EQ(sys.vus()[0].local.size(), 900u);
  EXPECT_EQ(sys.vus()[1].local.size(), 900u);
  EXPECT_TRUE(sys.vus()[0].offload.empty());  // DS_n is dropped once sent
  EXPECT_EQ(sys.sample_count(), 2000u);
  for (const auto& vu : sys.vus()) EXPECT_EQ(vu.model, sys.server().plain_model);
}

TEST(PreLearning, EncryptedPoolHasEverySample) {
  auto w = world(2, 250);
  System sys(config(Mode::kEncFl, 2, 0.1), w.shards, w.test);
  const std::size_t want =
      static_cast<std::size_t>(std::lround(0.1 * w.shards[0].size()) + std::lround(0.1 * w.shards[1].size()));
  EXPECT_EQ(sys.server().enc_x.size(), want);
  EXPECT_EQ(sys.server().enc_y.size(), want);
  EXPECT_EQ(sys.server().dataset_size, want);
  EXPECT_TRUE(sys.server().plain_x.empty());
  EXPECT_EQ(sys.sample_count(), sys.initial_sample_count());
  ASSERT_TRUE(sys.server().enc_model);
  EXPECT_LT(max_diff(nn::decrypt_model(*sys.context(), *sys.server().enc_model, sys.harness_secret_key()),
                     sys.server().plain_model),
            kEps0);
  // Both VUs hold the coalition key; the key was never sent through the bus.
  EXPECT_EQ(sys.vus()[0].keys, sys.vus()[1].keys);
}

TEST(PreLearning, Errors) {
  auto w = world(2, 250);
  auto bad = config(Mode::kEncFl, 2, 0.1);
  bad.offload[1] = 1.5;
  EXPECT_THROW(System(bad, w.shards, w.test), ConfigError);
  auto empty = w.shards;
  empty[1].clear();
  EXPECT_THROW(System(config(Mode::kNEncFl, 2, 0.1), empty, w.test), DataError);
  EXPECT_THROW(System(config(Mode::kNEncFl, 3, 0.1), w.shards, w.test), ConfigError);
  auto wide = config(Mode::kNEncFl, 2, 0.1);
  wide.architecture = nn::parse_architecture("9-8-6");
  EXPECT_THROW(System(wide, w.shards, w.test), DataError);
  auto profile = config(Mode::kEncFl, 2, 0.1);
  profile.ckks_profile = "nope";
  EXPECT_THROW(System(profile, w.shards, w.test), ConfigError);
}

// ---- rounds -----------------------------------------------------------------

TEST(Protocol, ZeroRoundsReturnsTheInitialModel) {
  auto w = world(2, 250);
  auto cfg = config(Mode::kEncFl, 2, 0.1, 0);
  System sys(cfg, w.shards, w.test);
  const auto initial = sys.server().plain_model;
  const auto r = sys.run();
  EXPECT_TRUE(r.rounds.empty());
  EXPECT_EQ(r.final_model, initial);
  EXPECT_FALSE(r.converged_round);
}

// The aggregate check, run against an independent plaintext mean of the decrypted inputs.
void check_aggregation(std::size_t vus, std::size_t rounds) {
  auto w = world(vus, 300);
  System sys(config(Mode::kEncFl, vus, 0.1, rounds), w.shards, w.test);
  std::size_t calls = 0;
  double worst = 0.0;
  sys.set_aggregate_hook([&](std::size_t, const std::vector<nn::PlainModel>& in, const nn::PlainModel& out) {
    ++calls;
    EXPECT_EQ(in.size(), vus + 1);
    worst = std::max(worst, max_diff(out, plain_mean(in)));
  });
  sys.run();
  EXPECT_EQ(calls, rounds);
  EXPECT_LT(worst, 3 * kEps0 + kEps1);
}

TEST(Protocol, EncryptedFedAvgMatchesPlainMeanTwoVus) { check_aggregation(2, 3); }
TEST(Protocol, EncryptedFedAvgMatchesPlainMeanThreeVus) { check_aggregation(3, 3); }

TEST(Protocol, SubmissionDecryptsToTheVuModel) {
  // VU training is plaintext and starts from the same plaintext model in both modes, so the
  // N-EncFL submission is the oracle for the decrypted EncFL one in round 1.
  auto w = world(2, 250);
  std::vector<nn::PlainModel> enc_in, plain_in;
  System enc(config(Mode::kEncFl, 2, 0.1, 1), w.shards, w.test);
  enc.set_aggregate_hook([&](std::size_t, const auto& in, const auto&) { enc_in = in; });
  enc.run();
  System plain(config(Mode::kNEncFl, 2, 0.1, 1), w.shards, w.test);
  plain.set_aggregate_hook([&](std::size_t, const auto& in, const auto&) { plain_in = in; });
  plain.run();
  ASSERT_EQ(enc_in.size(), 3u);
  EXPECT_LT(max_diff(enc_in[0], plain_in[0]), kEps0);
  EXPECT_LT(max_diff(enc_in[1], plain_in[1]), kEps0);
  // The server model follows a plaintext-poly pass over the same batches.
  EXPECT_LT(max_diff(enc_in[2], plain_in[2]), kTrajectoryBound);
}

TEST(Protocol, ZeroEpochsSubmitsTheReceivedModel) {
  auto w = world(2, 250);
  auto cfg = config(Mode::kEncFl, 2, 0.1, 2);
  cfg.train.epochs_per_round = 0;
  System sys(cfg, w.shards, w.test);
  std::vector<nn::PlainModel> received;
  sys.set_aggregate_hook([&](std::size_t, const auto& in, const auto&) {
    EXPECT_LT(max_diff(in[0], received.back()), 2 * kEps0);
    EXPECT_LT(max_diff(in[1], received.back()), 2 * kEps0);
  });
  for (int r = 0; r < 2; ++r) {
    received.push_back(sys.global_model());
    sys.run_round();
  }
}

TEST(Protocol, FullOffloadSkipsLocalTraining) {
  auto w = world(2, 250);
  auto cfg = config(Mode::kNEncFl, 2, 1.0, 1);
  System sys(cfg, w.shards, w.test);
  EXPECT_TRUE(sys.vus()[0].local.empty());
  const auto initial = sys.global_model();
  sys.set_aggregate_hook([&](std::size_t, const auto& in, const auto&) {
    EXPECT_EQ(in[0], initial);
    EXPECT_EQ(in[1], initial);
  });
  const auto& rec = sys.run_round();
  EXPECT_EQ(rec.vu_loss[0], 0.0);
  EXPECT_TRUE(rec.server_trained);
}

TEST(Protocol, NoOffloadLeavesTheServerUntrained) {
  auto w = world(2, 250);
  System sys(config(Mode::kEncFl, 2, 0.0, 1), w.shards, w.test);
  EXPECT_EQ(sys.server().dataset_size, 0u);
  const auto before = nn::decrypt_model(*sys.context(), *sys.server().enc_model, sys.harness_secret_key());
  sys.set_aggregate_hook([&](std::size_t, const auto& in, const auto&) {
    ASSERT_EQ(in.size(), 3u);
    EXPECT_LT(max_diff(in[2], before), 2 * kEps0);
  });
  const auto& rec = sys.run_round();
  EXPECT_FALSE(rec.server_trained);
  EXPECT_FALSE(rec.server_loss);
  EXPECT_EQ(rec.refreshes, 4u);  // only the aggregate: W and b of two layers
}

TEST(Protocol, ConservationHoldsEveryRound) {
  auto w = world(3, 300);
  System sys(config(Mode::kNEncFl, 3, 0.2, 4), w.shards, w.test);
  std::size_t total = 0;
  for (const auto& s : w.shards) total += s.size();
  for (int r = 0; r < 4; ++r) {
    sys.run_round();
    EXPECT_EQ(sys.sample_count(), total);
  }
}

TEST(Protocol, DeterministicLogs) {
  auto w = world(2, 250);
  auto run = [&](bool parallel) {
    auto cfg = config(Mode::kEncFl, 2, 0.1, 2);
    cfg.parallel = parallel;
    std::string log;
    run_protocol(cfg, w.shards, w.test, [&](const RoundRecord& r, const PhaseTimings&) { log += round_json(r) + "\n"; });
    return log;
  };
  const auto a = run(true);
  EXPECT_EQ(a, run(true));
  EXPECT_EQ(a, run(false));
}

TEST(Protocol, RoundLogSchemaIsIdenticalAcrossModes) {
  auto w = world(2, 250);
  std::vector<std::set<std::string>> keys;
  for (Mode m : {Mode::kCfl, Mode::kNEncFl, Mode::kEncFl}) {
    System sys(config(m, 2, 0.1, 1), w.shards, w.test);
    const auto j = nlohmann::json::parse(round_json(sys.run_round()));
    std::set<std::string> k;
    for (const auto& [name, value] : j.items()) {
      k.insert(name);
      if (value.is_object()) {
        for (const auto& [sub, v] : value.items()) k.insert(name + "." + sub);
      }
    }
    keys.push_back(k);
  }
  EXPECT_EQ(keys[0], keys[1]);
  EXPECT_EQ(keys[1], keys[2]);
  EXPECT_TRUE(keys[0].contains("traffic.refresh_response"));
}

TEST(Protocol, CflAveragesVusOnly) {
  auto w = world(2, 250);
  System sys(config(Mode::kCfl, 2, 0.3, 1), w.shards, w.test);
  EXPECT_EQ(sys.server().dataset_size, 0u);
  std::size_t parties = 0;
  sys.set_aggregate_hook([&](std::size_t, const auto& in, const auto& out) {
    parties = in.size();
    EXPECT_LT(max_diff(out, plain_mean(in)), 1e-15);
  });
  const auto& rec = sys.run_round();
  EXPECT_EQ(parties, 2u);
  EXPECT_FALSE(rec.server_trained);
  EXPECT_EQ(rec.traffic[static_cast<std::size_t>(MessageKind::kOffloadData)].messages, 0u);
}

TEST(Protocol, BaselineTracksEncryptedRunForTwentyRounds) {
  auto w = world(2, 200);
  auto cfg_enc = config(Mode::kEncFl, 2, 0.1, 20);
  auto cfg_plain = config(Mode::kNEncFl, 2, 0.1, 20);
  cfg_enc.train.learning_rate = cfg_plain.train.learning_rate = 0.05;
  System enc(cfg_enc, w.shards, w.test);
  System plain(cfg_plain, w.shards, w.test);
  double worst = 0.0;
  for (int r = 0; r < 20; ++r) {
    enc.run_round();
    plain.run_round();
    worst = std::max(worst, max_diff(enc.global_model(), plain.global_model()));
  }
  EXPECT_LT(worst, kTrajectoryBound);
}

TEST(Protocol, AggregateRejectsBadSubmissions) {
  auto w = world(2, 250);
  System sys(config(Mode::kNEncFl, 2, 0.1), w.shards, w.test);
  const auto good = nn::serialize_model(sys.global_model());
  const auto wrong = nn::serialize_model(nn::init_model(nn::parse_architecture("8-4-6"), 1));
  auto message_of = [&](std::vector<System::Submission> subs) {
    try {
      sys.aggregate(std::move(subs));
    } catch (const ProtocolError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  EXPECT_NE(message_of({{0, good}, {1, wrong}}).find("vu1"), std::string::npos);
  EXPECT_NE(message_of({{0, good}}).find("no submission from vu1"), std::string::npos);
  EXPECT_NE(message_of({{0, good}, {0, good}, {1, good}}).find("duplicate submission from vu0"), std::string::npos);
  EXPECT_NE(message_of({{0, Bytes(40, 7)}, {1, good}}).find("vu0"), std::string::npos);

  System enc(config(Mode::kEncFl, 2, 0.1), w.shards, w.test);
  EXPECT_NE([&] {
    try {
      enc.aggregate({{0, good}, {1, good}});
    } catch (const ProtocolError& e) {
      return std::string(e.what());
    }
    return std::string();
  }().find("vu0"),
            std::string::npos);
}

TEST(Protocol, ServerRetriesOnceThenAborts) {
  auto w = world(2, 250);
  auto cfg = config(Mode::kEncFl, 2, 0.1);
  System sys(cfg, w.shards, w.test);
  // Every refresh reply arrives garbled, so the server's encrypted pass fails.
  int requests = 0;
  sys.bus().set_observer([&](const Message& m) {
    if (m.kind == MessageKind::kRefreshRequest) ++requests;
    if (m.kind == MessageKind::kRefreshResponse) const_cast<Message&>(m).payload.assign(8, 0);
  });
  EXPECT_THROW(sys.run_round(), ProtocolError);
  EXPECT_EQ(requests, 2);  // one failed attempt, one failed retry
}

// ---- privacy scan -----------------------------------------------------------

TEST(Privacy, EncryptedRunPassesTheScan) {
  auto w = world(2, 250);
  const auto r = run_protocol(config(Mode::kEncFl, 2, 0.2, 2), w.shards, w.test);
  EXPECT_TRUE(r.privacy.applicable);
  EXPECT_TRUE(r.privacy.passed()) << r.privacy.violations.front();
  EXPECT_GT(r.privacy.patterns, 100u);
  EXPECT_GT(r.privacy.messages, 10u);
}

TEST(Privacy, ScanCatchesPlaintextLeaks) {
  auto w = world(2, 250);
  System sys(config(Mode::kEncFl, 2, 0.1), w.shards, w.test);
  // A plaintext model submission.
  sys.bus().send({MessageKind::kSubmitLocalParams, Endpoint::vu(1), Endpoint::server(),
                  nn::serialize_model(sys.global_model()), 1, {}});
  ASSERT_EQ(sys.privacy().violations.size(), 1u);
  EXPECT_NE(sys.privacy().violations[0].find("plaintext model"), std::string::npos);
  // Raw feature bytes of a VU sample buried at an odd offset.
  const auto& s = sys.vus()[0].local[3];
  Bytes payload(999, 0x5a);
  std::memcpy(payload.data() + 301, s.features.data(), 8 * s.features.size());
  sys.bus().send({MessageKind::kRefreshResponse, Endpoint::vu(0), Endpoint::server(), payload, 1, {}});
  ASSERT_EQ(sys.privacy().violations.size(), 2u);
  EXPECT_NE(sys.privacy().violations[1].find("raw feature"), std::string::npos);
  // Plaintext offload.
  sys.bus().send({MessageKind::kOffloadData, Endpoint::vu(0), Endpoint::server(),
                  encode_plain_offload(std::span(sys.vus()[0].local).first(2)), 1, {}});
  EXPECT_GE(sys.privacy().violations.size(), 4u);  // decodable and raw bytes
}

TEST(Privacy, ScanIsNotApplicableToPlaintextModes) {
  auto w = world(2, 250);
  const auto r = run_protocol(config(Mode::kNEncFl, 2, 0.1, 1), w.shards, w.test);
  EXPECT_FALSE(r.privacy.applicable);
  EXPECT_EQ(r.privacy.messages, 0u);
}

TEST(PlainOffload, RoundTripAndRejection) {
  const auto samples = data::synth_generate({8, 1.0}, data::scaled_table_counts(30), 1);
  EXPECT_EQ(decode_plain_offload(encode_plain_offload(samples)), samples);
  auto bytes = encode_plain_offload(samples);
  bytes.pop_back();
  EXPECT_THROW(decode_plain_offload(bytes), FormatError);
  EXPECT_THROW(decode_plain_offload(nn::serialize_model(nn::init_model(nn::parse_architecture("8-6"), 1))), FormatError);
}

// ---- classification ---------------------------------------------------------

TEST(Classify, EncryptedScoresAgreeWithPlaintext) {
  auto w = world(1, 1300);
  auto cfg = config(Mode::kCfl, 1, 0.0, 8);
  const auto model = run_protocol(cfg, w.shards, w.test).final_model;
  const auto ctx = ckks::CkksContext::create(ckks::preset("small"));
  const auto keys = ckks::keygen(*ctx, 3);
  ckks::Rng rng(4);
  const auto enc = nn::encrypt_model(*ctx, model, keys.pub.encryption, rng);
  ckks::OracleRefresh refresh(ctx, keys.secret, keys.pub.encryption);
  const nn::EncEnv env{*ctx, keys.pub, &refresh};
  auto points = w.test;
  for (const auto& shard : w.shards) points.insert(points.end(), shard.begin(), shard.end());
  points.resize(1000);
  std::size_t agree = 0;
  for (const auto& s : points) {
    const auto scores = classify_enc(env, enc, nn::encrypt_input(*ctx, s.features, keys.pub.encryption, rng));
    const auto dec = tensor::unpack_vector(tensor::decrypt_packed(*ctx, scores, keys.secret));
    agree += nn::argmax(dec) == classify(model, s.features) ? 1 : 0;
  }
  EXPECT_GE(agree, 990u);
}

TEST(Classify, DominantOutputWeightWins) {
  auto m = nn::init_model(nn::parse_architecture("8-8-6"), 2);
  m.layers[1].b[4] = 50.0;
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 100; ++i) {
    std::vector<double> x(8);
    for (auto& v : x) v = u(rng);
    EXPECT_EQ(classify(m, x, nn::ActivationMode::kAnalytic), 4u);
    EXPECT_EQ(classify(m, x), classify(m, x));
  }
  EXPECT_THROW(classify(m, std::vector<double>(7, 0.0)), ShapeError);
}

}  // namespace
}  // namespace hefl::fl
