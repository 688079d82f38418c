// Copyright 2026 The hefl Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "hefl/error.hpp"
#include "hefl/metrics/metrics.hpp"

namespace hefl::metrics {
namespace {

ConfusionMatrix two_class(std::uint64_t a, std::uint64_t b, std::uint64_t c, std::uint64_t d) {
  return ConfusionMatrix::from_counts({{a, b}, {c, d}});
}

TEST(Confusion, AccumulateCells) {
  ConfusionMatrix cm;
  EXPECT_EQ(cm.classes(), 6u);
  for (int i = 0; i < 3; ++i) cm.accumulate(0, 0);
  EXPECT_EQ(cm(0, 0), 3u);
  EXPECT_EQ(cm.total(), 3u);
  ConfusionMatrix one;
  one.accumulate(1, 2);
  EXPECT_EQ(one(1, 2), 1u);
  EXPECT_EQ(one.total(), 1u);
  EXPECT_THROW(one.accumulate(6, 0), DataError);
  EXPECT_THROW(one.accumulate(0, 6), DataError);
}

TEST(Confusion, OrderIndependentAndMergeable) {
  std::mt19937_64 rng(3);
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (int i = 0; i < 500; ++i) pairs.emplace_back(rng() % 6, rng() % 6);
  ConfusionMatrix fwd, rev, left, right;
  for (const auto& [t, p] : pairs) fwd.accumulate(t, p);
  for (auto it = pairs.rbegin(); it != pairs.rend(); ++it) rev.accumulate(it->first, it->second);
  for (std::size_t i = 0; i < pairs.size(); ++i) (i % 2 ? left : right).accumulate(pairs[i].first, pairs[i].second);
  left.merge(right);
  EXPECT_EQ(fwd, rev);
  EXPECT_EQ(fwd, left);
  EXPECT_EQ(fwd.total(), 500u);
  EXPECT_THROW(fwd.merge(two_class(1, 0, 0, 1)), DataError);
}

// Hand-evaluated worked matrices; equality is exact.
TEST(Metrics, WorkedTwoClassMatrices) {
  const auto half = evaluate(two_class(1, 1, 1, 1));
  EXPECT_EQ(half.ovr_accuracy, 0.5);
  EXPECT_EQ(half.micro_accuracy, 0.5);

  const auto m = evaluate(two_class(2, 0, 1, 1));
  EXPECT_EQ(m.macro_precision, (2.0 / 3.0 + 1.0) / 2.0);  // class terms summed, then divided by C
  EXPECT_EQ(m.macro_recall, 0.75);
}

TEST(Metrics, PerfectAndAllWrong) {
  ConfusionMatrix cm;
  for (std::size_t c = 0; c < 6; ++c) cm.accumulate(c, c);
  const auto p = evaluate(cm);
  EXPECT_EQ(p.ovr_accuracy, 1.0);
  EXPECT_EQ(p.micro_accuracy, 1.0);
  EXPECT_EQ(p.macro_precision, 1.0);
  EXPECT_EQ(p.macro_recall, 1.0);

  const auto w = evaluate(two_class(0, 3, 3, 0));
  EXPECT_EQ(w.micro_accuracy, 0.0);
  EXPECT_EQ(w.ovr_accuracy, 0.0);
}

TEST(Metrics, NeverPredictedClassIsFlagged) {
  const auto m = evaluate(two_class(3, 0, 2, 0));
  EXPECT_TRUE(m.precision_undefined[1]);
  EXPECT_EQ(m.precision[1], 0.0);
  EXPECT_FALSE(m.recall_undefined[1]);
  EXPECT_EQ(m.macro_precision, (3.0 / 5.0) / 2.0);
  EXPECT_NE(comparison_text({RunSummary{"EncFL", "g", 2, 0.1, 5, {}, two_class(3, 0, 2, 0), m}}).find("zero denominator"),
            std::string::npos);
  EXPECT_NE(per_class_csv(two_class(3, 0, 2, 0)).find("class1,0,0,1,0"), std::string::npos);
}

TEST(Metrics, EmptyMatrixIsAnError) { EXPECT_THROW(evaluate(ConfusionMatrix()), DataError); }

TEST(Metrics, BoundedAndPermutationInvariant) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::vector<std::uint64_t>> rows(6, std::vector<std::uint64_t>(6));
    for (auto& r : rows) {
      for (auto& v : r) v = rng() % 20;
    }
    const auto m = evaluate(ConfusionMatrix::from_counts(rows));
    std::vector<std::size_t> perm{3, 0, 5, 1, 4, 2};
    std::vector<std::vector<std::uint64_t>> prow(6, std::vector<std::uint64_t>(6));
    for (std::size_t t = 0; t < 6; ++t) {
      for (std::size_t p = 0; p < 6; ++p) prow[t][p] = rows[perm[t]][perm[p]];
    }
    const auto q = evaluate(ConfusionMatrix::from_counts(prow));
    for (double v : {m.ovr_accuracy, m.micro_accuracy, m.macro_precision, m.macro_recall}) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
    EXPECT_NEAR(q.ovr_accuracy, m.ovr_accuracy, 1e-12);
    EXPECT_NEAR(q.micro_accuracy, m.micro_accuracy, 1e-12);
    EXPECT_NEAR(q.macro_precision, m.macro_precision, 1e-12);
    EXPECT_NEAR(q.macro_recall, m.macro_recall, 1e-12);
  }
}

TEST(Metrics, OvrAccuracyDiffersFromMicroForManyClasses) {
  ConfusionMatrix cm;
  cm.accumulate(0, 1);
  cm.accumulate(2, 2);
  const auto m = evaluate(cm);
  EXPECT_EQ(m.micro_accuracy, 0.5);
  // Classes 0 and 1 each score 1/2, the other four score 1.
  EXPECT_NEAR(m.ovr_accuracy, (0.5 + 0.5 + 4.0) / 6.0, 1e-15);
}

RunSummary run(std::string mode, std::string group, const ConfusionMatrix& cm) {
  return {std::move(mode), std::move(group), 2, 0.1, 10, 7, cm, evaluate(cm)};
}

TEST(Report, GapsAndLayout) {
  const auto good = two_class(5, 0, 0, 5), worse = two_class(5, 0, 1, 4);
  const std::vector<RunSummary> runs{run("N-EncFL", "N=2 p=10%", good), run("EncFL", "N=2 p=10%", worse)};
  const auto gaps = accuracy_gaps(runs);
  EXPECT_EQ(gaps[0], 0.0);
  EXPECT_NEAR(gaps[1], 10.0, 1e-12);
  const auto csv = comparison_csv(runs);
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "mode,group,vus,offload,rounds,converged_round,ovr_accuracy,micro_accuracy,macro_precision,"
            "macro_recall,gap_pp,undefined_terms");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);

  const std::vector<RunSummary> single{run("EncFL", "a", good)};
  const auto one = comparison_csv(single);
  EXPECT_EQ(std::count(one.begin(), one.end(), '\n'), 2);

  const std::vector<RunSummary> same{run("N-EncFL", "a", worse), run("EncFL", "a", worse), run("CFL", "a", worse)};
  for (double g : accuracy_gaps(same)) EXPECT_EQ(g, 0.0);
}

TEST(Report, ConfusionCsv) {
  const auto csv = confusion_csv(ConfusionMatrix::from_counts({{2, 0}, {1, 1}}, {"a", "b"}));
  EXPECT_EQ(csv, "true\\predicted,a,b\na,2,0\nb,1,1\n");
  ConfusionMatrix six;
  EXPECT_EQ(confusion_csv(six).substr(0, 30), "true\\predicted,Normal,DDoS,Mit");
}

}  // namespace
}  // namespace hefl::metrics
