// Copyright 2026 The hefl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace hefl::metrics {

/// counts(t, p): samples of true class t predicted as p.
class ConfusionMatrix {
 public:
  /// The six traffic classes in canonical order.
  ConfusionMatrix();
  explicit ConfusionMatrix(std::vector<std::string> class_names);
  static ConfusionMatrix from_counts(std::vector<std::vector<std::uint64_t>> rows,
                                     std::vector<std::string> class_names = {});

  void accumulate(std::size_t true_label, std::size_t predicted);
  /// Elementwise sum; both matrices must share the class list.
  void merge(const ConfusionMatrix& other);

  std::size_t classes() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }
  std::uint64_t operator()(std::size_t t, std::size_t p) const { return counts_[t * classes() + p]; }
  std::uint64_t total() const;

  std::uint64_t tp(std::size_t c) const;
  std::uint64_t fp(std::size_t c) const;
  std::uint64_t fn(std::size_t c) const;
  std::uint64_t tn(std::size_t c) const;

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

 private:
  std::vector<std::string> names_;
  std::vector<std::uint64_t> counts_;
};

struct Metrics {
  /// (1/C) sum_c (TP_c + TN_c) / (TP_c + TN_c + FP_c + FN_c), one-vs-rest per class.
  double ovr_accuracy = 0.0;
  /// trace / total.
  double micro_accuracy = 0.0;
  /// (1/K) sum_k TP_k / (TP_k + FP_k); a zero denominator contributes 0 and is flagged.
  double macro_precision = 0.0;
  /// (1/K) sum_k TP_k / (TP_k + FN_k); same zero rule.
  double macro_recall = 0.0;
  std::vector<double> precision;
  std::vector<double> recall;
  std::vector<bool> precision_undefined;
  std::vector<bool> recall_undefined;
};

/// Throws DataError on an empty matrix.
Metrics evaluate(const ConfusionMatrix& cm);

double ovr_accuracy(const ConfusionMatrix& cm);
double micro_accuracy(const ConfusionMatrix& cm);
double macro_precision(const ConfusionMatrix& cm);
double macro_recall(const ConfusionMatrix& cm);

/// One experiment row of a comparison table.
struct RunSummary {
  std::string mode;   // CFL, N-EncFL or EncFL
  std::string group;  // rows sharing a group are compared against the group's first row
  std::size_t vus = 0;
  double offload = 0.0;
  std::size_t rounds = 0;
  std::optional<std::size_t> converged_round;
  ConfusionMatrix cm;
  Metrics metrics;
};

/// One-vs-rest accuracy gap in percentage points against the first row of the same group.
std::vector<double> accuracy_gaps(const std::vector<RunSummary>& runs);

/// mode,group,vus,offload,rounds,converged_round,ovr_accuracy,micro_accuracy,
/// macro_precision,macro_recall,gap_pp,undefined_terms
std::string comparison_csv(const std::vector<RunSummary>& runs);
/// Fixed-width table for terminals.
std::string comparison_text(const std::vector<RunSummary>& runs);
/// Header row and column of class names.
std::string confusion_csv(const ConfusionMatrix& cm);
/// class,precision,recall,precision_undefined,recall_undefined
std::string per_class_csv(const ConfusionMatrix& cm);

/// Shortest round-trip decimal form, so CSV artifacts are byte-stable.
std::string format_number(double v);

}  // namespace hefl::metrics
