// Copyright 2026 The hefl Authors
// SPDX-License-Identifier: Apache-2.0

#include "hefl/metrics/metrics.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>

#include "hefl/data/dataset.hpp"
#include "hefl/error.hpp"

namespace hefl::metrics {

namespace {

std::vector<std::string> canonical_names() {
  return {data::kClassNames.begin(), data::kClassNames.end()};
}

double ratio(std::uint64_t num, std::uint64_t den, bool& undefined) {
  undefined = den == 0;
  return undefined ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

ConfusionMatrix::ConfusionMatrix() : ConfusionMatrix(canonical_names()) {}

ConfusionMatrix::ConfusionMatrix(std::vector<std::string> class_names)
    : names_(std::move(class_names)), counts_(names_.size() * names_.size(), 0) {
  if (names_.empty()) throw DataError("confusion matrix needs at least one class");
}

ConfusionMatrix ConfusionMatrix::from_counts(std::vector<std::vector<std::uint64_t>> rows,
                                             std::vector<std::string> class_names) {
  if (class_names.empty()) {
    if (rows.size() == data::kNumClasses) {
      class_names = canonical_names();
    } else {
      for (std::size_t c = 0; c < rows.size(); ++c) class_names.push_back("class" + std::to_string(c));
    }
  }
  ConfusionMatrix cm(std::move(class_names));
  if (rows.size() != cm.classes()) throw DataError("confusion matrix row count does not match the classes");
  for (std::size_t t = 0; t < rows.size(); ++t) {
    if (rows[t].size() != cm.classes()) throw DataError("confusion matrix is not square");
    for (std::size_t p = 0; p < rows[t].size(); ++p) cm.counts_[t * cm.classes() + p] = rows[t][p];
  }
  return cm;
}

void ConfusionMatrix::accumulate(std::size_t true_label, std::size_t predicted) {
  if (true_label >= classes() || predicted >= classes()) {
    throw DataError("confusion matrix: label out of range (" + std::to_string(true_label) + ", " +
                    std::to_string(predicted) + ")");
  }
  ++counts_[true_label * classes() + predicted];
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  if (other.names_ != names_) throw DataError("confusion matrix merge: class lists differ");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
}

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t t = 0;
  for (auto v : counts_) t += v;
  return t;
}

std::uint64_t ConfusionMatrix::tp(std::size_t c) const { return (*this)(c, c); }

std::uint64_t ConfusionMatrix::fp(std::size_t c) const {
  std::uint64_t s = 0;
  for (std::size_t t = 0; t < classes(); ++t) {
    if (t != c) s += (*this)(t, c);
  }
  return s;
}

std::uint64_t ConfusionMatrix::fn(std::size_t c) const {
  std::uint64_t s = 0;
  for (std::size_t p = 0; p < classes(); ++p) {
    if (p != c) s += (*this)(c, p);
  }
  return s;
}

std::uint64_t ConfusionMatrix::tn(std::size_t c) const { return total() - tp(c) - fp(c) - fn(c); }

Metrics evaluate(const ConfusionMatrix& cm) {
  const std::uint64_t n = cm.total();
  if (n == 0) throw DataError("metrics of an empty confusion matrix");
  const std::size_t k = cm.classes();
  Metrics m;
  m.precision.resize(k);
  m.recall.resize(k);
  m.precision_undefined.resize(k);
  m.recall_undefined.resize(k);
  std::uint64_t trace = 0;
  double acc = 0.0, prec = 0.0, rec = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    const auto tp = cm.tp(c), fp = cm.fp(c), fn = cm.fn(c), tn = cm.tn(c);
    trace += tp;
    acc += static_cast<double>(tp + tn) / static_cast<double>(n);
    bool undef = false;
    m.precision[c] = ratio(tp, tp + fp, undef);
    m.precision_undefined[c] = undef;
    m.recall[c] = ratio(tp, tp + fn, undef);
    m.recall_undefined[c] = undef;
    prec += m.precision[c];
    rec += m.recall[c];
  }
  const double kd = static_cast<double>(k);
  m.ovr_accuracy = acc / kd;
  m.micro_accuracy = static_cast<double>(trace) / static_cast<double>(n);
  m.macro_precision = prec / kd;
  m.macro_recall = rec / kd;
  return m;
}

double ovr_accuracy(const ConfusionMatrix& cm) { return evaluate(cm).ovr_accuracy; }
double micro_accuracy(const ConfusionMatrix& cm) { return evaluate(cm).micro_accuracy; }
double macro_precision(const ConfusionMatrix& cm) { return evaluate(cm).macro_precision; }
double macro_recall(const ConfusionMatrix& cm) { return evaluate(cm).macro_recall; }

std::string format_number(double v) {
  char buf[32];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

std::vector<double> accuracy_gaps(const std::vector<RunSummary>& runs) {
  std::vector<double> gaps(runs.size(), 0.0);
  for (std::size_t i = 0; i < runs.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      if (runs[j].group == runs[i].group) {
        gaps[i] = 100.0 * (runs[j].metrics.ovr_accuracy - runs[i].metrics.ovr_accuracy);
        break;
      }
    }
  }
  return gaps;
}

namespace {

std::size_t undefined_terms(const Metrics& m) {
  std::size_t n = 0;
  for (bool b : m.precision_undefined) n += b;
  for (bool b : m.recall_undefined) n += b;
  return n;
}

}  // namespace

std::string comparison_csv(const std::vector<RunSummary>& runs) {
  const auto gaps = accuracy_gaps(runs);
  std::string out =
      "mode,group,vus,offload,rounds,converged_round,ovr_accuracy,micro_accuracy,macro_precision,"
      "macro_recall,gap_pp,undefined_terms\n";
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const auto& r = runs[i];
    out += r.mode + "," + r.group + "," + std::to_string(r.vus) + "," + format_number(r.offload) + "," +
           std::to_string(r.rounds) + "," + (r.converged_round ? std::to_string(*r.converged_round) : "") + "," +
           format_number(r.metrics.ovr_accuracy) + "," + format_number(r.metrics.micro_accuracy) + "," +
           format_number(r.metrics.macro_precision) + "," + format_number(r.metrics.macro_recall) + "," +
           format_number(gaps[i]) + "," + std::to_string(undefined_terms(r.metrics)) + "\n";
  }
  return out;
}

std::string comparison_text(const std::vector<RunSummary>& runs) {
  const auto gaps = accuracy_gaps(runs);
  std::string out;
  char line[256];
  std::snprintf(line, sizeof line, "%-8s %-16s %4s %7s %6s %9s %9s %9s %9s %8s\n", "mode", "group", "N", "offload",
                "rounds", "conv", "accuracy", "precision", "recall", "gap(pp)");
  out += line;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const auto& r = runs[i];
    const std::string conv = r.converged_round ? std::to_string(*r.converged_round) : "-";
    std::snprintf(line, sizeof line, "%-8s %-16s %4zu %6.0f%% %6zu %9s %8.2f%% %8.2f%% %8.2f%% %8.2f\n",
                  r.mode.c_str(), r.group.c_str(), r.vus, 100.0 * r.offload, r.rounds, conv.c_str(),
                  100.0 * r.metrics.ovr_accuracy, 100.0 * r.metrics.macro_precision,
                  100.0 * r.metrics.macro_recall, gaps[i]);
    out += line;
    if (undefined_terms(r.metrics) != 0) {
      out += "         note: " + std::to_string(undefined_terms(r.metrics)) +
             " precision/recall terms had a zero denominator and count as 0\n";
    }
  }
  return out;
}

std::string confusion_csv(const ConfusionMatrix& cm) {
  std::string out = "true\\predicted";
  for (const auto& n : cm.names()) out += "," + n;
  out += "\n";
  for (std::size_t t = 0; t < cm.classes(); ++t) {
    out += cm.names()[t];
    for (std::size_t p = 0; p < cm.classes(); ++p) out += "," + std::to_string(cm(t, p));
    out += "\n";
  }
  return out;
}

std::string per_class_csv(const ConfusionMatrix& cm) {
  const auto m = evaluate(cm);
  std::string out = "class,precision,recall,precision_undefined,recall_undefined\n";
  for (std::size_t c = 0; c < cm.classes(); ++c) {
    out += cm.names()[c] + "," + format_number(m.precision[c]) + "," + format_number(m.recall[c]) + "," +
           (m.precision_undefined[c] ? "1" : "0") + "," + (m.recall_undefined[c] ? "1" : "0") + "\n";
  }
  return out;
}

}  // namespace hefl::metrics
