#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "xfb/errors.hpp"
#include "xfb/stages.hpp"

// Confusion matrix, accuracy, per-class F1 and macro-average F1. MF1 always
// divides by the fixed class count 5, so classes absent from both truth and
// prediction contribute F1 = 0 and pull the average down.

namespace xfb {

struct ConfusionMatrix {
  // rows = true stage, cols = predicted stage
  std::array<std::array<std::int64_t, kNumStages>, kNumStages> cells{};

  std::int64_t total() const {
    std::int64_t t = 0;
    for (const auto& row : cells)
      for (std::int64_t c : row) t += c;
    return t;
  }

  std::int64_t& at(Stage truth, Stage pred) {
    return cells[static_cast<std::size_t>(truth)][static_cast<std::size_t>(pred)];
  }
  std::int64_t at(Stage truth, Stage pred) const {
    return cells[static_cast<std::size_t>(truth)][static_cast<std::size_t>(pred)];
  }
};

inline ConfusionMatrix confusion(const std::vector<Stage>& truth,
                                 const std::vector<Stage>& pred) {
  if (truth.size() != pred.size())
    throw LengthMismatch("confusion: label sequences differ in length");
  if (truth.empty()) throw EmptyInput("confusion: empty input");
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < truth.size(); ++i) ++cm.at(truth[i], pred[i]);
  return cm;
}

struct MetricSet {
  double acc = 0.0;
  std::array<double, kNumStages> per_class_f1{};
  double mf1 = 0.0;

  bool operator==(const MetricSet&) const = default;
};

inline MetricSet metric_set(const ConfusionMatrix& cm) {
  const std::int64_t total = cm.total();
  if (total == 0) throw EmptyMatrix("metric_set: empty confusion matrix");
  MetricSet m;
  std::int64_t trace = 0;
  for (int c = 0; c < kNumStages; ++c) {
    std::int64_t tp = cm.cells[c][c];
    trace += tp;
    std::int64_t fp = 0, fn = 0;
    for (int k = 0; k < kNumStages; ++k) {
      if (k == c) continue;
      fp += cm.cells[k][c];
      fn += cm.cells[c][k];
    }
    // Equivalent to 2PR/(P+R) with F1 = 0 whenever precision+recall
    // degenerates (no true and no predicted instances included).
    std::int64_t denom = 2 * tp + fp + fn;
    m.per_class_f1[c] =
        denom == 0 ? 0.0
                   : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
    m.mf1 += m.per_class_f1[c];
  }
  m.mf1 /= kNumStages;
  m.acc = static_cast<double>(trace) / static_cast<double>(total);
  return m;
}

inline MetricSet metric_set(const std::vector<Stage>& truth,
                            const std::vector<Stage>& pred) {
  return metric_set(confusion(truth, pred));
}

}  // namespace xfb
