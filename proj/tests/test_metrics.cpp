#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <vector>

#include "xfb/metrics.hpp"
#include "xfb/rng.hpp"

using namespace xfb;

namespace {

// Straightforward precision/recall oracle, kept deliberately different in
// structure from the library implementation.
MetricSet oracle(const ConfusionMatrix& cm) {
  MetricSet m;
  double correct = 0, total = 0;
  for (int i = 0; i < kNumStages; ++i)
    for (int j = 0; j < kNumStages; ++j) {
      total += static_cast<double>(cm.cells[i][j]);
      if (i == j) correct += static_cast<double>(cm.cells[i][j]);
    }
  m.acc = correct / total;
  for (int c = 0; c < kNumStages; ++c) {
    double tp = static_cast<double>(cm.cells[c][c]);
    double pred = 0, truth = 0;
    for (int k = 0; k < kNumStages; ++k) {
      pred += static_cast<double>(cm.cells[k][c]);
      truth += static_cast<double>(cm.cells[c][k]);
    }
    double f1 = 0;
    if (pred > 0 && truth > 0) {
      const double precision = tp / pred;
      const double recall = tp / truth;
      f1 = precision + recall > 0 ? 2 * precision * recall / (precision + recall)
                                  : 0.0;
    }
    m.per_class_f1[c] = f1;
    m.mf1 += f1;
  }
  m.mf1 /= kNumStages;
  return m;
}

}  // namespace

TEST_CASE("confusion counts every (truth, prediction) pair") {
  const std::vector<Stage> truth{Stage::W, Stage::W, Stage::N2, Stage::N2,
                                 Stage::REM};
  const std::vector<Stage> pred{Stage::W, Stage::N2, Stage::N2, Stage::N2,
                                Stage::REM};
  const auto cm = confusion(truth, pred);
  CHECK(cm.total() == 5);
  CHECK(cm.at(Stage::W, Stage::W) == 1);
  CHECK(cm.at(Stage::W, Stage::N2) == 1);
  CHECK(cm.at(Stage::N2, Stage::N2) == 2);
  CHECK(cm.at(Stage::REM, Stage::REM) == 1);
}

TEST_CASE("confusion error cases") {
  CHECK_THROWS_AS(confusion({Stage::W}, {Stage::W, Stage::N1}), LengthMismatch);
  CHECK_THROWS_AS(confusion({}, {}), EmptyInput);
  CHECK_THROWS_AS(metric_set(ConfusionMatrix{}), EmptyMatrix);
}

TEST_CASE("worked macro-F1 example") {
  const std::vector<Stage> truth{Stage::W, Stage::W, Stage::N2, Stage::N2,
                                 Stage::REM};
  const std::vector<Stage> pred{Stage::W, Stage::N2, Stage::N2, Stage::N2,
                                Stage::REM};
  const auto m = metric_set(truth, pred);
  CHECK(m.acc == Catch::Approx(0.8).margin(1e-12));
  CHECK(m.per_class_f1[0] == Catch::Approx(2.0 / 3.0).margin(1e-12));
  CHECK(m.per_class_f1[1] == 0.0);
  CHECK(m.per_class_f1[2] == Catch::Approx(0.8).margin(1e-12));
  CHECK(m.per_class_f1[3] == 0.0);
  CHECK(m.per_class_f1[4] == Catch::Approx(1.0).margin(1e-12));
  // absent classes still divide the sum by 5
  CHECK(m.mf1 == Catch::Approx(0.49333).margin(1e-5));
}

TEST_CASE("perfect and degenerate predictions") {
  const std::vector<Stage> truth{Stage::W, Stage::N1, Stage::N2, Stage::N3,
                                 Stage::REM};
  const auto perfect = metric_set(truth, truth);
  CHECK(perfect.acc == 1.0);
  CHECK(perfect.mf1 == Catch::Approx(1.0).margin(1e-12));

  const std::vector<Stage> all_w(truth.size(), Stage::W);
  const auto degenerate = metric_set(truth, all_w);
  CHECK(degenerate.acc == Catch::Approx(0.2).margin(1e-12));
  // W: tp=1 fp=4 fn=0 so F1 = 2/(2+4) = 1/3; all other classes 0
  CHECK(degenerate.mf1 == Catch::Approx(1.0 / 3.0 / 5.0).margin(1e-12));
}

TEST_CASE("metric_set equals the brute-force oracle on random matrices") {
  Rng rng(1234);
  for (int trial = 0; trial < 1000; ++trial) {
    ConfusionMatrix cm;
    std::int64_t total = 0;
    for (int i = 0; i < kNumStages; ++i)
      for (int j = 0; j < kNumStages; ++j) {
        // sparse-ish so empty rows/columns occur regularly
        const auto v = rng.index(4) == 0 ? static_cast<std::int64_t>(rng.index(50))
                                         : 0;
        cm.cells[i][j] = v;
        total += v;
      }
    if (total == 0) {
      cm.cells[static_cast<std::size_t>(rng.index(5))]
              [static_cast<std::size_t>(rng.index(5))] = 1;
    }
    const auto got = metric_set(cm);
    const auto want = oracle(cm);
    CHECK(got.acc == Catch::Approx(want.acc).margin(1e-9));
    CHECK(got.mf1 == Catch::Approx(want.mf1).margin(1e-9));
    for (int c = 0; c < kNumStages; ++c)
      CHECK(got.per_class_f1[c] ==
            Catch::Approx(want.per_class_f1[c]).margin(1e-9));
  }
}

TEST_CASE("mf1 is the mean of per-class F1 and metrics stay in range") {
  Rng rng(777);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<Stage> truth, pred;
    const std::size_t n = 1 + rng.index(300);
    for (std::size_t i = 0; i < n; ++i) {
      truth.push_back(static_cast<Stage>(rng.index(5)));
      pred.push_back(static_cast<Stage>(rng.index(5)));
    }
    const auto m = metric_set(truth, pred);
    double sum = 0;
    for (double f1 : m.per_class_f1) {
      CHECK(f1 >= 0.0);
      CHECK(f1 <= 1.0);
      sum += f1;
    }
    CHECK(m.mf1 == Catch::Approx(sum / 5.0).margin(1e-12));
    CHECK(m.acc >= 0.0);
    CHECK(m.acc <= 1.0);
  }
}

TEST_CASE("metrics are invariant to joint epoch permutation") {
  Rng rng(31);
  std::vector<Stage> truth, pred;
  for (int i = 0; i < 200; ++i) {
    truth.push_back(static_cast<Stage>(rng.index(5)));
    pred.push_back(static_cast<Stage>(rng.index(5)));
  }
  const auto base = metric_set(truth, pred);

  std::vector<std::size_t> order(truth.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);
  std::vector<Stage> truth2, pred2;
  for (std::size_t i : order) {
    truth2.push_back(truth[i]);
    pred2.push_back(pred[i]);
  }
  const auto shuffled = metric_set(truth2, pred2);
  CHECK(base.acc == shuffled.acc);
  CHECK(base.mf1 == shuffled.mf1);
}
