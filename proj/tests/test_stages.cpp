#include <catch2/catch_amalgamated.hpp>

#include <vector>

#include "xfb/rng.hpp"
#include "xfb/stages.hpp"

using namespace xfb;

namespace {

std::vector<std::pair<int, RawStage>> raw_seq(std::initializer_list<RawStage> v) {
  std::vector<std::pair<int, RawStage>> out;
  int i = 0;
  for (RawStage s : v) out.emplace_back(i++, s);
  return out;
}

std::vector<std::pair<int, Stage>> seq(std::initializer_list<Stage> v) {
  std::vector<std::pair<int, Stage>> out;
  int i = 0;
  for (Stage s : v) out.emplace_back(i++, s);
  return out;
}

}  // namespace

TEST_CASE("raw label names round-trip") {
  for (RawStage s : {RawStage::W, RawStage::N1, RawStage::N2, RawStage::N3,
                     RawStage::N4, RawStage::REM, RawStage::MOVEMENT,
                     RawStage::UNKNOWN}) {
    auto parsed = parse_raw_stage(to_string(s));
    REQUIRE(parsed.has_value());
    CHECK(*parsed == s);
  }
  CHECK_FALSE(parse_raw_stage("N5").has_value());
  CHECK_FALSE(parse_raw_stage("").has_value());
}

TEST_CASE("harmonized label names round-trip and keep ordinal order") {
  CHECK(static_cast<int>(Stage::W) == 0);
  CHECK(static_cast<int>(Stage::N1) == 1);
  CHECK(static_cast<int>(Stage::N2) == 2);
  CHECK(static_cast<int>(Stage::N3) == 3);
  CHECK(static_cast<int>(Stage::REM) == 4);
  for (Stage s : kAllStages) {
    auto parsed = parse_stage(to_string(s));
    REQUIRE(parsed.has_value());
    CHECK(*parsed == s);
  }
  CHECK_FALSE(parse_stage("N4").has_value());
}

TEST_CASE("harmonize merges N4 and drops artifacts") {
  CHECK(harmonize(RawStage::N4) == Stage::N3);
  CHECK(harmonize(RawStage::W) == Stage::W);
  CHECK(harmonize(RawStage::N1) == Stage::N1);
  CHECK(harmonize(RawStage::N2) == Stage::N2);
  CHECK(harmonize(RawStage::N3) == Stage::N3);
  CHECK(harmonize(RawStage::REM) == Stage::REM);
  CHECK_FALSE(harmonize(RawStage::MOVEMENT).has_value());
  CHECK_FALSE(harmonize(RawStage::UNKNOWN).has_value());
}

TEST_CASE("harmonize is idempotent on its image") {
  for (RawStage raw : {RawStage::W, RawStage::N1, RawStage::N2, RawStage::N3,
                       RawStage::N4, RawStage::REM}) {
    const auto first = harmonize(raw);
    REQUIRE(first.has_value());
    // feed the harmonized label back in through its raw spelling
    const auto again = harmonize(*parse_raw_stage(to_string(*first)));
    REQUIRE(again.has_value());
    CHECK(*again == *first);
  }
}

TEST_CASE("filter_epochs drops artifact epochs and harmonizes") {
  const auto out =
      filter_epochs(raw_seq({RawStage::W, RawStage::MOVEMENT, RawStage::N4}));
  REQUIRE(out.size() == 2);
  CHECK(out[0].first == 0);
  CHECK(out[0].second == Stage::W);
  CHECK(out[1].first == 2);
  CHECK(out[1].second == Stage::N3);
}

TEST_CASE("filter_epochs keeps clean input as-is") {
  const auto out = filter_epochs(
      raw_seq({RawStage::W, RawStage::W, RawStage::W, RawStage::W, RawStage::W}));
  REQUIRE(out.size() == 5);
  for (const auto& [e, s] : out) CHECK(s == Stage::W);
}

TEST_CASE("filter_epochs error cases") {
  CHECK_THROWS_AS(filter_epochs(raw_seq({RawStage::UNKNOWN, RawStage::UNKNOWN})),
                  EmptyAfterFilter);
  CHECK_THROWS_AS(filter_epochs(std::vector<std::pair<int, RawStage>>{}),
                  EmptyInput);
}

TEST_CASE("filter_epochs length law over random sequences") {
  Rng rng(42);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::pair<int, RawStage>> in;
    std::size_t artifacts = 0;
    const std::size_t n = 1 + rng.index(200);
    for (std::size_t i = 0; i < n; ++i) {
      const auto raw = static_cast<RawStage>(rng.index(8));
      if (raw == RawStage::MOVEMENT || raw == RawStage::UNKNOWN) ++artifacts;
      in.emplace_back(static_cast<int>(i), raw);
    }
    if (artifacts == n) {
      CHECK_THROWS_AS(filter_epochs(in), EmptyAfterFilter);
    } else {
      CHECK(filter_epochs(in).size() == n - artifacts);
    }
  }
}

TEST_CASE("trim_wake truncates long wake runs to the keep budget") {
  // 120 leading W epochs at 30 s each with a 30 min budget keeps 60 of them
  std::vector<std::pair<int, Stage>> in;
  for (int i = 0; i < 120; ++i) in.emplace_back(i, Stage::W);
  in.emplace_back(120, Stage::N1);
  in.emplace_back(121, Stage::N2);
  const auto out = trim_wake(in, 30.0, 30.0);
  REQUIRE(out.size() == 62);
  CHECK(out.front().first == 60);
  CHECK(out.front().second == Stage::W);
  CHECK(out.back().second == Stage::N2);
}

TEST_CASE("trim_wake truncates the trailing run too") {
  std::vector<std::pair<int, Stage>> in;
  in.emplace_back(0, Stage::N2);
  for (int i = 1; i <= 10; ++i) in.emplace_back(i, Stage::W);
  const auto out = trim_wake(in, 1.0, 30.0);  // budget of 2 epochs
  REQUIRE(out.size() == 3);
  CHECK(out[0].second == Stage::N2);
  CHECK(out[1].second == Stage::W);
  CHECK(out[2].second == Stage::W);
}

TEST_CASE("trim_wake without leading or trailing wake is identity") {
  const auto in = seq({Stage::N1, Stage::W, Stage::N2, Stage::REM});
  const auto out = trim_wake(in, 0.5, 30.0);
  CHECK(out == in);
}

TEST_CASE("trim_wake error cases") {
  CHECK_THROWS_AS(trim_wake(seq({Stage::W, Stage::W}), 30.0, 30.0),
                  NoSleepPeriod);
  CHECK_THROWS_AS(trim_wake(seq({Stage::N1}), -1.0, 30.0), InvalidParams);
  CHECK_THROWS_AS(trim_wake(seq({Stage::N1}), 30.0, 0.0), InvalidParams);
}

TEST_CASE("trim_wake never drops sleep and never grows, over random input") {
  Rng rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::pair<int, Stage>> in;
    const std::size_t n = 1 + rng.index(150);
    std::size_t sleep = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto s = static_cast<Stage>(rng.index(5));
      if (s != Stage::W) ++sleep;
      in.emplace_back(static_cast<int>(i), s);
    }
    const double keep_minutes = rng.uniform(0.0, 20.0);
    if (sleep == 0) {
      CHECK_THROWS_AS(trim_wake(in, keep_minutes, 30.0), NoSleepPeriod);
      continue;
    }
    const auto out = trim_wake(in, keep_minutes, 30.0);
    CHECK(out.size() <= in.size());
    std::size_t out_sleep = 0;
    for (const auto& [e, s] : out)
      if (s != Stage::W) ++out_sleep;
    CHECK(out_sleep == sleep);
  }
}

TEST_CASE("stage_distribution matches published dataset tallies") {
  std::vector<Stage> labels;
  auto push = [&](Stage s, int n) { labels.insert(labels.end(), n, s); };

  SECTION("first multi-channel inventory row") {
    push(Stage::W, 12242);
    push(Stage::N1, 7112);
    push(Stage::N2, 22167);
    push(Stage::N3, 3407);
    push(Stage::REM, 6365);
    const auto d = stage_distribution(labels);
    CHECK(d.total == 51293);
    CHECK(d.fraction(Stage::N1) == Catch::Approx(0.1387).margin(5e-4));
  }
  SECTION("apnea inventory row") {
    push(Stage::W, 20098);
    push(Stage::N1, 11062);
    push(Stage::N2, 27511);
    push(Stage::N3, 17251);
    push(Stage::REM, 11265);
    const auto d = stage_distribution(labels);
    CHECK(d.total == 87187);
    CHECK(d.fraction(Stage::N1) == Catch::Approx(0.1269).margin(5e-4));
  }
}

TEST_CASE("stage_distribution trivial and error cases") {
  const auto d = stage_distribution({Stage::W, Stage::W, Stage::W, Stage::W});
  CHECK(d.fraction(Stage::W) == 1.0);
  CHECK(d.counts[0] == 4);
  CHECK_THROWS_AS(stage_distribution({}), EmptyInput);
}

TEST_CASE("stage_distribution fractions sum to 1") {
  Rng rng(99);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Stage> labels;
    const std::size_t n = 1 + rng.index(500);
    for (std::size_t i = 0; i < n; ++i)
      labels.push_back(static_cast<Stage>(rng.index(5)));
    const auto d = stage_distribution(labels);
    double sum = 0;
    for (Stage s : kAllStages) sum += d.fraction(s);
    CHECK(sum == Catch::Approx(1.0).margin(1e-12));
    CHECK(d.total == static_cast<std::int64_t>(n));
  }
}
