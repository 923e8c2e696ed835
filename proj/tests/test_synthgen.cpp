#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "xfb/rng.hpp"
#include "xfb/synthgen.hpp"

using namespace xfb;
namespace fs = std::filesystem;

namespace {

DatasetDescriptor desc(std::string ds = "DS-A", std::string env = "ENV-1",
                       Condition cond = Condition::Healthy,
                       std::string channel = "C4", std::uint32_t rate = 128) {
  return DatasetDescriptor{std::move(ds), std::move(env), cond,
                           std::move(channel), rate, 30};
}

fs::path temp_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("xfb_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("area parsing follows the first electrode letter") {
  CHECK(area_of("F4") == Area::F);
  CHECK(area_of("Fpz-Cz") == Area::F);
  CHECK(area_of("C3") == Area::C);
  CHECK(area_of("Pz-Oz") == Area::P);
  CHECK(area_of("O2") == Area::O);
  CHECK_THROWS_AS(area_of("X1"), InvalidParams);
  CHECK_THROWS_AS(area_of(""), InvalidParams);
}

TEST_CASE("generation is deterministic") {
  GenParams p;
  p.n_subjects = 3;
  p.epochs_per_subject = 50;
  p.seed = 77;
  const auto a = generate(desc(), p);
  const auto b = generate(desc(), p);
  CHECK(a == b);

  GenParams p2 = p;
  p2.seed = 78;
  CHECK_FALSE(generate(desc(), p2) == a);
}

TEST_CASE("zero shifts and zero noise reproduce the base signatures") {
  GenParams p;
  p.n_subjects = 2;
  p.epochs_per_subject = 200;
  p.seed = 5;
  p.env_shift = 0;
  p.area_shift = 0;
  p.cond_shift = 0;
  p.noise_sd = 0;
  const auto cohort = generate(desc(), p);
  for (const auto& subject : cohort.subjects) {
    for (std::size_t e = 0; e < subject.epochs.size(); ++e) {
      const auto& sig = kBaseSignatures[static_cast<std::size_t>(
          subject.labels[e])];
      for (int j = 0; j < 5; ++j)
        CHECK(subject.epochs[e][j] ==
              Catch::Approx(sig[static_cast<std::size_t>(j)]).margin(1e-6));
    }
  }
}

TEST_CASE("shared axis values displace cohorts identically") {
  GenParams p;
  p.n_subjects = 1;
  p.epochs_per_subject = 30;
  p.seed = 11;
  p.noise_sd = 0;
  // same environment and condition, areas differ, so only the area term moves
  const auto a = generate(desc("DS-A", "E1", Condition::Healthy, "C4"), p);
  const auto b = generate(desc("DS-B", "E1", Condition::Healthy, "F4"), p);
  const auto c = generate(desc("DS-C", "E1", Condition::Healthy, "C3"), p);
  // C4 and C3 share an area: identical class vectors for identical labels
  std::array<std::array<float, 5>, kNumStages> va{}, vb{}, vc{};
  std::array<bool, kNumStages> seen_a{}, seen_c{};
  for (std::size_t e = 0; e < a.subjects[0].epochs.size(); ++e) {
    const auto k = static_cast<std::size_t>(a.subjects[0].labels[e]);
    for (int j = 0; j < 5; ++j) va[k][j] = a.subjects[0].epochs[e][j];
    seen_a[k] = true;
  }
  for (std::size_t e = 0; e < c.subjects[0].epochs.size(); ++e) {
    const auto k = static_cast<std::size_t>(c.subjects[0].labels[e]);
    for (int j = 0; j < 5; ++j) vc[k][j] = c.subjects[0].epochs[e][j];
    seen_c[k] = true;
  }
  for (std::size_t e = 0; e < b.subjects[0].epochs.size(); ++e) {
    const auto k = static_cast<std::size_t>(b.subjects[0].labels[e]);
    for (int j = 0; j < 5; ++j) vb[k][j] = b.subjects[0].epochs[e][j];
  }
  bool any_shared = false, any_moved = false;
  for (int k = 0; k < kNumStages; ++k) {
    if (!seen_a[k] || !seen_c[k]) continue;
    any_shared = true;
    for (int j = 0; j < 5; ++j) {
      CHECK(va[k][j] == vc[k][j]);
      if (va[k][j] != vb[k][j]) any_moved = true;
    }
  }
  CHECK(any_shared);
  CHECK(any_moved);
}

TEST_CASE("apnea inflates the N1 share") {
  GenParams p;
  p.n_subjects = 10;
  p.epochs_per_subject = 10000;  // 100k epochs per cohort
  p.seed = 3;
  const auto healthy =
      generate(desc("DS-H", "E1", Condition::Healthy, "C4"), p);
  const auto apnea = generate(desc("DS-S", "E1", Condition::Apnea, "C4"), p);
  auto n1_fraction = [](const Cohort& c) {
    std::int64_t n1 = 0, total = 0;
    for (const auto& s : c.subjects) {
      for (Stage st : s.labels) {
        if (st == Stage::N1) ++n1;
        ++total;
      }
    }
    return static_cast<double>(n1) / static_cast<double>(total);
  };
  CHECK(n1_fraction(apnea) > n1_fraction(healthy));
}

TEST_CASE("markov transitions match the configured matrix empirically") {
  GenParams p;
  p.n_subjects = 1;
  p.epochs_per_subject = 200000;
  p.seed = 9;
  for (Condition cond : {Condition::Healthy, Condition::Apnea}) {
    const auto cohort = generate(desc("DS-M", "E1", cond, "C4"), p);
    const auto& labels = cohort.subjects[0].labels;
    std::array<std::array<double, kNumStages>, kNumStages> counts{};
    std::array<double, kNumStages> row_totals{};
    for (std::size_t e = 1; e < labels.size(); ++e) {
      const auto from = static_cast<std::size_t>(labels[e - 1]);
      const auto to = static_cast<std::size_t>(labels[e]);
      counts[from][to] += 1;
      row_totals[from] += 1;
    }
    const auto want = transition_matrix(cond, p.apnea_n1_boost);
    for (int i = 0; i < kNumStages; ++i) {
      REQUIRE(row_totals[static_cast<std::size_t>(i)] > 0);
      for (int j = 0; j < kNumStages; ++j) {
        const double got = counts[i][j] / row_totals[static_cast<std::size_t>(i)];
        CHECK(std::abs(got - want[i][j]) < 0.02);
      }
    }
  }
}

TEST_CASE("transition rows are stochastic") {
  for (Condition cond : {Condition::Healthy, Condition::Apnea}) {
    const auto t = transition_matrix(cond, 1.6);
    for (int i = 0; i < kNumStages; ++i) {
      double row = 0;
      for (int j = 0; j < kNumStages; ++j) {
        CHECK(t[i][j] >= 0.0);
        row += t[i][j];
      }
      CHECK(row == Catch::Approx(1.0).margin(1e-12));
    }
  }
}

TEST_CASE("signal mode produces full-rate epochs") {
  GenParams p;
  p.n_subjects = 2;
  p.epochs_per_subject = 4;
  p.seed = 21;
  p.mode = GenMode::Signal;
  const auto cohort = generate(desc("DS-S", "E1", Condition::Healthy, "C4", 128), p);
  for (const auto& s : cohort.subjects) {
    REQUIRE(s.epochs.size() == 4);
    for (const auto& e : s.epochs) CHECK(e.size() == 128 * 30);
  }
  CHECK(cohort == generate(desc("DS-S", "E1", Condition::Healthy, "C4", 128), p));
}

TEST_CASE("generate rejects invalid parameters") {
  GenParams p;
  p.n_subjects = 0;
  CHECK_THROWS_AS(generate(desc(), p), InvalidParams);
  p = GenParams{};
  p.epochs_per_subject = 0;
  CHECK_THROWS_AS(generate(desc(), p), InvalidParams);
  p = GenParams{};
  p.noise_sd = -1;
  CHECK_THROWS_AS(generate(desc(), p), InvalidParams);
  p = GenParams{};
  auto d = desc();
  d.sampling_rate_hz = 0;
  CHECK_THROWS_AS(generate(d, p), InvalidParams);
}

TEST_CASE("split sizes follow the published ratios") {
  GenParams p;
  p.epochs_per_subject = 1;
  p.seed = 1;

  p.n_subjects = 10;
  auto s10 = split_subjects(generate(desc(), p), 4);
  CHECK(s10.test_subjects.size() == 2);
  CHECK(s10.val_subjects.size() == 1);
  CHECK(s10.train_subjects.size() == 7);

  p.n_subjects = 100;
  auto s100 = split_subjects(generate(desc(), p), 4);
  CHECK(s100.test_subjects.size() == 20);
  CHECK(s100.val_subjects.size() == 8);
  CHECK(s100.train_subjects.size() == 72);

  p.n_subjects = 12;
  auto s12 = split_subjects(generate(desc(), p), 4);
  CHECK(s12.test_subjects.size() == 2);
  CHECK(s12.val_subjects.size() == 1);
  CHECK(s12.train_subjects.size() == 9);

  p.n_subjects = 4;
  CHECK_THROWS_AS(split_subjects(generate(desc(), p), 4), TooFewSubjects);
}

TEST_CASE("splits partition the subjects for any seed") {
  GenParams p;
  p.epochs_per_subject = 1;
  p.seed = 2;
  Rng rng(1006);
  for (int trial = 0; trial < 30; ++trial) {
    p.n_subjects = 5 + static_cast<int>(rng.index(40));
    const auto cohort = generate(desc(), p);
    const auto split = split_subjects(cohort, rng.next_u64());
    std::set<std::string> all;
    for (const auto& id : split.train_subjects) all.insert(id);
    for (const auto& id : split.val_subjects) all.insert(id);
    for (const auto& id : split.test_subjects) all.insert(id);
    CHECK(all.size() == cohort.subjects.size());
    CHECK(split.train_subjects.size() + split.val_subjects.size() +
              split.test_subjects.size() ==
          cohort.subjects.size());
    CHECK(!split.train_subjects.empty());
  }
}

TEST_CASE("splits are deterministic in the seed") {
  GenParams p;
  p.epochs_per_subject = 1;
  p.n_subjects = 20;
  const auto cohort = generate(desc(), p);
  const auto a = split_subjects(cohort, 42);
  const auto b = split_subjects(cohort, 42);
  const auto c = split_subjects(cohort, 43);
  CHECK(a.train_subjects == b.train_subjects);
  CHECK(a.val_subjects == b.val_subjects);
  CHECK(a.test_subjects == b.test_subjects);
  CHECK_FALSE(a.test_subjects == c.test_subjects);
}

TEST_CASE("cohort files round-trip bit-exactly") {
  GenParams p;
  p.n_subjects = 3;
  p.epochs_per_subject = 25;
  p.seed = 31;
  for (GenMode mode : {GenMode::Features, GenMode::Signal}) {
    p.mode = mode;
    const auto cohort =
        generate(desc("DS-RT", "E2", Condition::Apnea, "F4", 128), p);
    const auto dir = temp_dir(std::string("cohort_rt_") + (mode == GenMode::Signal ? "sig" : "feat"));
    write_cohort(cohort, dir);
    const auto back = read_cohort(dir);
    CHECK(back == cohort);
    fs::remove_all(dir);
  }
}

TEST_CASE("cohort reader rejects malformed files") {
  GenParams p;
  p.n_subjects = 1;
  p.epochs_per_subject = 5;
  p.seed = 8;
  const auto cohort = generate(desc(), p);
  const auto dir = temp_dir("cohort_bad");
  write_cohort(cohort, dir);
  const auto subject_file = dir / "s000.xfb";

  SECTION("truncated payload") {
    const auto size = fs::file_size(subject_file);
    fs::resize_file(subject_file, size - 3);
    CHECK_THROWS_AS(read_cohort(dir), FormatError);
  }
  SECTION("bad magic") {
    std::fstream f(subject_file,
                   std::ios::in | std::ios::out | std::ios::binary);
    f.write("ZZZZ", 4);
    f.close();
    CHECK_THROWS_AS(read_cohort(dir), FormatError);
  }
  SECTION("trailing garbage") {
    std::ofstream f(subject_file, std::ios::binary | std::ios::app);
    f.write("x", 1);
    f.close();
    CHECK_THROWS_AS(read_cohort(dir), FormatError);
  }
  SECTION("missing subject file") {
    fs::remove(subject_file);
    CHECK_THROWS_AS(read_cohort(dir), IoError);
  }
  fs::remove_all(dir);
}

TEST_CASE("descriptor and params JSON round-trip") {
  const auto d = desc("DS-J", "E9", Condition::Apnea, "Pz-Oz", 100);
  CHECK(descriptor_from_json(descriptor_to_json(d)) == d);
  GenParams p;
  p.n_subjects = 7;
  p.seed = 1234567;
  p.mode = GenMode::Signal;
  p.cond_shift = 0.25;
  const auto j = gen_params_to_json(p);
  CHECK(gen_params_from_json(j) == p);
}

TEST_CASE("default shift magnitudes keep the designed ordering") {
  const GenParams p;
  CHECK(p.env_shift > p.area_shift);
  CHECK(p.area_shift > p.cond_shift);
}
