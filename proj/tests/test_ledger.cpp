#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "xfb/ledger.hpp"
#include "xfb/rng.hpp"

using namespace xfb;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  REQUIRE(is);
  std::ostringstream out;
  out << is.rdbuf();
  return out.str();
}

MetricSet metrics_of(double mf1) {
  MetricSet m;
  m.acc = mf1 + 0.05;
  m.mf1 = mf1;
  m.per_class_f1.fill(mf1);
  return m;
}

EvalRecord rec(Setting s, std::optional<ChannelId> src, ChannelId tgt,
               int repeat, double mf1) {
  return EvalRecord{s, std::move(src), std::move(tgt), repeat, metrics_of(mf1)};
}

RunLedger sample_ledger() {
  RunLedger ledger;
  ledger.meta.study_seed = 42;
  ledger.meta.manifest_hash = "00000000deadbeef";
  ledger.meta.repeats = 2;
  const ChannelId a{"DS1", "C4"};
  const ChannelId b{"DS2", "C4"};
  ledger.records = {
      rec(Setting::FT, b, a, 1, 0.71),
      rec(Setting::FS, std::nullopt, b, 0, 0.66),
      rec(Setting::DT, b, a, 0, 0.60),
      rec(Setting::FS, std::nullopt, a, 0, 0.70),
      rec(Setting::FT, a, b, 0, 0.65),
      rec(Setting::DT, a, b, 0, 0.58),
      rec(Setting::FS, std::nullopt, a, 1, 0.72),
      rec(Setting::FT, b, a, 0, 0.69),
  };
  return ledger;
}

fs::path temp_file(const std::string& name) {
  return fs::temp_directory_path() / name;
}

}  // namespace

TEST_CASE("record JSON uses the documented key order and round-trips") {
  const auto r = rec(Setting::DT, ChannelId{"S", "F3"}, ChannelId{"T", "C4"},
                     3, 0.625);
  const auto j = record_to_json(r);
  const std::string dumped = j.dump();
  CHECK(dumped.starts_with("{\"setting\":\"DT\",\"source\":"));
  CHECK(dumped.find("\"per_class_f1\":[") != std::string::npos);
  CHECK(record_from_json(nlohmann::json::parse(dumped)) == r);

  const auto fs_rec = rec(Setting::FS, std::nullopt, ChannelId{"T", "C4"}, 0,
                          0.5);
  const auto fs_json = record_to_json(fs_rec);
  CHECK(fs_json.dump().find("\"source\":null") != std::string::npos);
  CHECK(record_from_json(nlohmann::json::parse(fs_json.dump())) == fs_rec);
}

TEST_CASE("record parsing enforces the setting and source rules") {
  auto base = record_to_json(
      rec(Setting::DT, ChannelId{"S", "F3"}, ChannelId{"T", "C4"}, 0, 0.6));

  auto j = base;
  j["setting"] = "??";
  CHECK_THROWS_AS(record_from_json(j), FormatError);

  j = base;
  j["source"] = nullptr;  // DT needs a distinct source
  CHECK_THROWS_AS(record_from_json(j), FormatError);

  j = base;
  j["source"] = j["target"];
  CHECK_THROWS_AS(record_from_json(j), FormatError);

  j = base;
  j["setting"] = "FS";
  CHECK_THROWS_AS(record_from_json(j), FormatError);  // FS source != target

  j = base;
  j["setting"] = "FS";
  j["source"] = j["target"];
  CHECK_NOTHROW(record_from_json(j));  // FS may carry source = target

  j = base;
  j["per_class_f1"] = {0.5, 0.5};
  CHECK_THROWS_AS(record_from_json(j), FormatError);

  j = base;
  j.erase("repeat");
  CHECK_THROWS_AS(record_from_json(j), FormatError);
}

TEST_CASE("canonical order is target-major, setting, source, repeat") {
  auto ledger = sample_ledger();
  canonicalize(ledger.records);
  const auto& r = ledger.records;
  REQUIRE(r.size() == 8);
  // DS1 target block first: FS repeats 0,1 then DT then FT repeats 0,1
  CHECK(r[0].setting == Setting::FS);
  CHECK(r[0].target.dataset_id == "DS1");
  CHECK(r[0].repeat == 0);
  CHECK(r[1].setting == Setting::FS);
  CHECK(r[1].repeat == 1);
  CHECK(r[2].setting == Setting::DT);
  CHECK(r[3].setting == Setting::FT);
  CHECK(r[3].repeat == 0);
  CHECK(r[4].setting == Setting::FT);
  CHECK(r[4].repeat == 1);
  // then the DS2 target block
  CHECK(r[5].target.dataset_id == "DS2");
  CHECK(r[5].setting == Setting::FS);
  CHECK(r[6].setting == Setting::DT);
  CHECK(r[7].setting == Setting::FT);
}

TEST_CASE("ledger files round-trip and are byte-stable") {
  const auto ledger = sample_ledger();
  const auto p1 = temp_file("xfb_ledger_a.jsonl");
  const auto p2 = temp_file("xfb_ledger_b.jsonl");
  write_ledger(ledger, p1);

  const auto back = read_ledger(p1);
  CHECK(back.meta == ledger.meta);
  auto sorted = ledger.records;
  canonicalize(sorted);
  CHECK(back.records == sorted);

  // shuffled input produces the same bytes as sorted input
  auto shuffled = ledger;
  Rng rng(5);
  rng.shuffle(shuffled.records);
  write_ledger(shuffled, p2);
  CHECK(slurp(p1) == slurp(p2));

  // no stray temp file stays behind
  CHECK_FALSE(fs::exists(p1.string() + ".tmp"));
  fs::remove(p1);
  fs::remove(p2);
}

TEST_CASE("duplicate records are rejected on read") {
  auto ledger = sample_ledger();
  ledger.records.push_back(ledger.records.front());  // exact identity clash
  const auto p = temp_file("xfb_ledger_dup.jsonl");
  write_ledger(ledger, p);
  CHECK_THROWS_AS(read_ledger(p), DuplicateRecord);
  fs::remove(p);
}

TEST_CASE("from-scratch source conventions share one identity") {
  auto ledger = sample_ledger();
  const ChannelId a{"DS1", "C4"};
  // same FS measurement recorded once with null source, once as self-transfer
  ledger.records.push_back(rec(Setting::FS, a, a, 0, 0.70));
  const auto p = temp_file("xfb_ledger_fsdup.jsonl");
  write_ledger(ledger, p);
  CHECK_THROWS_AS(read_ledger(p), DuplicateRecord);
  fs::remove(p);
}

TEST_CASE("a truncated final line is tolerated only on request") {
  const auto ledger = sample_ledger();
  const auto p = temp_file("xfb_ledger_tail.jsonl");
  write_ledger(ledger, p);
  {
    std::ofstream os(p, std::ios::binary | std::ios::app);
    os << "{\"setting\":\"DT\",\"source\":{\"data";  // interrupted write
  }
  CHECK_THROWS_AS(read_ledger(p), FormatError);
  const auto back = read_ledger(p, true);
  CHECK(back.records.size() == ledger.records.size());
  fs::remove(p);
}

TEST_CASE("structural problems are reported per failure mode") {
  const auto p = temp_file("xfb_ledger_bad.jsonl");

  CHECK_THROWS_AS(read_ledger(temp_file("xfb_ledger_absent.jsonl")), IoError);

  {
    std::ofstream os(p, std::ios::binary);
  }
  CHECK_THROWS_AS(read_ledger(p), FormatError);  // empty file, no meta

  {
    std::ofstream os(p, std::ios::binary);
    os << record_to_json(rec(Setting::FS, std::nullopt, ChannelId{"T", "C4"},
                             0, 0.5))
              .dump()
       << '\n';
  }
  CHECK_THROWS_AS(read_ledger(p), FormatError);  // first line not meta

  {
    std::ofstream os(p, std::ios::binary);
    os << "{\"schema\":99,\"type\":\"meta\",\"tool_version\":\"0.1.0\","
          "\"study_seed\":0,\"manifest_hash\":\"\",\"repeats\":1}\n";
  }
  CHECK_THROWS_AS(read_ledger(p), FormatError);  // unsupported schema

  {
    std::ofstream os(p, std::ios::binary);
    os << meta_to_json(LedgerMeta{}).dump() << '\n';
    os << "not json\n";
    os << record_to_json(rec(Setting::FS, std::nullopt, ChannelId{"T", "C4"},
                             0, 0.5))
              .dump()
       << '\n';
  }
  // the broken line is not the tail, so tolerance does not apply
  CHECK_THROWS_AS(read_ledger(p, true), FormatError);
  fs::remove(p);
}

TEST_CASE("meta line serializes with the documented keys") {
  LedgerMeta meta;
  meta.study_seed = 7;
  meta.manifest_hash = "abc123";
  meta.repeats = 3;
  const std::string dumped = meta_to_json(meta).dump();
  CHECK(dumped ==
        "{\"schema\":1,\"type\":\"meta\",\"tool_version\":\"0.1.0\","
        "\"study_seed\":7,\"manifest_hash\":\"abc123\",\"repeats\":3}");
}

TEST_CASE("the shipped external ledger fixture parses and is canonical") {
  const fs::path dir{XFB_FIXTURE_DIR};
  const auto ledger = read_ledger(dir / "external_ledger.jsonl");
  CHECK(ledger.meta.schema == 1);
  CHECK(ledger.meta.repeats == 2);
  CHECK(ledger.meta.manifest_hash.empty());
  REQUIRE(ledger.records.size() == 28);

  CHECK(ledger.records[0].setting == Setting::FS);
  CHECK(ledger.records[0].target == ChannelId{"DSA", "C4"});
  CHECK(ledger.records[0].metrics.mf1 == 0.79);
  CHECK(ledger.records[27].setting == Setting::FT);
  CHECK(ledger.records[27].source == ChannelId{"SRC-C", "F4"});
  CHECK(ledger.records[27].target == ChannelId{"DSB", "C4"});

  // rewriting the fixture reproduces it byte for byte
  const auto p = temp_file("xfb_ledger_fixture_copy.jsonl");
  write_ledger(ledger, p);
  CHECK(slurp(p) == slurp(dir / "external_ledger.jsonl"));
  fs::remove(p);
}
