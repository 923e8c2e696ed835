#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fmt/format.h>
#include <fstream>
#include <string>
#include <tuple>
#include <vector>

#include "json.hpp"

#include "xfb/errors.hpp"
#include "xfb/transferscore.hpp"

// Append-only run ledger: one JSON object per line, UTF-8, fixed key order.
// The first line is run metadata; every further line is one EvalRecord. The
// on-disk record order is canonical (sorted by key), so two runs that compute
// identical records produce byte-identical files regardless of scheduling.

namespace xfb {

inline constexpr int kLedgerSchema = 1;
inline constexpr std::string_view kToolVersion = "0.1.0";

struct LedgerMeta {
  int schema = kLedgerSchema;
  std::string tool_version{kToolVersion};
  std::uint64_t study_seed = 0;
  std::string manifest_hash;  // hex, empty for external ledgers
  int repeats = 1;

  bool operator==(const LedgerMeta&) const = default;
};

struct RunLedger {
  LedgerMeta meta;
  std::vector<EvalRecord> records;
};

namespace detail {

inline auto record_sort_key(const EvalRecord& r) {
  static const ChannelId kNone{};
  const ChannelId& src = r.source ? *r.source : kNone;
  return std::tie(r.target.dataset_id, r.target.channel, r.setting,
                  src.dataset_id, src.channel, r.repeat);
}

inline auto record_identity(const EvalRecord& r) {
  // FS rows with source = target and source = null carry the same key
  const ChannelId src =
      r.setting != Setting::FS && r.source ? *r.source : ChannelId{};
  return std::make_tuple(r.setting, src, r.target, r.repeat);
}

}  // namespace detail

inline void canonicalize(std::vector<EvalRecord>& records) {
  std::ranges::sort(records, [](const EvalRecord& a, const EvalRecord& b) {
    return detail::record_sort_key(a) < detail::record_sort_key(b);
  });
}

inline nlohmann::ordered_json meta_to_json(const LedgerMeta& meta) {
  return nlohmann::ordered_json{{"schema", meta.schema},
                                {"type", "meta"},
                                {"tool_version", meta.tool_version},
                                {"study_seed", meta.study_seed},
                                {"manifest_hash", meta.manifest_hash},
                                {"repeats", meta.repeats}};
}

inline nlohmann::ordered_json record_to_json(const EvalRecord& r) {
  nlohmann::ordered_json j;
  j["setting"] = to_string(r.setting);
  if (r.source)
    j["source"] = {{"dataset_id", r.source->dataset_id},
                   {"channel", r.source->channel}};
  else
    j["source"] = nullptr;
  j["target"] = {{"dataset_id", r.target.dataset_id},
                 {"channel", r.target.channel}};
  j["repeat"] = r.repeat;
  j["acc"] = r.metrics.acc;
  j["mf1"] = r.metrics.mf1;
  j["per_class_f1"] = std::vector<double>(r.metrics.per_class_f1.begin(),
                                          r.metrics.per_class_f1.end());
  return j;
}

inline EvalRecord record_from_json(const nlohmann::json& j) {
  try {
    EvalRecord r;
    auto setting = parse_setting(j.at("setting").get<std::string>());
    if (!setting) throw FormatError("ledger: unknown setting");
    r.setting = *setting;
    if (j.contains("source") && !j.at("source").is_null()) {
      r.source = ChannelId{j.at("source").at("dataset_id").get<std::string>(),
                           j.at("source").at("channel").get<std::string>()};
    }
    r.target = ChannelId{j.at("target").at("dataset_id").get<std::string>(),
                         j.at("target").at("channel").get<std::string>()};
    r.repeat = j.at("repeat").get<int>();
    r.metrics.acc = j.at("acc").get<double>();
    r.metrics.mf1 = j.at("mf1").get<double>();
    const auto f1 = j.at("per_class_f1").get<std::vector<double>>();
    if (f1.size() != static_cast<std::size_t>(kNumStages))
      throw FormatError("ledger: per_class_f1 must have 5 entries");
    std::ranges::copy(f1, r.metrics.per_class_f1.begin());

    if (r.setting == Setting::FS) {
      if (r.source && *r.source != r.target)
        throw FormatError("ledger: FS record with source != target");
    } else if (!r.source || *r.source == r.target) {
      throw FormatError("ledger: DT/FT record needs source != target");
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(fmt::format("ledger record: {}", e.what()));
  }
}

// Full rewrite in canonical order, via a temp file so readers never observe a
// half-written ledger.
inline void write_ledger(const RunLedger& ledger,
                         const std::filesystem::path& path) {
  std::vector<EvalRecord> records = ledger.records;
  canonicalize(records);
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw IoError(fmt::format("write_ledger: cannot write {}",
                                       tmp.string()));
    os << meta_to_json(ledger.meta).dump() << '\n';
    for (const auto& r : records) os << record_to_json(r).dump() << '\n';
    if (!os) throw IoError("write_ledger: write failure");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError(fmt::format("write_ledger: cannot replace {}",
                                    path.string()));
}

// tolerate_partial_tail lets an interrupted run resume from a ledger whose
// final line was cut off mid-write; analysis reads stay strict.
inline RunLedger read_ledger(const std::filesystem::path& path,
                             bool tolerate_partial_tail = false) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError(fmt::format("read_ledger: cannot open {}",
                                     path.string()));
  RunLedger ledger;
  std::string line;
  if (!std::getline(is, line))
    throw FormatError("read_ledger: missing meta line");
  try {
    const auto meta = nlohmann::json::parse(line);
    if (meta.value("type", "") != "meta")
      throw FormatError("read_ledger: first line is not the meta record");
    ledger.meta.schema = meta.at("schema").get<int>();
    if (ledger.meta.schema != kLedgerSchema)
      throw FormatError("read_ledger: unsupported schema");
    ledger.meta.tool_version = meta.at("tool_version").get<std::string>();
    ledger.meta.study_seed = meta.at("study_seed").get<std::uint64_t>();
    ledger.meta.manifest_hash = meta.value("manifest_hash", "");
    ledger.meta.repeats = meta.at("repeats").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(fmt::format("read_ledger meta: {}", e.what()));
  }

  std::vector<std::string> lines;
  while (std::getline(is, line)) {
    if (!line.empty()) lines.push_back(line);
  }
  for (std::size_t i = 0; i < lines.size(); ++i) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(lines[i]);
    } catch (const nlohmann::json::exception& e) {
      if (tolerate_partial_tail && i + 1 == lines.size()) break;
      throw FormatError(fmt::format("read_ledger line {}: {}", i + 2, e.what()));
    }
    ledger.records.push_back(record_from_json(j));
  }

  std::vector<EvalRecord> sorted = ledger.records;
  std::ranges::sort(sorted, [](const EvalRecord& a, const EvalRecord& b) {
    return detail::record_identity(a) < detail::record_identity(b);
  });
  for (std::size_t i = 1; i < sorted.size(); ++i) {
    if (detail::record_identity(sorted[i]) ==
        detail::record_identity(sorted[i - 1]))
      throw DuplicateRecord(fmt::format(
          "read_ledger: duplicate record {}",
          detail::key_label(sorted[i].setting, sorted[i].source,
                            sorted[i].target)));
  }
  return ledger;
}

}  // namespace xfb
