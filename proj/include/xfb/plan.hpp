#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <filesystem>
#include <fmt/format.h>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "xfb/errors.hpp"
#include "xfb/synthgen.hpp"

// Transfer-plan enumeration: which concrete channels serve as sources, which
// as targets, and which source->target pairs are feasible. A channel slot is
// a primary electrode with an optional same-area alternate; the alternate is
// substituted as the source whenever the slot's own primary would coincide
// with the target channel's area within the same dataset (F3 stands in for a
// same-dataset F4 target, C3 for C4). Pairs whose source and target end up as
// the identical concrete channel are dropped.

namespace xfb {

struct ChannelSlot {
  std::string dataset_id;
  std::string primary_channel;
  std::optional<std::string> alternate_channel;
  bool usable_as_source = true;
  bool usable_as_target = false;

  bool operator==(const ChannelSlot&) const = default;
};

struct DatasetInfo {
  std::string dataset_id;
  std::string environment_id;
  Condition condition = Condition::Healthy;
  std::uint32_t sampling_rate_hz = 0;
  std::uint32_t epoch_seconds = 30;

  bool operator==(const DatasetInfo&) const = default;
};

// A concrete (dataset, channel) identity, the unit sources and targets are
// counted in.
struct ChannelId {
  std::string dataset_id;
  std::string channel;

  auto operator<=>(const ChannelId&) const = default;
};

struct Universe {
  std::vector<DatasetInfo> datasets;
  std::vector<ChannelSlot> slots;  // declaration order is the report order

  const DatasetInfo& dataset(const std::string& id) const {
    for (const auto& d : datasets)
      if (d.dataset_id == id) return d;
    throw InvalidParams(fmt::format("universe: unknown dataset '{}'", id));
  }

  DatasetDescriptor descriptor(const ChannelId& id) const {
    const DatasetInfo& info = dataset(id.dataset_id);
    return DatasetDescriptor{info.dataset_id, info.environment_id,
                             info.condition,  id.channel,
                             info.sampling_rate_hz, info.epoch_seconds};
  }
};

struct DiffFlags {
  bool channel_diff = false;
  bool env_diff = false;
  bool cond_diff = false;

  bool operator==(const DiffFlags&) const = default;
};

struct TransferPair {
  DatasetDescriptor source;
  DatasetDescriptor target;
  DiffFlags diff_flags;

  bool operator==(const TransferPair&) const = default;
};

struct GroupKey {
  bool env_diff = false;
  bool channel_diff = false;
  bool cond_diff = false;

  auto operator<=>(const GroupKey&) const = default;

  static constexpr std::array<GroupKey, 8> all() {
    std::array<GroupKey, 8> keys{};
    for (int i = 0; i < 8; ++i)
      keys[static_cast<std::size_t>(i)] = {(i & 4) != 0, (i & 2) != 0,
                                           (i & 1) != 0};
    return keys;
  }
};

inline DiffFlags diff_flags_of(const DatasetDescriptor& source,
                               const DatasetDescriptor& target) {
  return DiffFlags{source.area() != target.area(),
                   source.environment_id != target.environment_id,
                   source.condition != target.condition};
}

// Every concrete source channel; alternates train their own models and are
// listed right after their primary.
inline std::vector<ChannelId> enumerate_sources(const Universe& universe) {
  if (universe.slots.empty()) throw EmptyUniverse("enumerate_sources: no slots");
  std::vector<ChannelId> out;
  for (const auto& slot : universe.slots) {
    if (!slot.usable_as_source) continue;
    out.push_back({slot.dataset_id, slot.primary_channel});
    if (slot.alternate_channel)
      out.push_back({slot.dataset_id, *slot.alternate_channel});
  }
  return out;
}

inline std::vector<ChannelId> enumerate_targets(const Universe& universe) {
  if (universe.slots.empty()) throw EmptyUniverse("enumerate_targets: no slots");
  std::vector<ChannelId> out;
  for (const auto& slot : universe.slots) {
    if (slot.usable_as_target)
      out.push_back({slot.dataset_id, slot.primary_channel});
  }
  return out;
}

inline std::vector<TransferPair> enumerate_pairs(const Universe& universe) {
  if (universe.slots.empty()) throw EmptyUniverse("enumerate_pairs: no slots");
  std::vector<TransferPair> pairs;
  for (const ChannelId& target_id : enumerate_targets(universe)) {
    const DatasetDescriptor target = universe.descriptor(target_id);
    for (const auto& slot : universe.slots) {
      if (!slot.usable_as_source) continue;
      std::string source_channel = slot.primary_channel;
      if (slot.dataset_id == target.dataset_id &&
          area_of(slot.primary_channel) == target.area() &&
          slot.alternate_channel) {
        source_channel = *slot.alternate_channel;
      }
      if (slot.dataset_id == target.dataset_id &&
          source_channel == target.channel)
        continue;  // identical concrete channel has nothing to transfer
      const DatasetDescriptor source =
          universe.descriptor({slot.dataset_id, source_channel});
      pairs.push_back({source, target, diff_flags_of(source, target)});
    }
  }
  return pairs;
}

// Unrestricted pairing across every concrete source channel (alternates
// included as their own sources, no substitution); kept behind an explicit
// CLI flag since the default plan deliberately mirrors the slot rules.
inline std::vector<TransferPair> enumerate_pairs_exhaustive(
    const Universe& universe) {
  if (universe.slots.empty())
    throw EmptyUniverse("enumerate_pairs_exhaustive: no slots");
  std::vector<TransferPair> pairs;
  for (const ChannelId& target_id : enumerate_targets(universe)) {
    const DatasetDescriptor target = universe.descriptor(target_id);
    for (const ChannelId& source_id : enumerate_sources(universe)) {
      if (source_id.dataset_id == target.dataset_id &&
          source_id.channel == target.channel)
        continue;
      const DatasetDescriptor source = universe.descriptor(source_id);
      pairs.push_back({source, target, diff_flags_of(source, target)});
    }
  }
  return pairs;
}

inline std::map<GroupKey, std::vector<TransferPair>> group_pairs(
    const std::vector<TransferPair>& pairs) {
  std::map<GroupKey, std::vector<TransferPair>> groups;
  for (const GroupKey& key : GroupKey::all()) groups[key];  // keep empty groups
  for (const TransferPair& pair : pairs) {
    groups[GroupKey{pair.diff_flags.env_diff, pair.diff_flags.channel_diff,
                    pair.diff_flags.cond_diff}]
        .push_back(pair);
  }
  return groups;
}

// The published six-dataset channel inventory the counting criteria quote:
// 23 concrete sources, 9 targets, 134 feasible pairs.
inline Universe builtin_universe() {
  Universe u;
  auto add = [&](std::string ds, std::string env, Condition cond,
                 std::uint32_t rate, std::vector<ChannelSlot> slots) {
    u.datasets.push_back({ds, env, cond, rate, 30});
    for (auto& s : slots) {
      s.dataset_id = ds;
      u.slots.push_back(std::move(s));
    }
  };
  add("MASS-SS1", "MASS-SS1", Condition::Healthy, 256,
      {{"", "F4", "F3", true, true},
       {"", "C4", "C3", true, true},
       {"", "Pz", std::nullopt, true, false},
       {"", "O2", std::nullopt, true, false}});
  add("MASS-SS3", "MASS-SS3", Condition::Healthy, 256,
      {{"", "F4", "F3", true, true},
       {"", "C4", "C3", true, true},
       {"", "Pz", std::nullopt, true, false},
       {"", "O2", std::nullopt, true, false}});
  add("Sleep-EDF-SC", "Sleep-EDF-SC", Condition::Healthy, 100,
      {{"", "Fpz-Cz", std::nullopt, true, true},
       {"", "Pz-Oz", std::nullopt, true, false}});
  add("ISRUC-SG1", "ISRUC-SG1", Condition::Apnea, 200,
      {{"", "F4", "F3", true, true},
       {"", "C4", "C3", true, true},
       {"", "O2", std::nullopt, true, false}});
  add("SHHS1-Normal", "SHHS1", Condition::Healthy, 125,
      {{"", "C4", "C3", true, true}});
  add("SHHS1-OSA", "SHHS1", Condition::Apnea, 125,
      {{"", "C4", "C3", true, true}});
  return u;
}

// Study manifest: the universe plus generation parameters, as one JSON file.
struct StudyManifest {
  Universe universe;
  GenParams gen_params;
};

inline nlohmann::ordered_json manifest_to_json(const StudyManifest& m) {
  nlohmann::ordered_json j;
  j["schema"] = 1;
  j["gen_params"] = gen_params_to_json(m.gen_params);
  auto datasets = nlohmann::ordered_json::array();
  for (const auto& info : m.universe.datasets) {
    nlohmann::ordered_json d{{"dataset_id", info.dataset_id},
                             {"environment_id", info.environment_id},
                             {"condition", to_string(info.condition)},
                             {"sampling_rate_hz", info.sampling_rate_hz},
                             {"epoch_seconds", info.epoch_seconds}};
    auto channels = nlohmann::ordered_json::array();
    for (const auto& slot : m.universe.slots) {
      if (slot.dataset_id != info.dataset_id) continue;
      nlohmann::ordered_json c{{"primary", slot.primary_channel}};
      if (slot.alternate_channel) c["alternate"] = *slot.alternate_channel;
      c["source"] = slot.usable_as_source;
      c["target"] = slot.usable_as_target;
      channels.push_back(std::move(c));
    }
    d["channels"] = std::move(channels);
    datasets.push_back(std::move(d));
  }
  j["datasets"] = std::move(datasets);
  return j;
}

inline StudyManifest manifest_from_json(const nlohmann::json& j) {
  try {
    StudyManifest m;
    if (j.value("schema", 0) != 1)
      throw FormatError("manifest: unsupported schema");
    if (j.contains("gen_params"))
      m.gen_params = gen_params_from_json(j.at("gen_params"));
    for (const auto& d : j.at("datasets")) {
      DatasetInfo info;
      info.dataset_id = d.at("dataset_id").get<std::string>();
      info.environment_id = d.at("environment_id").get<std::string>();
      auto cond = parse_condition(d.at("condition").get<std::string>());
      if (!cond) throw FormatError("manifest: unknown condition");
      info.condition = *cond;
      info.sampling_rate_hz = d.at("sampling_rate_hz").get<std::uint32_t>();
      info.epoch_seconds = d.value("epoch_seconds", 30u);
      m.universe.datasets.push_back(info);
      for (const auto& c : d.at("channels")) {
        ChannelSlot slot;
        slot.dataset_id = info.dataset_id;
        slot.primary_channel = c.at("primary").get<std::string>();
        if (c.contains("alternate"))
          slot.alternate_channel = c.at("alternate").get<std::string>();
        slot.usable_as_source = c.value("source", true);
        slot.usable_as_target = c.value("target", false);
        m.universe.slots.push_back(std::move(slot));
      }
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(fmt::format("manifest: {}", e.what()));
  }
}

inline void write_manifest(const StudyManifest& m,
                           const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw IoError(fmt::format("write_manifest: cannot write {}",
                                     path.string()));
  os << manifest_to_json(m).dump(2) << '\n';
}

inline StudyManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError(fmt::format("read_manifest: cannot open {}",
                                     path.string()));
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(fmt::format("read_manifest: {}", e.what()));
  }
  return manifest_from_json(j);
}

}  // namespace xfb
