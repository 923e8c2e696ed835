#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string_view>
#include <utility>
#include <vector>

#include "xfb/errors.hpp"

// Sleep-stage taxonomy: raw source labels (R&K style, with N4 and the two
// artifact codes) and the harmonized 5-class AASM labels used everywhere
// downstream. The harmonized ordinal order W,N1,N2,N3,REM is fixed; confusion
// matrices and serialized reports depend on it.

namespace xfb {

enum class RawStage : std::uint8_t { W, N1, N2, N3, N4, REM, MOVEMENT, UNKNOWN };

enum class Stage : std::uint8_t { W = 0, N1 = 1, N2 = 2, N3 = 3, REM = 4 };

inline constexpr int kNumStages = 5;

inline constexpr std::array<Stage, kNumStages> kAllStages = {
    Stage::W, Stage::N1, Stage::N2, Stage::N3, Stage::REM};

constexpr std::string_view to_string(RawStage s) {
  switch (s) {
    case RawStage::W: return "W";
    case RawStage::N1: return "N1";
    case RawStage::N2: return "N2";
    case RawStage::N3: return "N3";
    case RawStage::N4: return "N4";
    case RawStage::REM: return "REM";
    case RawStage::MOVEMENT: return "MOVEMENT";
    case RawStage::UNKNOWN: return "UNKNOWN";
  }
  return "";
}

constexpr std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::W: return "W";
    case Stage::N1: return "N1";
    case Stage::N2: return "N2";
    case Stage::N3: return "N3";
    case Stage::REM: return "REM";
  }
  return "";
}

constexpr std::optional<RawStage> parse_raw_stage(std::string_view name) {
  for (RawStage s : {RawStage::W, RawStage::N1, RawStage::N2, RawStage::N3,
                     RawStage::N4, RawStage::REM, RawStage::MOVEMENT,
                     RawStage::UNKNOWN}) {
    if (to_string(s) == name) return s;
  }
  return std::nullopt;
}

constexpr std::optional<Stage> parse_stage(std::string_view name) {
  for (Stage s : kAllStages) {
    if (to_string(s) == name) return s;
  }
  return std::nullopt;
}

// N4 merges into N3; MOVEMENT/UNKNOWN have no harmonized class and map to
// nullopt, meaning the epoch is to be dropped.
constexpr std::optional<Stage> harmonize(RawStage s) {
  switch (s) {
    case RawStage::W: return Stage::W;
    case RawStage::N1: return Stage::N1;
    case RawStage::N2: return Stage::N2;
    case RawStage::N3: return Stage::N3;
    case RawStage::N4: return Stage::N3;
    case RawStage::REM: return Stage::REM;
    case RawStage::MOVEMENT: return std::nullopt;
    case RawStage::UNKNOWN: return std::nullopt;
  }
  return std::nullopt;
}

// Drops artifact-labeled epochs and harmonizes the rest, preserving order.
template <class EpochT>
std::vector<std::pair<EpochT, Stage>> filter_epochs(
    const std::vector<std::pair<EpochT, RawStage>>& seq) {
  if (seq.empty()) throw EmptyInput("filter_epochs: empty input");
  std::vector<std::pair<EpochT, Stage>> out;
  out.reserve(seq.size());
  for (const auto& [epoch, raw] : seq) {
    if (auto st = harmonize(raw)) out.emplace_back(epoch, *st);
  }
  if (out.empty()) throw EmptyAfterFilter("filter_epochs: no epochs survive");
  return out;
}

// Truncates leading and trailing runs of W to at most keep_minutes of epochs
// each; interior epochs are untouched.
template <class EpochT>
std::vector<std::pair<EpochT, Stage>> trim_wake(
    const std::vector<std::pair<EpochT, Stage>>& seq, double keep_minutes,
    double epoch_seconds) {
  if (epoch_seconds <= 0 || keep_minutes < 0)
    throw InvalidParams("trim_wake: epoch_seconds > 0 and keep_minutes >= 0 required");
  std::size_t first_sleep = seq.size();
  for (std::size_t i = 0; i < seq.size(); ++i) {
    if (seq[i].second != Stage::W) {
      first_sleep = i;
      break;
    }
  }
  if (first_sleep == seq.size())
    throw NoSleepPeriod("trim_wake: sequence contains only W");
  std::size_t last_sleep = first_sleep;
  for (std::size_t i = seq.size(); i-- > 0;) {
    if (seq[i].second != Stage::W) {
      last_sleep = i;
      break;
    }
  }
  const auto keep =
      static_cast<std::size_t>(keep_minutes * 60.0 / epoch_seconds);
  std::size_t begin = first_sleep > keep ? first_sleep - keep : 0;
  std::size_t trailing = seq.size() - 1 - last_sleep;
  std::size_t end = last_sleep + 1 + (trailing > keep ? keep : trailing);
  return {seq.begin() + static_cast<std::ptrdiff_t>(begin),
          seq.begin() + static_cast<std::ptrdiff_t>(end)};
}

struct StageDistribution {
  std::array<std::int64_t, kNumStages> counts{};
  std::int64_t total = 0;

  double fraction(Stage s) const {
    return static_cast<double>(counts[static_cast<std::size_t>(s)]) /
           static_cast<double>(total);
  }
};

inline StageDistribution stage_distribution(const std::vector<Stage>& labels) {
  if (labels.empty()) throw EmptyInput("stage_distribution: empty input");
  StageDistribution d;
  for (Stage s : labels) ++d.counts[static_cast<std::size_t>(s)];
  d.total = static_cast<std::int64_t>(labels.size());
  return d;
}

}  // namespace xfb
