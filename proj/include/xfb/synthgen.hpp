#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fmt/format.h>
#include <fstream>
#include <numbers>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "xfb/errors.hpp"
#include "xfb/rng.hpp"
#include "xfb/signals.hpp"
#include "xfb/stages.hpp"

// Seeded synthetic cohorts. Three characteristic axes (channel area,
// recording environment, subject condition) shift per-class band-power
// signatures along fixed unit directions; labels follow a first-order Markov
// hypnogram. Cohorts persist in a little-endian binary format, one file per
// subject plus a JSON manifest.

namespace xfb {

enum class Condition : std::uint8_t { Healthy, Apnea };
enum class Area : std::uint8_t { F, C, P, O };
enum class GenMode : std::uint8_t { Features = 0, Signal = 1 };

constexpr std::string_view to_string(Condition c) {
  return c == Condition::Healthy ? "Healthy" : "Apnea";
}
constexpr std::string_view to_string(Area a) {
  switch (a) {
    case Area::F: return "F";
    case Area::C: return "C";
    case Area::P: return "P";
    case Area::O: return "O";
  }
  return "";
}
constexpr std::string_view to_string(GenMode m) {
  return m == GenMode::Features ? "Features" : "Signal";
}

constexpr std::optional<Condition> parse_condition(std::string_view s) {
  if (s == "Healthy") return Condition::Healthy;
  if (s == "Apnea") return Condition::Apnea;
  return std::nullopt;
}
constexpr std::optional<GenMode> parse_gen_mode(std::string_view s) {
  if (s == "Features") return GenMode::Features;
  if (s == "Signal") return GenMode::Signal;
  return std::nullopt;
}

// Brain area from the first electrode letter (Fpz-Cz -> F, Pz-Oz -> P).
inline Area area_of(std::string_view channel) {
  if (!channel.empty()) {
    switch (channel.front()) {
      case 'F': return Area::F;
      case 'C': return Area::C;
      case 'P': return Area::P;
      case 'O': return Area::O;
      default: break;
    }
  }
  throw InvalidParams(fmt::format("area_of: unrecognized channel '{}'", channel));
}

struct DatasetDescriptor {
  std::string dataset_id;
  std::string environment_id;
  Condition condition = Condition::Healthy;
  std::string channel;
  std::uint32_t sampling_rate_hz = 0;
  std::uint32_t epoch_seconds = 30;

  Area area() const { return area_of(channel); }
  std::size_t samples_per_epoch() const {
    return static_cast<std::size_t>(sampling_rate_hz) * epoch_seconds;
  }

  bool operator==(const DatasetDescriptor&) const = default;
};

struct GenParams {
  int n_subjects = 12;
  int epochs_per_subject = 400;
  std::uint64_t seed = 0;
  double env_shift = 1.5;
  double area_shift = 0.8;
  double cond_shift = 0.4;
  double noise_sd = 0.5;
  GenMode mode = GenMode::Features;
  double apnea_n1_boost = 1.6;

  bool operator==(const GenParams&) const = default;
};

struct SubjectRecording {
  std::string subject_id;
  // 5 features per epoch in Features mode, rate*seconds samples in Signal mode
  std::vector<std::vector<float>> epochs;
  std::vector<Stage> labels;

  bool operator==(const SubjectRecording&) const = default;
};

struct Cohort {
  DatasetDescriptor descriptor;
  std::vector<SubjectRecording> subjects;
  GenParams gen_params;

  bool operator==(const Cohort&) const = default;
};

struct SplitSpec {
  std::vector<std::string> train_subjects;
  std::vector<std::string> val_subjects;
  std::vector<std::string> test_subjects;
  std::uint64_t seed = 0;
};

// Per-class base band-power signatures, rows W,N1,N2,N3,REM over
// delta,theta,alpha,sigma,beta. Qualitative EEG band structure (alpha in
// wake, delta in deep sleep, sigma spindles in N2); exact values are free
// parameters fixed for reproducibility.
inline constexpr std::array<std::array<double, 5>, kNumStages> kBaseSignatures = {{
    {0.5, 0.5, 2.0, 0.5, 1.5},   // W
    {1.0, 2.0, 0.7, 0.5, 0.7},   // N1
    {1.5, 1.0, 0.5, 2.0, 0.5},   // N2
    {3.0, 1.0, 0.3, 0.5, 0.2},   // N3
    {1.0, 1.5, 0.8, 0.5, 1.0},   // REM
}};

using TransitionMatrix = std::array<std::array<double, kNumStages>, kNumStages>;

// Healthy hypnogram dynamics: stay probability 0.85 with the remaining mass
// over plausible transitions. Apnea drops stay probability to 0.75
// (fragmentation) and boosts transitions into W and N1 before renormalizing.
inline TransitionMatrix transition_matrix(Condition condition,
                                          double apnea_n1_boost) {
  TransitionMatrix t = {{
      {0.85, 0.12, 0.02, 0.00, 0.01},  // W
      {0.04, 0.85, 0.09, 0.00, 0.02},  // N1
      {0.02, 0.03, 0.85, 0.06, 0.04},  // N2
      {0.02, 0.01, 0.12, 0.85, 0.00},  // N3
      {0.05, 0.05, 0.05, 0.00, 0.85},  // REM
  }};
  if (condition == Condition::Apnea) {
    constexpr double kApneaStay = 0.75;
    constexpr double kBaseStay = 0.85;
    for (int i = 0; i < kNumStages; ++i) {
      for (int j = 0; j < kNumStages; ++j) {
        t[i][j] = i == j ? kApneaStay
                         : t[i][j] * (1.0 - kApneaStay) / (1.0 - kBaseStay);
      }
    }
    for (int i = 0; i < kNumStages; ++i) {
      t[i][0] *= apnea_n1_boost;
      t[i][1] *= apnea_n1_boost;
      double row = 0.0;
      for (double v : t[i]) row += v;
      for (double& v : t[i]) v /= row;
    }
  }
  return t;
}

namespace detail {

inline std::array<double, 5> unit_direction(std::uint64_t seed) {
  Rng rng(seed);
  std::array<double, 5> v{};
  double norm = 0.0;
  do {
    norm = 0.0;
    for (double& x : v) {
      x = rng.gaussian();
      norm += x * x;
    }
    norm = std::sqrt(norm);
  } while (norm < 1e-9);
  for (double& x : v) x /= norm;
  return v;
}

inline Stage sample_stage(const std::array<double, kNumStages>& row, Rng& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  for (int i = 0; i < kNumStages; ++i) {
    acc += row[i];
    if (u < acc) return static_cast<Stage>(i);
  }
  return Stage::REM;  // guards against row sums a hair under 1
}

}  // namespace detail

inline Cohort generate(const DatasetDescriptor& descriptor,
                       const GenParams& params) {
  if (params.n_subjects < 1 || params.epochs_per_subject < 1)
    throw InvalidParams("generate: need at least one subject and epoch");
  if (params.env_shift < 0 || params.area_shift < 0 || params.cond_shift < 0 ||
      params.noise_sd < 0 || params.apnea_n1_boost <= 0)
    throw InvalidParams("generate: shifts and noise must be non-negative");
  if (descriptor.sampling_rate_hz < 1 || descriptor.epoch_seconds < 1)
    throw InvalidParams("generate: sampling_rate_hz and epoch_seconds must be positive");
  descriptor.area();  // validates the channel spelling

  // Axis directions are keyed by the axis value alone, so two cohorts sharing
  // an environment (or area, or condition) are shifted identically and the
  // difference flags of the plan module correspond to real feature-space
  // displacements.
  const auto u_area =
      detail::unit_direction(hash64("axis", "area", to_string(descriptor.area())));
  const auto u_env =
      detail::unit_direction(hash64("axis", "env", descriptor.environment_id));
  const auto u_cond = detail::unit_direction(
      hash64("axis", "cond", to_string(descriptor.condition)));
  const double env_noise_factor =
      Rng(hash64("axis", "envnoise", descriptor.environment_id))
          .uniform(0.8, 1.25);

  std::array<std::array<double, 5>, kNumStages> class_power;
  for (int k = 0; k < kNumStages; ++k) {
    for (int j = 0; j < 5; ++j) {
      class_power[k][j] =
          kBaseSignatures[k][j] * (1.0 + params.area_shift * u_area[j]) +
          params.env_shift * u_env[j] + params.cond_shift * u_cond[j];
    }
  }

  const TransitionMatrix trans =
      transition_matrix(descriptor.condition, params.apnea_n1_boost);
  const std::uint64_t cohort_seed =
      hash64(params.seed, descriptor.dataset_id, descriptor.channel);
  const double noise_amp = params.noise_sd * env_noise_factor;

  Cohort cohort{descriptor, {}, params};
  cohort.subjects.reserve(static_cast<std::size_t>(params.n_subjects));
  for (int s = 0; s < params.n_subjects; ++s) {
    Rng rng(hash64(cohort_seed, "subject", static_cast<std::uint64_t>(s)));
    SubjectRecording rec;
    rec.subject_id = fmt::format("s{:03}", s);

    rec.labels.resize(static_cast<std::size_t>(params.epochs_per_subject));
    rec.labels[0] = Stage::W;
    for (std::size_t e = 1; e < rec.labels.size(); ++e) {
      rec.labels[e] = detail::sample_stage(
          trans[static_cast<std::size_t>(rec.labels[e - 1])], rng);
    }

    rec.epochs.resize(rec.labels.size());
    for (std::size_t e = 0; e < rec.labels.size(); ++e) {
      const auto& power = class_power[static_cast<std::size_t>(rec.labels[e])];
      auto& payload = rec.epochs[e];
      if (params.mode == GenMode::Features) {
        payload.resize(5);
        for (int j = 0; j < 5; ++j) {
          payload[j] =
              static_cast<float>(power[j] + noise_amp * rng.gaussian());
        }
      } else {
        std::array<double, 5> freq, phase, amp;
        for (int b = 0; b < 5; ++b) {
          freq[b] = rng.uniform(kBands[b].first, kBands[b].second);
          phase[b] = rng.uniform(0.0, 2.0 * std::numbers::pi);
          amp[b] = std::sqrt(std::max(power[b], 0.0));
        }
        const std::size_t len = descriptor.samples_per_epoch();
        payload.resize(len);
        for (std::size_t i = 0; i < len; ++i) {
          const double tsec =
              static_cast<double>(i) / descriptor.sampling_rate_hz;
          double v = noise_amp * rng.gaussian();
          for (int b = 0; b < 5; ++b)
            v += amp[b] *
                 std::sin(2.0 * std::numbers::pi * freq[b] * tsec + phase[b]);
          payload[i] = static_cast<float>(v);
        }
      }
    }
    cohort.subjects.push_back(std::move(rec));
  }
  return cohort;
}

// test = round(20% of subjects), val = max(1, round(10% of the remainder)),
// train = the rest; assignment by seeded shuffle, subject-independent.
inline SplitSpec split_subjects(const Cohort& cohort, std::uint64_t seed) {
  const std::size_t n = cohort.subjects.size();
  if (n < 5) throw TooFewSubjects("split_subjects: need at least 5 subjects");
  std::vector<std::string> ids;
  ids.reserve(n);
  for (const auto& s : cohort.subjects) ids.push_back(s.subject_id);

  Rng rng(seed);
  rng.shuffle(ids);

  const auto n_test = static_cast<std::size_t>(
      std::llround(0.2 * static_cast<double>(n)));
  const auto n_val = std::max<std::size_t>(
      1, static_cast<std::size_t>(
             std::llround(0.1 * static_cast<double>(n - n_test))));

  SplitSpec split;
  split.seed = seed;
  split.test_subjects.assign(ids.begin(),
                             ids.begin() + static_cast<std::ptrdiff_t>(n_test));
  split.val_subjects.assign(
      ids.begin() + static_cast<std::ptrdiff_t>(n_test),
      ids.begin() + static_cast<std::ptrdiff_t>(n_test + n_val));
  split.train_subjects.assign(
      ids.begin() + static_cast<std::ptrdiff_t>(n_test + n_val), ids.end());
  std::ranges::sort(split.test_subjects);
  std::ranges::sort(split.val_subjects);
  std::ranges::sort(split.train_subjects);
  return split;
}

namespace detail {

inline void put_bytes(std::ostream& os, const void* p, std::size_t n) {
  os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}
inline void put_u16(std::ostream& os, std::uint16_t v) {
  const unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                              static_cast<unsigned char>(v >> 8)};
  put_bytes(os, b, 2);
}
inline void put_u32(std::ostream& os, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                              static_cast<unsigned char>((v >> 8) & 0xff),
                              static_cast<unsigned char>((v >> 16) & 0xff),
                              static_cast<unsigned char>(v >> 24)};
  put_bytes(os, b, 4);
}
inline void put_f32(std::ostream& os, float v) {
  put_u32(os, std::bit_cast<std::uint32_t>(v));
}

inline bool get_bytes(std::istream& is, void* p, std::size_t n) {
  is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  return static_cast<std::size_t>(is.gcount()) == n;
}
inline bool get_u16(std::istream& is, std::uint16_t& v) {
  unsigned char b[2];
  if (!get_bytes(is, b, 2)) return false;
  v = static_cast<std::uint16_t>(b[0] | (b[1] << 8));
  return true;
}
inline bool get_u32(std::istream& is, std::uint32_t& v) {
  unsigned char b[4];
  if (!get_bytes(is, b, 4)) return false;
  v = static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
      (static_cast<std::uint32_t>(b[2]) << 16) |
      (static_cast<std::uint32_t>(b[3]) << 24);
  return true;
}
inline bool get_f32(std::istream& is, float& v) {
  std::uint32_t u;
  if (!get_u32(is, u)) return false;
  v = std::bit_cast<float>(u);
  return true;
}

}  // namespace detail

inline constexpr char kCohortMagic[4] = {'X', 'F', 'B', '1'};
inline constexpr std::uint16_t kCohortVersion = 1;

inline nlohmann::ordered_json descriptor_to_json(const DatasetDescriptor& d) {
  return nlohmann::ordered_json{{"dataset_id", d.dataset_id},
                                {"environment_id", d.environment_id},
                                {"condition", to_string(d.condition)},
                                {"channel", d.channel},
                                {"sampling_rate_hz", d.sampling_rate_hz},
                                {"epoch_seconds", d.epoch_seconds}};
}

inline DatasetDescriptor descriptor_from_json(const nlohmann::json& j) {
  try {
    DatasetDescriptor d;
    d.dataset_id = j.at("dataset_id").get<std::string>();
    d.environment_id = j.at("environment_id").get<std::string>();
    auto cond = parse_condition(j.at("condition").get<std::string>());
    if (!cond) throw FormatError("descriptor: unknown condition");
    d.condition = *cond;
    d.channel = j.at("channel").get<std::string>();
    d.sampling_rate_hz = j.at("sampling_rate_hz").get<std::uint32_t>();
    d.epoch_seconds = j.value("epoch_seconds", 30u);
    return d;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(fmt::format("descriptor: {}", e.what()));
  }
}

inline nlohmann::ordered_json gen_params_to_json(const GenParams& p) {
  return nlohmann::ordered_json{{"n_subjects", p.n_subjects},
                                {"epochs_per_subject", p.epochs_per_subject},
                                {"seed", p.seed},
                                {"env_shift", p.env_shift},
                                {"area_shift", p.area_shift},
                                {"cond_shift", p.cond_shift},
                                {"noise_sd", p.noise_sd},
                                {"mode", to_string(p.mode)},
                                {"apnea_n1_boost", p.apnea_n1_boost}};
}

inline GenParams gen_params_from_json(const nlohmann::json& j) {
  try {
    GenParams p;
    p.n_subjects = j.value("n_subjects", p.n_subjects);
    p.epochs_per_subject = j.value("epochs_per_subject", p.epochs_per_subject);
    p.seed = j.value("seed", p.seed);
    p.env_shift = j.value("env_shift", p.env_shift);
    p.area_shift = j.value("area_shift", p.area_shift);
    p.cond_shift = j.value("cond_shift", p.cond_shift);
    p.noise_sd = j.value("noise_sd", p.noise_sd);
    if (j.contains("mode")) {
      auto m = parse_gen_mode(j.at("mode").get<std::string>());
      if (!m) throw FormatError("gen_params: unknown mode");
      p.mode = *m;
    }
    p.apnea_n1_boost = j.value("apnea_n1_boost", p.apnea_n1_boost);
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(fmt::format("gen_params: {}", e.what()));
  }
}

// Directory layout: <dir>/cohort.json plus one <subject_id>.xfb per subject.
// Subject file, little-endian: magic "XFB1", version u16, mode u8,
// sampling_rate u32, epoch_seconds u16, n_epochs u32, then per epoch the
// float32 payload followed by the label ordinal u8.
inline void write_cohort(const Cohort& cohort,
                         const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError(fmt::format("write_cohort: cannot create {}", dir.string()));

  nlohmann::ordered_json manifest;
  manifest["descriptor"] = descriptor_to_json(cohort.descriptor);
  manifest["gen_params"] = gen_params_to_json(cohort.gen_params);
  auto subjects = nlohmann::ordered_json::array();
  for (const auto& rec : cohort.subjects) {
    subjects.push_back({{"subject_id", rec.subject_id},
                        {"file", rec.subject_id + ".xfb"}});
  }
  manifest["subjects"] = subjects;

  {
    std::ofstream os(dir / "cohort.json");
    if (!os) throw IoError("write_cohort: cannot write cohort.json");
    os << manifest.dump(2) << '\n';
  }

  const std::size_t payload_len =
      cohort.gen_params.mode == GenMode::Features
          ? 5
          : cohort.descriptor.samples_per_epoch();
  for (const auto& rec : cohort.subjects) {
    std::ofstream os(dir / (rec.subject_id + ".xfb"), std::ios::binary);
    if (!os)
      throw IoError(fmt::format("write_cohort: cannot write {}.xfb", rec.subject_id));
    detail::put_bytes(os, kCohortMagic, 4);
    detail::put_u16(os, kCohortVersion);
    const std::uint8_t mode = static_cast<std::uint8_t>(cohort.gen_params.mode);
    detail::put_bytes(os, &mode, 1);
    detail::put_u32(os, cohort.descriptor.sampling_rate_hz);
    detail::put_u16(os,
                    static_cast<std::uint16_t>(cohort.descriptor.epoch_seconds));
    detail::put_u32(os, static_cast<std::uint32_t>(rec.epochs.size()));
    for (std::size_t e = 0; e < rec.epochs.size(); ++e) {
      if (rec.epochs[e].size() != payload_len)
        throw FormatError("write_cohort: epoch payload length mismatch");
      for (float v : rec.epochs[e]) detail::put_f32(os, v);
      const std::uint8_t label = static_cast<std::uint8_t>(rec.labels[e]);
      detail::put_bytes(os, &label, 1);
    }
    if (!os) throw IoError("write_cohort: write failure");
  }
}

inline Cohort read_cohort(const std::filesystem::path& dir) {
  std::ifstream ms(dir / "cohort.json");
  if (!ms) throw IoError(fmt::format("read_cohort: cannot open {}/cohort.json",
                                     dir.string()));
  nlohmann::json manifest;
  try {
    ms >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(fmt::format("read_cohort: bad cohort.json: {}", e.what()));
  }

  Cohort cohort;
  try {
    cohort.descriptor = descriptor_from_json(manifest.at("descriptor"));
    cohort.gen_params = gen_params_from_json(manifest.at("gen_params"));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(fmt::format("read_cohort: {}", e.what()));
  }

  const std::size_t payload_len =
      cohort.gen_params.mode == GenMode::Features
          ? 5
          : cohort.descriptor.samples_per_epoch();

  if (!manifest.contains("subjects") || !manifest["subjects"].is_array())
    throw FormatError("read_cohort: manifest lacks subjects array");
  for (const auto& entry : manifest["subjects"]) {
    SubjectRecording rec;
    std::filesystem::path file;
    try {
      rec.subject_id = entry.at("subject_id").get<std::string>();
      file = dir / entry.at("file").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(fmt::format("read_cohort: bad subject entry: {}", e.what()));
    }
    std::ifstream is(file, std::ios::binary);
    if (!is) throw IoError(fmt::format("read_cohort: cannot open {}", file.string()));

    char magic[4];
    if (!detail::get_bytes(is, magic, 4) ||
        !std::equal(magic, magic + 4, kCohortMagic))
      throw FormatError(fmt::format("read_cohort: bad magic in {}", file.string()));
    std::uint16_t version;
    if (!detail::get_u16(is, version) || version != kCohortVersion)
      throw FormatError("read_cohort: unsupported version");
    std::uint8_t mode;
    if (!detail::get_bytes(is, &mode, 1) ||
        mode != static_cast<std::uint8_t>(cohort.gen_params.mode))
      throw FormatError("read_cohort: mode disagrees with manifest");
    std::uint32_t rate;
    std::uint16_t epoch_seconds;
    std::uint32_t n_epochs;
    if (!detail::get_u32(is, rate) || !detail::get_u16(is, epoch_seconds) ||
        !detail::get_u32(is, n_epochs))
      throw FormatError("read_cohort: truncated header");
    if (rate != cohort.descriptor.sampling_rate_hz ||
        epoch_seconds != cohort.descriptor.epoch_seconds)
      throw FormatError("read_cohort: header disagrees with manifest");

    rec.epochs.resize(n_epochs);
    rec.labels.resize(n_epochs);
    for (std::uint32_t e = 0; e < n_epochs; ++e) {
      auto& payload = rec.epochs[e];
      payload.resize(payload_len);
      for (float& v : payload) {
        if (!detail::get_f32(is, v))
          throw FormatError(fmt::format("read_cohort: truncated payload in {}",
                                        file.string()));
      }
      std::uint8_t label;
      if (!detail::get_bytes(is, &label, 1))
        throw FormatError("read_cohort: truncated label");
      if (label >= kNumStages) throw FormatError("read_cohort: label out of range");
      rec.labels[e] = static_cast<Stage>(label);
    }
    char extra;
    if (is.read(&extra, 1); is.gcount() != 0)
      throw FormatError(fmt::format("read_cohort: trailing bytes in {}",
                                    file.string()));
    cohort.subjects.push_back(std::move(rec));
  }
  return cohort;
}

}  // namespace xfb
