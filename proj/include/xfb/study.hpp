#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fmt/format.h>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <utility>
#include <vector>

#include "xfb/errors.hpp"
#include "xfb/ledger.hpp"
#include "xfb/plan.hpp"
#include "xfb/rng.hpp"
#include "xfb/scorer.hpp"
#include "xfb/synthgen.hpp"
#include "xfb/transferscore.hpp"

// Study orchestration. A study walks the manifest's plan: pre-train one model
// per concrete source channel and repeat, record FS performance of every
// target's own model, DT performance of every source applied to every
// feasible target, and FT performance after fine-tuning, all against the
// target's fixed test split. Jobs are independent and may run on several
// workers; every random quantity is keyed by (study_seed, job key, repeat),
// and the ledger is canonically sorted on completion, so the output bytes do
// not depend on the worker count. Completed records found in an existing
// ledger are skipped, which makes interrupted runs resumable.

namespace xfb {

struct StudyConfig {
  std::filesystem::path manifest_path;
  std::filesystem::path ledger_path;
  int repeats = 3;
  std::uint64_t study_seed = 0;
  TrainConfig train;  // seed field is ignored; per-job seeds are derived
  int jobs = 1;
};

namespace detail {

inline std::string file_hash_hex(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError(fmt::format("cannot open {}", path.string()));
  std::ostringstream buf;
  buf << is.rdbuf();
  return fmt::format("{:016x}", fnv1a(buf.str()));
}

// Runs jobs on `workers` threads; stops scheduling new jobs after the first
// failure and rethrows it with the job identified.
inline void run_jobs(const std::vector<std::pair<std::string, std::function<void()>>>& jobs,
                     int workers) {
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::mutex err_mutex;
  std::string failed_label;
  std::exception_ptr error;

  auto work = [&] {
    std::size_t i;
    while (!failed.load(std::memory_order_relaxed) &&
           (i = next.fetch_add(1)) < jobs.size()) {
      try {
        jobs[i].second();
      } catch (...) {
        std::lock_guard lock(err_mutex);
        if (!error) {
          error = std::current_exception();
          failed_label = jobs[i].first;
        }
        failed.store(true, std::memory_order_relaxed);
      }
    }
  };

  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    const int n = std::min<int>(workers, static_cast<int>(jobs.size()));
    pool.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (error) {
    try {
      std::rethrow_exception(error);
    } catch (const std::exception& e) {
      throw Error(fmt::format("job '{}' failed: {}", failed_label, e.what()));
    }
  }
}

using RecordKey = std::tuple<Setting, ChannelId, ChannelId, int>;

inline RecordKey key_of(Setting setting, const std::optional<ChannelId>& source,
                        const ChannelId& target, int repeat) {
  return {setting, setting != Setting::FS && source ? *source : ChannelId{},
          target, repeat};
}

struct SplitSets {
  EpochSet train, val, test;
};

}  // namespace detail

inline RunLedger run_study(const StudyConfig& cfg) {
  if (cfg.repeats < 1) throw InvalidParams("run_study: repeats must be >= 1");
  const StudyManifest manifest = read_manifest(cfg.manifest_path);
  const Universe& universe = manifest.universe;
  const GenParams& gen = manifest.gen_params;

  LedgerMeta meta;
  meta.study_seed = cfg.study_seed;
  meta.manifest_hash = detail::file_hash_hex(cfg.manifest_path);
  meta.repeats = cfg.repeats;

  // resume: collect already-completed record keys
  std::vector<EvalRecord> existing;
  std::set<detail::RecordKey> completed;
  bool ledger_exists = std::filesystem::exists(cfg.ledger_path);
  if (ledger_exists) {
    const RunLedger prev = read_ledger(cfg.ledger_path, true);
    if (prev.meta.study_seed != meta.study_seed ||
        prev.meta.manifest_hash != meta.manifest_hash ||
        prev.meta.repeats != meta.repeats)
      throw InvalidParams(
          "run_study: existing ledger was produced by a different study "
          "(seed, manifest or repeats disagree)");
    existing = prev.records;
    for (const auto& r : existing)
      completed.insert(detail::key_of(r.setting, r.source, r.target, r.repeat));
    // rewrite before appending so a partially written tail line cannot merge
    // with the first new record
    write_ledger(RunLedger{meta, existing}, cfg.ledger_path);
  }

  const auto sources = enumerate_sources(universe);
  const auto targets = enumerate_targets(universe);
  const auto pairs = enumerate_pairs(universe);

  // Evaluation jobs still to run, and the pretrained models they require.
  struct EvalJob {
    Setting setting;
    std::optional<ChannelId> source;
    ChannelId target;
    int repeat;
  };
  std::vector<EvalJob> eval_jobs;
  std::set<std::pair<ChannelId, int>> models_needed;
  for (int r = 0; r < cfg.repeats; ++r) {
    for (const auto& t : targets) {
      if (!completed.contains(detail::key_of(Setting::FS, std::nullopt, t, r))) {
        eval_jobs.push_back({Setting::FS, std::nullopt, t, r});
        models_needed.insert({t, r});
      }
    }
    for (const auto& pair : pairs) {
      const ChannelId src{pair.source.dataset_id, pair.source.channel};
      const ChannelId tgt{pair.target.dataset_id, pair.target.channel};
      for (Setting setting : {Setting::DT, Setting::FT}) {
        if (!completed.contains(detail::key_of(setting, src, tgt, r))) {
          eval_jobs.push_back({setting, src, tgt, r});
          models_needed.insert({src, r});
        }
      }
    }
  }

  // Featurized splits per channel and model rate (0 = Features mode).
  std::set<ChannelId> channels;
  std::map<ChannelId, std::set<std::uint32_t>> rates_needed;
  auto model_rate = [&](const ChannelId& c) -> std::uint32_t {
    return gen.mode == GenMode::Features
               ? 0
               : universe.dataset(c.dataset_id).sampling_rate_hz;
  };
  for (const auto& s : sources) {
    channels.insert(s);
    rates_needed[s].insert(model_rate(s));
  }
  for (const auto& t : targets) {
    channels.insert(t);
    rates_needed[t].insert(model_rate(t));
  }
  for (const auto& pair : pairs) {
    const ChannelId src{pair.source.dataset_id, pair.source.channel};
    const ChannelId tgt{pair.target.dataset_id, pair.target.channel};
    rates_needed[tgt].insert(model_rate(src));
  }

  auto input_spec = [&](std::uint32_t rate) {
    InputSpec spec;
    spec.mode = gen.mode;
    if (gen.mode == GenMode::Signal) spec.rate_hz = rate;
    return spec;
  };

  std::map<ChannelId, std::map<std::uint32_t, detail::SplitSets>> data;
  {
    std::vector<ChannelId> order(channels.begin(), channels.end());
    for (const auto& c : order) data[c];  // preallocate map nodes
    std::vector<std::pair<std::string, std::function<void()>>> jobs;
    for (const auto& c : order) {
      jobs.emplace_back(
          fmt::format("featurize {}/{}", c.dataset_id, c.channel), [&, c] {
            const Cohort cohort = generate(universe.descriptor(c), gen);
            const SplitSpec split = split_subjects(
                cohort, hash64(gen.seed, "split", c.dataset_id, c.channel));
            auto& slot = data.at(c);
            for (std::uint32_t rate : rates_needed.at(c)) {
              const InputSpec spec = input_spec(rate);
              slot[rate] = {featurize(cohort, split.train_subjects, spec),
                            featurize(cohort, split.val_subjects, spec),
                            featurize(cohort, split.test_subjects, spec)};
            }
          });
    }
    // nested map nodes per channel exist up front, and each job touches only
    // its own channel's node, so no synchronization is needed
    for (auto& [c, slot] : data)
      for (std::uint32_t rate : rates_needed.at(c)) slot[rate];
    detail::run_jobs(jobs, cfg.jobs);
  }

  // Phase 1: pretrain every needed (channel, repeat).
  std::map<std::pair<ChannelId, int>, ModelCheckpoint> checkpoints;
  {
    std::vector<std::pair<std::string, std::function<void()>>> jobs;
    for (const auto& need : models_needed) checkpoints[need];  // preallocate
    for (const auto& need : models_needed) {
      const auto& [c, r] = need;
      jobs.emplace_back(
          fmt::format("pretrain {}/{} repeat {}", c.dataset_id, c.channel, r),
          [&, c, r] {
            const auto& sets = data.at(c).at(model_rate(c));
            TrainConfig tc = cfg.train;
            tc.seed = hash64(cfg.study_seed, "pretrain", c.dataset_id,
                             c.channel, static_cast<std::uint64_t>(r));
            TrainMeta tm;
            tm.source_dataset = c.dataset_id;
            tm.source_channel = c.channel;
            checkpoints.at({c, r}) = pretrain(
                sets.train, sets.val, tc, input_spec(model_rate(c)), tm);
          });
    }
    detail::run_jobs(jobs, cfg.jobs);
  }

  // Phase 2: evaluations, each appending one record to the ledger file.
  std::vector<EvalRecord> fresh(eval_jobs.size());
  {
    std::mutex io_mutex;
    std::optional<std::ofstream> appender;
    if (!eval_jobs.empty()) {
      if (!ledger_exists) {
        std::ofstream os(cfg.ledger_path, std::ios::binary);
        if (!os) throw IoError(fmt::format("run_study: cannot write {}",
                                           cfg.ledger_path.string()));
        os << meta_to_json(meta).dump() << '\n';
      }
      appender.emplace(cfg.ledger_path,
                       std::ios::binary | std::ios::app);
      if (!*appender)
        throw IoError("run_study: cannot append to ledger");
    }

    std::vector<std::pair<std::string, std::function<void()>>> jobs;
    for (std::size_t i = 0; i < eval_jobs.size(); ++i) {
      const EvalJob& job = eval_jobs[i];
      const std::string label = detail::key_label(job.setting, job.source,
                                                  job.target) +
                                fmt::format(" repeat {}", job.repeat);
      jobs.emplace_back(label, [&, i, job] {
        const ChannelId model_channel =
            job.setting == Setting::FS ? job.target : *job.source;
        const std::uint32_t rate = model_rate(model_channel);
        const auto& target_sets = data.at(job.target).at(rate);
        const ModelCheckpoint& base = checkpoints.at({model_channel, job.repeat});

        std::vector<Stage> preds;
        if (job.setting == Setting::FT) {
          TrainConfig tc = cfg.train;
          tc.seed = hash64(cfg.study_seed, "finetune",
                           model_channel.dataset_id, model_channel.channel,
                           job.target.dataset_id, job.target.channel,
                           static_cast<std::uint64_t>(job.repeat));
          TrainMeta tm;
          tm.source_dataset = model_channel.dataset_id;
          tm.source_channel = model_channel.channel;
          const ModelCheckpoint tuned =
              finetune(base, target_sets.train, target_sets.val, tc, tm);
          preds = predict(tuned, target_sets.test);
        } else {
          preds = predict(base, target_sets.test);
        }

        EvalRecord rec;
        rec.setting = job.setting;
        rec.source = job.source;
        rec.target = job.target;
        rec.repeat = job.repeat;
        rec.metrics = metric_set(confusion(target_sets.test.labels, preds));
        fresh[i] = rec;

        std::lock_guard lock(io_mutex);
        *appender << record_to_json(rec).dump() << '\n';
        appender->flush();
      });
    }
    detail::run_jobs(jobs, cfg.jobs);
  }

  RunLedger ledger;
  ledger.meta = meta;
  ledger.records = std::move(existing);
  ledger.records.insert(ledger.records.end(), fresh.begin(), fresh.end());
  canonicalize(ledger.records);
  write_ledger(ledger, cfg.ledger_path);
  return ledger;
}

struct AnalysisResult {
  ImpactReport impact;
  std::vector<PairwiseMatrix> pairwise;  // one per target, universe order
  TransferabilityMatrix w;
  std::vector<std::optional<double>> generalization;
};

inline AnalysisResult analyze(const RunLedger& ledger, const Universe& universe,
                              double alpha = 1.0,
                              EigMethod method = EigMethod::Approx) {
  const auto pairs = enumerate_pairs(universe);
  AnalysisResult result;
  result.impact = impact_report(ledger.records, group_pairs(pairs));
  for (const ChannelId& target : enumerate_targets(universe)) {
    std::vector<ChannelId> feasible;
    for (const auto& pair : pairs) {
      if (pair.target.dataset_id == target.dataset_id &&
          pair.target.channel == target.channel)
        feasible.push_back({pair.source.dataset_id, pair.source.channel});
    }
    result.pairwise.push_back(
        build_pairwise(ledger.records, target, feasible, alpha));
  }
  result.w = build_w(ledger.records, universe, alpha, method);
  result.generalization = generalization_vector(result.w);
  return result;
}

}  // namespace xfb
