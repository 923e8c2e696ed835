#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fmt/format.h>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "xfb/errors.hpp"
#include "xfb/metrics.hpp"
#include "xfb/plan.hpp"

// The analysis core. Relative performance difference r quantifies how much a
// direct transfer degrades versus the target's own model; pairwise matrices
// compare fine-tuned sources against each other relative to the target's own
// performance; normalization turns those percent differences into a positive
// reciprocal comparison matrix whose principal eigenvector ranks the sources.
// Stacking the per-target eigenvectors gives the transferability matrix W,
// and column means of W give each source's generalization score.

namespace xfb {

enum class Setting : std::uint8_t { FS = 0, DT = 1, FT = 2 };

constexpr std::string_view to_string(Setting s) {
  switch (s) {
    case Setting::FS: return "FS";
    case Setting::DT: return "DT";
    case Setting::FT: return "FT";
  }
  return "";
}

constexpr std::optional<Setting> parse_setting(std::string_view s) {
  if (s == "FS") return Setting::FS;
  if (s == "DT") return Setting::DT;
  if (s == "FT") return Setting::FT;
  return std::nullopt;
}

struct EvalRecord {
  Setting setting = Setting::FS;
  std::optional<ChannelId> source;  // absent for FS
  ChannelId target;
  int repeat = 0;
  MetricSet metrics;

  bool operator==(const EvalRecord&) const = default;
};

// Percentage degradation of the transferred model relative to the target's
// own model. p_tt is the target-trained (from scratch) performance, p_st the
// transferred performance on the same target.
inline double relative_diff(double p_tt, double p_st) {
  if (p_st == 0.0) throw DivisionByZero("relative_diff: p_st is zero");
  return (p_tt / p_st - 1.0) * 100.0;
}

namespace detail {

struct MetricKey {
  Setting setting;
  std::optional<ChannelId> source;
  ChannelId target;

  auto operator<=>(const MetricKey&) const = default;
};

inline std::string key_label(Setting setting,
                             const std::optional<ChannelId>& source,
                             const ChannelId& target) {
  std::string s{to_string(setting)};
  if (source)
    s += fmt::format(" {}/{}", source->dataset_id, source->channel);
  else
    s += " -";
  s += fmt::format(" -> {}/{}", target.dataset_id, target.channel);
  return s;
}

// Repeat-averaged metrics per (setting, source, target).
class LedgerIndex {
 public:
  explicit LedgerIndex(const std::vector<EvalRecord>& records) {
    struct Sum {
      double acc = 0, mf1 = 0;
      int n = 0;
    };
    std::map<MetricKey, Sum> sums;
    for (const auto& r : records) {
      auto& s = sums[{r.setting, r.source, r.target}];
      s.acc += r.metrics.acc;
      s.mf1 += r.metrics.mf1;
      ++s.n;
    }
    for (const auto& [key, s] : sums)
      means_[key] = {s.acc / s.n, s.mf1 / s.n};
  }

  struct Mean {
    double acc = 0, mf1 = 0;
  };

  std::optional<Mean> find(Setting setting,
                           const std::optional<ChannelId>& source,
                           const ChannelId& target) const {
    // FS rows may carry source = target or no source at all
    auto it = means_.find({setting, source, target});
    if (it == means_.end() && setting == Setting::FS) {
      it = means_.find({setting, std::nullopt, target});
      if (it == means_.end()) it = means_.find({setting, target, target});
    }
    return it == means_.end() ? std::nullopt : std::optional(it->second);
  }

 private:
  std::map<MetricKey, Mean> means_;
};

}  // namespace detail

struct GroupStats {
  int n_pairs = 0;
  double mean_fs_acc = 0, mean_fs_mf1 = 0;
  double mean_dt_acc = 0, mean_dt_mf1 = 0;
  std::optional<double> mean_ft_acc, mean_ft_mf1;
  double mean_r = 0;  // percent
};

struct ImpactReport {
  std::map<GroupKey, GroupStats> groups;
};

// Per group: mean FS/DT (and FT when present) metrics over the group's
// (pair, repeat) values, plus the mean over pairs of the per-pair r computed
// from repeat-averaged MF1.
inline ImpactReport impact_report(
    const std::vector<EvalRecord>& records,
    const std::map<GroupKey, std::vector<TransferPair>>& groups) {
  const detail::LedgerIndex index(records);

  // per-(pair,repeat) means need the raw records too
  struct Acc {
    double acc_sum = 0, mf1_sum = 0;
    int n = 0;
    void add(const MetricSet& m) {
      acc_sum += m.acc;
      mf1_sum += m.mf1;
      ++n;
    }
  };
  std::map<std::pair<std::optional<ChannelId>, ChannelId>, Acc> fs_by_target,
      dt_by_pair, ft_by_pair;
  for (const auto& r : records) {
    if (r.setting == Setting::FS)
      fs_by_target[{std::nullopt, r.target}].add(r.metrics);
    else if (r.setting == Setting::DT)
      dt_by_pair[{r.source, r.target}].add(r.metrics);
    else
      ft_by_pair[{r.source, r.target}].add(r.metrics);
  }

  ImpactReport report;
  std::vector<std::string> missing;
  for (const auto& [key, pairs] : groups) {
    GroupStats stats;
    stats.n_pairs = static_cast<int>(pairs.size());
    Acc fs, dt, ft;
    double r_sum = 0;
    for (const auto& pair : pairs) {
      const ChannelId src{pair.source.dataset_id, pair.source.channel};
      const ChannelId tgt{pair.target.dataset_id, pair.target.channel};
      const auto fs_mean = index.find(Setting::FS, std::nullopt, tgt);
      const auto dt_mean = index.find(Setting::DT, src, tgt);
      if (!fs_mean)
        missing.push_back(detail::key_label(Setting::FS, std::nullopt, tgt));
      if (!dt_mean)
        missing.push_back(detail::key_label(Setting::DT, src, tgt));
      if (!fs_mean || !dt_mean) continue;
      r_sum += relative_diff(fs_mean->mf1, dt_mean->mf1);

      if (auto it = fs_by_target.find({std::nullopt, tgt});
          it != fs_by_target.end()) {
        fs.acc_sum += it->second.acc_sum;
        fs.mf1_sum += it->second.mf1_sum;
        fs.n += it->second.n;
      }
      if (auto it = dt_by_pair.find({src, tgt}); it != dt_by_pair.end()) {
        dt.acc_sum += it->second.acc_sum;
        dt.mf1_sum += it->second.mf1_sum;
        dt.n += it->second.n;
      }
      if (auto it = ft_by_pair.find({src, tgt}); it != ft_by_pair.end()) {
        ft.acc_sum += it->second.acc_sum;
        ft.mf1_sum += it->second.mf1_sum;
        ft.n += it->second.n;
      }
    }
    if (!pairs.empty() && missing.empty()) {
      stats.mean_fs_acc = fs.acc_sum / fs.n;
      stats.mean_fs_mf1 = fs.mf1_sum / fs.n;
      stats.mean_dt_acc = dt.acc_sum / dt.n;
      stats.mean_dt_mf1 = dt.mf1_sum / dt.n;
      if (ft.n > 0) {
        stats.mean_ft_acc = ft.acc_sum / ft.n;
        stats.mean_ft_mf1 = ft.mf1_sum / ft.n;
      }
      stats.mean_r = r_sum / static_cast<double>(pairs.size());
    }
    report.groups[key] = stats;
  }
  if (!missing.empty()) {
    auto msg = fmt::format("impact_report: {} records missing, first: {}",
                           missing.size(), missing.front());
    throw MissingRecord(std::move(msg), std::move(missing));
  }
  return report;
}

struct PairwiseMatrix {
  ChannelId target;
  std::vector<ChannelId> sources;               // row/column order
  std::vector<std::vector<double>> raw;         // signed percent differences
  std::vector<std::vector<double>> normalized;  // positive reciprocal form
};

// Raw pairwise percent differences between fine-tuned sources on one target,
// relative to the target's own from-scratch performance.
inline std::vector<std::vector<double>> pairwise_raw(
    const std::vector<EvalRecord>& records, const ChannelId& target,
    const std::vector<ChannelId>& sources) {
  const detail::LedgerIndex index(records);
  const auto fs = index.find(Setting::FS, std::nullopt, target);
  std::vector<std::string> missing;
  if (!fs) missing.push_back(detail::key_label(Setting::FS, std::nullopt, target));

  std::vector<double> perf(sources.size(), 0.0);
  for (std::size_t i = 0; i < sources.size(); ++i) {
    const auto ft = index.find(Setting::FT, sources[i], target);
    if (!ft) {
      missing.push_back(detail::key_label(Setting::FT, sources[i], target));
      continue;
    }
    perf[i] = ft->mf1;
  }
  if (!missing.empty()) {
    auto msg = fmt::format("pairwise_raw: {} records missing, first: {}",
                           missing.size(), missing.front());
    throw MissingRecord(std::move(msg), std::move(missing));
  }
  if (fs->mf1 == 0.0)
    throw DivisionByZero("pairwise_raw: target from-scratch MF1 is zero");

  const std::size_t n = sources.size();
  std::vector<std::vector<double>> raw(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      raw[i][j] = (perf[i] - perf[j]) / fs->mf1 * 100.0;
  return raw;
}

// Percent differences above alpha survive, mirrored entries become
// reciprocals, differences within alpha are judged equal (entry 1).
inline std::vector<std::vector<double>> normalize(
    const std::vector<std::vector<double>>& raw, double alpha = 1.0) {
  const std::size_t n = raw.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (raw[i].size() != n)
      throw NotAntisymmetric("normalize: matrix not square");
    if (std::abs(raw[i][i]) > 1e-12)
      throw NotAntisymmetric("normalize: nonzero diagonal");
    for (std::size_t j = 0; j < n; ++j) {
      if (std::abs(raw[i][j] + raw[j][i]) > 1e-9)
        throw NotAntisymmetric("normalize: raw[i][j] != -raw[j][i]");
    }
  }
  std::vector<std::vector<double>> out(n, std::vector<double>(n, 1.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      if (raw[i][j] > alpha)
        out[i][j] = raw[i][j];
      else if (raw[i][j] < -alpha)
        out[i][j] = 1.0 / std::abs(raw[j][i]);
      // otherwise the two sources perform equally well: entry stays 1
    }
  }
  return out;
}

// Principal eigenvector approximated by averaging the normalized columns:
// v_i = (1/n) * sum_j m[i][j] / colsum_j. Exact for consistent matrices.
inline std::vector<double> approx_eigenvector(
    const std::vector<std::vector<double>>& m) {
  const std::size_t n = m.size();
  if (n == 0) throw EmptyMatrix("approx_eigenvector: empty matrix");
  for (const auto& row : m) {
    if (row.size() != n) throw NonPositiveEntry("approx_eigenvector: not square");
    for (double v : row)
      if (!(v > 0.0)) throw NonPositiveEntry("approx_eigenvector: entry <= 0");
  }
  std::vector<double> colsum(n, 0.0);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t i = 0; i < n; ++i) colsum[j] += m[i][j];
  std::vector<double> v(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) v[i] += m[i][j] / colsum[j];
    v[i] /= static_cast<double>(n);
  }
  return v;
}

// Exact dominant eigenvector by power iteration, normalized to sum 1. Kept as
// a cross-check for the approximate method.
inline std::vector<double> power_eigenvector(
    const std::vector<std::vector<double>>& m, int max_iters = 10000,
    double tol = 1e-15) {
  const std::size_t n = m.size();
  if (n == 0) throw EmptyMatrix("power_eigenvector: empty matrix");
  for (const auto& row : m) {
    if (row.size() != n) throw NonPositiveEntry("power_eigenvector: not square");
    for (double v : row)
      if (!(v > 0.0)) throw NonPositiveEntry("power_eigenvector: entry <= 0");
  }
  std::vector<double> v(n, 1.0 / static_cast<double>(n));
  for (int iter = 0; iter < max_iters; ++iter) {
    std::vector<double> next(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) next[i] += m[i][j] * v[j];
    double sum = 0.0;
    for (double x : next) sum += x;
    for (double& x : next) x /= sum;
    double delta = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      delta = std::max(delta, std::abs(next[i] - v[i]));
    v = std::move(next);
    if (delta < tol) break;
  }
  return v;
}

enum class EigMethod { Approx, Power };

struct TransferabilityMatrix {
  std::vector<ChannelId> targets;  // row ids
  std::vector<ChannelId> sources;  // column ids, manifest order
  // w[row][col]; absent where the (target, source) pair is infeasible
  std::vector<std::vector<std::optional<double>>> w;
};

inline PairwiseMatrix build_pairwise(const std::vector<EvalRecord>& records,
                                     const ChannelId& target,
                                     const std::vector<ChannelId>& sources,
                                     double alpha) {
  PairwiseMatrix pm;
  pm.target = target;
  pm.sources = sources;
  pm.raw = pairwise_raw(records, target, sources);
  pm.normalized = normalize(pm.raw, alpha);
  return pm;
}

// One row per target: the eigenvector of its normalized pairwise matrix,
// spread over the full source-column space with infeasible cells absent.
inline TransferabilityMatrix build_w(const std::vector<EvalRecord>& records,
                                     const Universe& universe,
                                     double alpha = 1.0,
                                     EigMethod method = EigMethod::Approx) {
  const auto pairs = enumerate_pairs(universe);
  TransferabilityMatrix W;
  W.targets = enumerate_targets(universe);
  W.sources = enumerate_sources(universe);

  for (const ChannelId& target : W.targets) {
    std::vector<ChannelId> feasible;
    for (const auto& pair : pairs) {
      if (pair.target.dataset_id == target.dataset_id &&
          pair.target.channel == target.channel)
        feasible.push_back({pair.source.dataset_id, pair.source.channel});
    }
    const auto raw = pairwise_raw(records, target, feasible);
    const auto normalized = normalize(raw, alpha);
    const auto eig = method == EigMethod::Approx
                         ? approx_eigenvector(normalized)
                         : power_eigenvector(normalized);

    std::vector<std::optional<double>> row(W.sources.size());
    for (std::size_t i = 0; i < feasible.size(); ++i) {
      const auto it = std::ranges::find(W.sources, feasible[i]);
      if (it == W.sources.end())
        throw InvalidParams("build_w: feasible source missing from universe");
      row[static_cast<std::size_t>(it - W.sources.begin())] = eig[i];
    }
    W.w.push_back(std::move(row));
  }
  return W;
}

// Column means of W over present cells: each source's average usefulness.
inline std::vector<std::optional<double>> generalization_vector(
    const TransferabilityMatrix& w) {
  if (w.w.empty() || w.sources.empty())
    throw EmptyMatrix("generalization_vector: empty matrix");
  std::vector<std::optional<double>> out(w.sources.size());
  for (std::size_t j = 0; j < w.sources.size(); ++j) {
    double sum = 0.0;
    int n = 0;
    for (const auto& row : w.w) {
      if (row[j]) {
        sum += *row[j];
        ++n;
      }
    }
    if (n > 0) out[j] = sum / n;
  }
  return out;
}

}  // namespace xfb
