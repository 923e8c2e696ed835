// xfb: generate synthetic cohorts, run transfer studies, analyze ledgers and
// render reports.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <fmt/format.h>

#include "CLI11.hpp"

#include "xfb/xfb.hpp"

namespace fs = std::filesystem;

namespace {

template <class... Args>
void println(fmt::format_string<Args...> f, Args&&... args) {
  fmt::print(f, std::forward<Args>(args)...);
  std::fputc('\n', stdout);
}

template <class... Args>
void println(std::FILE* out, fmt::format_string<Args...> f, Args&&... args) {
  fmt::print(out, f, std::forward<Args>(args)...);
  std::fputc('\n', out);
}

xfb::StudyManifest load_manifest_or_builtin(const std::string& path) {
  if (path.empty())
    return xfb::StudyManifest{xfb::builtin_universe(), xfb::GenParams{}};
  return xfb::read_manifest(path);
}

std::vector<xfb::ChannelId> cohort_channels(const xfb::Universe& universe) {
  std::set<xfb::ChannelId> channels;
  for (const auto& c : xfb::enumerate_sources(universe)) channels.insert(c);
  for (const auto& c : xfb::enumerate_targets(universe)) channels.insert(c);
  return {channels.begin(), channels.end()};
}

int cmd_gen(const std::string& manifest_path, const std::string& out_dir) {
  const auto manifest = xfb::read_manifest(manifest_path);
  const auto channels = cohort_channels(manifest.universe);
  fs::create_directories(out_dir);
  for (const auto& c : channels) {
    const auto cohort =
        xfb::generate(manifest.universe.descriptor(c), manifest.gen_params);
    const std::string name =
        xfb::detail::sanitize_filename(c.dataset_id + "_" + c.channel);
    xfb::write_cohort(cohort, fs::path(out_dir) / name);
    println("wrote {}/{} ({} subjects, {} epochs each)", out_dir, name,
                 cohort.subjects.size(),
                 cohort.subjects.empty() ? 0 : cohort.subjects[0].epochs.size());
  }
  println("{} cohorts generated", channels.size());
  return 0;
}

int cmd_run(const std::string& manifest_path, const std::string& ledger_path,
            int repeats, int jobs, std::uint64_t seed) {
  xfb::StudyConfig cfg;
  cfg.manifest_path = manifest_path;
  cfg.ledger_path = ledger_path;
  cfg.repeats = repeats;
  cfg.jobs = jobs;
  cfg.study_seed = seed;
  const auto ledger = xfb::run_study(cfg);
  int fs_n = 0, dt_n = 0, ft_n = 0;
  for (const auto& r : ledger.records) {
    if (r.setting == xfb::Setting::FS)
      ++fs_n;
    else if (r.setting == xfb::Setting::DT)
      ++dt_n;
    else
      ++ft_n;
  }
  println("ledger {} complete: {} FS, {} DT, {} FT records", ledger_path,
               fs_n, dt_n, ft_n);
  return 0;
}

int cmd_analyze(const std::string& ledger_path, const std::string& manifest_path,
                const std::string& out_dir, double alpha,
                const std::string& eig, bool alpha_sweep) {
  const auto manifest = load_manifest_or_builtin(manifest_path);
  const auto ledger = xfb::read_ledger(ledger_path);
  const auto method =
      eig == "power" ? xfb::EigMethod::Power : xfb::EigMethod::Approx;

  std::vector<double> alphas{alpha};
  if (alpha_sweep) alphas = {0.5, 1.0, 2.0};
  for (std::size_t i = 0; i < alphas.size(); ++i) {
    const auto result =
        xfb::analyze(ledger, manifest.universe, alphas[i], method);
    const std::string suffix =
        alpha_sweep ? fmt::format("_alpha_{}", alphas[i]) : std::string{};
    xfb::write_analysis_csvs(result, out_dir, suffix);
    println("analysis written to {} (alpha = {})", out_dir, alphas[i]);
  }
  return 0;
}

int cmd_report(const std::string& out_dir) {
  const int n = xfb::render_report_dir(out_dir);
  println("rendered {} SVG files in {}", n, out_dir);
  return 0;
}

int cmd_verify_plan(const std::string& manifest_path, bool exhaustive) {
  const auto manifest = load_manifest_or_builtin(manifest_path);
  const auto sources = xfb::enumerate_sources(manifest.universe);
  const auto targets = xfb::enumerate_targets(manifest.universe);
  const auto pairs = exhaustive
                         ? xfb::enumerate_pairs_exhaustive(manifest.universe)
                         : xfb::enumerate_pairs(manifest.universe);
  println("sources: {}", sources.size());
  println("targets: {}", targets.size());
  println("pairs:   {}{}", pairs.size(),
               exhaustive ? " (exhaustive)" : "");
  println("pairs per target:");
  for (const auto& t : targets) {
    std::size_t n = 0;
    for (const auto& p : pairs) {
      if (p.target.dataset_id == t.dataset_id && p.target.channel == t.channel)
        ++n;
    }
    println("  {}/{}: {}", t.dataset_id, t.channel, n);
  }
  println("empty groups:");
  bool any_empty = false;
  for (const auto& [key, members] : xfb::group_pairs(pairs)) {
    if (!members.empty()) continue;
    any_empty = true;
    println("  env={} channel={} cond={}",
                 key.env_diff ? "diff" : "same",
                 key.channel_diff ? "diff" : "same",
                 key.cond_diff ? "diff" : "same");
  }
  if (!any_empty) println("  (none)");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"transfer benchmark harness"};
  app.require_subcommand(1);

  std::string manifest_path, ledger_path, out_dir, eig = "approx";
  int repeats = 3, jobs = 1;
  std::uint64_t seed = 0;
  double alpha = 1.0;
  bool alpha_sweep = false, exhaustive = false;

  auto* gen = app.add_subcommand("gen", "generate cohorts from a manifest");
  gen->add_option("--manifest", manifest_path, "study manifest JSON")->required();
  gen->add_option("--out", out_dir, "output directory")->required();

  auto* run = app.add_subcommand("run", "run the full study into a ledger");
  run->add_option("--manifest", manifest_path, "study manifest JSON")->required();
  run->add_option("--ledger", ledger_path, "ledger path (JSONL)")->required();
  run->add_option("--repeats", repeats, "training repetitions per job");
  run->add_option("--jobs", jobs, "parallel worker count");
  run->add_option("--seed", seed, "study seed");

  auto* analyze = app.add_subcommand("analyze", "analyze a ledger into CSVs");
  analyze->add_option("--ledger", ledger_path, "ledger path (JSONL)")->required();
  analyze->add_option("--out", out_dir, "report directory")->required();
  analyze->add_option("--manifest", manifest_path,
                      "study manifest (defaults to the built-in inventory)");
  analyze->add_option("--alpha", alpha, "equality threshold in percent");
  analyze->add_option("--eig", eig, "eigenvector method: approx or power")
      ->check(CLI::IsMember({"approx", "power"}));
  analyze->add_flag("--alpha-sweep", alpha_sweep,
                    "also emit reports for alpha in {0.5, 1, 2}");

  auto* report = app.add_subcommand("report", "render SVG twins of the CSVs");
  report->add_option("--out", out_dir, "report directory")->required();

  auto* verify = app.add_subcommand("verify-plan", "print plan counts");
  verify->add_option("--manifest", manifest_path,
                     "study manifest (defaults to the built-in inventory)");
  verify->add_flag("--exhaustive", exhaustive,
                   "pair every source with every target");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen(manifest_path, out_dir);
    if (run->parsed())
      return cmd_run(manifest_path, ledger_path, repeats, jobs, seed);
    if (analyze->parsed())
      return cmd_analyze(ledger_path, manifest_path, out_dir, alpha, eig,
                         alpha_sweep);
    if (report->parsed()) return cmd_report(out_dir);
    if (verify->parsed()) return cmd_verify_plan(manifest_path, exhaustive);
  } catch (const std::exception& e) {
    println(stderr, "error: {}", e.what());
    return 1;
  }
  return 0;
}
