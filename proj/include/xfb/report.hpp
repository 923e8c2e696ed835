#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fmt/format.h>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "xfb/errors.hpp"
#include "xfb/study.hpp"

// Report emission. Analysis results land as CSV (full precision, stable
// column order) and as standalone SVG heatmaps: one per-target pairwise
// matrix with its eigenvector row, the stacked transferability matrix with
// the generalization row underneath, the generalization vector alone, and
// the per-group impact table.

namespace xfb {

namespace detail {

inline std::string channel_label(const ChannelId& id) {
  return fmt::format("{}/{}", id.dataset_id, id.channel);
}

inline std::string csv_num(double v) { return fmt::format("{}", v); }

inline std::string csv_opt(const std::optional<double>& v) {
  return v ? csv_num(*v) : std::string{};
}

inline void write_text_file(const std::filesystem::path& path,
                            const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError(fmt::format("cannot write {}", path.string()));
  os << text;
  if (!os) throw IoError(fmt::format("write failure on {}", path.string()));
}

inline std::string sanitize_filename(std::string s) {
  for (char& c : s)
    if (c == '/' || c == '\\' || c == ' ') c = '_';
  return s;
}

}  // namespace detail

inline std::string impact_csv(const ImpactReport& report) {
  std::string out =
      "env_diff,channel_diff,cond_diff,n_pairs,mean_fs_acc,mean_fs_mf1,"
      "mean_dt_acc,mean_dt_mf1,mean_ft_acc,mean_ft_mf1,mean_r_percent\n";
  for (const GroupKey& key : GroupKey::all()) {
    const auto it = report.groups.find(key);
    out += fmt::format("{},{},{}", key.env_diff ? 1 : 0,
                       key.channel_diff ? 1 : 0, key.cond_diff ? 1 : 0);
    if (it == report.groups.end() || it->second.n_pairs == 0) {
      out += ",0,,,,,,,\n";
      continue;
    }
    const GroupStats& g = it->second;
    out += fmt::format(",{},{},{},{},{},{},{},{}\n", g.n_pairs,
                       detail::csv_num(g.mean_fs_acc),
                       detail::csv_num(g.mean_fs_mf1),
                       detail::csv_num(g.mean_dt_acc),
                       detail::csv_num(g.mean_dt_mf1),
                       detail::csv_opt(g.mean_ft_acc),
                       detail::csv_opt(g.mean_ft_mf1),
                       detail::csv_num(g.mean_r));
  }
  return out;
}

inline std::string w_matrix_csv(const TransferabilityMatrix& w) {
  std::string out = "target";
  for (const auto& s : w.sources) out += "," + detail::channel_label(s);
  out += '\n';
  for (std::size_t i = 0; i < w.targets.size(); ++i) {
    out += detail::channel_label(w.targets[i]);
    for (const auto& cell : w.w[i]) out += "," + detail::csv_opt(cell);
    out += '\n';
  }
  return out;
}

inline std::string generalization_csv(
    const TransferabilityMatrix& w,
    const std::vector<std::optional<double>>& generalization) {
  std::string out = "source,mean_weight\n";
  for (std::size_t j = 0; j < w.sources.size(); ++j) {
    out += detail::channel_label(w.sources[j]) + "," +
           detail::csv_opt(generalization[j]) + '\n';
  }
  return out;
}

inline std::string pairwise_csv(const PairwiseMatrix& pm) {
  std::string out = "source";
  for (const auto& s : pm.sources) out += "," + detail::channel_label(s);
  out += '\n';
  for (std::size_t i = 0; i < pm.sources.size(); ++i) {
    out += detail::channel_label(pm.sources[i]);
    for (double v : pm.normalized[i]) out += "," + detail::csv_num(v);
    out += '\n';
  }
  const auto eig = approx_eigenvector(pm.normalized);
  out += "eigenvector";
  for (double v : eig) out += "," + detail::csv_num(v);
  out += '\n';
  return out;
}

inline void write_analysis_csvs(const AnalysisResult& result,
                                const std::filesystem::path& dir,
                                const std::string& suffix = "") {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError(fmt::format("cannot create {}", dir.string()));
  detail::write_text_file(dir / fmt::format("impact{}.csv", suffix),
                          impact_csv(result.impact));
  detail::write_text_file(dir / fmt::format("w_matrix{}.csv", suffix),
                          w_matrix_csv(result.w));
  detail::write_text_file(dir / fmt::format("generalization{}.csv", suffix),
                          generalization_csv(result.w, result.generalization));
  for (const auto& pm : result.pairwise) {
    const std::string name = detail::sanitize_filename(
        fmt::format("h_{}_{}{}.csv", pm.target.dataset_id, pm.target.channel,
                    suffix));
    detail::write_text_file(dir / name, pairwise_csv(pm));
  }
}

// --- SVG rendering ---------------------------------------------------------

namespace detail {

struct Rgb {
  double r, g, b;
};

inline std::string rgb_hex(const Rgb& c) {
  auto clamp255 = [](double x) {
    return static_cast<int>(std::clamp(x, 0.0, 255.0));
  };
  return fmt::format("#{:02x}{:02x}{:02x}", clamp255(c.r), clamp255(c.g),
                     clamp255(c.b));
}

// Three-stop green ramp: near-white through mid green to deep green.
inline Rgb green_ramp(double s) {
  s = std::clamp(s, 0.0, 1.0);
  const Rgb a{247, 252, 245}, b{116, 196, 118}, c{0, 68, 27};
  auto mix = [](const Rgb& x, const Rgb& y, double t) {
    return Rgb{x.r + (y.r - x.r) * t, x.g + (y.g - x.g) * t,
               x.b + (y.b - x.b) * t};
  };
  return s < 0.5 ? mix(a, b, s * 2.0) : mix(b, c, (s - 0.5) * 2.0);
}

inline std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      default: out += c;
    }
  }
  return out;
}

struct HeatmapSpec {
  std::string title;
  std::vector<std::string> col_labels;
  std::vector<std::string> row_labels;
  std::vector<std::vector<std::optional<double>>> cells;
  // log_midpoint: color by log10(v) centered at v = 1 (pairwise matrices);
  // otherwise linear from 0 to the maximum present value
  bool log_midpoint = false;
  // rows drawn separated from the main grid (e.g. an eigenvector footer)
  std::size_t footer_rows = 0;
};

inline std::string render_heatmap(const HeatmapSpec& spec) {
  const double cell_w = 52, cell_h = 26;
  const double left = 170, top = 120, gap = 10;
  const std::size_t n_rows = spec.cells.size();
  const std::size_t n_cols = spec.col_labels.size();
  const std::size_t body_rows = n_rows - spec.footer_rows;
  const double width = left + cell_w * static_cast<double>(n_cols) + 20;
  const double height = top + cell_h * static_cast<double>(n_rows) +
                        (spec.footer_rows > 0 ? gap : 0) + 20;

  double vmax = 0;
  for (const auto& row : spec.cells)
    for (const auto& v : row)
      if (v) vmax = std::max(vmax, std::abs(*v));
  if (vmax <= 0) vmax = 1;

  auto shade = [&](double v) {
    if (spec.log_midpoint) {
      const double t = std::clamp(std::log10(std::max(v, 1e-6)) / 2.0, -1.0, 1.0);
      return green_ramp((t + 1.0) / 2.0);
    }
    return green_ramp(v / vmax);
  };

  std::string svg = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" "
      "font-family=\"sans-serif\">\n",
      width, height);
  svg += fmt::format(
      "<text x=\"12\" y=\"24\" font-size=\"15\" font-weight=\"bold\">{}</text>\n",
      xml_escape(spec.title));

  for (std::size_t j = 0; j < n_cols; ++j) {
    const double x = left + cell_w * (static_cast<double>(j) + 0.5);
    svg += fmt::format(
        "<text x=\"{}\" y=\"{}\" font-size=\"10\" text-anchor=\"start\" "
        "transform=\"rotate(-45 {} {})\">{}</text>\n",
        x, top - 6, x, top - 6, xml_escape(spec.col_labels[j]));
  }

  for (std::size_t i = 0; i < n_rows; ++i) {
    const double y0 =
        top + cell_h * static_cast<double>(i) + (i >= body_rows ? gap : 0);
    svg += fmt::format(
        "<text x=\"{}\" y=\"{}\" font-size=\"10\" text-anchor=\"end\">{}</text>\n",
        left - 6, y0 + cell_h * 0.65, xml_escape(spec.row_labels[i]));
    for (std::size_t j = 0; j < spec.cells[i].size(); ++j) {
      const double x0 = left + cell_w * static_cast<double>(j);
      const auto& v = spec.cells[i][j];
      if (!v) {
        svg += fmt::format(
            "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"#eee\" "
            "stroke=\"#fff\"/>\n",
            x0, y0, cell_w, cell_h);
        continue;
      }
      const Rgb c = shade(*v);
      const bool dark = (c.r + c.g + c.b) < 320;
      svg += fmt::format(
          "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{}\" "
          "stroke=\"#fff\"/>\n",
          x0, y0, cell_w, cell_h, rgb_hex(c));
      svg += fmt::format(
          "<text x=\"{}\" y=\"{}\" font-size=\"9\" text-anchor=\"middle\" "
          "fill=\"{}\">{}</text>\n",
          x0 + cell_w / 2, y0 + cell_h * 0.65, dark ? "#fff" : "#000",
          fmt::format("{:.3g}", *v));
    }
  }
  svg += "</svg>\n";
  return svg;
}

// Minimal reader for the CSVs this module writes (no quoting in our output).
inline std::vector<std::vector<std::string>> read_csv(
    const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError(fmt::format("cannot open {}", path.string()));
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> row;
    std::string field;
    std::istringstream ls(line);
    while (std::getline(ls, field, ',')) row.push_back(field);
    if (line.back() == ',') row.emplace_back();
    rows.push_back(std::move(row));
  }
  return rows;
}

inline std::optional<double> parse_cell(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return std::stod(s);
}

}  // namespace detail

// Renders the SVG twin of one analysis CSV. The kind is inferred from the
// file name prefix (impact, w_matrix, generalization, h_<target>).
inline void render_svg_twin(const std::filesystem::path& csv_path) {
  const std::string stem = csv_path.stem().string();
  const auto rows = detail::read_csv(csv_path);
  if (rows.empty()) throw FormatError(fmt::format("{}: empty csv",
                                                  csv_path.string()));
  detail::HeatmapSpec spec;
  spec.title = stem;

  if (stem.starts_with("h_")) {
    spec.log_midpoint = true;
    spec.footer_rows = 1;  // eigenvector row
  }

  // the impact table keys rows by its first three flag columns
  const std::size_t key_cols = stem.starts_with("impact") ? 3 : 1;
  spec.col_labels.assign(rows[0].begin() + static_cast<std::ptrdiff_t>(key_cols),
                         rows[0].end());
  for (std::size_t i = 1; i < rows.size(); ++i) {
    std::string label = rows[i][0];
    for (std::size_t k = 1; k < key_cols && k < rows[i].size(); ++k)
      label += "," + rows[i][k];
    spec.row_labels.push_back(std::move(label));
    std::vector<std::optional<double>> cells;
    for (std::size_t j = key_cols; j < rows[i].size(); ++j)
      cells.push_back(detail::parse_cell(rows[i][j]));
    cells.resize(spec.col_labels.size());
    spec.cells.push_back(std::move(cells));
  }
  detail::write_text_file(csv_path.parent_path() / (stem + ".svg"),
                          detail::render_heatmap(spec));
}

// Scans a report directory for analysis CSVs and writes the SVG twin next to
// each; the transferability heatmap gets the generalization vector appended
// as a separated footer row.
inline int render_report_dir(const std::filesystem::path& dir) {
  int rendered = 0;
  std::vector<std::filesystem::path> csvs;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.path().extension() == ".csv") csvs.push_back(entry.path());
  }
  std::ranges::sort(csvs);
  for (const auto& path : csvs) {
    const std::string stem = path.stem().string();
    if (stem.starts_with("w_matrix")) {
      // compose W and its generalization row into one figure
      const auto wrows = detail::read_csv(path);
      detail::HeatmapSpec spec;
      spec.title = stem;
      spec.col_labels.assign(wrows[0].begin() + 1, wrows[0].end());
      for (std::size_t i = 1; i < wrows.size(); ++i) {
        spec.row_labels.push_back(wrows[i][0]);
        std::vector<std::optional<double>> cells;
        for (std::size_t j = 1; j < wrows[i].size(); ++j)
          cells.push_back(detail::parse_cell(wrows[i][j]));
        cells.resize(spec.col_labels.size());
        spec.cells.push_back(std::move(cells));
      }
      const std::string suffix = stem.substr(std::string("w_matrix").size());
      const auto gen_path = dir / fmt::format("generalization{}.csv", suffix);
      if (std::filesystem::exists(gen_path)) {
        const auto grows = detail::read_csv(gen_path);
        std::vector<std::optional<double>> cells;
        for (std::size_t i = 1; i < grows.size(); ++i)
          cells.push_back(detail::parse_cell(
              grows[i].size() > 1 ? grows[i][1] : std::string{}));
        cells.resize(spec.col_labels.size());
        spec.row_labels.push_back("generalization");
        spec.cells.push_back(std::move(cells));
        spec.footer_rows = 1;
      }
      detail::write_text_file(dir / (stem + ".svg"),
                              detail::render_heatmap(spec));
    } else {
      render_svg_twin(path);
    }
    ++rendered;
  }
  return rendered;
}

}  // namespace xfb
