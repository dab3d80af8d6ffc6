#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mlpf/experiment.hpp"
#include "mlpf/rates.hpp"

namespace mlpf {

namespace detail {

inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string fmt6(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

inline std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  return out;
}

}  // namespace detail

inline void emit_results_csv(const ResultsTable& table, const std::filesystem::path& path) {
  auto out = detail::open_out(path);
  out << "replicate,estimator,L,log_estimate,sign,cost,wall_ms\n";
  for (const auto& row : table.rows) {
    out << row.replicate << "," << row.estimator << "," << row.L << ","
        << detail::fmt17(row.estimate.log_abs) << "," << row.estimate.sign << "," << row.cost
        << "," << row.wall_ms << "\n";
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

inline ResultsTable read_results_csv(const std::filesystem::path& path, int n_obs) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "replicate,estimator,L,log_estimate,sign,cost,wall_ms")
    throw std::runtime_error("bad results.csv header in " + path.string());
  ResultsTable table;
  table.n_obs = n_obs;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= line.size(); ++i) {
      if (i == line.size() || line[i] == ',') {
        fields.push_back(line.substr(start, i - start));
        start = i + 1;
      }
    }
    if (fields.size() != 7) throw std::runtime_error("bad results.csv row in " + path.string());
    ResultsRow row;
    row.replicate = std::stoi(fields[0]);
    row.estimator = fields[1];
    row.L = std::stoi(fields[2]);
    row.estimate = SignedLog::from_log(std::stod(fields[3]), std::stoi(fields[4]));
    row.cost = std::stoull(fields[5]);
    row.wall_ms = std::stoll(fields[6]);
    table.rows.push_back(std::move(row));
  }
  return table;
}

inline void emit_rates_csv(const std::map<std::string, RateFit>& fits,
                           const std::filesystem::path& path) {
  auto out = detail::open_out(path);
  out << "estimator,slope,intercept,r2,n_points\n";
  for (const auto& [name, fit] : fits) {
    out << name << "," << detail::fmt17(fit.slope) << "," << detail::fmt17(fit.intercept) << ","
        << detail::fmt17(fit.r2) << "," << fit.points.size() << "\n";
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

inline void emit_diagnostics_csv(const ResultsTable& table, const std::filesystem::path& path) {
  auto out = detail::open_out(path);
  out << "sweep_L,level,mean_alpha,mean_resamples\n";
  for (const auto& d : table.level_diagnostics) {
    out << d.sweep_L << "," << d.level << "," << detail::fmt17(d.mean_alpha) << ","
        << detail::fmt17(d.mean_resamples) << "\n";
  }
}

// Per-step filter diagnostics (ESS, alpha, running log-evidence) as CSV rows.
inline void emit_trace_csv(const FilterTrace& trace, int level,
                           const std::filesystem::path& path) {
  auto out = detail::open_out(path);
  out << "time,level,ess_fine,ess_coarse,alpha,log_nc_fine,log_nc_coarse,resampled\n";
  for (std::size_t i = 0; i < trace.time.size(); ++i) {
    out << trace.time[i] << "," << level << "," << detail::fmt17(trace.ess_fine[i]) << ","
        << detail::fmt17(trace.ess_coarse[i]) << "," << detail::fmt17(trace.alpha[i]) << ","
        << detail::fmt17(trace.log_nc_fine[i]) << "," << detail::fmt17(trace.log_nc_coarse[i])
        << "," << trace.resampled[i] << "\n";
  }
}

// Minimal static SVG log-log scatter/line plot. Output bytes depend only on
// the inputs.
struct PlotSeries {
  std::string name;
  std::vector<std::pair<double, double>> points;  // already in log10 units
};

inline void emit_svg_loglog(const std::string& title, const std::string& x_label,
                            const std::string& y_label, std::span<const PlotSeries> series,
                            const std::filesystem::path& path) {
  constexpr int width = 640, height = 480, margin = 60;
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const auto& s : series)
    for (const auto& [x, y] : s.points) {
      xmin = std::min(xmin, x);
      xmax = std::max(xmax, x);
      ymin = std::min(ymin, y);
      ymax = std::max(ymax, y);
    }
  if (!(xmin <= xmax)) throw std::invalid_argument("emit_svg_loglog: no points");
  if (xmax - xmin < 1e-12) xmax = xmin + 1.0;
  if (ymax - ymin < 1e-12) ymax = ymin + 1.0;
  auto sx = [&](double x) {
    return margin + (x - xmin) / (xmax - xmin) * (width - 2 * margin);
  };
  auto sy = [&](double y) {
    return height - margin - (y - ymin) / (ymax - ymin) * (height - 2 * margin);
  };
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};

  auto out = detail::open_out(path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
      << height << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << width / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">"
      << title << "</text>\n";
  out << "<line x1=\"" << margin << "\" y1=\"" << height - margin << "\" x2=\"" << width - margin
      << "\" y2=\"" << height - margin << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << margin << "\" y1=\"" << margin << "\" x2=\"" << margin << "\" y2=\""
      << height - margin << "\" stroke=\"black\"/>\n";
  out << "<text x=\"" << width / 2 << "\" y=\"" << height - 16
      << "\" text-anchor=\"middle\" font-size=\"12\">" << x_label << "</text>\n";
  out << "<text x=\"16\" y=\"" << height / 2 << "\" text-anchor=\"middle\" font-size=\"12\" "
      << "transform=\"rotate(-90 16 " << height / 2 << ")\">" << y_label << "</text>\n";
  for (int t = 0; t <= 4; ++t) {
    const double xv = xmin + (xmax - xmin) * t / 4.0;
    const double yv = ymin + (ymax - ymin) * t / 4.0;
    out << "<text x=\"" << detail::fmt6(sx(xv)) << "\" y=\"" << height - margin + 18
        << "\" text-anchor=\"middle\" font-size=\"10\">" << detail::fmt6(xv) << "</text>\n";
    out << "<text x=\"" << margin - 8 << "\" y=\"" << detail::fmt6(sy(yv) + 4)
        << "\" text-anchor=\"end\" font-size=\"10\">" << detail::fmt6(yv) << "</text>\n";
  }
  int color_idx = 0;
  int legend_y = margin;
  for (const auto& s : series) {
    const char* color = colors[color_idx % 5];
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (const auto& [x, y] : s.points)
      out << detail::fmt6(sx(x)) << "," << detail::fmt6(sy(y)) << " ";
    out << "\"/>\n";
    for (const auto& [x, y] : s.points)
      out << "<circle cx=\"" << detail::fmt6(sx(x)) << "\" cy=\"" << detail::fmt6(sy(y))
          << "\" r=\"3\" fill=\"" << color << "\"/>\n";
    out << "<text x=\"" << width - margin - 4 << "\" y=\"" << legend_y
        << "\" text-anchor=\"end\" font-size=\"11\" fill=\"" << color << "\">" << s.name
        << "</text>\n";
    legend_y += 16;
    ++color_idx;
  }
  out << "</svg>\n";
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

// results.csv + rates.csv + the two log-log plots, byte-deterministic for
// identical inputs.
inline void emit_outputs(const ResultsTable& table, const std::map<std::string, RateFit>& fits,
                         const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  emit_results_csv(table, dir / "results.csv");
  emit_rates_csv(fits, dir / "rates.csv");
  if (!table.level_diagnostics.empty()) emit_diagnostics_csv(table, dir / "diagnostics.csv");

  // cost-vs-MSE plot from the fits' stored points (log-e -> log10)
  std::vector<PlotSeries> cost_series;
  for (const auto& [name, fit] : fits) {
    if (name == "increment") continue;
    PlotSeries s;
    s.name = name;
    for (const auto& [x, y] : fit.points)
      s.points.emplace_back(x / std::log(10.0), y / std::log(10.0));
    if (!s.points.empty()) cost_series.push_back(std::move(s));
  }
  if (!cost_series.empty())
    emit_svg_loglog("cost vs MSE", "log10 MSE", "log10 cost", cost_series,
                    dir / "cost_vs_mse.svg");

  auto inc_fit = fits.find("increment");
  if (inc_fit != fits.end()) {
    PlotSeries s;
    s.name = "var(increment)";
    for (const auto& [x, y] : inc_fit->second.points)
      s.points.emplace_back(x * std::log10(2.0), y * std::log10(2.0));
    const PlotSeries arr[] = {s};
    emit_svg_loglog("variance vs h", "log10 h", "log10 var", arr, dir / "variance_vs_h.svg");
  }
}

}  // namespace mlpf
