#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tpg/metrics.hpp"

namespace tpg {

struct CurveLine {
  std::string label;
  std::vector<std::pair<int64_t, double>> points;  // (t, mean)
};

struct CurvePlot {
  std::string title;
  std::string y_label;
  std::vector<CurveLine> lines;
  std::optional<int64_t> marker_t;  // dotted vertical line, e.g. the training horizon
};

struct PlotStyle {
  int width = 900;
  int height = 540;
};

struct RenderedPlot {
  std::filesystem::path path;
  int lines_drawn = 0;
  bool marker_drawn = false;
  int marker_x = -1;  // pixel column of the marker
};

// One curve per variant for the given metric.
CurvePlot make_curve_plot(const AggregateTable& table, Metric metric,
                          std::optional<int64_t> marker_t);

// Writes a PNG. ArgumentError when the plot has no points.
RenderedPlot render_curve_plot(const CurvePlot& plot, const std::filesystem::path& out,
                               const PlotStyle& style = {});

// One image per metric present in the table, named curve_<metric>.png.
std::vector<RenderedPlot> plot_all_metrics(const AggregateTable& table,
                                           std::optional<int64_t> marker_t,
                                           const std::filesystem::path& out_dir,
                                           const PlotStyle& style = {});

}  // namespace tpg
