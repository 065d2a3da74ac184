#include "tpg/plot.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "tpg/errors.hpp"

namespace tpg {

namespace {

const std::vector<cv::Scalar>& palette() {
  // BGR
  static const std::vector<cv::Scalar> colors{
      {180, 119, 31}, {14, 127, 255}, {44, 160, 44}, {40, 39, 214},
      {189, 103, 148}, {75, 86, 140}, {194, 119, 227}, {127, 127, 127}};
  return colors;
}

std::string format_tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

}  // namespace

CurvePlot make_curve_plot(const AggregateTable& table, Metric metric,
                          std::optional<int64_t> marker_t) {
  CurvePlot plot;
  plot.title = "mean " + to_string(metric) + " per time step";
  plot.y_label = to_string(metric);
  plot.marker_t = marker_t;
  for (const auto& variant : table.variants()) {
    auto points = table.curve(variant, metric);
    if (!points.empty()) plot.lines.push_back({variant, std::move(points)});
  }
  return plot;
}

RenderedPlot render_curve_plot(const CurvePlot& plot, const std::filesystem::path& out,
                               const PlotStyle& style) {
  double t_min = std::numeric_limits<double>::infinity();
  double t_max = -t_min;
  double y_min = t_min;
  double y_max = -t_min;
  for (const auto& line : plot.lines) {
    for (const auto& [t, v] : line.points) {
      t_min = std::min(t_min, static_cast<double>(t));
      t_max = std::max(t_max, static_cast<double>(t));
      y_min = std::min(y_min, v);
      y_max = std::max(y_max, v);
    }
  }
  if (!std::isfinite(t_min)) throw ArgumentError("render_curve_plot: no data points to plot");
  if (plot.marker_t) {
    t_min = std::min(t_min, static_cast<double>(*plot.marker_t));
    t_max = std::max(t_max, static_cast<double>(*plot.marker_t));
  }
  if (t_max == t_min) {
    t_min -= 1.0;
    t_max += 1.0;
  }
  const double pad = y_max > y_min ? 0.08 * (y_max - y_min) : std::max(1e-3, std::abs(y_max) * 0.05);
  y_min -= pad;
  y_max += pad;

  const int left = 80, right = 190, top = 40, bottom = 60;
  const int pw = style.width - left - right;
  const int ph = style.height - top - bottom;
  cv::Mat img(style.height, style.width, CV_8UC3, cv::Scalar(255, 255, 255));
  auto px = [&](double t) {
    return static_cast<int>(std::lround(left + (t - t_min) / (t_max - t_min) * pw));
  };
  auto py = [&](double v) {
    return static_cast<int>(std::lround(top + (y_max - v) / (y_max - y_min) * ph));
  };

  const cv::Scalar black(0, 0, 0);
  const cv::Scalar grid(225, 225, 225);
  for (int i = 0; i <= 5; ++i) {
    const double v = y_min + (y_max - y_min) * i / 5.0;
    const int y = py(v);
    cv::line(img, {left, y}, {left + pw, y}, grid, 1);
    cv::putText(img, format_tick(v), {8, y + 4}, cv::FONT_HERSHEY_SIMPLEX, 0.4, black, 1, cv::LINE_AA);
  }
  const auto t_step = std::max<int64_t>(1, static_cast<int64_t>(std::ceil((t_max - t_min) / 10.0)));
  for (auto t = static_cast<int64_t>(t_min); t <= static_cast<int64_t>(t_max); t += t_step) {
    const int x = px(static_cast<double>(t));
    cv::line(img, {x, top + ph}, {x, top + ph + 5}, black, 1);
    cv::putText(img, std::to_string(t), {x - 8, top + ph + 20}, cv::FONT_HERSHEY_SIMPLEX, 0.4, black,
                1, cv::LINE_AA);
  }
  cv::rectangle(img, {left, top}, {left + pw, top + ph}, black, 1);
  cv::putText(img, plot.title, {left, top - 14}, cv::FONT_HERSHEY_SIMPLEX, 0.55, black, 1, cv::LINE_AA);
  cv::putText(img, "t", {left + pw / 2, style.height - 15}, cv::FONT_HERSHEY_SIMPLEX, 0.5, black, 1,
              cv::LINE_AA);

  RenderedPlot rendered;
  rendered.path = out;
  if (plot.marker_t) {
    const int x = px(static_cast<double>(*plot.marker_t));
    for (int y = top; y < top + ph; y += 8) {
      cv::line(img, {x, y}, {x, std::min(y + 3, top + ph)}, cv::Scalar(60, 60, 60), 1);
    }
    rendered.marker_drawn = true;
    rendered.marker_x = x;
  }

  for (size_t i = 0; i < plot.lines.size(); ++i) {
    const auto& line = plot.lines[i];
    const auto color = palette()[i % palette().size()];
    std::vector<cv::Point> pts;
    for (const auto& [t, v] : line.points) pts.emplace_back(px(static_cast<double>(t)), py(v));
    if (pts.size() == 1) {
      cv::circle(img, pts[0], 3, color, cv::FILLED, cv::LINE_AA);
    } else {
      cv::polylines(img, pts, false, color, 2, cv::LINE_AA);
    }
    const int ly = top + 16 + static_cast<int>(i) * 20;
    cv::line(img, {left + pw + 12, ly - 4}, {left + pw + 40, ly - 4}, color, 2, cv::LINE_AA);
    cv::putText(img, line.label, {left + pw + 46, ly}, cv::FONT_HERSHEY_SIMPLEX, 0.45, black, 1,
                cv::LINE_AA);
    ++rendered.lines_drawn;
  }

  if (!out.parent_path().empty()) std::filesystem::create_directories(out.parent_path());
  if (!cv::imwrite(out.string(), img)) throw IoError("cannot write image " + out.string());
  return rendered;
}

std::vector<RenderedPlot> plot_all_metrics(const AggregateTable& table,
                                           std::optional<int64_t> marker_t,
                                           const std::filesystem::path& out_dir,
                                           const PlotStyle& style) {
  if (table.rows.empty()) throw ArgumentError("plot: curve table has no rows");
  std::vector<RenderedPlot> out;
  for (const auto metric : table.metrics()) {
    out.push_back(render_curve_plot(make_curve_plot(table, metric, marker_t),
                                    out_dir / ("curve_" + to_string(metric) + ".png"), style));
  }
  return out;
}

}  // namespace tpg
