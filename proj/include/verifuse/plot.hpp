#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <tuple>
#include <string>
#include <vector>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "verifuse/common.hpp"

namespace verifuse::plot {

struct Series {
  std::string name;
  std::vector<double> x, y;
  cv::Scalar color{200, 80, 30};  // BGR
  bool dashed = false;
};

struct Chart {
  std::string title, x_label, y_label, footer;
  std::vector<Series> series;
  std::optional<std::pair<double, double>> x_range, y_range;
};

namespace detail {

inline std::string fmt_tick(double v) {
  char buf[32];
  if (std::abs(v) >= 100 || v == std::floor(v)) std::snprintf(buf, sizeof buf, "%.0f", v);
  else std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline void dashed_line(cv::Mat& img, cv::Point a, cv::Point b, const cv::Scalar& c) {
  const double len = std::hypot(b.x - a.x, b.y - a.y);
  const int segments = std::max(1, static_cast<int>(len / 6));
  for (int i = 0; i < segments; i += 2) {
    const double t0 = static_cast<double>(i) / segments, t1 = static_cast<double>(i + 1) / segments;
    cv::line(img, a + (b - a) * t0, a + (b - a) * t1, c, 2, cv::LINE_AA);
  }
}

}  // namespace detail

/// Renders a line chart with axes, ticks, legend and footer to a PNG file.
inline void render(const Chart& chart, const std::filesystem::path& path, int width = 800, int height = 560) {
  cv::Mat img(height, width, CV_8UC3, cv::Scalar(255, 255, 255));
  const int left = 80, right = 30, top = 50, bottom = 80;
  const int pw = width - left - right, ph = height - top - bottom;

  double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  bool any = false;
  for (const auto& s : chart.series) {
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!any) {
        x0 = x1 = s.x[i];
        y0 = y1 = s.y[i];
        any = true;
      }
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]);
      y1 = std::max(y1, s.y[i]);
    }
  }
  if (chart.x_range) std::tie(x0, x1) = *chart.x_range;
  if (chart.y_range) std::tie(y0, y1) = *chart.y_range;
  if (x1 - x0 < 1e-12) x1 = x0 + 1;
  if (y1 - y0 < 1e-12) {
    y0 -= 0.5;
    y1 += 0.5;
  }
  auto to_px = [&](double x, double y) {
    return cv::Point(left + static_cast<int>(std::lround((x - x0) / (x1 - x0) * pw)),
                     top + ph - static_cast<int>(std::lround((y - y0) / (y1 - y0) * ph)));
  };

  const cv::Scalar axis(40, 40, 40), grid(225, 225, 225);
  for (int k = 0; k <= 5; ++k) {
    const double fy = y0 + (y1 - y0) * k / 5.0, fx = x0 + (x1 - x0) * k / 5.0;
    const auto py = to_px(x0, fy), px = to_px(fx, y0);
    cv::line(img, {left, py.y}, {left + pw, py.y}, grid, 1);
    cv::line(img, {px.x, top}, {px.x, top + ph}, grid, 1);
    cv::putText(img, detail::fmt_tick(fy), {8, py.y + 5}, cv::FONT_HERSHEY_SIMPLEX, 0.45, axis, 1, cv::LINE_AA);
    cv::putText(img, detail::fmt_tick(fx), {px.x - 12, top + ph + 20}, cv::FONT_HERSHEY_SIMPLEX, 0.45, axis, 1,
                cv::LINE_AA);
  }
  cv::rectangle(img, {left, top}, {left + pw, top + ph}, axis, 1);

  for (const auto& s : chart.series) {
    for (std::size_t i = 1; i < s.x.size(); ++i) {
      const auto a = to_px(s.x[i - 1], s.y[i - 1]), b = to_px(s.x[i], s.y[i]);
      if (s.dashed) detail::dashed_line(img, a, b, s.color);
      else cv::line(img, a, b, s.color, 2, cv::LINE_AA);
    }
    if (s.x.size() == 1) cv::circle(img, to_px(s.x[0], s.y[0]), 3, s.color, cv::FILLED);
  }

  int ly = top + 20;
  for (const auto& s : chart.series) {
    cv::line(img, {left + pw - 190, ly - 4}, {left + pw - 160, ly - 4}, s.color, 2, cv::LINE_AA);
    cv::putText(img, s.name, {left + pw - 150, ly}, cv::FONT_HERSHEY_SIMPLEX, 0.45, axis, 1, cv::LINE_AA);
    ly += 20;
  }

  cv::putText(img, chart.title, {left, 32}, cv::FONT_HERSHEY_SIMPLEX, 0.7, axis, 1, cv::LINE_AA);
  cv::putText(img, chart.x_label, {left + pw / 2 - 30, top + ph + 45}, cv::FONT_HERSHEY_SIMPLEX, 0.5, axis, 1,
              cv::LINE_AA);
  cv::putText(img, chart.y_label, {8, top - 12}, cv::FONT_HERSHEY_SIMPLEX, 0.5, axis, 1, cv::LINE_AA);
  if (!chart.footer.empty()) {
    cv::putText(img, chart.footer, {8, height - 12}, cv::FONT_HERSHEY_SIMPLEX, 0.4, cv::Scalar(120, 120, 120), 1,
                cv::LINE_AA);
  }
  if (!cv::imwrite(path.string(), img)) throw Error("cannot write plot " + path.string());
}

}  // namespace verifuse::plot
