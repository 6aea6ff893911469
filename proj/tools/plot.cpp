#include "plot.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "inklab/image.hpp"

namespace inklab::cli {

namespace {

const float kSeriesColors[][3] = {
    {0.85f, 0.20f, 0.15f}, {0.15f, 0.35f, 0.80f}, {0.10f, 0.60f, 0.25f},
    {0.80f, 0.55f, 0.10f}, {0.50f, 0.20f, 0.65f},
};

void put_px(vision::Image& img, int x, int y, const float* rgb) {
  if (x < 0 || x >= img.width || y < 0 || y >= img.height) return;
  for (int c = 0; c < 3; ++c) img.at(y, x, c) = rgb[c];
}

void draw_segment(vision::Image& img, double x0, double y0, double x1, double y1, const float* rgb) {
  const int steps = std::max(2, static_cast<int>(std::ceil(std::max(std::abs(x1 - x0), std::abs(y1 - y0)))) + 1);
  for (int i = 0; i <= steps; ++i) {
    const double t = static_cast<double>(i) / steps;
    put_px(img, static_cast<int>(std::lround(x0 + t * (x1 - x0))),
           static_cast<int>(std::lround(y0 + t * (y1 - y0))), rgb);
  }
}

}  // namespace

void render_line_plot(const std::vector<std::pair<std::string, std::vector<double>>>& series,
                      const std::filesystem::path& path, int width, int height) {
  if (series.empty()) throw std::invalid_argument("render_line_plot: no series");
  vision::Image img = vision::Image::zeros(height, width, 3);
  std::fill(img.pixels.begin(), img.pixels.end(), 1.0f);

  const int margin = 24;
  const float axis[3] = {0.2f, 0.2f, 0.2f};
  draw_segment(img, margin, height - margin, width - margin, height - margin, axis);
  draw_segment(img, margin, margin, margin, height - margin, axis);

  double lo = 0.0, hi = 1e-12;
  size_t max_len = 0;
  for (const auto& [name, v] : series) {
    max_len = std::max(max_len, v.size());
    for (double y : v) {
      lo = std::min(lo, y);
      hi = std::max(hi, y);
    }
  }
  if (max_len < 2) max_len = 2;
  const double span = hi - lo < 1e-12 ? 1.0 : hi - lo;

  for (size_t s = 0; s < series.size(); ++s) {
    const auto& v = series[s].second;
    const float* rgb = kSeriesColors[s % 5];
    for (size_t i = 0; i + 1 < v.size(); ++i) {
      auto px = [&](size_t idx, double val) {
        const double fx = margin + (width - 2.0 * margin) * static_cast<double>(idx) /
                                       static_cast<double>(max_len - 1);
        const double fy = (height - margin) - (height - 2.0 * margin) * (val - lo) / span;
        return std::pair<double, double>(fx, fy);
      };
      const auto [x0, y0] = px(i, v[i]);
      const auto [x1, y1] = px(i + 1, v[i + 1]);
      draw_segment(img, x0, y0, x1, y1, rgb);
    }
  }
  vision::save_image(img, path);
}

void plot_metrics_file(const std::filesystem::path& metrics_tsv,
                       const std::filesystem::path& out_image) {
  std::ifstream is(metrics_tsv);
  if (!is) throw std::runtime_error("cannot open metrics file " + metrics_tsv.string());
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("empty metrics file");
  std::vector<std::string> cols;
  {
    std::istringstream hs(line);
    std::string c;
    while (std::getline(hs, c, '\t')) cols.push_back(c);
  }
  std::vector<std::pair<std::string, std::vector<double>>> series;
  for (size_t i = 2; i < cols.size(); ++i) series.emplace_back(cols[i], std::vector<double>{});
  if (series.empty() && cols.size() > 2) throw std::runtime_error("metrics file has no value columns");
  // fall back to the lr column when there is nothing else (header step\tlr)
  if (series.empty()) series.emplace_back(cols.back(), std::vector<double>{});

  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string cell;
    size_t idx = 0;
    while (std::getline(ls, cell, '\t')) {
      if (idx >= 2 && idx - 2 < series.size()) series[idx - 2].second.push_back(std::stod(cell));
      ++idx;
    }
  }
  render_line_plot(series, out_image);
}

}  // namespace inklab::cli
