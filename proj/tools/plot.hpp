#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace inklab::cli {

/// Rasterize one or more series as polylines into a PPM file (white canvas,
/// axes box, auto-scaled y).
void render_line_plot(const std::vector<std::pair<std::string, std::vector<double>>>& series,
                      const std::filesystem::path& path, int width = 640, int height = 400);

/// Render selected numeric columns of a metrics TSV (written by `train`).
void plot_metrics_file(const std::filesystem::path& metrics_tsv,
                       const std::filesystem::path& out_image);

}  // namespace inklab::cli
