#pragma once

#include <filesystem>
#include <vector>

namespace inklab::vision {

/// Row-major HWC image with values in [0,1].
struct Image {
  int height = 0;
  int width = 0;
  int channels = 0;  // 1 or 3
  std::vector<float> pixels;

  static Image zeros(int h, int w, int c);

  float& at(int y, int x, int c) {
    return pixels[(static_cast<size_t>(y) * width + x) * channels + c];
  }
  float at(int y, int x, int c) const {
    return pixels[(static_cast<size_t>(y) * width + x) * channels + c];
  }
  bool valid() const;
};

/// Binary edge image; every pixel is exactly 0 or 1.
struct EdgeMap {
  int height = 0;
  int width = 0;
  std::vector<float> pixels;

  static EdgeMap zeros(int h, int w);

  float& at(int y, int x) { return pixels[static_cast<size_t>(y) * width + x]; }
  float at(int y, int x) const { return pixels[static_cast<size_t>(y) * width + x]; }

  /// Fraction of pixels set to 1.
  double density() const;
};

// Canonical pixel format: binary PNM (P5 for grayscale, P6 for RGB),
// maxval 255, bytes mapped linearly to [0,1]. Edge maps are P5 files whose
// pixels are 0 or 255.
Image load_image(const std::filesystem::path& path);
void save_image(const Image& img, const std::filesystem::path& path);
EdgeMap load_edge_map(const std::filesystem::path& path);
void save_edge_map(const EdgeMap& edge, const std::filesystem::path& path);

/// Bilinear resample to target x target (half-pixel centers, clamped).
Image resize(const Image& img, int target);

/// Luma conversion with weights 0.299 / 0.587 / 0.114.
Image to_grayscale(const Image& img);

}  // namespace inklab::vision
