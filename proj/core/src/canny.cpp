#include "inklab/canny.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace inklab::vision {

namespace {

inline int clampi(int v, int lo, int hi) { return v < lo ? lo : (v > hi ? hi : v); }

std::vector<double> gaussian5(double sigma) {
  std::vector<double> k(25);
  double sum = 0.0;
  for (int y = -2; y <= 2; ++y)
    for (int x = -2; x <= 2; ++x) {
      const double v = std::exp(-(x * x + y * y) / (2.0 * sigma * sigma));
      k[(y + 2) * 5 + (x + 2)] = v;
      sum += v;
    }
  for (auto& v : k) v /= sum;
  return k;
}

// Gradient direction quantized to one of 4 sectors; returns the (dy,dx)
// step of the positive neighbour along that direction.
void direction_step(double gx, double gy, int& sy, int& sx) {
  double angle = std::atan2(gy, gx) * 180.0 / std::numbers::pi;
  if (angle < 0.0) angle += 180.0;
  if (angle < 22.5 || angle >= 157.5) {
    sy = 0; sx = 1;        // horizontal gradient: compare left/right
  } else if (angle < 67.5) {
    sy = 1; sx = 1;        // 45 degrees
  } else if (angle < 112.5) {
    sy = 1; sx = 0;        // vertical gradient: compare up/down
  } else {
    sy = 1; sx = -1;       // 135 degrees
  }
}

}  // namespace

EdgeMap canny(const Image& img, double low_threshold, double high_threshold) {
  CannyParams p;
  p.low_threshold = low_threshold;
  p.high_threshold = high_threshold;
  return canny(img, p);
}

EdgeMap canny(const Image& img, const CannyParams& params) {
  if (!(params.low_threshold >= 0.0 && params.low_threshold <= params.high_threshold &&
        params.high_threshold <= 1.0))
    throw std::invalid_argument("canny: thresholds must satisfy 0 <= low <= high <= 1");

  const Image gray = to_grayscale(img);
  const int h = gray.height, w = gray.width;

  // 1. Gaussian blur, replicated borders.
  const auto kernel = gaussian5(params.sigma);
  std::vector<double> blur(static_cast<size_t>(h) * w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int ky = -2; ky <= 2; ++ky)
        for (int kx = -2; kx <= 2; ++kx)
          acc += kernel[(ky + 2) * 5 + (kx + 2)] *
                 gray.at(clampi(y + ky, 0, h - 1), clampi(x + kx, 0, w - 1), 0);
      blur[static_cast<size_t>(y) * w + x] = acc;
    }

  // 2. Sobel gradients.
  std::vector<double> gx(blur.size()), gy(blur.size()), mag(blur.size());
  auto b = [&](int y, int x) { return blur[static_cast<size_t>(clampi(y, 0, h - 1)) * w + clampi(x, 0, w - 1)]; };
  double max_mag = 0.0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double dx = -b(y - 1, x - 1) + b(y - 1, x + 1) - 2.0 * b(y, x - 1) + 2.0 * b(y, x + 1) -
                        b(y + 1, x - 1) + b(y + 1, x + 1);
      const double dy = -b(y - 1, x - 1) - 2.0 * b(y - 1, x) - b(y - 1, x + 1) + b(y + 1, x - 1) +
                        2.0 * b(y + 1, x) + b(y + 1, x + 1);
      const size_t i = static_cast<size_t>(y) * w + x;
      gx[i] = dx;
      gy[i] = dy;
      mag[i] = std::sqrt(dx * dx + dy * dy);
      max_mag = std::max(max_mag, mag[i]);
    }
  if (max_mag == 0.0) return EdgeMap::zeros(h, w);  // constant image

  // 3. Non-maximum suppression on normalized magnitude. A pixel survives if
  // it strictly beats the neighbour behind it and at least ties the one
  // ahead, which keeps ridges one pixel wide through exact ties.
  std::vector<double> nms(blur.size(), 0.0);
  auto m = [&](int y, int x) -> double {
    if (y < 0 || y >= h || x < 0 || x >= w) return 0.0;
    return mag[static_cast<size_t>(y) * w + x];
  };
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const size_t i = static_cast<size_t>(y) * w + x;
      if (mag[i] == 0.0) continue;
      int sy, sx;
      direction_step(gx[i], gy[i], sy, sx);
      const double ahead = m(y + sy, x + sx);
      const double behind = m(y - sy, x - sx);
      if (mag[i] > behind && mag[i] >= ahead) nms[i] = mag[i] / max_mag;
    }

  // 4. Double threshold.
  // map: 0 = suppressed, 1 = weak, 2 = strong
  std::vector<unsigned char> map(blur.size(), 0);
  std::vector<size_t> stack;
  for (size_t i = 0; i < nms.size(); ++i) {
    if (nms[i] >= params.high_threshold) {
      map[i] = 2;
      stack.push_back(i);
    } else if (nms[i] >= params.low_threshold) {
      map[i] = 1;
    }
  }

  // 5. Hysteresis: weak pixels 8-connected to a strong pixel become edges.
  while (!stack.empty()) {
    const size_t i = stack.back();
    stack.pop_back();
    const int y = static_cast<int>(i) / w, x = static_cast<int>(i) % w;
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        const int ny = y + dy, nx = x + dx;
        if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
        const size_t j = static_cast<size_t>(ny) * w + nx;
        if (map[j] == 1) {
          map[j] = 2;
          stack.push_back(j);
        }
      }
  }

  EdgeMap edge = EdgeMap::zeros(h, w);
  for (size_t i = 0; i < map.size(); ++i) edge.pixels[i] = map[i] == 2 ? 1.0f : 0.0f;
  return edge;
}

}  // namespace inklab::vision
