#include "inklab/tensor_image.hpp"

#include <algorithm>
#include <stdexcept>

namespace inklab {

Tensor images_to_pm1(const std::vector<const vision::Image*>& images) {
  if (images.empty()) throw std::invalid_argument("images_to_pm1: empty batch");
  const int h = images[0]->height, w = images[0]->width, c = images[0]->channels;
  Tensor out = Tensor::zeros({static_cast<int>(images.size()), c, h, w});
  float* dst = out.data().data();
  for (size_t b = 0; b < images.size(); ++b) {
    const auto& img = *images[b];
    if (img.height != h || img.width != w || img.channels != c)
      throw std::invalid_argument("images_to_pm1: mixed image sizes in batch");
    for (int ch = 0; ch < c; ++ch)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
          dst[((b * c + ch) * h + y) * w + x] = 2.0f * img.at(y, x, ch) - 1.0f;
  }
  return out;
}

vision::Image pm1_to_image(const Tensor& z, int b) {
  if (z.ndim() != 4) throw std::invalid_argument("pm1_to_image: expected [B,C,H,W]");
  const int c = z.dim(1), h = z.dim(2), w = z.dim(3);
  vision::Image img = vision::Image::zeros(h, w, c);
  const float* src = z.data().data() + static_cast<size_t>(b) * c * h * w;
  for (int ch = 0; ch < c; ++ch)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const float v = std::clamp(src[(static_cast<size_t>(ch) * h + y) * w + x], -1.0f, 1.0f);
        img.at(y, x, ch) = 0.5f * (v + 1.0f);
      }
  return img;
}

Tensor edges_to_tensor(const std::vector<const vision::EdgeMap*>& edges) {
  if (edges.empty()) throw std::invalid_argument("edges_to_tensor: empty batch");
  const int h = edges[0]->height, w = edges[0]->width;
  Tensor out = Tensor::zeros({static_cast<int>(edges.size()), 1, h, w});
  float* dst = out.data().data();
  for (size_t b = 0; b < edges.size(); ++b) {
    if (edges[b]->height != h || edges[b]->width != w)
      throw std::invalid_argument("edges_to_tensor: mixed edge sizes in batch");
    std::copy(edges[b]->pixels.begin(), edges[b]->pixels.end(), dst + b * static_cast<size_t>(h) * w);
  }
  return out;
}

}  // namespace inklab
