#pragma once

#include "inklab/image.hpp"

namespace inklab::vision {

struct CannyParams {
  double low_threshold = 0.1;   // on magnitude normalized to [0,1]
  double high_threshold = 0.2;
  double sigma = 1.4;           // 5x5 Gaussian
};

/// Classic five-stage Canny: Gaussian blur (5x5, sigma 1.4), Sobel
/// gradients, non-maximum suppression over 4 quantized directions, double
/// threshold on max-normalized magnitude, hysteresis by 8-connectivity.
/// Color input is converted to luma first. Intermediates are double
/// precision; borders replicate.
EdgeMap canny(const Image& img, const CannyParams& params = {});
EdgeMap canny(const Image& img, double low_threshold, double high_threshold);

}  // namespace inklab::vision
