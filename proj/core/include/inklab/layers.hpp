#pragma once

#include <string>

#include "inklab/params.hpp"
#include "inklab/tensor.hpp"

namespace inklab {

struct Conv2d {
  Tensor w, b;
  int stride = 1;
  int pad = 1;

  Conv2d() = default;
  Conv2d(ParamRegistry& reg, const std::string& name, int in_ch, int out_ch, int ksize, int stride,
         int pad, Rng& rng);
  /// 1x1 convolution with weights and bias exactly zero at construction.
  static Conv2d zero_conv(ParamRegistry& reg, const std::string& name, int in_ch, int out_ch);

  Tensor operator()(const Tensor& x) const { return conv2d(x, w, b, stride, pad); }
};

struct Linear {
  Tensor w, b;  // w: [in, out]

  Linear() = default;
  Linear(ParamRegistry& reg, const std::string& name, int in_dim, int out_dim, Rng& rng);

  Tensor operator()(const Tensor& x) const { return add(matmul(x, w), b); }
};

struct GroupNorm {
  Tensor gamma, beta;
  int groups = 1;

  GroupNorm() = default;
  GroupNorm(ParamRegistry& reg, const std::string& name, int channels, int groups);

  Tensor operator()(const Tensor& x) const { return group_norm(x, groups, gamma, beta); }
};

/// Largest of {8,4,2,1} dividing the channel count.
int norm_groups(int channels);

}  // namespace inklab
