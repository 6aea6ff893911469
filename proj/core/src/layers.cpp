#include "inklab/layers.hpp"

namespace inklab {

Conv2d::Conv2d(ParamRegistry& reg, const std::string& name, int in_ch, int out_ch, int ksize,
               int stride, int pad, Rng& rng)
    : stride(stride), pad(pad) {
  w = reg.create(name + ".w", {out_ch, in_ch, ksize, ksize}, he_stddev(in_ch * ksize * ksize), rng);
  b = reg.create_zeros(name + ".b", {out_ch});
}

Conv2d Conv2d::zero_conv(ParamRegistry& reg, const std::string& name, int in_ch, int out_ch) {
  Conv2d c;
  c.stride = 1;
  c.pad = 0;
  c.w = reg.create_zeros(name + ".w", {out_ch, in_ch, 1, 1});
  c.b = reg.create_zeros(name + ".b", {out_ch});
  return c;
}

Linear::Linear(ParamRegistry& reg, const std::string& name, int in_dim, int out_dim, Rng& rng) {
  w = reg.create(name + ".w", {in_dim, out_dim}, he_stddev(in_dim), rng);
  b = reg.create_zeros(name + ".b", {out_dim});
}

GroupNorm::GroupNorm(ParamRegistry& reg, const std::string& name, int channels, int groups)
    : groups(groups) {
  gamma = reg.create_full(name + ".g", {channels}, 1.0f);
  beta = reg.create_zeros(name + ".b", {channels});
}

int norm_groups(int channels) {
  for (int g : {8, 4, 2})
    if (channels % g == 0) return g;
  return 1;
}

}  // namespace inklab
