#pragma once

#include <vector>

#include "inklab/image.hpp"
#include "inklab/tensor.hpp"

namespace inklab {

/// Pack images (all the same size) into a [B,C,H,W] tensor mapped to [-1,1].
Tensor images_to_pm1(const std::vector<const vision::Image*>& images);

/// Slice item b of a [B,C,H,W] tensor, clamp to [-1,1], map back to [0,1].
vision::Image pm1_to_image(const Tensor& z, int b);

/// Pack edge maps into a [B,1,H,W] tensor of 0/1 values.
Tensor edges_to_tensor(const std::vector<const vision::EdgeMap*>& edges);

}  // namespace inklab
