#pragma once

#include <cstdint>
#include <vector>

#include <torch/torch.h>

#include "fdct/volume.hpp"

namespace fdct {

/// [rows, cols] tensor of the given dtype.
torch::Tensor to_tensor(const Image2D& img, torch::Dtype dtype = torch::kFloat32);
/// [n, 1, rows, cols] tensor; all images must share a shape.
torch::Tensor to_batch(const std::vector<Image2D>& imgs, torch::Dtype dtype = torch::kFloat32);
/// Accepts any tensor with rows*cols elements laid out row-major.
Image2D to_image(const torch::Tensor& t, std::size_t rows, std::size_t cols);
Image2D to_image(const torch::Tensor& t2d);

torch::Generator make_generator(std::uint64_t seed);

}  // namespace fdct
