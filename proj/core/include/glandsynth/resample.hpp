#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <torch/torch.h>

#include "glandsynth/layout.hpp"

namespace glandsynth {

// Axis-aligned bilinear resampling, expressed as two interpolation matrices so that
//   out = rows @ src @ cols^T
// is differentiable with respect to `src`. Sample coordinates are in source pixel units with pixel
// centres at integers; samples past the first/last pixel clamp to the border.

/// Interpolation matrix of shape [coords.size(), source_len].
torch::Tensor interpolation_matrix(std::span<const double> coords, std::int64_t source_len,
                                   torch::TensorOptions options = torch::kFloat32);

/// Resample every channel of a [..., H, W] tensor at the given row and column coordinates.
torch::Tensor resample_separable(const torch::Tensor& src, std::span<const double> row_coords,
                                 std::span<const double> col_coords);

/// Warp a [C, S, S] tile into `box` on a [C, N, N] canvas. Pixels whose centres fall inside the
/// half-open box sample the tile; every other pixel is exactly zero.
torch::Tensor warp_into_box(const torch::Tensor& tile, const BoundingBox& box, std::int64_t canvas_size);

/// Crop `box` out of a [C, H, W] image and resize it to [C, out_size, out_size].
torch::Tensor crop_and_resize(const torch::Tensor& image, const BoundingBox& box, std::int64_t out_size);

}  // namespace glandsynth
