#include "glandsynth/resample.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace glandsynth {

torch::Tensor interpolation_matrix(std::span<const double> coords, std::int64_t source_len, torch::TensorOptions options) {
    if (source_len <= 0) {
        throw std::invalid_argument("interpolation source must be non-empty");
    }
    const auto rows = static_cast<std::int64_t>(coords.size());
    std::vector<double> weights(static_cast<std::size_t>(rows * source_len), 0.0);
    const double last = static_cast<double>(source_len - 1);
    for (std::int64_t i = 0; i < rows; ++i) {
        const double c = std::clamp(coords[static_cast<std::size_t>(i)], 0.0, last);
        const auto lo = static_cast<std::int64_t>(std::floor(c));
        const std::int64_t hi = std::min(lo + 1, source_len - 1);
        const double frac = c - static_cast<double>(lo);
        weights[static_cast<std::size_t>(i * source_len + lo)] += 1.0 - frac;
        weights[static_cast<std::size_t>(i * source_len + hi)] += frac;
    }
    return torch::from_blob(weights.data(), {rows, source_len}, torch::kFloat64).to(options.dtype()).clone();
}

torch::Tensor resample_separable(const torch::Tensor& src, std::span<const double> row_coords,
                                 std::span<const double> col_coords) {
    if (src.dim() < 2) {
        throw std::invalid_argument("resample_separable expects a tensor with at least two dimensions");
    }
    const auto opts = torch::TensorOptions().dtype(src.scalar_type()).device(src.device());
    const torch::Tensor rows = interpolation_matrix(row_coords, src.size(-2), opts);
    const torch::Tensor cols = interpolation_matrix(col_coords, src.size(-1), opts);
    return torch::matmul(torch::matmul(rows, src), cols.t());
}

namespace {

// Output pixels [lo, hi) whose centres lie inside [start, end).
std::pair<std::int64_t, std::int64_t> covered_pixels(double start, double end, std::int64_t canvas) {
    const auto lo = std::clamp<std::int64_t>(static_cast<std::int64_t>(std::ceil(start - 0.5)), 0, canvas);
    const auto hi = std::clamp<std::int64_t>(static_cast<std::int64_t>(std::ceil(end - 0.5)), 0, canvas);
    return {lo, std::max(lo, hi)};
}

}  // namespace

torch::Tensor warp_into_box(const torch::Tensor& tile, const BoundingBox& box, std::int64_t canvas_size) {
    if (tile.dim() != 3) {
        throw std::invalid_argument("warp_into_box expects a [C, S, S] tile");
    }
    if (!(box.width() > 0.0) || !(box.height() > 0.0)) {
        throw std::invalid_argument("warp_into_box requires a box with positive area");
    }
    const std::int64_t tile_h = tile.size(1);
    const std::int64_t tile_w = tile.size(2);
    const auto [ylo, yhi] = covered_pixels(box.y0, box.y1, canvas_size);
    const auto [xlo, xhi] = covered_pixels(box.x0, box.x1, canvas_size);
    if (yhi == ylo || xhi == xlo) {
        return torch::zeros({tile.size(0), canvas_size, canvas_size}, tile.options());
    }

    // Canvas pixel centre p maps to tile coordinate (p - box_start) * tile_extent / box_extent - 0.5.
    std::vector<double> rows;
    std::vector<double> cols;
    for (std::int64_t y = ylo; y < yhi; ++y) {
        rows.push_back((static_cast<double>(y) + 0.5 - box.y0) * static_cast<double>(tile_h) / box.height() - 0.5);
    }
    for (std::int64_t x = xlo; x < xhi; ++x) {
        cols.push_back((static_cast<double>(x) + 0.5 - box.x0) * static_cast<double>(tile_w) / box.width() - 0.5);
    }
    const torch::Tensor region = resample_separable(tile, rows, cols);
    return torch::constant_pad_nd(region, {xlo, canvas_size - xhi, ylo, canvas_size - yhi}, 0.0);
}

torch::Tensor crop_and_resize(const torch::Tensor& image, const BoundingBox& box, std::int64_t out_size) {
    if (image.dim() != 3) {
        throw std::invalid_argument("crop_and_resize expects a [C, H, W] image");
    }
    if (!(box.width() > 0.0) || !(box.height() > 0.0)) {
        throw std::invalid_argument("crop_and_resize requires a box with positive area");
    }
    if (out_size <= 0) {
        throw std::invalid_argument("crop size must be positive");
    }
    std::vector<double> rows(static_cast<std::size_t>(out_size));
    std::vector<double> cols(static_cast<std::size_t>(out_size));
    for (std::int64_t j = 0; j < out_size; ++j) {
        const double t = (static_cast<double>(j) + 0.5) / static_cast<double>(out_size);
        rows[static_cast<std::size_t>(j)] = box.y0 + t * box.height() - 0.5;
        cols[static_cast<std::size_t>(j)] = box.x0 + t * box.width() - 0.5;
    }
    return resample_separable(image, rows, cols);
}

}  // namespace glandsynth
