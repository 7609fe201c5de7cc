#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <opencv2/core.hpp>
#include <torch/torch.h>

namespace glandsynth {

// Images travel as 8-bit RGB, masks as 8-bit single channel {0, 255}. In tensors, images are
// [3, H, W] in [-1, 1] and masks [1, H, W] in {0, 1}.

torch::Tensor image_from_mat(const cv::Mat& rgb);
cv::Mat image_to_mat(const torch::Tensor& image);

/// Foreground where the 8-bit value is at least 128.
torch::Tensor mask_from_mat(const cv::Mat& gray);
/// Binarizes at 0.5.
cv::Mat mask_to_mat(const torch::Tensor& mask);

cv::Mat read_rgb(const std::filesystem::path& path);
cv::Mat read_gray(const std::filesystem::path& path);
/// Writes a PNG; three-channel input is taken as RGB.
void write_png(const std::filesystem::path& path, const cv::Mat& mat);

std::vector<std::uint8_t> encode_png(const cv::Mat& mat);
/// Decodes a PNG byte string; three-channel output is RGB.
cv::Mat decode_png(std::string_view bytes, bool color);

std::string base64_encode(std::string_view bytes);
/// Throws std::invalid_argument on malformed input.
std::string base64_decode(std::string_view text);

}  // namespace glandsynth
