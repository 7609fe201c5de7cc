#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <torch/torch.h>

#include "glandsynth/layout.hpp"

namespace glandsynth {

enum class PatchInput { Mask, Image };

inline std::int64_t channels_of(PatchInput kind) { return kind == PatchInput::Mask ? 1 : 3; }

// PatchGAN critic shared by the mask (C=1) and image (C=3) discriminators: five stride-2 4x4
// convolutions 16..256 with LeakyReLU(0.2), instance norm after all but the first, and a stride-1
// 4x4 convolution to a 7x7 grid of realism logits.
struct PatchDiscriminatorImpl : torch::nn::Module {
    explicit PatchDiscriminatorImpl(PatchInput kind);

    /// Output after every table row: conv, activation and norm are separate entries.
    std::vector<torch::Tensor> forward_layers(const torch::Tensor& x);
    /// [b, C, 256, 256] (or [C, 256, 256]) -> [b, 1, 7, 7].
    torch::Tensor forward(const torch::Tensor& x);

    PatchInput kind;
    torch::nn::ModuleList convs;
    torch::nn::ModuleList norms;
};
TORCH_MODULE(PatchDiscriminator);

// Gland critic: three 5x5 stride-2 convolutions (3 -> 16 -> 32 -> 64), batch norm + LeakyReLU after the
// first two, global average pooling, then 64 -> 1024 -> 1 affine layers.
struct GlandDiscriminatorImpl : torch::nn::Module {
    GlandDiscriminatorImpl();

    std::vector<torch::Tensor> forward_layers(const torch::Tensor& crops);
    /// [k, 3, 64, 64] -> [k, 1] logits.
    torch::Tensor forward(const torch::Tensor& crops);

    torch::nn::Conv2d conv1{nullptr}, conv2{nullptr}, conv3{nullptr};
    torch::nn::BatchNorm2d bn1{nullptr}, bn2{nullptr};
    torch::nn::Linear hidden{nullptr}, score{nullptr};
};
TORCH_MODULE(GlandDiscriminator);

/// The three critics trained against the generator.
struct Critics {
    PatchDiscriminator mask{PatchInput::Mask};
    PatchDiscriminator image{PatchInput::Image};
    GlandDiscriminator gland;

    std::vector<torch::Tensor> parameters() const;
    void train(bool on = true);
};

inline constexpr std::int64_t kGlandCropSize = 64;

/// Differentiable bilinear crops of each box from a [3, N, N] (or [1, 3, N, N]) image: [k, 3, 64, 64].
torch::Tensor crop_and_resize_glands(const torch::Tensor& image, std::span<const BoundingBox> boxes,
                                     std::int64_t crop_size = kGlandCropSize);

}  // namespace glandsynth
