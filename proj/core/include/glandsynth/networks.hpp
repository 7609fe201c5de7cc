#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <torch/torch.h>

#include "glandsynth/layout.hpp"

namespace glandsynth {

/// Fixed model geometry. The encoder-decoder and the discriminators only fit a 256 canvas.
struct ModelDims {
    std::int64_t canvas = 256;     // N
    std::int64_t latent = 32;      // D
    std::int64_t mask = 64;        // B
    std::int64_t noise = 6;        // dim(z)

    bool operator==(const ModelDims&) const = default;
};

/// Normal(0, 0.02) for every convolution kernel, zero for convolution biases.
void init_conv_weights(torch::nn::Module& module);

// Affine map from a gland's noise vector to its latent embedding.
struct GlandEmbeddingImpl : torch::nn::Module {
    explicit GlandEmbeddingImpl(ModelDims dims = {});

    /// [n, noise] -> [n, latent]. A single unbatched vector is also accepted.
    torch::Tensor forward(const torch::Tensor& z);

    ModelDims dims;
    torch::nn::Linear affine{nullptr};
};
TORCH_MODULE(GlandEmbedding);

// Latent embedding -> per-gland soft mask: six (x2 interpolation, 3x3 conv, batch norm, ReLU)
// blocks from 1x1 up to 64x64, then a 1x1 conv to one channel and a sigmoid.
struct MaskGeneratorImpl : torch::nn::Module {
    explicit MaskGeneratorImpl(ModelDims dims = {});

    /// Output of every layer in order: reshape, six blocks, 1x1 conv, sigmoid.
    std::vector<torch::Tensor> forward_layers(const torch::Tensor& latent);
    /// [n, latent] -> [n, 1, B, B] in (0, 1).
    torch::Tensor forward(const torch::Tensor& latent);

    ModelDims dims;
    torch::nn::ModuleList blocks;
    torch::nn::Conv2d to_mask{nullptr};
};
TORCH_MODULE(MaskGenerator);

/// Embedding-weighted masks warped into their boxes and summed: [n, D], [n, 1, B, B] -> [D, N, N].
torch::Tensor compose_cumulative_mask(const torch::Tensor& embeddings, const torch::Tensor& masks,
                                      std::span<const BoundingBox> boxes, std::int64_t canvas_size);

// Four 3x3 convolutions 32 -> 16 -> 8 -> 4 -> 1 with LeakyReLU(0.2) between them; the last
// convolution goes through a sigmoid so the component mask lies in (0, 1).
struct ChannelReducerImpl : torch::nn::Module {
    explicit ChannelReducerImpl(ModelDims dims = {});

    /// Outputs after each conv and each activation (the last activation is the sigmoid).
    std::vector<torch::Tensor> forward_layers(const torch::Tensor& cumulative);
    /// [D, N, N] or [1, D, N, N] -> [1, 1, N, N].
    torch::Tensor forward(const torch::Tensor& cumulative);

    ModelDims dims;
    torch::nn::ModuleList convs;
};
TORCH_MODULE(ChannelReducer);

struct EncodeBlockImpl : torch::nn::Module {
    EncodeBlockImpl(std::int64_t in_channels, std::int64_t out_channels, bool normalize, double dropout);
    torch::Tensor forward(const torch::Tensor& x);

    torch::nn::Conv2d conv{nullptr};
    torch::nn::InstanceNorm2d norm{nullptr};
    torch::nn::Dropout drop{nullptr};
};
TORCH_MODULE(EncodeBlock);

struct DecodeBlockImpl : torch::nn::Module {
    DecodeBlockImpl(std::int64_t in_channels, std::int64_t out_channels, double dropout);
    /// Upsamples `x` and concatenates the mirrored encoder feature map `skip` along channels.
    torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& skip);

    torch::nn::ConvTranspose2d deconv{nullptr};
    torch::nn::InstanceNorm2d norm{nullptr};
    torch::nn::Dropout drop{nullptr};
};
TORCH_MODULE(DecodeBlock);

// U-shaped encoder-decoder: eight Encode blocks down to 512x1x1, seven Decode blocks with skip
// concatenation, x2 upsample, 4x4 conv to RGB and tanh.
struct EncoderDecoderImpl : torch::nn::Module {
    explicit EncoderDecoderImpl(ModelDims dims = {});

    /// Outputs in order: 8 encoder maps, 7 decoder maps (after concatenation), upsample, conv, tanh.
    std::vector<torch::Tensor> forward_layers(const torch::Tensor& mask);
    /// [1, 1, N, N] -> [1, 3, N, N] in [-1, 1].
    torch::Tensor forward(const torch::Tensor& mask);

    ModelDims dims;
    torch::nn::ModuleList encoders;
    torch::nn::ModuleList decoders;
    torch::nn::Conv2d to_rgb{nullptr};
};
TORCH_MODULE(EncoderDecoder);

struct GeneratorOutput {
    torch::Tensor embeddings;      // [n, D]
    torch::Tensor gland_masks;     // [n, 1, B, B]
    torch::Tensor cumulative;      // [D, N, N]
    torch::Tensor component_mask;  // [1, 1, N, N]
    torch::Tensor image;           // [1, 3, N, N]
};

/// The whole layout-to-pair generator: embed, mask, compose, reduce, encode-decode.
struct GeneratorImpl : torch::nn::Module {
    explicit GeneratorImpl(ModelDims dims = {});

    /// `noise` is [n, dim(z)]; `boxes` holds n canvas boxes.
    GeneratorOutput forward(const torch::Tensor& noise, std::span<const BoundingBox> boxes);

    ModelDims dims;
    GlandEmbedding embed{nullptr};
    MaskGenerator mask_generator{nullptr};
    ChannelReducer reducer{nullptr};
    EncoderDecoder encoder_decoder{nullptr};
};
TORCH_MODULE(Generator);

}  // namespace glandsynth
