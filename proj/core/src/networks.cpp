#include "glandsynth/networks.hpp"

#include <stdexcept>
#include <string>

#include "glandsynth/resample.hpp"

namespace nn = torch::nn;
namespace F = torch::nn::functional;

namespace glandsynth {

namespace {

std::string shape_of(const torch::Tensor& t) {
    std::string s = "[";
    for (std::int64_t i = 0; i < t.dim(); ++i) {
        s += (i ? ", " : "") + std::to_string(t.size(i));
    }
    return s + "]";
}

}  // namespace

void init_conv_weights(nn::Module& module) {
    torch::NoGradGuard no_grad;
    for (auto& child : module.modules(/*include_self=*/false)) {
        if (auto* conv = child->as<nn::Conv2d>()) {
            conv->weight.normal_(0.0, 0.02);
            if (conv->bias.defined()) {
                conv->bias.zero_();
            }
        } else if (auto* deconv = child->as<nn::ConvTranspose2d>()) {
            deconv->weight.normal_(0.0, 0.02);
            if (deconv->bias.defined()) {
                deconv->bias.zero_();
            }
        }
    }
}

// ---------------------------------------------------------------------------------------------
// Gland embedding

GlandEmbeddingImpl::GlandEmbeddingImpl(ModelDims dims_) : dims(dims_) {
    affine = register_module("affine", nn::Linear(dims.noise, dims.latent));
}

torch::Tensor GlandEmbeddingImpl::forward(const torch::Tensor& z) {
    if (z.dim() < 1 || z.dim() > 2 || z.size(-1) != dims.noise) {
        throw std::invalid_argument("gland noise must have length " + std::to_string(dims.noise) + ", got " + shape_of(z));
    }
    return affine->forward(z);
}

// ---------------------------------------------------------------------------------------------
// Mask generator

MaskGeneratorImpl::MaskGeneratorImpl(ModelDims dims_) : dims(dims_) {
    std::int64_t size = 1;
    while (size < dims.mask) {
        nn::Sequential block(
            nn::Upsample(nn::UpsampleOptions().scale_factor(std::vector<double>{2.0, 2.0}).mode(torch::kNearest)),
            nn::Conv2d(nn::Conv2dOptions(dims.latent, dims.latent, 3).stride(1).padding(1)),
            nn::BatchNorm2d(dims.latent),
            nn::ReLU());
        blocks->push_back(block);
        size *= 2;
    }
    if (size != dims.mask) {
        throw std::invalid_argument("mask size must be a power of two");
    }
    register_module("blocks", blocks);
    to_mask = register_module("to_mask", nn::Conv2d(nn::Conv2dOptions(dims.latent, 1, 1)));
    init_conv_weights(*this);
}

std::vector<torch::Tensor> MaskGeneratorImpl::forward_layers(const torch::Tensor& latent) {
    if (latent.dim() != 2 || latent.size(1) != dims.latent) {
        throw std::invalid_argument("mask generator expects [n, " + std::to_string(dims.latent) + "] latents, got " +
                                    shape_of(latent));
    }
    std::vector<torch::Tensor> out;
    out.push_back(latent.view({latent.size(0), dims.latent, 1, 1}));
    for (const auto& block : *blocks) {
        out.push_back(block->as<nn::Sequential>()->forward(out.back()));
    }
    out.push_back(to_mask->forward(out.back()));
    out.push_back(torch::sigmoid(out.back()));
    return out;
}

torch::Tensor MaskGeneratorImpl::forward(const torch::Tensor& latent) {
    return forward_layers(latent).back();
}

// ---------------------------------------------------------------------------------------------
// Composition

torch::Tensor compose_cumulative_mask(const torch::Tensor& embeddings, const torch::Tensor& masks,
                                      std::span<const BoundingBox> boxes, std::int64_t canvas_size) {
    if (boxes.empty()) {
        throw std::invalid_argument("composition needs at least one gland");
    }
    const auto n = static_cast<std::int64_t>(boxes.size());
    if (embeddings.dim() != 2 || embeddings.size(0) != n) {
        throw std::invalid_argument("expected " + std::to_string(n) + " embeddings, got " + shape_of(embeddings));
    }
    if (masks.dim() != 4 || masks.size(0) != n || masks.size(1) != 1) {
        throw std::invalid_argument("expected " + std::to_string(n) + " single-channel masks, got " + shape_of(masks));
    }
    const std::int64_t channels = embeddings.size(1);
    torch::Tensor cumulative;
    for (std::int64_t k = 0; k < n; ++k) {
        const torch::Tensor tile = embeddings[k].view({channels, 1, 1}) * masks[k];
        const torch::Tensor placed = warp_into_box(tile, boxes[static_cast<std::size_t>(k)], canvas_size);
        cumulative = k == 0 ? placed : cumulative + placed;
    }
    return cumulative;
}

// ---------------------------------------------------------------------------------------------
// Channel reducer

ChannelReducerImpl::ChannelReducerImpl(ModelDims dims_) : dims(dims_) {
    std::int64_t channels = dims.latent;
    for (const std::int64_t next : {dims.latent / 2, dims.latent / 4, dims.latent / 8, std::int64_t{1}}) {
        convs->push_back(nn::Conv2d(nn::Conv2dOptions(channels, next, 3).stride(1).padding(1)));
        channels = next;
    }
    register_module("convs", convs);
    init_conv_weights(*this);
}

std::vector<torch::Tensor> ChannelReducerImpl::forward_layers(const torch::Tensor& cumulative) {
    torch::Tensor x = cumulative;
    if (x.dim() == 3) {
        x = x.unsqueeze(0);
    }
    if (x.dim() != 4 || x.size(0) != 1 || x.size(1) != dims.latent || x.size(2) != dims.canvas || x.size(3) != dims.canvas) {
        throw std::invalid_argument("channel reducer expects [" + std::to_string(dims.latent) + ", " +
                                    std::to_string(dims.canvas) + ", " + std::to_string(dims.canvas) + "], got " +
                                    shape_of(cumulative));
    }
    std::vector<torch::Tensor> out;
    const std::size_t last = convs->size() - 1;
    for (std::size_t i = 0; i < convs->size(); ++i) {
        out.push_back(convs[i]->as<nn::Conv2d>()->forward(x));
        // The last activation is the sigmoid: a LeakyReLU in front of it would shrink every
        // background logit by five.
        x = i == last ? torch::sigmoid(out.back())
                      : F::leaky_relu(out.back(), F::LeakyReLUFuncOptions().negative_slope(0.2));
        out.push_back(x);
    }
    return out;
}

torch::Tensor ChannelReducerImpl::forward(const torch::Tensor& cumulative) {
    return forward_layers(cumulative).back();
}

// ---------------------------------------------------------------------------------------------
// Encoder-decoder

EncodeBlockImpl::EncodeBlockImpl(std::int64_t in_channels, std::int64_t out_channels, bool normalize, double dropout) {
    conv = register_module(
        "conv", nn::Conv2d(nn::Conv2dOptions(in_channels, out_channels, 4).stride(2).padding(1).bias(!normalize)));
    if (normalize) {
        norm = register_module("norm", nn::InstanceNorm2d(out_channels));
    }
    if (dropout > 0.0) {
        drop = register_module("drop", nn::Dropout(dropout));
    }
}

torch::Tensor EncodeBlockImpl::forward(const torch::Tensor& x) {
    torch::Tensor y = conv->forward(x);
    if (norm) {
        y = norm->forward(y);
    }
    y = F::leaky_relu(y, F::LeakyReLUFuncOptions().negative_slope(0.2));
    if (drop) {
        y = drop->forward(y);
    }
    return y;
}

DecodeBlockImpl::DecodeBlockImpl(std::int64_t in_channels, std::int64_t out_channels, double dropout) {
    deconv = register_module(
        "deconv",
        nn::ConvTranspose2d(nn::ConvTranspose2dOptions(in_channels, out_channels, 4).stride(2).padding(1).bias(false)));
    norm = register_module("norm", nn::InstanceNorm2d(out_channels));
    if (dropout > 0.0) {
        drop = register_module("drop", nn::Dropout(dropout));
    }
}

torch::Tensor DecodeBlockImpl::forward(const torch::Tensor& x, const torch::Tensor& skip) {
    torch::Tensor y = torch::relu(norm->forward(deconv->forward(x)));
    if (drop) {
        y = drop->forward(y);
    }
    return torch::cat({y, skip}, 1);
}

EncoderDecoderImpl::EncoderDecoderImpl(ModelDims dims_) : dims(dims_) {
    // {in, out, normalize}. The outermost block sees the raw mask; the innermost produces a 1x1 map
    // on which instance normalization is undefined.
    struct Enc {
        std::int64_t in, out;
        bool normalize;
    };
    const Enc enc[] = {{1, 64, false},    {64, 128, true},  {128, 256, true}, {256, 512, true},
                       {512, 512, true},  {512, 512, true}, {512, 512, true}, {512, 512, false}};
    for (const auto& e : enc) {
        encoders->push_back(EncodeBlock(e.in, e.out, e.normalize, 0.0));
    }
    struct Dec {
        std::int64_t in, out;
        double dropout;
    };
    const Dec dec[] = {{512, 512, 0.5},   {1024, 512, 0.5}, {1024, 512, 0.5}, {1024, 512, 0.0},
                       {1024, 256, 0.0},  {512, 128, 0.0},  {256, 64, 0.0}};
    for (const auto& d : dec) {
        decoders->push_back(DecodeBlock(d.in, d.out, d.dropout));
    }
    register_module("encoders", encoders);
    register_module("decoders", decoders);
    to_rgb = register_module("to_rgb", nn::Conv2d(nn::Conv2dOptions(128, 3, 4).padding(1)));
    init_conv_weights(*this);
}

std::vector<torch::Tensor> EncoderDecoderImpl::forward_layers(const torch::Tensor& mask) {
    torch::Tensor x = mask;
    if (x.dim() == 3) {
        x = x.unsqueeze(0);
    }
    if (x.dim() != 4 || x.size(1) != 1 || x.size(2) != dims.canvas || x.size(3) != dims.canvas) {
        throw std::invalid_argument("encoder-decoder expects a [1, " + std::to_string(dims.canvas) + ", " +
                                    std::to_string(dims.canvas) + "] mask, got " + shape_of(mask));
    }
    std::vector<torch::Tensor> out;
    for (const auto& enc : *encoders) {
        x = enc->as<EncodeBlock>()->forward(x);
        out.push_back(x);
    }
    const std::size_t depth = encoders->size();
    for (std::size_t i = 0; i < decoders->size(); ++i) {
        x = decoders[i]->as<DecodeBlock>()->forward(x, out[depth - 2 - i]);
        out.push_back(x);
    }
    x = F::interpolate(x, F::InterpolateFuncOptions().scale_factor(std::vector<double>{2.0, 2.0}).mode(torch::kNearest));
    out.push_back(x);
    // Asymmetric zero pad so the 4x4 kernel keeps the spatial size.
    out.push_back(to_rgb->forward(torch::constant_pad_nd(x, {1, 0, 1, 0}, 0.0)));
    out.push_back(torch::tanh(out.back()));
    return out;
}

torch::Tensor EncoderDecoderImpl::forward(const torch::Tensor& mask) {
    return forward_layers(mask).back();
}

// ---------------------------------------------------------------------------------------------
// Full generator

GeneratorImpl::GeneratorImpl(ModelDims dims_) : dims(dims_) {
    embed = register_module("embed", GlandEmbedding(dims));
    mask_generator = register_module("mask_generator", MaskGenerator(dims));
    reducer = register_module("reducer", ChannelReducer(dims));
    encoder_decoder = register_module("encoder_decoder", EncoderDecoder(dims));
}

GeneratorOutput GeneratorImpl::forward(const torch::Tensor& noise, std::span<const BoundingBox> boxes) {
    if (noise.dim() != 2 || noise.size(0) != static_cast<std::int64_t>(boxes.size())) {
        throw std::invalid_argument("need one noise vector per bounding box, got " + shape_of(noise) + " for " +
                                    std::to_string(boxes.size()) + " boxes");
    }
    GeneratorOutput out;
    out.embeddings = embed->forward(noise);
    out.gland_masks = mask_generator->forward(out.embeddings);
    out.cumulative = compose_cumulative_mask(out.embeddings, out.gland_masks, boxes, dims.canvas);
    out.component_mask = reducer->forward(out.cumulative);
    out.image = encoder_decoder->forward(out.component_mask);
    return out;
}

}  // namespace glandsynth
