#include "glandsynth/discriminators.hpp"

#include <stdexcept>
#include <string>

#include "glandsynth/networks.hpp"
#include "glandsynth/resample.hpp"

namespace nn = torch::nn;
namespace F = torch::nn::functional;

namespace glandsynth {

namespace {

torch::Tensor leaky(const torch::Tensor& x) {
    return F::leaky_relu(x, F::LeakyReLUFuncOptions().negative_slope(0.2));
}

}  // namespace

PatchDiscriminatorImpl::PatchDiscriminatorImpl(PatchInput kind_) : kind(kind_) {
    std::int64_t channels = channels_of(kind);
    for (const std::int64_t next : {16, 32, 64, 128, 256}) {
        convs->push_back(nn::Conv2d(nn::Conv2dOptions(channels, next, 4).stride(2).padding(1)));
        if (next != 16) {
            norms->push_back(nn::InstanceNorm2d(next));
        }
        channels = next;
    }
    convs->push_back(nn::Conv2d(nn::Conv2dOptions(channels, 1, 4).stride(1).padding(1)));
    register_module("convs", convs);
    register_module("norms", norms);
    init_conv_weights(*this);
}

std::vector<torch::Tensor> PatchDiscriminatorImpl::forward_layers(const torch::Tensor& input) {
    torch::Tensor x = input.dim() == 3 ? input.unsqueeze(0) : input;
    if (x.dim() != 4 || x.size(1) != channels_of(kind)) {
        throw std::invalid_argument(std::string(kind == PatchInput::Mask ? "mask" : "image") +
                                    " discriminator expects " + std::to_string(channels_of(kind)) +
                                    " input channels, got " + std::to_string(x.dim() == 4 ? x.size(1) : -1));
    }
    std::vector<torch::Tensor> out;
    const std::size_t last = convs->size() - 1;
    for (std::size_t i = 0; i < last; ++i) {
        x = convs[i]->as<nn::Conv2d>()->forward(x);
        out.push_back(x);
        x = leaky(x);
        out.push_back(x);
        if (i > 0) {
            x = norms[i - 1]->as<nn::InstanceNorm2d>()->forward(x);
            out.push_back(x);
        }
    }
    out.push_back(convs[last]->as<nn::Conv2d>()->forward(x));
    return out;
}

torch::Tensor PatchDiscriminatorImpl::forward(const torch::Tensor& x) {
    return forward_layers(x).back();
}

GlandDiscriminatorImpl::GlandDiscriminatorImpl() {
    conv1 = register_module("conv1", nn::Conv2d(nn::Conv2dOptions(3, 16, 5).stride(2)));
    bn1 = register_module("bn1", nn::BatchNorm2d(16));
    conv2 = register_module("conv2", nn::Conv2d(nn::Conv2dOptions(16, 32, 5).stride(2)));
    bn2 = register_module("bn2", nn::BatchNorm2d(32));
    conv3 = register_module("conv3", nn::Conv2d(nn::Conv2dOptions(32, 64, 5).stride(2)));
    hidden = register_module("hidden", nn::Linear(64, 1024));
    score = register_module("score", nn::Linear(1024, 1));
    init_conv_weights(*this);
}

std::vector<torch::Tensor> GlandDiscriminatorImpl::forward_layers(const torch::Tensor& crops) {
    torch::Tensor x = crops.dim() == 3 ? crops.unsqueeze(0) : crops;
    if (x.dim() != 4 || x.size(1) != 3 || x.size(2) != kGlandCropSize || x.size(3) != kGlandCropSize) {
        throw std::invalid_argument("gland discriminator expects [k, 3, 64, 64] crops");
    }
    std::vector<torch::Tensor> out;
    out.push_back(conv1->forward(x));
    out.push_back(bn1->forward(out.back()));
    out.push_back(leaky(out.back()));
    out.push_back(conv2->forward(out.back()));
    out.push_back(bn2->forward(out.back()));
    out.push_back(leaky(out.back()));
    out.push_back(conv3->forward(out.back()));
    out.push_back(out.back().mean({2, 3}));
    // No activation is given between the two affine layers; LeakyReLU(0.2) keeps them from collapsing
    // into a single linear map.
    out.push_back(leaky(hidden->forward(out.back())));
    out.push_back(score->forward(out.back()));
    return out;
}

torch::Tensor GlandDiscriminatorImpl::forward(const torch::Tensor& crops) {
    return forward_layers(crops).back();
}

std::vector<torch::Tensor> Critics::parameters() const {
    std::vector<torch::Tensor> params = mask->parameters();
    for (const auto& p : image->parameters()) {
        params.push_back(p);
    }
    for (const auto& p : gland->parameters()) {
        params.push_back(p);
    }
    return params;
}

void Critics::train(bool on) {
    mask->train(on);
    image->train(on);
    gland->train(on);
}

torch::Tensor crop_and_resize_glands(const torch::Tensor& image, std::span<const BoundingBox> boxes,
                                     std::int64_t crop_size) {
    if (boxes.empty()) {
        throw std::invalid_argument("crop_and_resize_glands needs at least one box");
    }
    const torch::Tensor img = image.dim() == 4 ? image.squeeze(0) : image;
    if (img.dim() != 3) {
        throw std::invalid_argument("crop_and_resize_glands expects a [C, H, W] image");
    }
    std::vector<torch::Tensor> crops;
    crops.reserve(boxes.size());
    for (const auto& box : boxes) {
        if (box.x0 < 0.0 || box.y0 < 0.0 || box.x1 > double(img.size(2)) || box.y1 > double(img.size(1))) {
            throw std::invalid_argument("gland box lies outside the image");
        }
        crops.push_back(crop_and_resize(img, box, crop_size));
    }
    return torch::stack(crops);
}

}  // namespace glandsynth
