#include "glandsynth/losses.hpp"

#include <string>

namespace F = torch::nn::functional;

namespace glandsynth {

namespace {

void require_same_shape(const torch::Tensor& a, const torch::Tensor& b, const char* what) {
    if (a.sizes() != b.sizes()) {
        throw std::invalid_argument(std::string(what) + ": shape mismatch");
    }
}

}  // namespace

torch::Tensor loss_gland_mask_rec(const torch::Tensor& generated, const torch::Tensor& truth) {
    if (generated.dim() < 1 || truth.dim() < 1 || generated.size(0) != truth.size(0)) {
        throw std::invalid_argument("gland mask loss: gland count mismatch");
    }
    require_same_shape(generated, truth, "gland mask loss");
    const torch::Tensor diff = (generated - truth).pow(2).flatten(1);
    return diff.mean(1).sum();
}

torch::Tensor loss_mask_rec(const torch::Tensor& generated, const torch::Tensor& truth) {
    require_same_shape(generated, truth, "mask loss");
    return (generated - truth).pow(2).mean();
}

torch::Tensor loss_image_rec(const torch::Tensor& generated, const torch::Tensor& truth) {
    require_same_shape(generated, truth, "image loss");
    return (generated - truth).abs().mean();
}

torch::Tensor loss_adversarial(const torch::Tensor& logits, bool target_is_real) {
    const torch::Tensor target = target_is_real ? torch::ones_like(logits) : torch::zeros_like(logits);
    return F::binary_cross_entropy_with_logits(logits, target);
}

}  // namespace glandsynth
