#pragma once

#include <stdexcept>

#include <torch/torch.h>

namespace glandsynth {

struct LossWeights {
    double image_rec = 100.0;  // lambda1
    double mask_rec = 100.0;   // lambda2
    double gland_rec = 100.0;  // lambda3
    double adv_mask = 1.0;     // lambda4
    double adv_image = 1.0;    // lambda5
    double adv_gland = 1.0;    // lambda6

    bool operator==(const LossWeights&) const = default;

    void validate() const {
        for (double w : {image_rec, mask_rec, gland_rec, adv_mask, adv_image, adv_gland}) {
            if (!(w >= 0.0)) {
                throw std::invalid_argument("loss weights must be non-negative");
            }
        }
    }
};

/// The six generator-side loss components. T is torch::Tensor during training and double for reporting.
template <typename T>
struct LossTerms {
    T image_rec;
    T mask_rec;
    T gland_rec;
    T adv_mask;
    T adv_image;
    T adv_gland;
};

template <typename T>
T composite_objective(const LossTerms<T>& terms, const LossWeights& w) {
    return terms.image_rec * w.image_rec + terms.mask_rec * w.mask_rec + terms.gland_rec * w.gland_rec +
           terms.adv_mask * w.adv_mask + terms.adv_image * w.adv_image + terms.adv_gland * w.adv_gland;
}

/// Sum over glands of each gland's mean squared error; inputs are [n, 1, B, B].
torch::Tensor loss_gland_mask_rec(const torch::Tensor& generated, const torch::Tensor& truth);

/// Mean squared error over all pixels of the component mask.
torch::Tensor loss_mask_rec(const torch::Tensor& generated, const torch::Tensor& truth);

/// Mean absolute error over all image elements.
torch::Tensor loss_image_rec(const torch::Tensor& generated, const torch::Tensor& truth);

/// Binary cross-entropy of sigmoid(logits) against an all-real or all-fake target, averaged over logits.
torch::Tensor loss_adversarial(const torch::Tensor& logits, bool target_is_real);

}  // namespace glandsynth
