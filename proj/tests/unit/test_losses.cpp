#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "glandsynth/discriminators.hpp"
#include "glandsynth/losses.hpp"

using namespace glandsynth;

namespace {

torch::Tensor t3x3(std::initializer_list<double> v) {
    return torch::tensor(std::vector<double>(v), torch::kFloat64).view({1, 1, 3, 3});
}

const torch::Tensor kGenerated = t3x3({0, 0.5, 1, 1, 1, 0, 0.25, 0.75, 0.5});
const torch::Tensor kTruth = t3x3({0, 1, 1, 0, 1, 0, 0, 1, 1});

// Central differences of a scalar function at `count` random coordinates of `x`.
double worst_relative_error(const std::function<torch::Tensor(const torch::Tensor&)>& f, torch::Tensor x, int count,
                            std::uint64_t seed) {
    x = x.detach().clone().requires_grad_(true);
    f(x).backward();
    const torch::Tensor analytic = x.grad().flatten();
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::int64_t> pick(0, x.numel() - 1);
    const double h = 1e-6;
    double worst = 0.0;
    torch::NoGradGuard no_grad;
    for (int i = 0; i < count; ++i) {
        const std::int64_t k = pick(rng);
        torch::Tensor plus = x.detach().clone();
        torch::Tensor minus = x.detach().clone();
        plus.view(-1)[k] += h;
        minus.view(-1)[k] -= h;
        const double numeric = (f(plus).item<double>() - f(minus).item<double>()) / (2 * h);
        const double a = analytic[k].item<double>();
        worst = std::max(worst, std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-6}));
    }
    return worst;
}

}  // namespace

TEST(Losses, MaskReconstructionByHand) {
    // squared differences: 0 .25 0 / 1 0 0 / .0625 .0625 .25
    EXPECT_DOUBLE_EQ(loss_mask_rec(kGenerated, kTruth).item<double>(), 1.625 / 9);
}

TEST(Losses, ImageReconstructionByHand) {
    EXPECT_DOUBLE_EQ(loss_image_rec(kGenerated, kTruth).item<double>(), 2.5 / 9);
    EXPECT_DOUBLE_EQ(loss_image_rec(kTruth, kTruth).item<double>(), 0.0);
}

TEST(Losses, GlandReconstructionSumsPerGlandMeans) {
    const torch::Tensor gen = torch::cat({kGenerated, torch::ones({1, 1, 3, 3}, torch::kFloat64)});
    const torch::Tensor truth = torch::cat({kTruth, torch::zeros({1, 1, 3, 3}, torch::kFloat64)});
    EXPECT_DOUBLE_EQ(loss_gland_mask_rec(gen, truth).item<double>(), 1.625 / 9 + 1.0);
    EXPECT_THROW(loss_gland_mask_rec(gen, kTruth), std::invalid_argument);
}

TEST(Losses, AdversarialByHand) {
    const torch::Tensor logits = torch::tensor({0.0, std::log(3.0)}, torch::kFloat64);
    // sigmoid(0) = 1/2, sigmoid(ln 3) = 3/4
    EXPECT_NEAR(loss_adversarial(logits, true).item<double>(), (std::log(2.0) + std::log(4.0 / 3.0)) / 2, 1e-15);
    EXPECT_NEAR(loss_adversarial(logits, false).item<double>(), (std::log(2.0) + std::log(4.0)) / 2, 1e-15);
}

TEST(Losses, ShapeMismatchThrows) {
    EXPECT_THROW(loss_mask_rec(kGenerated, kTruth.view({9})), std::invalid_argument);
    EXPECT_THROW(loss_image_rec(kGenerated, torch::zeros({1, 3, 3, 3})), std::invalid_argument);
}

TEST(CompositeObjective, DefaultWeights) {
    const LossTerms<double> terms{0.01, 0.01, 0.01, 0.1, 0.1, 0.1};
    EXPECT_NEAR(composite_objective(terms, LossWeights{}), 3.3, 1e-12);
    EXPECT_EQ(composite_objective(terms, LossWeights{0, 0, 0, 0, 0, 0}), 0.0);
}

TEST(CompositeObjective, LinearInEachWeight) {
    const LossTerms<double> terms{0.3, 0.7, 1.1, 0.05, 2.5, 0.9};
    const double values[] = {0.3, 0.7, 1.1, 0.05, 2.5, 0.9};
    double LossWeights::*fields[] = {&LossWeights::image_rec, &LossWeights::mask_rec,  &LossWeights::gland_rec,
                                     &LossWeights::adv_mask,  &LossWeights::adv_image, &LossWeights::adv_gland};
    const LossWeights base{};
    for (int i = 0; i < 6; ++i) {
        LossWeights doubled = base;
        doubled.*fields[i] *= 2;
        const double delta = composite_objective(terms, doubled) - composite_objective(terms, base);
        EXPECT_NEAR(delta, (base.*fields[i]) * values[i], 1e-9) << i;
    }
}

TEST(LossWeights, RejectNegative) {
    LossWeights w;
    w.adv_gland = -1;
    EXPECT_THROW(w.validate(), std::invalid_argument);
}

TEST(Losses, ReconstructionGradientsMatchFiniteDifferences) {
    torch::manual_seed(0);
    const torch::Tensor truth = torch::rand({1, 3, 16, 16}, torch::kFloat64).gt(0.5).to(torch::kFloat64);
    const torch::Tensor x = torch::rand({1, 3, 16, 16}, torch::kFloat64);
    EXPECT_LT(worst_relative_error([&](const torch::Tensor& g) { return loss_mask_rec(g, truth); }, x, 10, 1), 1e-3);
    EXPECT_LT(worst_relative_error([&](const torch::Tensor& g) { return loss_image_rec(g, truth); }, x, 10, 2), 1e-3);
    EXPECT_LT(worst_relative_error([&](const torch::Tensor& g) { return loss_gland_mask_rec(g, truth); }, x, 10, 3),
              1e-3);
}

TEST(PatchDiscriminator, TableShapes) {
    for (const PatchInput kind : {PatchInput::Mask, PatchInput::Image}) {
        PatchDiscriminator d(kind);
        const auto layers = d->forward_layers(torch::rand({channels_of(kind), 256, 256}));
        EXPECT_EQ(layers[0].sizes(), (torch::IntArrayRef{1, 16, 128, 128}));
        EXPECT_EQ(layers[2].sizes(), (torch::IntArrayRef{1, 32, 64, 64}));
        EXPECT_EQ(layers[5].sizes(), (torch::IntArrayRef{1, 64, 32, 32}));
        EXPECT_EQ(layers[8].sizes(), (torch::IntArrayRef{1, 128, 16, 16}));
        EXPECT_EQ(layers[11].sizes(), (torch::IntArrayRef{1, 256, 8, 8}));
        EXPECT_EQ(layers.back().sizes(), (torch::IntArrayRef{1, 1, 7, 7}));
        EXPECT_THROW(d->forward(torch::zeros({1, 2, 256, 256})), std::invalid_argument);
    }
}

TEST(PatchDiscriminator, FirstConvSeesOnlyItsReceptiveField) {
    // Instance norm couples every patch downstream, so locality is checked before the first norm.
    PatchDiscriminator d(PatchInput::Image);
    d->eval();
    torch::NoGradGuard no_grad;
    const torch::Tensor x = torch::rand({1, 3, 256, 256});
    torch::Tensor y = x.clone();
    using torch::indexing::None;
    using torch::indexing::Slice;
    y.index_put_({Slice(), Slice(), Slice(0, 16), Slice(0, 16)}, 0.0);
    const torch::Tensor changed = (d->forward_layers(x)[0] - d->forward_layers(y)[0]).abs().gt(0).any(1)[0];
    // Output o reads inputs 2o-1 .. 2o+2, so only o <= 8 can see rows or columns below 16.
    EXPECT_GT(changed.sum().item<std::int64_t>(), 0);
    EXPECT_FALSE(changed.index({Slice(9, None)}).any().item<bool>());
    EXPECT_FALSE(changed.index({Slice(), Slice(9, None)}).any().item<bool>());
}

TEST(GlandDiscriminator, TableShapes) {
    GlandDiscriminator d;
    const auto layers = d->forward_layers(torch::rand({3, 3, 64, 64}));
    EXPECT_EQ(layers[0].sizes(), (torch::IntArrayRef{3, 16, 30, 30}));
    EXPECT_EQ(layers[3].sizes(), (torch::IntArrayRef{3, 32, 13, 13}));
    EXPECT_EQ(layers[6].sizes(), (torch::IntArrayRef{3, 64, 5, 5}));
    EXPECT_EQ(layers[7].sizes(), (torch::IntArrayRef{3, 64}));
    EXPECT_EQ(layers.back().sizes(), (torch::IntArrayRef{3, 1}));
    EXPECT_THROW(d->forward(torch::zeros({1, 3, 32, 32})), std::invalid_argument);
}

TEST(Discriminators, InputGradientsMatchFiniteDifferences) {
    torch::manual_seed(4);
    PatchDiscriminator mask(PatchInput::Mask);
    PatchDiscriminator image(PatchInput::Image);
    GlandDiscriminator gland;
    for (torch::nn::Module* m : std::initializer_list<torch::nn::Module*>{mask.get(), image.get(), gland.get()}) {
        m->to(torch::kFloat64);
        m->eval();
    }
    const auto sum_of = [](auto& net) {
        return [&net](const torch::Tensor& x) { return net->forward(x).sum(); };
    };
    EXPECT_LT(worst_relative_error(sum_of(mask), torch::rand({1, 1, 256, 256}, torch::kFloat64), 10, 5), 1e-2);
    EXPECT_LT(worst_relative_error(sum_of(image), torch::rand({1, 3, 256, 256}, torch::kFloat64), 10, 6), 1e-2);
    EXPECT_LT(worst_relative_error(sum_of(gland), torch::rand({2, 3, 64, 64}, torch::kFloat64), 10, 7), 1e-2);
}
