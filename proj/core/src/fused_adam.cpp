#include "glandsynth/fused_adam.hpp"

#include <stdexcept>

namespace glandsynth {

FusedAdam::FusedAdam(std::vector<torch::Tensor> params, AdamOptions options)
    : params_(std::move(params)), options_(options) {
    if (!(options_.lr > 0.0)) {
        throw std::invalid_argument("learning rate must be positive");
    }
    for (const auto& p : params_) {
        exp_avg_.push_back(torch::zeros_like(p, torch::MemoryFormat::Preserve));
        exp_avg_sq_.push_back(torch::zeros_like(p, torch::MemoryFormat::Preserve));
        step_.push_back(torch::zeros({}, torch::kFloat32));
    }
}

void FusedAdam::zero_grad() {
    for (auto& p : params_) {
        if (p.mutable_grad().defined()) {
            p.mutable_grad() = torch::Tensor();
        }
    }
}

void FusedAdam::step() {
    torch::NoGradGuard no_grad;
    std::vector<torch::Tensor> params, grads, avg, avg_sq, steps;
    for (std::size_t i = 0; i < params_.size(); ++i) {
        const torch::Tensor& g = params_[i].grad();
        if (!g.defined()) {
            continue;
        }
        params.push_back(params_[i]);
        grads.push_back(g);
        avg.push_back(exp_avg_[i]);
        avg_sq.push_back(exp_avg_sq_[i]);
        steps.push_back(step_[i]);
    }
    if (params.empty()) {
        return;
    }
    // The fused kernel expects the step counters already advanced.
    torch::_foreach_add_(steps, 1);
    at::_fused_adam_(params, grads, avg, avg_sq, /*max_exp_avg_sqs=*/{}, steps, options_.lr, options_.beta1,
                     options_.beta2, /*weight_decay=*/0.0, options_.eps, /*amsgrad=*/false, /*maximize=*/false);
    ++steps_taken_;
}

void FusedAdam::save(torch::serialize::OutputArchive& archive) const {
    for (std::size_t i = 0; i < params_.size(); ++i) {
        const std::string key = std::to_string(i);
        archive.write("exp_avg." + key, exp_avg_[i], /*is_buffer=*/true);
        archive.write("exp_avg_sq." + key, exp_avg_sq_[i], /*is_buffer=*/true);
        archive.write("step." + key, step_[i], /*is_buffer=*/true);
    }
    archive.write("steps_taken", torch::tensor(steps_taken_), /*is_buffer=*/true);
}

void FusedAdam::load(torch::serialize::InputArchive& archive) {
    torch::NoGradGuard no_grad;
    for (std::size_t i = 0; i < params_.size(); ++i) {
        const std::string key = std::to_string(i);
        torch::Tensor t;
        archive.read("exp_avg." + key, t, /*is_buffer=*/true);
        exp_avg_[i].copy_(t);
        archive.read("exp_avg_sq." + key, t, /*is_buffer=*/true);
        exp_avg_sq_[i].copy_(t);
        archive.read("step." + key, t, /*is_buffer=*/true);
        step_[i].copy_(t);
    }
    torch::Tensor taken;
    archive.read("steps_taken", taken, /*is_buffer=*/true);
    steps_taken_ = taken.item<std::int64_t>();
}

}  // namespace glandsynth
