#pragma once

#include <string>
#include <vector>

#include <torch/torch.h>

namespace glandsynth {

struct AdamOptions {
    double lr = 1e-4;
    double beta1 = 0.5;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Adam over a fixed parameter list, stepping all tensors in one fused ATen kernel.
class FusedAdam {
public:
    FusedAdam(std::vector<torch::Tensor> params, AdamOptions options);

    void zero_grad();
    /// Parameters without a gradient are skipped for this step.
    void step();

    const AdamOptions& options() const { return options_; }
    std::int64_t steps_taken() const { return steps_taken_; }

    void save(torch::serialize::OutputArchive& archive) const;
    void load(torch::serialize::InputArchive& archive);

private:
    std::vector<torch::Tensor> params_;
    std::vector<torch::Tensor> exp_avg_;
    std::vector<torch::Tensor> exp_avg_sq_;
    std::vector<torch::Tensor> step_;
    AdamOptions options_;
    std::int64_t steps_taken_ = 0;
};

}  // namespace glandsynth
