#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>
#include <torch/torch.h>

#include "glandsynth/dataset.hpp"
#include "glandsynth/discriminators.hpp"
#include "glandsynth/fused_adam.hpp"
#include "glandsynth/losses.hpp"
#include "glandsynth/networks.hpp"

namespace glandsynth {

struct TrainConfig {
    double learning_rate = 1e-4;
    int batch_size = 1;
    std::int64_t total_iterations = 300000;
    double beta1 = 0.5;
    double beta2 = 0.999;
    LossWeights weights;
    std::int64_t checkpoint_interval = 10000;  // <= 0: only the final checkpoint
    std::uint64_t rng_seed = 0;
    bool record_wall_time = true;  // false writes wall_ms = 0 so logs compare byte for byte

    void validate() const;
};

/// Loss values reported by one training step.
struct StepMetrics {
    LossTerms<double> generator{};
    double d_mask = 0.0;
    double d_image = 0.0;
    double d_gland = 0.0;
    double wall_ms = 0.0;
};

/// One newline-delimited metrics record: {iter, img_rec, mask_rec, gland_rec, adv_T, adv_Z, adv_G, d_T, d_Z, d_G, wall_ms}.
nlohmann::json metrics_record(std::int64_t iteration, const StepMetrics& metrics);

// Models, optimizers and random streams owned by a single training loop.
class TrainingState {
public:
    explicit TrainingState(const TrainConfig& config, const ModelDims& dims = {});

    Generator generator;
    Critics critics;
    FusedAdam generator_opt;
    FusedAdam mask_critic_opt;
    FusedAdam image_critic_opt;
    FusedAdam gland_critic_opt;
    at::Generator noise_rng;
    TrainConfig config;
    std::int64_t iteration = 0;
};

/// Generated tensors of one generator update, detached for the critic updates.
struct GeneratorStep {
    LossTerms<double> terms{};
    torch::Tensor fake_mask;   // [1, 1, N, N]
    torch::Tensor fake_image;  // [1, 3, N, N]
    torch::Tensor fake_crops;  // [n, 3, 64, 64]
};

struct CriticLosses {
    double mask = 0.0;
    double image = 0.0;
    double gland = 0.0;
};

/// The generator half of a step: one update on the composite objective with critic weights frozen.
GeneratorStep generator_update(const TrainingSample& sample, TrainingState& state);

/// The critic half: one update each for the mask, image and gland critics, real versus `fakes`.
CriticLosses critic_updates(const TrainingSample& sample, const GeneratorStep& fakes, TrainingState& state);

/// One generator update on the composite objective with critics frozen, then one update each for the
/// mask, image and gland critics on real versus detached generated inputs. Throws std::runtime_error
/// naming the component when a loss is not finite.
StepMetrics train_step(const TrainingSample& sample, TrainingState& state);

struct TrainingRun {
    std::vector<std::filesystem::path> checkpoints;
    std::filesystem::path metrics_log;
};

using StepCallback = std::function<void(std::int64_t iteration, const StepMetrics&)>;

/// Iterates train_step over the samples in a seeded shuffled order (reshuffled every epoch), appending
/// one record per step to `out_dir/metrics.jsonl` and writing `out_dir/checkpoint_<iter>.pt` every
/// checkpoint_interval steps and after the last step.
TrainingRun run_training(const TrainConfig& config, const std::vector<TrainingSample>& dataset,
                         const std::filesystem::path& out_dir, const StepCallback& on_step = {});

}  // namespace glandsynth
