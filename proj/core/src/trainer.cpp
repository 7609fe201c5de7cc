#include "glandsynth/trainer.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "glandsynth/checkpoint.hpp"

namespace fs = std::filesystem;

namespace glandsynth {

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) {
        throw std::invalid_argument("learning rate must be positive");
    }
    if (total_iterations < 1) {
        throw std::invalid_argument("total_iterations must be at least 1");
    }
    if (batch_size != 1) {
        throw std::invalid_argument("only batch size 1 is supported");
    }
    weights.validate();
}

nlohmann::json metrics_record(std::int64_t iteration, const StepMetrics& m) {
    nlohmann::ordered_json j;
    j["iter"] = iteration;
    j["img_rec"] = m.generator.image_rec;
    j["mask_rec"] = m.generator.mask_rec;
    j["gland_rec"] = m.generator.gland_rec;
    j["adv_T"] = m.generator.adv_mask;
    j["adv_Z"] = m.generator.adv_image;
    j["adv_G"] = m.generator.adv_gland;
    j["d_T"] = m.d_mask;
    j["d_Z"] = m.d_image;
    j["d_G"] = m.d_gland;
    j["wall_ms"] = m.wall_ms;
    return nlohmann::json::parse(j.dump());
}

namespace {

AdamOptions adam_options(const TrainConfig& c) {
    return {c.learning_rate, c.beta1, c.beta2, 1e-8};
}

// Seeds the global stream before any module is built so initial weights follow the run seed.
ModelDims seeded(const TrainConfig& config, const ModelDims& dims) {
    torch::manual_seed(config.rng_seed);
    return dims;
}

void set_requires_grad(const std::vector<torch::Tensor>& params, bool on) {
    for (auto p : params) {
        p.requires_grad_(on);
    }
}

double checked(const torch::Tensor& loss, const char* name, std::int64_t iteration) {
    const double v = loss.item<double>();
    if (!std::isfinite(v)) {
        throw std::runtime_error("non-finite " + std::string(name) + " loss (" + std::to_string(v) + ") at iteration " +
                                 std::to_string(iteration));
    }
    return v;
}

double critic_update(FusedAdam& opt, const torch::Tensor& real_logits_loss, const torch::Tensor& fake_logits_loss,
                     const char* name, std::int64_t iteration) {
    const torch::Tensor loss = 0.5 * (real_logits_loss + fake_logits_loss);
    const double v = checked(loss, name, iteration);
    opt.zero_grad();
    loss.backward();
    opt.step();
    return v;
}

}  // namespace

TrainingState::TrainingState(const TrainConfig& config_, const ModelDims& dims)
    : generator(seeded(config_, dims)),
      critics(),
      generator_opt(generator->parameters(), adam_options(config_)),
      mask_critic_opt(critics.mask->parameters(), adam_options(config_)),
      image_critic_opt(critics.image->parameters(), adam_options(config_)),
      gland_critic_opt(critics.gland->parameters(), adam_options(config_)),
      noise_rng(at::make_generator<at::CPUGeneratorImpl>(config_.rng_seed)),
      config(config_) {
    config.validate();
    generator->train();
    critics.train();
}

GeneratorStep generator_update(const TrainingSample& sample, TrainingState& state) {
    const std::int64_t iteration = state.iteration + 1;
    const ModelDims& dims = state.generator->dims;
    const auto n = static_cast<std::int64_t>(sample.boxes.size());
    if (n < 1 || sample.gland_masks.size(0) != n) {
        throw std::invalid_argument("training sample needs at least one gland and one target mask per box");
    }
    Critics& critics = state.critics;
    const torch::Tensor real_image = sample.image.unsqueeze(0);
    const torch::Tensor real_mask = sample.mask.unsqueeze(0);

    // Critic weights take no gradient.
    const std::vector<torch::Tensor> critic_params = critics.parameters();
    set_requires_grad(critic_params, false);
    struct Restore {
        const std::vector<torch::Tensor>& params;
        ~Restore() { set_requires_grad(params, true); }
    } restore{critic_params};

    const torch::Tensor noise = torch::randn({n, dims.noise}, state.noise_rng);
    const GeneratorOutput out = state.generator->forward(noise, sample.boxes);
    const torch::Tensor fake_crops = crop_and_resize_glands(out.image, sample.boxes);

    const LossTerms<torch::Tensor> terms{
        loss_image_rec(out.image, real_image),
        loss_mask_rec(out.component_mask, real_mask),
        loss_gland_mask_rec(out.gland_masks, sample.gland_masks),
        loss_adversarial(critics.mask->forward(out.component_mask), true),
        loss_adversarial(critics.image->forward(out.image), true),
        loss_adversarial(critics.gland->forward(fake_crops), true),
    };
    GeneratorStep step;
    step.terms = {
        checked(terms.image_rec, "img_rec", iteration),  checked(terms.mask_rec, "mask_rec", iteration),
        checked(terms.gland_rec, "gland_rec", iteration), checked(terms.adv_mask, "adv_T", iteration),
        checked(terms.adv_image, "adv_Z", iteration),     checked(terms.adv_gland, "adv_G", iteration),
    };
    const torch::Tensor objective = composite_objective(terms, state.config.weights);
    checked(objective, "composite", iteration);
    state.generator_opt.zero_grad();
    objective.backward();
    state.generator_opt.step();

    step.fake_mask = out.component_mask.detach();
    step.fake_image = out.image.detach();
    step.fake_crops = fake_crops.detach();
    return step;
}

CriticLosses critic_updates(const TrainingSample& sample, const GeneratorStep& fakes, TrainingState& state) {
    const std::int64_t iteration = state.iteration + 1;
    Critics& critics = state.critics;
    const torch::Tensor real_image = sample.image.unsqueeze(0);
    const torch::Tensor real_mask = sample.mask.unsqueeze(0);
    CriticLosses losses;
    losses.mask = critic_update(state.mask_critic_opt, loss_adversarial(critics.mask->forward(real_mask), true),
                                loss_adversarial(critics.mask->forward(fakes.fake_mask), false), "d_T", iteration);
    losses.image = critic_update(state.image_critic_opt, loss_adversarial(critics.image->forward(real_image), true),
                                 loss_adversarial(critics.image->forward(fakes.fake_image), false), "d_Z", iteration);
    const torch::Tensor real_crops = crop_and_resize_glands(real_image, sample.boxes);
    losses.gland = critic_update(state.gland_critic_opt, loss_adversarial(critics.gland->forward(real_crops), true),
                                 loss_adversarial(critics.gland->forward(fakes.fake_crops), false), "d_G", iteration);
    return losses;
}

StepMetrics train_step(const TrainingSample& sample, TrainingState& state) {
    const auto started = std::chrono::steady_clock::now();
    const GeneratorStep step = generator_update(sample, state);
    const CriticLosses critic = critic_updates(sample, step, state);
    state.iteration += 1;

    StepMetrics metrics;
    metrics.generator = step.terms;
    metrics.d_mask = critic.mask;
    metrics.d_image = critic.image;
    metrics.d_gland = critic.gland;
    if (state.config.record_wall_time) {
        metrics.wall_ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
    }
    return metrics;
}

namespace {

fs::path checkpoint_path(const fs::path& dir, std::int64_t iteration) {
    char name[64];
    std::snprintf(name, sizeof(name), "checkpoint_%06lld.pt", static_cast<long long>(iteration));
    return dir / name;
}

}  // namespace

TrainingRun run_training(const TrainConfig& config, const std::vector<TrainingSample>& dataset, const fs::path& out_dir,
                         const StepCallback& on_step) {
    config.validate();
    if (dataset.empty()) {
        throw std::invalid_argument("training dataset is empty");
    }
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) {
        throw std::runtime_error("cannot create " + out_dir.string() + ": " + ec.message());
    }

    TrainingRun run;
    run.metrics_log = out_dir / "metrics.jsonl";
    std::ofstream log(run.metrics_log, std::ios::trunc);
    if (!log) {
        throw std::runtime_error("cannot open metrics log " + run.metrics_log.string());
    }

    TrainingState state(config);
    std::mt19937_64 order_rng(config.rng_seed);
    std::vector<std::size_t> order(dataset.size());
    std::size_t cursor = order.size();

    const auto save = [&](std::int64_t iteration) {
        const fs::path path = checkpoint_path(out_dir, iteration);
        CheckpointManifest manifest;
        manifest.id = path.stem().string() + "-seed" + std::to_string(config.rng_seed);
        manifest.dims = state.generator->dims;
        manifest.iteration = iteration;
        manifest.weights = config.weights;
        manifest.seed = config.rng_seed;
        try {
            save_checkpoint(path, manifest, state.generator, &state.critics);
        } catch (const std::exception& e) {
            throw std::runtime_error("iteration " + std::to_string(iteration) + ": " + e.what());
        }
        run.checkpoints.push_back(path);
    };

    for (std::int64_t it = 1; it <= config.total_iterations; ++it) {
        if (cursor == order.size()) {
            std::iota(order.begin(), order.end(), std::size_t{0});
            std::shuffle(order.begin(), order.end(), order_rng);
            cursor = 0;
        }
        const StepMetrics metrics = train_step(dataset[order[cursor++]], state);
        log << metrics_record(it, metrics).dump() << '\n';
        log.flush();
        if (!log) {
            throw std::runtime_error("iteration " + std::to_string(it) + ": cannot append to " + run.metrics_log.string());
        }
        if (on_step) {
            on_step(it, metrics);
        }
        const bool periodic = config.checkpoint_interval > 0 && it % config.checkpoint_interval == 0;
        if (periodic || it == config.total_iterations) {
            if (run.checkpoints.empty() || run.checkpoints.back() != checkpoint_path(out_dir, it)) {
                save(it);
            }
        }
    }
    return run;
}

}  // namespace glandsynth
