#include "glandsynth/synthesis.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include <stdexcept>

namespace glandsynth {

torch::Tensor draw_gland_noise(const GlandLayout& layout, std::uint64_t seed, std::int64_t noise_dim) {
    const auto n = static_cast<std::int64_t>(layout.glands.size());
    torch::Tensor noise = torch::empty({n, noise_dim}, torch::kFloat32);
    at::Generator stream = at::make_generator<at::CPUGeneratorImpl>(seed);
    for (std::int64_t k = 0; k < n; ++k) {
        const auto& gland = layout.glands[static_cast<std::size_t>(k)];
        if (gland.seed) {
            at::Generator own = at::make_generator<at::CPUGeneratorImpl>(*gland.seed);
            noise[k].copy_(torch::randn({noise_dim}, own));
        } else {
            noise[k].copy_(torch::randn({noise_dim}, stream));
        }
    }
    return noise;
}

GeneratedPair synthesize(Generator& generator, const GlandLayout& layout, std::uint64_t seed) {
    const ValidationReport report = validate_layout(layout);
    if (!report.ok()) {
        throw std::invalid_argument("invalid layout: " + report.violations.front().message);
    }
    if (layout.canvas_size != generator->dims.canvas) {
        throw std::invalid_argument("layout canvas " + std::to_string(layout.canvas_size) +
                                    " does not match the model canvas " + std::to_string(generator->dims.canvas));
    }
    // Dropout and batch statistics must not depend on the call, so run with frozen layers.
    const bool was_training = generator->is_training();
    if (was_training) {
        generator->eval();
    }
    struct Restore {
        Generator& g;
        bool training;
        ~Restore() {
            if (training) {
                g->train();
            }
        }
    } restore{generator, was_training};

    c10::InferenceMode guard;
    GeneratedPair pair;
    pair.boxes = bboxes_from_layout(layout);
    pair.seed = seed;
    const torch::Tensor noise = draw_gland_noise(layout, seed, generator->dims.noise);
    const GeneratorOutput out = generator->forward(noise, pair.boxes);
    pair.image = out.image.squeeze(0);
    pair.component_mask = out.component_mask.squeeze(0);
    pair.gland_masks = out.gland_masks;
    return pair;
}

Synthesizer::Synthesizer(const std::filesystem::path& checkpoint) {
    LoadedGenerator loaded = load_generator(checkpoint);
    generator_ = std::move(loaded.generator);
    checkpoint_id_ = std::move(loaded.manifest.id);
    generator_->eval();
}

Synthesizer::Synthesizer(Generator generator, std::string checkpoint_id)
    : generator_(std::move(generator)), checkpoint_id_(std::move(checkpoint_id)) {
    generator_->eval();
}

GeneratedPair Synthesizer::generate(const GlandLayout& layout, std::uint64_t seed) const {
    Generator g = generator_;
    GeneratedPair pair = synthesize(g, layout, seed);
    pair.checkpoint_id = checkpoint_id_;
    return pair;
}

}  // namespace glandsynth
