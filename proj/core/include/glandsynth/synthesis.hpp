#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "glandsynth/checkpoint.hpp"
#include "glandsynth/layout.hpp"
#include "glandsynth/networks.hpp"

namespace glandsynth {

/// A synthesized annotated pair with its provenance.
struct GeneratedPair {
    torch::Tensor image;           // [3, N, N], values in [-1, 1]
    torch::Tensor component_mask;  // [1, N, N], values in [0, 1]
    torch::Tensor gland_masks;     // [n, 1, B, B]
    std::vector<BoundingBox> boxes;
    std::uint64_t seed = 0;
    std::string checkpoint_id;
};

/// Noise vectors for every gland: a gland with its own seed draws from a generator seeded with it,
/// the others draw in order from one stream seeded with `seed`.
torch::Tensor draw_gland_noise(const GlandLayout& layout, std::uint64_t seed, std::int64_t noise_dim);

/// Runs the generator in inference mode; a generator in training mode is switched to eval for the
/// call. Throws std::invalid_argument for a layout that fails validation.
GeneratedPair synthesize(Generator& generator, const GlandLayout& layout, std::uint64_t seed);

// A generator loaded from a checkpoint and frozen for inference; `generate` may be called concurrently.
class Synthesizer {
public:
    explicit Synthesizer(const std::filesystem::path& checkpoint);
    Synthesizer(Generator generator, std::string checkpoint_id);

    GeneratedPair generate(const GlandLayout& layout, std::uint64_t seed) const;
    const std::string& checkpoint_id() const { return checkpoint_id_; }

private:
    Generator generator_;
    std::string checkpoint_id_;
};

}  // namespace glandsynth
